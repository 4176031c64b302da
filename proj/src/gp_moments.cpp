#include "pimdp/gp_moments.hpp"

#include <cmath>
#include <stdexcept>

namespace pimdp {

namespace {

struct PerOutputWork {
  Eigen::MatrixXd P;      // (Sigma + Lambda)^{-1}
  Eigen::VectorXd q;      // n
  Eigen::VectorXd cq;     // beta .* q
  Eigen::MatrixXd U;      // n x D, rows P zeta_i
  Eigen::VectorXd V;      // D
  Eigen::MatrixXd W;      // U' diag(cq) U
  double m = 0.0;
  Eigen::MatrixXd Zt;     // n x D, rows iLam .* zeta_i
  Eigen::VectorXd logk;   // n, log k(x_i, mu)
};

inline Eigen::Index sig_idx(Eigen::Index D, Eigen::Index k, Eigen::Index l) {
  return D + l * D + k;  // offset of dSigma_kl in [mu; vec(Sigma)]
}

}  // namespace

void moment_match(const Eigen::MatrixXd& X,
                  const std::vector<MomentOutputSpec>& outputs,
                  const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                  MomentMatchResult& result, MomentMatchGrads* grads,
                  RbfParamGrads* param_grads) {
  const Eigen::Index n = X.rows();
  const Eigen::Index D = X.cols();
  const Eigen::Index E = static_cast<Eigen::Index>(outputs.size());
  const Eigen::Index nin = D + D * D;

  const Eigen::MatrixXd Zc = X.rowwise() - mu.transpose();

  std::vector<PerOutputWork> work(static_cast<std::size_t>(E));
  for (Eigen::Index a = 0; a < E; ++a) {
    const auto& spec = outputs[static_cast<std::size_t>(a)];
    auto& w = work[static_cast<std::size_t>(a)];
    const Eigen::VectorXd lam2 = spec.ilam.cwiseInverse();
    Eigen::MatrixXd A = sigma;
    A.diagonal() += lam2;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    w.P = lu.inverse();
    // |Sigma iLam + I| = |Sigma + Lambda| / |Lambda|
    const double logdet =
        std::log(std::abs(lu.determinant())) + spec.ilam.array().log().sum();
    const double logc = std::log(spec.sf2) - 0.5 * logdet;
    w.U.noalias() = Zc * w.P.transpose();
    const Eigen::VectorXd quad = (Zc.array() * w.U.array()).rowwise().sum();
    w.q = (logc - 0.5 * quad.array()).exp();
    w.cq = spec.beta->cwiseProduct(w.q);
    w.m = w.cq.sum();
    w.V.noalias() = w.U.transpose() * w.cq;
    w.W.noalias() = w.U.transpose() * w.cq.asDiagonal() * w.U;
    w.Zt = Zc * spec.ilam.asDiagonal();
    w.logk = std::log(spec.sf2) -
             0.5 * (Zc.array().square().matrix() * spec.ilam).array();
  }

  result.mean.resize(E);
  result.cov.resize(E, E);
  result.vmat.resize(D, E);
  for (Eigen::Index a = 0; a < E; ++a) {
    result.mean[a] = work[static_cast<std::size_t>(a)].m;
    result.vmat.col(a) = work[static_cast<std::size_t>(a)].V;
  }

  if (grads) {
    grads->dmean = Eigen::MatrixXd::Zero(E, nin);
    grads->dcov = Eigen::MatrixXd::Zero(E * E, nin);
    grads->dvmat = Eigen::MatrixXd::Zero(D * E, nin);
    for (Eigen::Index a = 0; a < E; ++a) {
      const auto& w = work[static_cast<std::size_t>(a)];
      grads->dmean.block(a, 0, 1, D) = w.V.transpose();
      const Eigen::MatrixXd dm_ds = 0.5 * (w.W - w.m * w.P);
      for (Eigen::Index l = 0; l < D; ++l)
        for (Eigen::Index k = 0; k < D; ++k)
          grads->dmean(a, sig_idx(D, k, l)) = dm_ds(k, l);
      // dV/dmu = W - m P
      const Eigen::MatrixXd dV_dmu = w.W - w.m * w.P;
      for (Eigen::Index r = 0; r < D; ++r)
        for (Eigen::Index k = 0; k < D; ++k)
          grads->dvmat(a * D + r, k) = dV_dmu(r, k);
      // dV/dSigma_kl = 0.5 T[.,k,l] - 0.5 P_kl V - V_l P[.,k]
      for (Eigen::Index k = 0; k < D; ++k) {
        for (Eigen::Index l = 0; l < D; ++l) {
          const Eigen::VectorXd weights =
              w.cq.cwiseProduct(w.U.col(k)).cwiseProduct(w.U.col(l));
          const Eigen::VectorXd T = w.U.transpose() * weights;
          const Eigen::VectorXd dv =
              0.5 * T - 0.5 * w.P(k, l) * w.V - w.V[l] * w.P.col(k);
          for (Eigen::Index r = 0; r < D; ++r)
            grads->dvmat(a * D + r, sig_idx(D, k, l)) = dv[r];
        }
      }
    }
  }

  // Second moments per output pair.
  Eigen::MatrixXd Cmat(n, n), Q(n, n), F(n, n);
  for (Eigen::Index a = 0; a < E; ++a) {
    for (Eigen::Index b = a; b < E; ++b) {
      const auto& sa = outputs[static_cast<std::size_t>(a)];
      const auto& sb = outputs[static_cast<std::size_t>(b)];
      const auto& wa = work[static_cast<std::size_t>(a)];
      const auto& wb = work[static_cast<std::size_t>(b)];
      const Eigen::VectorXd N = sa.ilam + sb.ilam;
      Eigen::MatrixXd R = sigma * N.asDiagonal();
      R.diagonal().array() += 1.0;
      const Eigen::PartialPivLU<Eigen::MatrixXd> luR(R);
      const Eigen::MatrixXd iR = luR.inverse();
      const Eigen::MatrixXd Y = iR * sigma;
      const double logdetR = std::log(std::abs(luR.determinant()));

      const Eigen::MatrixXd YZa = wa.Zt * Y.transpose();  // rows Y zt_i
      const Eigen::MatrixXd YZb = wb.Zt * Y.transpose();
      const Eigen::VectorXd Avec =
          wa.logk + 0.5 * (wa.Zt.array() * YZa.array()).rowwise().sum().matrix();
      const Eigen::VectorXd Bvec =
          wb.logk + 0.5 * (wb.Zt.array() * YZb.array()).rowwise().sum().matrix();
      Cmat.noalias() = wa.Zt * Y * wb.Zt.transpose();
      Q = ((Cmat.colwise() + Avec).rowwise() + Bvec.transpose()).array().exp() *
          std::exp(-0.5 * logdetR);

      const double eq = sa.beta->dot(Q * (*sb.beta));
      double s_ab = eq - wa.m * wb.m;
      const bool model_uncertainty = (a == b) && sa.kinv != nullptr;
      if (a == b) {
        if (model_uncertainty)
          s_ab += sa.sf2 - (sa.kinv->array() * Q.array()).sum();
        s_ab += sa.sn2;
        // numerical floor: both variance pieces are nonnegative in exact
        // arithmetic
        s_ab = std::max(s_ab, sa.sn2);
      }
      result.cov(a, b) = s_ab;
      result.cov(b, a) = s_ab;

      if (grads || (param_grads && E == 1)) {
        F = (*sa.beta) * sb.beta->transpose();
        F.array() *= Q.array();
        if (model_uncertainty) F.array() -= sa.kinv->array() * Q.array();

        const Eigen::VectorXd ra = F.rowwise().sum();
        const Eigen::VectorXd rb = F.colwise().sum();
        const double sF = ra.sum();
        const Eigen::VectorXd va = wa.Zt.transpose() * ra;
        const Eigen::VectorXd vb = wb.Zt.transpose() * rb;

        if (grads) {
          // d(beta' Q beta - trace term)/dmu = (I - diag(N) Y)(va + vb)
          const Eigen::VectorXd dmu =
              (va + vb) - N.asDiagonal() * (Y * (va + vb));
          Eigen::RowVectorXd drow = Eigen::RowVectorXd::Zero(nin);
          drow.head(D) =
              (dmu - wb.m * wa.V - wa.m * wb.V).transpose();

          const Eigen::MatrixXd Ra = wa.Zt * iR;  // rows iR' zt_i
          const Eigen::MatrixXd Rb = wb.Zt * iR;
          const Eigen::MatrixXd INY =
              Eigen::MatrixXd::Identity(D, D) - N.asDiagonal() * Y;
          const Eigen::MatrixXd Qa = wa.Zt * INY.transpose();
          const Eigen::MatrixXd Qb = wb.Zt * INY.transpose();
          Eigen::MatrixXd dS =
              0.5 * Ra.transpose() * ra.asDiagonal() * Qa +
              0.5 * Rb.transpose() * rb.asDiagonal() * Qb +
              Ra.transpose() * F * Qb -
              0.5 * sF * (N.asDiagonal() * iR).transpose();
          const Eigen::MatrixXd dma_ds = 0.5 * (wa.W - wa.m * wa.P);
          const Eigen::MatrixXd dmb_ds = 0.5 * (wb.W - wb.m * wb.P);
          dS -= wb.m * dma_ds + wa.m * dmb_ds;
          for (Eigen::Index l = 0; l < D; ++l)
            for (Eigen::Index k = 0; k < D; ++k)
              drow[sig_idx(D, k, l)] = dS(k, l);

          grads->dcov.row(a * E + b) = drow;
          grads->dcov.row(b * E + a) = drow;
        }

        if (param_grads && E == 1) {
          // Deterministic RBF: params [beta; centers row-major; log-len].
          const Eigen::Index P = n + n * D + D;
          param_grads->dmean.resize(P);
          param_grads->dcov.resize(P);
          param_grads->dvmat.resize(D, P);
          param_grads->dmean.setZero();
          param_grads->dcov.setZero();
          param_grads->dvmat.setZero();

          // --- beta ---
          param_grads->dmean.head(n) = wa.q.transpose();
          const Eigen::VectorXd Qb2 = 2.0 * (Q * (*sa.beta));
          param_grads->dcov.head(n) =
              (Qb2 - 2.0 * wa.m * wa.q).transpose();
          for (Eigen::Index i = 0; i < n; ++i)
            param_grads->dvmat.col(i) = wa.q[i] * wa.U.row(i).transpose();

          // --- centers ---
          // dm/dx_i = -cq_i u_i ; dV/dx_i = cq_i (P - u_i u_i')
          // dS/dX = 2 diag(rG) Zt (Y' iLam - I) + 2 G Zt Y' iLam
          //         + 2 m diag(cq) U
          const Eigen::MatrixXd YtL =
              Y.transpose() * sa.ilam.asDiagonal();
          Eigen::MatrixXd dS_dX =
              2.0 * ra.asDiagonal() * (wa.Zt * YtL -
                                       Zc * sa.ilam.asDiagonal()) +
              2.0 * F * (wa.Zt * YtL) + 2.0 * wa.m * wa.cq.asDiagonal() * wa.U;
          for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index off = n + i * D;
            param_grads->dmean.segment(off, D) =
                (-wa.cq[i]) * wa.U.row(i);
            param_grads->dcov.segment(off, D) = dS_dX.row(i);
            param_grads->dvmat.block(0, off, D, D) =
                wa.cq[i] *
                (wa.P - wa.U.row(i).transpose() * wa.U.row(i));
          }

          // --- log lengthscales ---
          const Eigen::VectorXd lam2 = sa.ilam.cwiseInverse();
          for (Eigen::Index d = 0; d < D; ++d) {
            const double Pdd = wa.P(d, d);
            // dlog q_i / dlam_d = 1 - Lam_dd P_dd + Lam_dd u_id^2
            const Eigen::VectorXd dlogq =
                (1.0 - lam2[d] * Pdd +
                 (lam2[d] * wa.U.col(d).array().square()).array())
                    .matrix();
            const Eigen::VectorXd cql = wa.cq.cwiseProduct(dlogq);
            const Eigen::Index off = n + n * D + d;
            param_grads->dmean[off] = cql.sum();
            // dV/dlam_d
            param_grads->dvmat.col(off) =
                wa.U.transpose() * cql -
                2.0 * lam2[d] * wa.V[d] * wa.P.col(d);
            // dS/dlam_d
            const auto ztd = wa.Zt.col(d);
            const auto yzd = YZa.col(d);
            const Eigen::VectorXd zeta_d2 = Zc.col(d).array().square();
            const Eigen::VectorXd dA =
                sa.ilam[d] * zeta_d2.array().matrix() -
                2.0 * ztd.cwiseProduct(yzd) +
                2.0 * sa.ilam[d] * yzd.cwiseProduct(yzd);
            double dbqb = 2.0 * ra.dot(dA);  // dA_i and dB_j, G symmetric
            dbqb += -4.0 * ztd.dot(F * yzd) +
                    4.0 * sa.ilam[d] * yzd.dot(F * yzd);
            dbqb += 2.0 * sF * sa.ilam[d] * Y(d, d);  // -1/2 dlog|R|
            param_grads->dcov[off] = dbqb - 2.0 * wa.m * cql.sum();
          }
        }
      }
    }
  }
}

UncertainPrediction predict_uncertain(const GpModel& model,
                                      const GaussianState& input) {
  if (input.dim() != model.input_dim())
    throw std::domain_error("input dimension mismatch");
  if (!input.is_psd(1e-8))
    throw std::domain_error("input covariance is not positive semidefinite");

  std::vector<MomentOutputSpec> outputs;
  for (int e = 0; e < model.output_dim(); ++e) {
    MomentOutputSpec spec;
    spec.beta = &model.beta(e);
    spec.ilam = model.inv_sq_lengthscales(e);
    spec.sf2 = model.hyperparams(e).sf2();
    spec.sn2 = model.hyperparams(e).sn2();
    spec.kinv = &model.kinv(e);
    outputs.push_back(std::move(spec));
  }
  MomentMatchResult res;
  Eigen::MatrixXd sym = 0.5 * (input.cov + input.cov.transpose());
  moment_match(model.train_inputs(), outputs, input.mean, sym, res);

  UncertainPrediction pred;
  pred.delta = GaussianState(res.mean, res.cov);
  pred.delta.clamp_psd(1e-10);
  pred.input_output_cov = sym * res.vmat;
  return pred;
}

}  // namespace pimdp
