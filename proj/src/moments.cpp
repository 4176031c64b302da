#include "pimdp/moments.hpp"

#include <cmath>

namespace pimdp {

namespace {

inline Eigen::Index vec_idx(Eigen::Index r, Eigen::Index c, Eigen::Index rows) {
  return c * rows + r;  // column-major
}

}  // namespace

TrigResult trig_expand(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                       int angle_index, TrigGrads* grads) {
  const Eigen::Index d = mu.size();
  const Eigen::Index ia = angle_index;
  const Eigen::Index D = d + 1;
  const Eigen::Index isin = ia, icos = ia + 1;  // outputs replacing the angle
  const auto out_of = [&](Eigen::Index j) {  // input j -> output index
    return j < ia ? j : j + 1;
  };

  const double m = mu[ia];
  const double v = sigma(ia, ia);
  const double E = std::exp(-0.5 * v);
  const double e1 = std::exp(-v);        // E^2
  const double e2 = std::exp(-2.0 * v);
  const double s = std::sin(m), c = std::cos(m);
  const double s2 = std::sin(2.0 * m), c2 = std::cos(2.0 * m);

  TrigResult res;
  res.mean.resize(D);
  res.cov.resize(D, D);
  res.vmat = Eigen::MatrixXd::Zero(d, D);

  for (Eigen::Index j = 0; j < d; ++j)
    if (j != ia) res.mean[out_of(j)] = mu[j];
  res.mean[isin] = E * s;
  res.mean[icos] = E * c;

  // exact second moments of (sin, cos)
  const double var_sin = 0.5 * (1.0 - e2 * c2) - e1 * s * s;
  const double var_cos = 0.5 * (1.0 + e2 * c2) - e1 * c * c;
  const double cov_sc = 0.5 * s2 * (e2 - e1);

  for (Eigen::Index p = 0; p < d; ++p) {
    if (p == ia) continue;
    for (Eigen::Index q = 0; q < d; ++q) {
      if (q == ia) continue;
      res.cov(out_of(p), out_of(q)) = sigma(p, q);
    }
  }
  res.cov(isin, isin) = var_sin;
  res.cov(icos, icos) = var_cos;
  res.cov(isin, icos) = cov_sc;
  res.cov(icos, isin) = cov_sc;
  // Stein: Cov(z_j, sin) = Cov(z_j, theta) E cos(m), built from the
  // symmetric read so single-entry perturbations stay consistent.
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j == ia) continue;
    const double sj = 0.5 * (sigma(j, ia) + sigma(ia, j));
    res.cov(out_of(j), isin) = sj * E * c;
    res.cov(isin, out_of(j)) = sj * E * c;
    res.cov(out_of(j), icos) = -sj * E * s;
    res.cov(icos, out_of(j)) = -sj * E * s;
  }

  for (Eigen::Index j = 0; j < d; ++j)
    if (j != ia) res.vmat(j, out_of(j)) = 1.0;
  res.vmat(ia, isin) = E * c;
  res.vmat(ia, icos) = -E * s;

  if (!grads) return res;

  const Eigen::Index nin = d + d * d;
  const auto im = [&](Eigen::Index j) { return j; };                  // d/dmu_j
  const auto is = [&](Eigen::Index r, Eigen::Index cc) {              // d/dSigma_rc
    return d + vec_idx(r, cc, d);
  };
  grads->dmean = Eigen::MatrixXd::Zero(D, nin);
  grads->dcov = Eigen::MatrixXd::Zero(D * D, nin);
  grads->dvmat = Eigen::MatrixXd::Zero(d * D, nin);

  for (Eigen::Index j = 0; j < d; ++j)
    if (j != ia) grads->dmean(out_of(j), im(j)) = 1.0;
  grads->dmean(isin, im(ia)) = E * c;
  grads->dmean(isin, is(ia, ia)) = -0.5 * E * s;
  grads->dmean(icos, im(ia)) = -E * s;
  grads->dmean(icos, is(ia, ia)) = -0.5 * E * c;

  const auto covi = [&](Eigen::Index r, Eigen::Index cc) {
    return vec_idx(r, cc, D);
  };
  for (Eigen::Index p = 0; p < d; ++p) {
    if (p == ia) continue;
    for (Eigen::Index q = 0; q < d; ++q) {
      if (q == ia) continue;
      grads->dcov(covi(out_of(p), out_of(q)), is(p, q)) = 1.0;
    }
  }
  // d var_sin / d(m, v)
  const double dvs_dm = (e2 - e1) * s2;
  const double dvs_dv = e2 * c2 + e1 * s * s;
  const double dvc_dm = (e1 - e2) * s2;
  const double dvc_dv = -e2 * c2 + e1 * c * c;
  const double dsc_dm = c2 * (e2 - e1);
  const double dsc_dv = 0.5 * s2 * (-2.0 * e2 + e1);
  grads->dcov(covi(isin, isin), im(ia)) = dvs_dm;
  grads->dcov(covi(isin, isin), is(ia, ia)) = dvs_dv;
  grads->dcov(covi(icos, icos), im(ia)) = dvc_dm;
  grads->dcov(covi(icos, icos), is(ia, ia)) = dvc_dv;
  grads->dcov(covi(isin, icos), im(ia)) = dsc_dm;
  grads->dcov(covi(isin, icos), is(ia, ia)) = dsc_dv;
  grads->dcov(covi(icos, isin), im(ia)) = dsc_dm;
  grads->dcov(covi(icos, isin), is(ia, ia)) = dsc_dv;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (j == ia) continue;
    const double sj = 0.5 * (sigma(j, ia) + sigma(ia, j));
    for (const auto [r, cc, sign_s, sign_c] :
         {std::tuple{out_of(j), isin, 1.0, 0.0},
          std::tuple{isin, out_of(j), 1.0, 0.0},
          std::tuple{out_of(j), icos, 0.0, 1.0},
          std::tuple{icos, out_of(j), 0.0, 1.0}}) {
      const double val_per_sj = sign_s > 0.5 ? E * c : -E * s;
      grads->dcov(covi(r, cc), is(j, ia)) = 0.5 * val_per_sj;
      grads->dcov(covi(r, cc), is(ia, j)) = 0.5 * val_per_sj;
      const double dm = sign_s > 0.5 ? -sj * E * s : -sj * E * c;
      const double dv = sign_s > 0.5 ? -0.5 * sj * E * c : 0.5 * sj * E * s;
      grads->dcov(covi(r, cc), im(ia)) = dm;
      grads->dcov(covi(r, cc), is(ia, ia)) = dv;
      (void)sign_c;
    }
  }
  const auto vmi = [&](Eigen::Index r, Eigen::Index cc) {
    return vec_idx(r, cc, d);
  };
  grads->dvmat(vmi(ia, isin), im(ia)) = -E * s;
  grads->dvmat(vmi(ia, isin), is(ia, ia)) = -0.5 * E * c;
  grads->dvmat(vmi(ia, icos), im(ia)) = -E * c;
  grads->dvmat(vmi(ia, icos), is(ia, ia)) = 0.5 * E * s;
  return res;
}

SquashResult squash_moments(double m, double v, double bound,
                            SquashGrads* grads) {
  const double k8 = bound / 8.0;
  const double E1 = std::exp(-0.5 * v);
  const double E9 = std::exp(-4.5 * v);
  const double e2 = std::exp(-2.0 * v);
  const double e8 = std::exp(-8.0 * v);
  const double e18 = std::exp(-18.0 * v);
  const double s1 = std::sin(m), c1 = std::cos(m);
  const double s3 = std::sin(3.0 * m), c3 = std::cos(3.0 * m);
  const double s2 = std::sin(2.0 * m), c2 = std::cos(2.0 * m);
  const double s4 = std::sin(4.0 * m), c4 = std::cos(4.0 * m);
  const double s6 = std::sin(6.0 * m), c6 = std::cos(6.0 * m);

  SquashResult res;
  res.mean = k8 * (9.0 * E1 * s1 + E9 * s3);
  const double second =
      k8 * k8 * (81.0 * 0.5 * (1.0 - e2 * c2) +
                 9.0 * (e2 * c2 - e8 * c4) + 0.5 * (1.0 - e18 * c6));
  res.var = second - res.mean * res.mean;
  res.v_scalar = k8 * (9.0 * E1 * c1 + 3.0 * E9 * c3);

  if (grads) {
    const double dmean_dm = k8 * (9.0 * E1 * c1 + 3.0 * E9 * c3);
    const double dmean_dv = k8 * (-4.5 * E1 * s1 - 4.5 * E9 * s3);
    const double dsecond_dm =
        k8 * k8 * (81.0 * e2 * s2 - 18.0 * e2 * s2 + 36.0 * e8 * s4 +
                   3.0 * e18 * s6);
    const double dsecond_dv =
        k8 * k8 * (81.0 * e2 * c2 - 18.0 * e2 * c2 + 72.0 * e8 * c4 +
                   9.0 * e18 * c6);
    const double dvs_dm = k8 * (-9.0 * E1 * s1 - 9.0 * E9 * s3);
    const double dvs_dv = k8 * (-4.5 * E1 * c1 - 13.5 * E9 * c3);
    grads->d(0, 0) = dmean_dm;
    grads->d(0, 1) = dmean_dv;
    grads->d(1, 0) = dsecond_dm - 2.0 * res.mean * dmean_dm;
    grads->d(1, 1) = dsecond_dv - 2.0 * res.mean * dmean_dv;
    grads->d(2, 0) = dvs_dm;
    grads->d(2, 1) = dvs_dv;
  }
  return res;
}

double saturating_exp_expectation(const Eigen::VectorXd& m,
                                  const Eigen::MatrixXd& S,
                                  const Eigen::VectorXd& target,
                                  const Eigen::MatrixXd& W,
                                  SatExpGrads* grads) {
  const Eigen::Index d = m.size();
  const Eigen::MatrixXd B = Eigen::MatrixXd::Identity(d, d) + S * W;
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  const Eigen::VectorXd delta = m - target;
  const Eigen::MatrixXd iB = lu.inverse();
  const Eigen::MatrixXd WiB = W * iB;  // symmetric at symmetric S, W
  const double quad = delta.dot(WiB * delta);
  const double det = lu.determinant();
  const double val = std::exp(-0.5 * quad) / std::sqrt(det);

  if (grads) {
    const Eigen::VectorXd wt = WiB * delta;
    const Eigen::VectorXd wt_left = WiB.transpose() * delta;
    grads->dmean = -0.5 * val * (wt + wt_left);
    // d log det / dS_kl = (W iB)_lk; d quad / dS_kl = -wt_left_k wt_l
    grads->dsigma = 0.5 * val * (wt_left * wt.transpose() - WiB.transpose());
  }
  return val;
}

}  // namespace pimdp
