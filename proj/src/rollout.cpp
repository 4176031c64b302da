#include "pimdp/rollout.hpp"

#include <cmath>
#include <limits>

#include "pimdp/envs.hpp"
#include "pimdp/gp_moments.hpp"
#include "pimdp/moments.hpp"

namespace pimdp {

namespace {

// Packing of a Gaussian's moments into [mu; vec(Sigma)] (column-major).
Eigen::Index vidx(Eigen::Index r, Eigen::Index c, Eigen::Index rows) {
  return c * rows + r;
}

// Jacobian pair of a quantity with respect to the step-input moments p and
// the policy parameters theta.
struct Jac {
  Eigen::MatrixXd p, t;
  Jac() = default;
  Jac(Eigen::Index rows, Eigen::Index ns, Eigen::Index np)
      : p(Eigen::MatrixXd::Zero(rows, ns)),
        t(Eigen::MatrixXd::Zero(rows, np)) {}
};

// y = M v for matrix M (rm x cm) with jacobians dM (rm*cm x K, vec'd) and
// dv (cm x K): dy_k = unvec(dM_k) v + M dv_k.
void chain_mat_vec(const Eigen::MatrixXd& M, const Eigen::MatrixXd& dM,
                   const Eigen::VectorXd& v, const Eigen::MatrixXd& dv,
                   Eigen::MatrixXd& dy) {
  const Eigen::Index rm = M.rows(), cm = M.cols(), K = dv.cols();
  dy.setZero(rm, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::VectorXd acc = M * dv.col(k);
    for (Eigen::Index c = 0; c < cm; ++c)
      for (Eigen::Index r = 0; r < rm; ++r)
        acc[r] += dM(vidx(r, c, rm), k) * v[c];
    dy.col(k) = acc;
  }
}

// C = A B with vec'd jacobians dA (ra*ca x K), dB (ca*cb x K) ->
// dC (ra*cb x K).
void chain_mat_mat(const Eigen::MatrixXd& A, const Eigen::MatrixXd& dA,
                   const Eigen::MatrixXd& B, const Eigen::MatrixXd& dB,
                   Eigen::MatrixXd& dC) {
  const Eigen::Index ra = A.rows(), ca = A.cols(), cb = B.cols();
  const Eigen::Index K = dA.cols();
  dC.setZero(ra * cb, K);
  Eigen::MatrixXd dAk(ra, ca), dBk(ca, cb);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index c = 0; c < ca; ++c)
      for (Eigen::Index r = 0; r < ra; ++r) dAk(r, c) = dA(vidx(r, c, ra), k);
    for (Eigen::Index c = 0; c < cb; ++c)
      for (Eigen::Index r = 0; r < ca; ++r) dBk(r, c) = dB(vidx(r, c, ca), k);
    const Eigen::MatrixXd dCk = dAk * B + A * dBk;
    for (Eigen::Index c = 0; c < cb; ++c)
      for (Eigen::Index r = 0; r < ra; ++r) dC(vidx(r, c, ra), k) = dCk(r, c);
  }
}

struct RewardEval {
  double value = 0.0;
  Eigen::RowVectorXd dstate;  // w.r.t. [mu'; vecSigma']
  Eigen::RowVectorXd daction; // w.r.t. [mu_u, var_u]
};

RewardEval eval_reward(const RewardModel& rm, int angle_index,
                       const Eigen::VectorXd& mu, const Eigen::MatrixXd& sig,
                       double mu_u, double var_u, bool want_grad) {
  const Eigen::Index d = mu.size();
  const Eigen::Index ns = d + d * d;
  RewardEval out;
  if (want_grad) {
    out.dstate = Eigen::RowVectorXd::Zero(ns);
    out.daction = Eigen::RowVectorXd::Zero(2);
  }
  const double scale = rm.steps_per_control;

  if (rm.kind == RewardModel::Kind::PendulumQuadratic) {
    const double f0 = rm.state_factors[0];
    const double f1 = rm.state_factors[1];
    const double fa = rm.action_factor;
    const double i0 = 1.0 / (f0 * f0), i1 = 1.0 / (f1 * f1),
                 ia = 1.0 / (fa * fa);
    const double e_th2 = (mu[0] * mu[0] + sig(0, 0)) * i0;
    const double e_w2 = (mu[1] * mu[1] + sig(1, 1)) * i1;
    const double e_u2 = (mu_u * mu_u + var_u) * ia;
    out.value = -scale * (e_th2 + rm.c_vel * e_w2 + rm.c_act * e_u2);
    if (want_grad) {
      out.dstate[0] = -scale * 2.0 * mu[0] * i0;
      out.dstate[1] = -scale * rm.c_vel * 2.0 * mu[1] * i1;
      out.dstate[d + vidx(0, 0, d)] = -scale * i0;
      out.dstate[d + vidx(1, 1, d)] = -scale * rm.c_vel * i1;
      out.daction[0] = -scale * rm.c_act * 2.0 * mu_u * ia;
      out.daction[1] = -scale * rm.c_act * ia;
    }
    return out;
  }

  // Cartpole saturating reward on the natural (x, sin theta, cos theta).
  const double fx = rm.state_factors[0];
  const Eigen::Index ix = 0, ith = angle_index;
  Eigen::VectorXd m2(2);
  m2 << mu[ix] / fx, mu[ith];
  Eigen::MatrixXd s2(2, 2);
  s2 << sig(ix, ix) / (fx * fx), sig(ix, ith) / fx, sig(ith, ix) / fx,
      sig(ith, ith);

  TrigGrads tg;
  const TrigResult trig = trig_expand(m2, s2, 1, want_grad ? &tg : nullptr);

  const double L = rm.pole_len;
  Eigen::MatrixXd W(3, 3);
  W << 1.0, L, 0.0, L, L * L, 0.0, 0.0, 0.0, L * L;
  W /= rm.sigma_r * rm.sigma_r;
  Eigen::VectorXd target(3);
  target << 0.0, 0.0, 1.0;

  SatExpGrads sg;
  const double e = saturating_exp_expectation(trig.mean, trig.cov, target, W,
                                              want_grad ? &sg : nullptr);
  out.value = scale * (e - 1.0);

  if (want_grad) {
    // chain: d r / d (m2, s2) then back to the full state pack
    Eigen::RowVectorXd dr_d3(3 + 9);
    for (Eigen::Index i = 0; i < 3; ++i) dr_d3[i] = scale * sg.dmean[i];
    for (Eigen::Index c = 0; c < 3; ++c)
      for (Eigen::Index r = 0; r < 3; ++r)
        dr_d3[3 + vidx(r, c, 3)] = scale * sg.dsigma(r, c);
    Eigen::RowVectorXd dr_d2(2 + 4);
    dr_d2.setZero();
    for (Eigen::Index i = 0; i < 3; ++i)
      dr_d2 += dr_d3[i] * tg.dmean.row(i);
    for (Eigen::Index rc = 0; rc < 9; ++rc)
      dr_d2 += dr_d3[3 + rc] * tg.dcov.row(rc);
    // linear map from (mu, sig) to (m2, s2)
    out.dstate[ix] = dr_d2[0] / fx;
    out.dstate[ith] = dr_d2[1];
    out.dstate[d + vidx(ix, ix, d)] = dr_d2[2 + vidx(0, 0, 2)] / (fx * fx);
    out.dstate[d + vidx(ith, ix, d)] = dr_d2[2 + vidx(1, 0, 2)] / fx;
    out.dstate[d + vidx(ix, ith, d)] = dr_d2[2 + vidx(0, 1, 2)] / fx;
    out.dstate[d + vidx(ith, ith, d)] = dr_d2[2 + vidx(1, 1, 2)];
  }
  return out;
}

}  // namespace

double expected_reward(const RewardModel& reward, int angle_index,
                       const GaussianState& state, double action_mean,
                       double action_var) {
  return eval_reward(reward, angle_index, state.mean, state.cov, action_mean,
                     action_var, false)
      .value;
}

RolloutResult rollout_moments(const GpModel& model, const RbfPolicy& policy,
                              const GaussianState& s0, const RolloutConfig& cfg,
                              Eigen::VectorXd* return_grad) {
  const Eigen::Index d = s0.dim();
  const Eigen::Index ns = d + d * d;
  const Eigen::Index Do = d + 1;
  const Eigen::Index D = Do + 1;  // GP input dim: obs + action
  const Eigen::Index nx = D + D * D;
  const Eigen::Index E = model.output_dim();
  const Eigen::Index P = policy.n_params();
  const bool want_grad = return_grad != nullptr;

  if (E != d) throw std::invalid_argument("model output dim must match state");
  if (model.input_dim() != D)
    throw std::invalid_argument("model input dim must be obs dim + 1");
  if (policy.input_dim() != Do)
    throw std::invalid_argument("policy input dim must match observation");

  std::vector<MomentOutputSpec> specs;
  for (int e = 0; e < E; ++e) {
    MomentOutputSpec spec;
    spec.beta = &model.beta(e);
    spec.ilam = model.inv_sq_lengthscales(e);
    spec.sf2 = model.hyperparams(e).sf2();
    spec.sn2 = model.hyperparams(e).sn2();
    spec.kinv = &model.kinv(e);
    specs.push_back(std::move(spec));
  }

  RolloutResult result;
  GaussianState s = s0;
  s.symmetrize();
  result.states.push_back(s);

  // J = d [mu_s; vec Sigma_s] / d theta, accumulated across steps.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(ns, P);
  if (want_grad) return_grad->setZero(P);

  for (int t = 0; t < cfg.horizon; ++t) {
    const Eigen::VectorXd mu_s = s.mean;
    const Eigen::MatrixXd sig_s = s.cov;

    // ---- observation stage
    TrigGrads tgrads;
    const TrigResult trig = trig_expand(mu_s, sig_s, cfg.angle_index,
                                        want_grad ? &tgrads : nullptr);

    // ---- policy stage
    RbfPolicy::UncertainActionGrads pgrads;
    const auto act =
        policy.act_uncertain(trig.mean, trig.cov, want_grad ? &pgrads : nullptr);

    // ---- GP input assembly
    Eigen::VectorXd mu_x(D);
    mu_x.head(Do) = trig.mean;
    mu_x[Do] = act.mean;
    const Eigen::VectorXd w2 = trig.cov * act.v;  // Cov(obs, u)
    Eigen::MatrixXd sig_x(D, D);
    sig_x.topLeftCorner(Do, Do) = trig.cov;
    sig_x.block(0, Do, Do, 1) = w2;
    sig_x.block(Do, 0, 1, Do) = w2.transpose();
    sig_x(Do, Do) = act.var;

    // ---- dynamics stage
    MomentMatchResult mm;
    MomentMatchGrads mmg;
    moment_match(model.train_inputs(), specs, mu_x, sig_x, mm,
                 want_grad ? &mmg : nullptr);

    // ---- combine: s' = s + delta
    const Eigen::MatrixXd SV1 = sig_s * trig.vmat;       // Cov(s, obs), d x Do
    const Eigen::VectorXd csu = SV1 * act.v;             // Cov(s, u)
    Eigen::MatrixXd Csx(d, D);
    Csx.leftCols(Do) = SV1;
    Csx.col(Do) = csu;
    const Eigen::MatrixXd C = Csx * mm.vmat;             // Cov(s, delta)

    GaussianState next;
    next.mean = mu_s + mm.mean;
    next.cov = sig_s + mm.cov + C + C.transpose();

    // ---- reward of the new state with the action that produced it
    const RewardEval rew = eval_reward(cfg.reward, cfg.angle_index, next.mean,
                                       next.cov, act.mean, act.var, want_grad);

    if (!next.mean.allFinite() || !next.cov.allFinite() ||
        next.cov.trace() > cfg.divergence_trace) {
      result.diverged = true;
      result.expected_return = -std::numeric_limits<double>::infinity();
      if (want_grad) return_grad->setZero();
      return result;
    }

    if (want_grad) {
      // Jacobians w.r.t. p = [mu_s; vec sig_s] and directly w.r.t. theta.
      // observation stage: no direct theta dependence.
      const Eigen::Index ntrig = Do + Do * Do;
      Eigen::MatrixXd Jtrig_p(ntrig, ns);
      Jtrig_p.topRows(Do) = tgrads.dmean;
      Jtrig_p.bottomRows(Do * Do) = tgrads.dcov;

      // policy stage: chain through the observation moments.
      const Eigen::RowVectorXd dmu_u_p = pgrads.dmean_din * Jtrig_p;
      const Eigen::RowVectorXd dvar_u_p = pgrads.dvar_din * Jtrig_p;
      const Eigen::MatrixXd dv2_p = pgrads.dv_din * Jtrig_p;  // Do x ns
      const Eigen::RowVectorXd& dmu_u_t = pgrads.dmean_dp;
      const Eigen::RowVectorXd& dvar_u_t = pgrads.dvar_dp;
      const Eigen::MatrixXd& dv2_t = pgrads.dv_dp;  // Do x P

      // w2 = trig.cov * act.v
      Eigen::MatrixXd dw2_p, dw2_t;
      chain_mat_vec(trig.cov, tgrads.dcov, act.v, dv2_p, dw2_p);
      chain_mat_vec(trig.cov, Eigen::MatrixXd::Zero(Do * Do, P), act.v, dv2_t,
                    dw2_t);

      // pack d[mu_x; vec sig_x]
      Jac Jx(nx, ns, P);
      Jx.p.topRows(Do) = tgrads.dmean;
      Jx.p.row(Do) = dmu_u_p;
      Jx.t.row(Do) = dmu_u_t;
      for (Eigen::Index c = 0; c < Do; ++c)
        for (Eigen::Index r = 0; r < Do; ++r) {
          Jx.p.row(D + vidx(r, c, D)) = tgrads.dcov.row(vidx(r, c, Do));
        }
      for (Eigen::Index r = 0; r < Do; ++r) {
        Jx.p.row(D + vidx(r, Do, D)) = dw2_p.row(r);
        Jx.t.row(D + vidx(r, Do, D)) = dw2_t.row(r);
        Jx.p.row(D + vidx(Do, r, D)) = dw2_p.row(r);
        Jx.t.row(D + vidx(Do, r, D)) = dw2_t.row(r);
      }
      Jx.p.row(D + vidx(Do, Do, D)) = dvar_u_p;
      Jx.t.row(D + vidx(Do, Do, D)) = dvar_u_t;

      // dynamics stage chained to (p, theta)
      const Eigen::MatrixXd ddelta_mu_p = mmg.dmean * Jx.p;   // E x ns
      const Eigen::MatrixXd ddelta_mu_t = mmg.dmean * Jx.t;   // E x P
      const Eigen::MatrixXd ddelta_cov_p = mmg.dcov * Jx.p;   // E^2 x ns
      const Eigen::MatrixXd ddelta_cov_t = mmg.dcov * Jx.t;
      const Eigen::MatrixXd dV3_p = mmg.dvmat * Jx.p;         // D E x ns
      const Eigen::MatrixXd dV3_t = mmg.dvmat * Jx.t;

      // SV1 = sig_s * trig.vmat (note d sig_s/dp = selector of vec part)
      Eigen::MatrixXd dsig_s_p = Eigen::MatrixXd::Zero(d * d, ns);
      dsig_s_p.rightCols(d * d).setIdentity();
      Eigen::MatrixXd dSV1_p, dSV1_t;
      chain_mat_mat(sig_s, dsig_s_p, trig.vmat, tgrads.dvmat, dSV1_p);
      dSV1_t.setZero(d * Do, P);

      // csu = SV1 * act.v
      Eigen::MatrixXd dcsu_p, dcsu_t;
      chain_mat_vec(SV1, dSV1_p, act.v, dv2_p, dcsu_p);
      chain_mat_vec(SV1, dSV1_t, act.v, dv2_t, dcsu_t);

      // Csx = [SV1 | csu]
      Eigen::MatrixXd dCsx_p(d * D, ns), dCsx_t(d * D, P);
      for (Eigen::Index c = 0; c < Do; ++c)
        for (Eigen::Index r = 0; r < d; ++r) {
          dCsx_p.row(vidx(r, c, d)) = dSV1_p.row(vidx(r, c, d));
          dCsx_t.row(vidx(r, c, d)) = dSV1_t.row(vidx(r, c, d));
        }
      for (Eigen::Index r = 0; r < d; ++r) {
        dCsx_p.row(vidx(r, Do, d)) = dcsu_p.row(r);
        dCsx_t.row(vidx(r, Do, d)) = dcsu_t.row(r);
      }

      // C = Csx * V3
      Eigen::MatrixXd dC_p, dC_t;
      chain_mat_mat(Csx, dCsx_p, mm.vmat, dV3_p, dC_p);
      chain_mat_mat(Csx, dCsx_t, mm.vmat, dV3_t, dC_t);

      // assemble next-state jacobians
      Eigen::MatrixXd A(ns, ns), B(ns, P);
      A.setZero();
      B.setZero();
      A.topLeftCorner(d, d).setIdentity();
      A.topRows(d) += ddelta_mu_p;
      B.topRows(d) = ddelta_mu_t;
      for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < d; ++r) {
          const Eigen::Index row = d + vidx(r, c, d);
          A.row(row)[d + vidx(r, c, d)] += 1.0;  // d sig_s / d sig_s
          A.row(row) += ddelta_cov_p.row(vidx(r, c, d));
          A.row(row) += dC_p.row(vidx(r, c, d));
          A.row(row) += dC_p.row(vidx(c, r, d));
          B.row(row) = ddelta_cov_t.row(vidx(r, c, d)) +
                       dC_t.row(vidx(r, c, d)) + dC_t.row(vidx(c, r, d));
        }

      // reward gradient: through the new state and through the action
      Eigen::RowVectorXd r_p = rew.dstate * A;
      Eigen::RowVectorXd r_t = rew.dstate * B;
      r_p += rew.daction[0] * dmu_u_p + rew.daction[1] * dvar_u_p;
      r_t += rew.daction[0] * dmu_u_t + rew.daction[1] * dvar_u_t;
      *return_grad += (r_p * J + r_t).transpose();

      // advance the accumulated parameter jacobian
      J = (A * J + B).eval();
    }

    s = next;
    result.states.push_back(s);
    result.rewards.push_back(rew.value);
    result.expected_return += rew.value;
  }
  return result;
}

ParticleRolloutResult rollout_particles(const GpModel& model,
                                        const RbfPolicy& policy,
                                        const GaussianState& s0,
                                        const RolloutConfig& cfg,
                                        int n_particles,
                                        std::mt19937_64& rng) {
  const Eigen::Index d = s0.dim();
  const Eigen::Index E = model.output_dim();
  std::normal_distribution<double> gauss(0.0, 1.0);

  GaussianState start = s0;
  start.clamp_psd();
  const Eigen::LLT<Eigen::MatrixXd> llt(start.cov +
                                        1e-12 * Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd L = llt.matrixL();

  ParticleRolloutResult out;
  out.state_means.assign(static_cast<std::size_t>(cfg.horizon) + 1,
                         Eigen::VectorXd::Zero(d));
  out.state_vars.assign(static_cast<std::size_t>(cfg.horizon) + 1,
                        Eigen::VectorXd::Zero(d));
  out.mean_rewards.assign(static_cast<std::size_t>(cfg.horizon), 0.0);
  std::vector<double> returns(static_cast<std::size_t>(n_particles), 0.0);
  Eigen::MatrixXd second(static_cast<Eigen::Index>(cfg.horizon) + 1, d);
  second.setZero();

  Eigen::VectorXd mean_i(E), var_i(E);
  for (int k = 0; k < n_particles; ++k) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = gauss(rng);
    Eigen::VectorXd s = start.mean + L * z;
    out.state_means[0] += s;
    second.row(0) += s.cwiseProduct(s).transpose();
    for (int t = 0; t < cfg.horizon; ++t) {
      Eigen::VectorXd obs(d + 1);
      int oi = 0;
      for (Eigen::Index i = 0; i < d; ++i) {
        if (i == cfg.angle_index) {
          obs[oi++] = std::sin(s[i]);
          obs[oi++] = std::cos(s[i]);
        } else {
          obs[oi++] = s[i];
        }
      }
      const double u = policy.act(obs);
      Eigen::VectorXd x(d + 2);
      x.head(d + 1) = obs;
      x[d + 1] = u;
      model.predict_point(x, mean_i, var_i);
      for (Eigen::Index e = 0; e < E; ++e)
        s[e] += mean_i[e] + std::sqrt(std::max(var_i[e], 0.0)) * gauss(rng);

      // pointwise reward, mirroring the moment-matched definition
      double r = 0.0;
      if (cfg.reward.kind == RewardModel::Kind::PendulumQuadratic) {
        const double th = s[0] / cfg.reward.state_factors[0];
        const double w = s[1] / cfg.reward.state_factors[1];
        const double un = u / cfg.reward.action_factor;
        r = -cfg.reward.steps_per_control *
            (th * th + cfg.reward.c_vel * w * w + cfg.reward.c_act * un * un);
      } else {
        const double x_nat = s[0] / cfg.reward.state_factors[0];
        const double th = s[cfg.angle_index];
        const double Lp = cfg.reward.pole_len;
        const double tip_x = x_nat + Lp * std::sin(th);
        const double tip_y = Lp * std::cos(th);
        const double d2 = tip_x * tip_x + (tip_y - Lp) * (tip_y - Lp);
        r = cfg.reward.steps_per_control *
            (std::exp(-d2 / (2.0 * cfg.reward.sigma_r * cfg.reward.sigma_r)) -
             1.0);
      }
      returns[static_cast<std::size_t>(k)] += r;
      out.mean_rewards[static_cast<std::size_t>(t)] += r;
      out.state_means[static_cast<std::size_t>(t) + 1] += s;
      second.row(t + 1) += s.cwiseProduct(s).transpose();
    }
  }
  for (std::size_t t = 0; t < out.state_means.size(); ++t) {
    out.state_means[t] /= n_particles;
    out.state_vars[t] =
        (second.row(static_cast<Eigen::Index>(t)).transpose() / n_particles -
         out.state_means[t].cwiseProduct(out.state_means[t]));
  }
  for (auto& r : out.mean_rewards) r /= n_particles;
  double sum = 0.0, sum2 = 0.0;
  for (double r : returns) {
    sum += r;
    sum2 += r * r;
  }
  out.mean_return = sum / n_particles;
  out.return_std_error = std::sqrt(
      std::max(sum2 / n_particles - out.mean_return * out.mean_return, 0.0) /
      n_particles);
  return out;
}

}  // namespace pimdp
