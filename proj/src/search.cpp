#include "pimdp/search.hpp"

#include <cmath>
#include <limits>

#include "pimdp/errors.hpp"
#include "pimdp/optimize.hpp"
#include "pimdp/rng.hpp"

namespace pimdp {

namespace {

Eigen::VectorXd state_factors(const PiBasis& basis, const Env& env) {
  const Eigen::VectorXd all = pi_scale_factors(basis, env.context().values());
  return all.head(env.state_dim());
}

double action_factor(const PiBasis& basis, const Env& env) {
  const Eigen::VectorXd all = pi_scale_factors(basis, env.context().values());
  return all[all.size() - 1];
}

}  // namespace

void Dataset::append(const EpisodeRecord& record, const Env& env,
                     const PiBasis& basis) {
  const Eigen::VectorXd sf = state_factors(basis, env);
  const double fa = action_factor(basis, env);
  const int ia = env.angle_index();
  for (const auto& step : record.steps) {
    Row row;
    row.state = step.state;
    row.next = step.next_state;
    row.action = step.action;
    row.context = record.context;

    const Eigen::VectorXd obs = pi_observation(step.state, ia, sf);
    Eigen::VectorXd input(obs.size() + 1);
    input.head(obs.size()) = obs;
    input[obs.size()] = step.action * fa;

    const Eigen::VectorXd s_pi = step.state.cwiseProduct(sf);
    const Eigen::VectorXd n_pi = step.next_state.cwiseProduct(sf);
    Eigen::VectorXd delta = n_pi - s_pi;
    // per-step angle increments are small; wrapping the delta removes the
    // branch-cut jump without losing information
    delta[ia] = wrap_angle(delta[ia]);

    row.input = input;
    row.target = delta;
    inputs_.push_back(input);
    targets_.push_back(delta);
    rows_.push_back(std::move(row));
  }
}

TrainingSet Dataset::training_set(int cap) const {
  const int total = size();
  const int n = (cap > 0 && cap < total) ? cap : total;
  const int start = total - n;
  TrainingSet t;
  if (n == 0) return t;
  t.inputs.resize(n, inputs_.front().size());
  t.targets.resize(n, targets_.front().size());
  for (int i = 0; i < n; ++i) {
    t.inputs.row(i) = inputs_[static_cast<std::size_t>(start + i)];
    t.targets.row(i) = targets_[static_cast<std::size_t>(start + i)];
  }
  return t;
}

Eigen::MatrixXd Dataset::observations() const {
  if (inputs_.empty()) return Eigen::MatrixXd(0, 0);
  const Eigen::Index D = inputs_.front().size() - 1;
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(inputs_.size()), D);
  for (std::size_t i = 0; i < inputs_.size(); ++i)
    obs.row(static_cast<Eigen::Index>(i)) = inputs_[i].head(D);
  return obs;
}

EpisodeRecord collect_episode(const Env& env, const RbfPolicy& policy,
                              const PiBasis& basis, std::mt19937_64& rng,
                              ResetMode mode) {
  const Eigen::VectorXd sf = state_factors(basis, env);
  const double fa = action_factor(basis, env);
  const int ia = env.angle_index();

  EpisodeRecord record;
  record.context = env.context();
  Eigen::VectorXd state = env.reset(rng, mode);
  const int steps = env.params().control_steps();
  for (int t = 0; t < steps; ++t) {
    StepRecord sr;
    sr.t = t * env.params().control_dt();
    sr.state = state;
    const NaturalAction act = act_natural(policy, state, ia, sf, fa,
                                          env.params().action_bound);
    sr.action = act.action;
    sr.clipped = act.clipped;
    double reward = 0.0;
    try {
      sr.next_state = env.step(state, act.action, &reward, nullptr);
    } catch (const SimulationError&) {
      record.failed = true;
      break;
    }
    sr.reward = reward;
    state = sr.next_state;
    record.steps.push_back(std::move(sr));
    if (env.name() == "cartpole" &&
        std::abs(state[0]) > env.params().track_bound)
      record.failed = true;  // flagged, episode continues
  }
  return record;
}

GaussianState reset_distribution_pi(const Env& env, const PiBasis& basis) {
  const Eigen::VectorXd sf = state_factors(basis, env);
  const int d = env.state_dim();
  Eigen::VectorXd mean(d);
  Eigen::VectorXd var(d);
  if (env.name() == "pendulum") {
    mean << 0.0, 0.0;
    var << M_PI * M_PI / 3.0, 1.0 / 3.0;  // U(-pi,pi) x U(-1,1)
  } else if (env.name() == "cartpole") {
    mean.setZero();
    mean[env.angle_index()] = M_PI;
    var.setConstant(0.01 * 0.01);
  } else {
    throw ConfigError("no reset distribution for environment '" + env.name() +
                      "'");
  }
  GaussianState s0;
  s0.mean = mean.cwiseProduct(sf);
  s0.cov = (var.cwiseProduct(sf).cwiseProduct(sf)).asDiagonal();
  return s0;
}

RewardModel make_reward_model(const Env& env, const PiBasis& basis) {
  RewardModel rm;
  rm.state_factors = state_factors(basis, env);
  rm.action_factor = action_factor(basis, env);
  rm.steps_per_control = env.params().action_repeat;
  if (env.name() == "pendulum") {
    rm.kind = RewardModel::Kind::PendulumQuadratic;
    rm.c_vel = 0.1;
    rm.c_act = 0.001;
  } else {
    rm.kind = RewardModel::Kind::CartpoleSaturating;
    rm.sigma_r = env.params().sigma_r;
    rm.pole_len = env.context().L;
  }
  return rm;
}

double estimate_return(const GpModel& model, const RbfPolicy& policy,
                       const GaussianState& s0, int horizon,
                       const RolloutConfig& cfg) {
  if (horizon <= 0) return 0.0;
  RolloutConfig c = cfg;
  c.horizon = horizon;
  return rollout_moments(model, policy, s0, c).expected_return;
}

Eigen::VectorXd policy_gradient(const GpModel& model, const RbfPolicy& policy,
                                const GaussianState& s0, int horizon,
                                const RolloutConfig& cfg,
                                GradientMethod method) {
  if (horizon <= 0) return Eigen::VectorXd::Zero(policy.n_params());
  RolloutConfig c = cfg;
  c.horizon = horizon;
  if (method == GradientMethod::Analytic) {
    Eigen::VectorXd grad;
    const auto roll = rollout_moments(model, policy, s0, c, &grad);
    if (!roll.diverged && !grad.allFinite())
      throw std::runtime_error("policy gradient is not finite");
    return grad;
  }
  // central finite differences over the packed parameters
  Eigen::VectorXd grad(policy.n_params());
  const Eigen::VectorXd p0 = policy.pack_params();
  for (int k = 0; k < policy.n_params(); ++k) {
    const double h = 1e-4 * std::max(1.0, std::abs(p0[k]));
    RbfPolicy pp = policy, pm = policy;
    Eigen::VectorXd vp = p0, vm = p0;
    vp[k] += h;
    vm[k] -= h;
    pp.unpack_params(vp);
    pm.unpack_params(vm);
    const double fp = rollout_moments(model, pp, s0, c).expected_return;
    const double fm = rollout_moments(model, pm, s0, c).expected_return;
    grad[k] = (fp - fm) / (2.0 * h);
  }
  if (!grad.allFinite())
    throw std::runtime_error("policy gradient is not finite");
  return grad;
}

RbfPolicy improve_policy(const RbfPolicy& policy, const GpModel& model,
                         const GaussianState& s0, const RolloutConfig& rollout,
                         const SearchConfig& cfg) {
  RolloutConfig rc = rollout;
  rc.divergence_trace = cfg.divergence_trace;

  RbfPolicy work = policy;
  // The return surface is flat far out in lengthscale space and the moment
  // formulas overflow there; a soft box keeps the optimizer in the region
  // where both are healthy.
  const int n_len = policy.input_dim();
  const int n_par = policy.n_params();
  const double len_lo = std::log(1e-2), len_hi = std::log(1e2);
  const auto objective = [&](const Eigen::VectorXd& params,
                             Eigen::VectorXd& grad) -> double {
    work.unpack_params(params);
    Eigen::VectorXd g;
    const auto roll = rollout_moments(model, work, s0, rc, &g);
    if (roll.diverged || !std::isfinite(roll.expected_return) ||
        !g.allFinite()) {
      grad.setZero(params.size());
      return std::numeric_limits<double>::infinity();
    }
    grad = -g;
    double penalty = 0.0;
    for (int k = n_par - n_len; k < n_par; ++k) {
      const double x = params[k];
      if (x < len_lo) {
        penalty += 10.0 * (x - len_lo) * (x - len_lo);
        grad[k] += 20.0 * (x - len_lo);
      } else if (x > len_hi) {
        penalty += 10.0 * (x - len_hi) * (x - len_hi);
        grad[k] += 20.0 * (x - len_hi);
      }
    }
    return -roll.expected_return + penalty;
  };

  OptimizeOptions oo;
  oo.max_iters = cfg.opt_max_steps;
  oo.plateau_tol = cfg.opt_plateau_tol;
  oo.init_step = cfg.opt_step_size;
  const auto res = minimize(objective, policy.pack_params(), oo);

  RbfPolicy out = policy;
  out.unpack_params(res.x);
  return out;
}

PilcoResult pilco_loop(const Env& env, const PiBasis& basis,
                       const SearchConfig& cfg,
                       const EpisodeCallback& callback) {
  if (cfg.episodes < 1) throw ConfigError("episode budget must be >= 1");

  PilcoResult result;
  result.basis = basis;

  const int obs_dim = env.state_dim() + 1;
  const GaussianState s0 = reset_distribution_pi(env, basis);
  RolloutConfig rollout;
  rollout.horizon = cfg.rollout_horizon;
  rollout.angle_index = env.angle_index();
  rollout.divergence_trace = cfg.divergence_trace;
  rollout.reward = make_reward_model(env, basis);

  const double bound_pi =
      env.params().action_bound * action_factor(basis, env);

  // seed episode under a small random policy
  auto seed_rng = make_rng(derive_seed(cfg.seed, 0xA11CE));
  RbfPolicy policy = init_policy(seed_rng, Eigen::MatrixXd(0, obs_dim),
                                 cfg.n_basis, obs_dim, bound_pi);
  {
    auto ep_rng = make_rng(derive_seed(cfg.seed, 1, 0xE9));
    EpisodeRecord rec = collect_episode(env, policy, basis, ep_rng,
                                        ResetMode::Random);
    result.dataset.append(rec, env, basis);
    result.history.push_back({1, rec.total_reward(), 0.0, false});
    if (callback) callback(1, policy, nullptr, rec);
  }

  // re-draw the working policy with data-informed centers
  {
    auto init_rng = make_rng(derive_seed(cfg.seed, 0xB0B));
    policy = init_policy(init_rng, result.dataset.observations(), cfg.n_basis,
                         obs_dim, bound_pi);
  }

  GpFitOptions fit_opts;
  fit_opts.max_iters = cfg.gp_opt_iters;
  fit_opts.restarts = cfg.gp_restarts;

  for (int ep = 2; ep <= cfg.episodes + 1; ++ep) {
    // fit on the capped dataset, warm-starting from the previous episode
    fit_opts.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(ep), 0xF1);
    GpModel model =
        GpModel::fit(result.dataset.training_set(cfg.gp_max_points), fit_opts);
    fit_opts.warm_start.clear();
    for (int e = 0; e < model.output_dim(); ++e)
      fit_opts.warm_start.push_back(model.hyperparams(e));
    result.final_hyperparams = fit_opts.warm_start;

    policy = improve_policy(policy, model, s0, rollout, cfg);

    const double est =
        estimate_return(model, policy, s0, cfg.rollout_horizon, rollout);

    if (ep > cfg.episodes) {
      // final improvement pass only; budget exhausted
      (void)est;
      if (callback) callback(ep, policy, &model, EpisodeRecord{});
      break;
    }

    auto ep_rng =
        make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ep), 0xE9));
    EpisodeRecord rec =
        collect_episode(env, policy, basis, ep_rng, ResetMode::Random);
    result.dataset.append(rec, env, basis);
    EpisodeStats stats;
    stats.episode = ep;
    stats.real_return = rec.total_reward();
    stats.estimated_return = est;
    for (const auto& s : rec.steps) stats.clipped_any |= s.clipped;
    result.history.push_back(stats);
    if (callback) callback(ep, policy, &model, rec);
  }

  result.policy = policy;
  return result;
}

}  // namespace pimdp
