#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pimdp/gp_moments.hpp"
#include "pimdp/rng.hpp"
#include "pimdp/moments.hpp"
#include "pimdp/rollout.hpp"

using namespace pimdp;

namespace {

RbfPolicy small_policy(std::uint64_t seed, int n_basis, int obs_dim,
                       double bound, double weight_scale) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd centers(n_basis, obs_dim);
  Eigen::VectorXd weights(n_basis), loglen(obs_dim);
  for (int i = 0; i < n_basis; ++i) {
    weights[i] = weight_scale * g(rng);
    for (int d = 0; d < obs_dim; ++d) centers(i, d) = g(rng);
  }
  loglen.setZero();
  return RbfPolicy(centers, weights, loglen, bound);
}

// GP over (obs, action) -> state delta trained on a mildly contracting
// system; the posterior is smooth, the regime where moment matching is
// sharp.
GpModel benign_model(std::uint64_t seed, int d, int n) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int D = d + 2;  // sin, cos replace the angle; action appended
  TrainingSet train;
  train.inputs.resize(n, D);
  train.targets.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < D; ++k) train.inputs(i, k) = g(rng);
    // delta = small smooth function of the inputs
    for (int e = 0; e < d; ++e)
      train.targets(i, e) = 0.05 * std::sin(train.inputs(i, e)) +
                            0.05 * train.inputs(i, D - 1) + 0.01 * g(rng);
  }
  GpFitOptions opts;
  opts.seed = seed;
  opts.max_iters = 60;
  return GpModel::fit(train, opts);
}

RewardModel pendulum_reward(int d) {
  RewardModel rm;
  rm.kind = RewardModel::Kind::PendulumQuadratic;
  rm.state_factors = Eigen::VectorXd::Ones(d);
  rm.action_factor = 1.0;
  return rm;
}

}  // namespace

TEST_CASE("one-step rollout equals the composed stage pipeline") {
  const int d = 2;
  const GpModel model = benign_model(1, d, 25);
  const RbfPolicy policy = small_policy(2, 6, d + 1, 1.0, 0.3);

  Eigen::VectorXd mu(d);
  mu << 0.4, -0.2;
  Eigen::MatrixXd sig = 0.02 * Eigen::MatrixXd::Identity(d, d);
  GaussianState s0(mu, sig);

  RolloutConfig cfg;
  cfg.horizon = 1;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  const auto roll = rollout_moments(model, policy, s0, cfg);
  REQUIRE(roll.states.size() == 2);

  // manual composition
  const TrigResult trig = trig_expand(mu, sig, 0);
  const auto act = policy.act_uncertain(trig.mean, trig.cov);
  Eigen::VectorXd mu_x(d + 2);
  mu_x.head(d + 1) = trig.mean;
  mu_x[d + 1] = act.mean;
  Eigen::MatrixXd sig_x(d + 2, d + 2);
  sig_x.topLeftCorner(d + 1, d + 1) = trig.cov;
  const Eigen::VectorXd w2 = trig.cov * act.v;
  sig_x.block(0, d + 1, d + 1, 1) = w2;
  sig_x.block(d + 1, 0, 1, d + 1) = w2.transpose();
  sig_x(d + 1, d + 1) = act.var;

  std::vector<MomentOutputSpec> specs;
  for (int e = 0; e < d; ++e) {
    MomentOutputSpec spec;
    spec.beta = &model.beta(e);
    spec.ilam = model.inv_sq_lengthscales(e);
    spec.sf2 = model.hyperparams(e).sf2();
    spec.sn2 = model.hyperparams(e).sn2();
    spec.kinv = &model.kinv(e);
    specs.push_back(std::move(spec));
  }
  MomentMatchResult mm;
  moment_match(model.train_inputs(), specs, mu_x, sig_x, mm);

  const Eigen::MatrixXd SV1 = sig * trig.vmat;
  Eigen::MatrixXd Csx(d, d + 2);
  Csx.leftCols(d + 1) = SV1;
  Csx.col(d + 1) = SV1 * act.v;
  const Eigen::MatrixXd C = Csx * mm.vmat;
  const Eigen::VectorXd mu_next = mu + mm.mean;
  const Eigen::MatrixXd sig_next = sig + mm.cov + C + C.transpose();

  CHECK((roll.states[1].mean - mu_next).norm() < 1e-12);
  CHECK((roll.states[1].cov - sig_next).norm() < 1e-12);
}

TEST_CASE("zero policy and zero-mean prior keep the mean still") {
  const int d = 2, D = d + 2, n = 10;
  TrainingSet train;
  train.inputs = Eigen::MatrixXd::Random(n, D);
  train.targets = Eigen::MatrixXd::Zero(n, d);
  std::vector<GpHyperparams> hps;
  for (int e = 0; e < d; ++e) {
    GpHyperparams hp;
    hp.log_lengthscales = Eigen::VectorXd::Zero(D);
    hp.log_signal = std::log(0.2);
    hp.log_noise = std::log(0.02);
    hps.push_back(hp);
  }
  const GpModel model = GpModel::from_hyperparams(train, hps);
  const RbfPolicy policy = small_policy(3, 4, d + 1, 1.0, 0.0);  // zero weights

  GaussianState s0(Eigen::VectorXd::Zero(d),
                   0.001 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 8;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  const auto roll = rollout_moments(model, policy, s0, cfg);
  REQUIRE_FALSE(roll.diverged);
  double prev_trace = s0.cov.trace();
  for (int t = 1; t <= 8; ++t) {
    CHECK(roll.states[static_cast<std::size_t>(t)].mean.norm() < 1e-9);
    const double tr = roll.states[static_cast<std::size_t>(t)].cov.trace();
    CHECK(tr > prev_trace);
    prev_trace = tr;
  }
}

TEST_CASE("moment-matched rollout tracks a particle simulation") {
  const int d = 2;
  const GpModel model = benign_model(5, d, 30);
  const RbfPolicy policy = small_policy(6, 6, d + 1, 1.0, 0.3);

  Eigen::VectorXd mu(d);
  mu << 0.3, -0.1;
  GaussianState s0(mu, 0.01 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 10;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);

  const auto mmroll = rollout_moments(model, policy, s0, cfg);
  REQUIRE_FALSE(mmroll.diverged);

  auto rng = make_rng(77);
  const int n_particles = 10000;
  const auto particles =
      rollout_particles(model, policy, s0, cfg, n_particles, rng);

  for (int t = 1; t <= 10; ++t) {
    for (int e = 0; e < d; ++e) {
      const double se = std::sqrt(
          particles.state_vars[static_cast<std::size_t>(t)][e] / n_particles);
      const double diff = std::abs(
          mmroll.states[static_cast<std::size_t>(t)].mean[e] -
          particles.state_means[static_cast<std::size_t>(t)][e]);
      CHECK(diff <= 3.0 * se + 1e-6);
      // variances should agree to a few percent in this smooth regime
      const double v_mm = mmroll.states[static_cast<std::size_t>(t)].cov(e, e);
      const double v_mc = particles.state_vars[static_cast<std::size_t>(t)][e];
      CHECK(v_mm == doctest::Approx(v_mc).epsilon(0.10));
    }
  }
  CHECK(std::abs(mmroll.expected_return - particles.mean_return) <=
        3.0 * particles.return_std_error + 1e-3);
}

TEST_CASE("tiny-variance model holds the state and pays the static reward") {
  const int d = 2, D = d + 2, n = 8;
  TrainingSet train;
  train.inputs = Eigen::MatrixXd::Random(n, D);
  train.targets = Eigen::MatrixXd::Zero(n, d);
  std::vector<GpHyperparams> hps;
  for (int e = 0; e < d; ++e) {
    GpHyperparams hp;
    hp.log_lengthscales = Eigen::VectorXd::Zero(D);
    hp.log_signal = std::log(1e-4);
    hp.log_noise = std::log(1e-5);
    hps.push_back(hp);
  }
  const GpModel model = GpModel::from_hyperparams(train, hps);
  const RbfPolicy policy = small_policy(7, 4, d + 1, 1.0, 0.0);

  Eigen::VectorXd rest(d);
  rest << 0.7, 0.0;
  GaussianState s0(rest, 1e-10 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 12;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  const auto roll = rollout_moments(model, policy, s0, cfg);
  const double r_rest = -(0.7 * 0.7);
  CHECK(roll.expected_return ==
        doctest::Approx(12.0 * r_rest).epsilon(1e-3));
}

TEST_CASE("expected rewards match Monte Carlo for both reward kinds") {
  auto rng = make_rng(11);
  std::normal_distribution<double> g(0.0, 1.0);

  SUBCASE("pendulum quadratic") {
    RewardModel rm = pendulum_reward(2);
    rm.state_factors << 1.0, 0.5;  // dimensionless factors
    rm.action_factor = 0.2;
    Eigen::VectorXd mu(2);
    mu << 0.4, -0.6;
    Eigen::MatrixXd sig(2, 2);
    sig << 0.09, 0.02, 0.02, 0.16;
    const double mu_u = 0.1, var_u = 0.04;
    const double analytic =
        expected_reward(rm, 0, GaussianState(mu, sig), mu_u, var_u);
    const Eigen::MatrixXd L = sig.llt().matrixL();
    double acc = 0.0;
    const int N = 400000;
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd z(2);
      z << g(rng), g(rng);
      const Eigen::VectorXd s = mu + L * z;
      const double u = mu_u + std::sqrt(var_u) * g(rng);
      const double th = s[0] / 1.0, w = s[1] / 0.5, un = u / 0.2;
      acc += -(th * th + 0.1 * w * w + 0.001 * un * un);
    }
    CHECK(analytic == doctest::Approx(acc / N).epsilon(0.01));
  }

  SUBCASE("cartpole saturating") {
    RewardModel rm;
    rm.kind = RewardModel::Kind::CartpoleSaturating;
    rm.state_factors = Eigen::VectorXd::Ones(4);
    rm.state_factors[0] = 2.0;  // x_pi = 2 x_nat
    rm.pole_len = 1.0;
    rm.sigma_r = 0.25;
    rm.steps_per_control = 5.0;
    Eigen::VectorXd mu(4);
    mu << 0.2, 2.8, 0.0, 0.0;
    Eigen::MatrixXd sig = 0.04 * Eigen::MatrixXd::Identity(4, 4);
    sig(0, 1) = sig(1, 0) = 0.01;
    const double analytic =
        expected_reward(rm, 1, GaussianState(mu, sig), 0.0, 0.0);
    const Eigen::MatrixXd L = sig.llt().matrixL();
    double acc = 0.0;
    const int N = 400000;
    for (int k = 0; k < N; ++k) {
      Eigen::VectorXd z(4);
      z << g(rng), g(rng), g(rng), g(rng);
      const Eigen::VectorXd s = mu + L * z;
      const double x_nat = s[0] / 2.0;
      const double tip_x = x_nat + std::sin(s[1]);
      const double tip_y = std::cos(s[1]);
      const double d2 = tip_x * tip_x + (tip_y - 1.0) * (tip_y - 1.0);
      acc += 5.0 * (std::exp(-d2 / (2.0 * 0.0625)) - 1.0);
    }
    CHECK(analytic == doctest::Approx(acc / N).epsilon(0.01));
  }
}

TEST_CASE("return gradient matches central finite differences") {
  const int d = 2;
  const GpModel model = benign_model(9, d, 20);
  RbfPolicy policy = small_policy(10, 4, d + 1, 1.0, 0.4);

  Eigen::VectorXd mu(d);
  mu << 0.2, -0.3;
  GaussianState s0(mu, 0.02 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 3;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  cfg.reward.action_factor = 0.5;

  Eigen::VectorXd grad;
  rollout_moments(model, policy, s0, cfg, &grad);
  REQUIRE(grad.size() == policy.n_params());

  const Eigen::VectorXd p0 = policy.pack_params();
  double max_rel = 0.0;
  for (int k = 0; k < policy.n_params(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(p0[k]));
    RbfPolicy pp = policy, pm = policy;
    Eigen::VectorXd vp = p0, vm = p0;
    vp[k] += h;
    vm[k] -= h;
    pp.unpack_params(vp);
    pm.unpack_params(vm);
    const double fp = rollout_moments(model, pp, s0, cfg).expected_return;
    const double fm = rollout_moments(model, pm, s0, cfg).expected_return;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel =
        std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-4);
    max_rel = std::max(max_rel, rel);
  }
  CHECK(max_rel <= 1e-3);
  // the analytic path is much tighter than the criterion; the residual is
  // finite-difference noise on the smallest components
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("cartpole-style rollout gradient also matches finite differences") {
  // 4-d state with the angle in the middle and the saturating reward: the
  // full cartpole pipeline shape.
  const int d = 4;
  auto rng = make_rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  const int D = d + 2, n = 15;
  TrainingSet train;
  train.inputs.resize(n, D);
  train.targets.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < D; ++k) train.inputs(i, k) = g(rng);
    for (int e = 0; e < d; ++e)
      train.targets(i, e) =
          0.04 * std::sin(train.inputs(i, (e + 1) % D)) + 0.01 * g(rng);
  }
  GpFitOptions opts;
  opts.seed = 3;
  opts.max_iters = 40;
  const GpModel model = GpModel::fit(train, opts);
  RbfPolicy policy = small_policy(14, 3, d + 1, 2.0, 0.3);

  Eigen::VectorXd mu(d);
  mu << 0.1, 2.9, -0.1, 0.2;
  GaussianState s0(mu, 0.01 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 3;
  cfg.angle_index = 1;
  cfg.reward.kind = RewardModel::Kind::CartpoleSaturating;
  cfg.reward.state_factors = Eigen::VectorXd::Ones(d);
  cfg.reward.state_factors[0] = 1.5;
  cfg.reward.pole_len = 1.0;
  cfg.reward.steps_per_control = 5.0;

  Eigen::VectorXd grad;
  rollout_moments(model, policy, s0, cfg, &grad);

  const Eigen::VectorXd p0 = policy.pack_params();
  double max_rel = 0.0;
  for (int k = 0; k < policy.n_params(); ++k) {
    const double h = 1e-5 * std::max(1.0, std::abs(p0[k]));
    RbfPolicy pp = policy, pm = policy;
    Eigen::VectorXd vp = p0, vm = p0;
    vp[k] += h;
    vm[k] -= h;
    pp.unpack_params(vp);
    pm.unpack_params(vm);
    const double fp = rollout_moments(model, pp, s0, cfg).expected_return;
    const double fm = rollout_moments(model, pm, s0, cfg).expected_return;
    const double fd = (fp - fm) / (2.0 * h);
    max_rel = std::max(max_rel,
                       std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-4));
  }
  CHECK(max_rel <= 1e-3);
}

TEST_CASE("runaway covariance raises the divergence flag") {
  const int d = 2, D = d + 2, n = 8;
  TrainingSet train;
  train.inputs = Eigen::MatrixXd::Random(n, D);
  train.targets = Eigen::MatrixXd::Zero(n, d);
  std::vector<GpHyperparams> hps;
  for (int e = 0; e < d; ++e) {
    GpHyperparams hp;
    hp.log_lengthscales = Eigen::VectorXd::Constant(D, -1.0);
    hp.log_signal = std::log(50.0);  // enormous prior variance
    hp.log_noise = std::log(5.0);
    hps.push_back(hp);
  }
  const GpModel model = GpModel::from_hyperparams(train, hps);
  const RbfPolicy policy = small_policy(15, 4, d + 1, 1.0, 0.1);
  GaussianState s0(Eigen::VectorXd::Zero(d),
                   0.01 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 50;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  cfg.divergence_trace = 100.0;
  Eigen::VectorXd grad;
  const auto roll = rollout_moments(model, policy, s0, cfg, &grad);
  CHECK(roll.diverged);
  CHECK(std::isinf(roll.expected_return));
  CHECK(roll.expected_return < 0.0);
}

TEST_CASE("rollouts are deterministic") {
  const int d = 2;
  const GpModel model = benign_model(17, d, 20);
  const RbfPolicy policy = small_policy(18, 5, d + 1, 1.0, 0.2);
  GaussianState s0(Eigen::VectorXd::Zero(d),
                   0.01 * Eigen::MatrixXd::Identity(d, d));
  RolloutConfig cfg;
  cfg.horizon = 5;
  cfg.angle_index = 0;
  cfg.reward = pendulum_reward(d);
  const auto a = rollout_moments(model, policy, s0, cfg);
  const auto b = rollout_moments(model, policy, s0, cfg);
  CHECK(a.expected_return == b.expected_return);
  for (std::size_t t = 0; t < a.states.size(); ++t)
    CHECK((a.states[t].mean - b.states[t].mean).norm() == 0.0);
}
