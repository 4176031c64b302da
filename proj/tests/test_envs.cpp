#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pimdp/envs.hpp"
#include "pimdp/errors.hpp"
#include "pimdp/rng.hpp"

using namespace pimdp;

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(0.3) == doctest::Approx(0.3));
  CHECK(wrap_angle(2.0 * M_PI + 0.3) == doctest::Approx(0.3));
  CHECK(wrap_angle(-0.3 - 2.0 * M_PI) == doctest::Approx(-0.3));
}

TEST_CASE("pendulum hanging rest state is a fixed point") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  Eigen::VectorXd s(2);
  s << M_PI, 0.0;
  const Eigen::VectorXd next = env->step(s, 0.0);
  CHECK(next[0] == doctest::Approx(M_PI));
  CHECK(next[1] == doctest::Approx(0.0));
}

TEST_CASE("gravity accelerates the pendulum away from upright") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  Eigen::VectorXd s(2);
  s << 0.1, 0.0;
  CHECK(env->step(s, 0.0)[1] > 0.0);
  s << -0.1, 0.0;
  CHECK(env->step(s, 0.0)[1] < 0.0);
}

TEST_CASE("unforced pendulum conserves energy to 1e-3 over 100 steps") {
  // Semi-implicit Euler keeps the energy oscillating near the true value;
  // a small step keeps the excursion well under the bound. The start is a
  // gentle swing so the speed clip never engages.
  EnvParams p = default_env_params("pendulum");
  p.dt = 0.001;
  auto env = std::make_unique<PendulumEnv>(nominal_context("pendulum"), p);
  Eigen::VectorXd s(2);
  s << 2.6, 0.0;
  const double e0 = env->energy(s);
  REQUIRE(std::abs(e0) > 1.0);
  double max_drift = 0.0;
  for (int t = 0; t < 100; ++t) {
    s = env->step(s, 0.0);
    max_drift = std::max(max_drift, std::abs(env->energy(s) - e0));
  }
  CHECK(max_drift / std::abs(e0) < 1e-3);
}

TEST_CASE("pendulum reward is Gymnasium's quadratic cost") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  Eigen::VectorXd target(2);
  target << 0.0, 0.0;
  CHECK(env->reward(target, 0.0) == doctest::Approx(0.0));
  Eigen::VectorXd hanging(2);
  hanging << M_PI, 0.0;
  CHECK(env->reward(hanging, 0.0) == doctest::Approx(-M_PI * M_PI));
  Eigen::VectorXd moving(2);
  moving << 0.5, 2.0;
  CHECK(env->reward(moving, 1.5) ==
        doctest::Approx(-(0.25 + 0.1 * 4.0 + 0.001 * 2.25)));
}

TEST_CASE("pendulum speed clip and action clip engage") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  Eigen::VectorXd s(2);
  s << M_PI / 2.0, 7.9;
  const Eigen::VectorXd next = env->step(s, 100.0);
  CHECK(next[1] <= 8.0);
  bool clipped = false;
  env->step(s, 100.0, nullptr, &clipped);
  CHECK(clipped);
  env->step(s, 1.0, nullptr, &clipped);
  CHECK_FALSE(clipped);
}

TEST_CASE("cartpole upright rest is a fixed point and is unstable") {
  auto env = make_env("cartpole", nominal_context("cartpole"));
  Eigen::VectorXd s(4);
  s << 0.0, 0.0, 0.0, 0.0;
  const Eigen::VectorXd next = env->step(s, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(next[i] == doctest::Approx(0.0));

  s << 0.0, 0.02, 0.0, 0.0;
  const Eigen::VectorXd pushed = env->step(s, 0.0);
  CHECK(pushed[1] > 0.02);  // angle grows away from upright
}

TEST_CASE("cartpole momentum follows the applied force") {
  // With gravity negligible the only horizontal external force is F, so the
  // total momentum m_c x_dot + m_p (x_dot + l theta_dot cos theta) equals
  // F t exactly; RK4 should track the closed form within 1%.
  Context c = nominal_context("cartpole");
  c.g = 1e-9;
  auto env = std::make_unique<CartpoleEnv>(c, default_env_params("cartpole"));
  const double F = 5.0;
  const double m_c = env->params().cart_mass, m_p = c.M, l = c.L / 2.0;
  Eigen::VectorXd s(4);
  s << 0.0, 0.0, 0.0, 0.0;
  double t = 0.0;
  for (int k = 0; k < 10; ++k) {  // 10 control steps = 1 s
    s = env->step(s, F);
    t += env->params().control_dt();
    const double momentum =
        m_c * s[2] + m_p * (s[2] + l * s[3] * std::cos(s[1]));
    CHECK(momentum == doctest::Approx(F * t).epsilon(0.01));
  }
  // and the COM velocity matches F t / (m_c + m_p)
  const double v_com =
      (m_c * s[2] + m_p * (s[2] + l * s[3] * std::cos(s[1]))) / (m_c + m_p);
  CHECK(v_com == doctest::Approx(F * 1.0 / (m_c + m_p)).epsilon(0.01));
}

TEST_CASE("cartpole reward saturates at the target") {
  auto env = make_env("cartpole", nominal_context("cartpole"));
  Eigen::VectorXd target(4);
  target << 0.0, 0.0, 0.0, 0.0;
  CHECK(env->reward(target, 0.0) == doctest::Approx(0.0));
  Eigen::VectorXd hanging(4);
  hanging << 0.0, M_PI, 0.0, 0.0;
  // hanging: tip at (0, -L), distance 2L = 2, deep in the saturated region
  CHECK(env->reward(hanging, 0.0) ==
        doctest::Approx(std::exp(-4.0 / (2.0 * 0.0625)) - 1.0));
  CHECK(env->reward(hanging, 0.0) > -1.0);
}

TEST_CASE("resets are deterministic and respect the mode") {
  for (const char* name : {"pendulum", "cartpole"}) {
    auto env = make_env(name, nominal_context(name));
    auto r1 = make_rng(42), r2 = make_rng(42);
    const Eigen::VectorXd a = env->reset(r1, ResetMode::Random);
    const Eigen::VectorXd b = env->reset(r2, ResetMode::Random);
    CHECK((a - b).norm() == 0.0);
  }
  auto pend = make_env("pendulum", nominal_context("pendulum"));
  auto rng = make_rng(1);
  const Eigen::VectorXd nominal = pend->reset(rng, ResetMode::Nominal);
  CHECK(nominal[0] == doctest::Approx(M_PI));
  CHECK(nominal[1] == doctest::Approx(0.0));

  auto cart = make_env("cartpole", nominal_context("cartpole"));
  const Eigen::VectorXd chang = cart->reset(rng, ResetMode::Random);
  CHECK(std::abs(wrap_angle(chang[1] - M_PI)) < 0.1);  // hanging down
}

TEST_CASE("pendulum random resets have the declared distribution") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  auto rng = make_rng(20250810);
  const int n = 10000;
  double sum_theta = 0.0, sum_vel = 0.0;
  double min_theta = 1e9, max_theta = -1e9;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd s = env->reset(rng, ResetMode::Random);
    sum_theta += s[0];
    sum_vel += s[1];
    min_theta = std::min(min_theta, s[0]);
    max_theta = std::max(max_theta, s[0]);
    CHECK(std::abs(s[0]) <= M_PI);
    CHECK(std::abs(s[1]) <= 1.0);
  }
  // mean of U(-pi, pi) is 0 with sigma_mean = pi/sqrt(3 n)
  const double sigma_mean = M_PI / std::sqrt(3.0 * n);
  CHECK(std::abs(sum_theta / n) < 3.0 * sigma_mean);
  CHECK(std::abs(sum_vel / n) < 3.0 / std::sqrt(3.0 * n));
  CHECK(min_theta < -3.0);  // the range is actually covered
  CHECK(max_theta > 3.0);
}

TEST_CASE("trajectories are bit-for-bit deterministic") {
  for (const char* name : {"pendulum", "cartpole"}) {
    auto env = make_env(name, nominal_context(name));
    auto rng1 = make_rng(7), rng2 = make_rng(7);
    Eigen::VectorXd s1 = env->reset(rng1, ResetMode::Random);
    Eigen::VectorXd s2 = env->reset(rng2, ResetMode::Random);
    std::mt19937_64 action_rng(3);
    std::uniform_real_distribution<double> ua(-1.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      const double a = ua(action_rng);
      s1 = env->step(s1, a);
      s2 = env->step(s2, a);
      REQUIRE((s1 - s2).norm() == 0.0);
      const int ia = (std::string(name) == "pendulum") ? 0 : 1;
      CHECK(s1[ia] <= M_PI);
      CHECK(s1[ia] > -M_PI);
    }
  }
}

TEST_CASE("observations expand the angle to sine and cosine") {
  auto env = make_env("cartpole", nominal_context("cartpole"));
  Eigen::VectorXd s(4);
  s << 0.5, 0.7, -0.2, 1.1;
  const Eigen::VectorXd obs = env->observe(s);
  REQUIRE(obs.size() == 5);
  CHECK(obs[0] == doctest::Approx(0.5));
  CHECK(obs[1] == doctest::Approx(std::sin(0.7)));
  CHECK(obs[2] == doctest::Approx(std::cos(0.7)));
  CHECK(obs[3] == doctest::Approx(-0.2));
  CHECK(obs[4] == doctest::Approx(1.1));
  CHECK(obs[1] * obs[1] + obs[2] * obs[2] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("context scaling is pure time rescaling for the free pendulum") {
  // Simulating pole length a L0 with timestep dt sqrt(a) must reproduce the
  // nominal angle sequence; this pins down that context enters the dynamics
  // only through the dimensional scaling.
  const Context c0 = nominal_context("pendulum");
  EnvParams p0 = default_env_params("pendulum");
  auto nominal = std::make_unique<PendulumEnv>(c0, p0);

  for (double a : {0.5, 0.8, 1.25, 1.5}) {
    Context c = c0;
    c.L = a * c0.L;
    EnvParams p = p0;
    p.dt = p0.dt * std::sqrt(c.L / c.g * c0.g / c0.L);
    auto scaled = std::make_unique<PendulumEnv>(c, p);

    Eigen::VectorXd s0(2), s1(2);
    s0 << M_PI - 0.5, 0.0;
    s1 = s0;
    for (int t = 0; t < 200; ++t) {
      s0 = nominal->step(s0, 0.0);
      s1 = scaled->step(s1, 0.0);
      CHECK(std::abs(s0[0] - s1[0]) < 1e-6);
      // dimensionless angular speed matches too
      const double w0 = s0[1] * std::sqrt(c0.L / c0.g);
      const double w1 = s1[1] * std::sqrt(c.L / c.g);
      CHECK(std::abs(w0 - w1) < 1e-6);
    }
  }
}

TEST_CASE("non-finite states raise simulation errors") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  Eigen::VectorXd bad(2);
  bad << std::numeric_limits<double>::quiet_NaN(), 0.0;
  CHECK_THROWS_AS(env->step(bad, 0.0), SimulationError);
}

TEST_CASE("episode records accumulate rewards and serialize to CSV") {
  auto env = make_env("pendulum", nominal_context("pendulum"));
  EpisodeRecord rec;
  rec.context = env->context();
  Eigen::VectorXd s(2);
  s << M_PI, 0.0;
  for (int t = 0; t < 3; ++t) {
    StepRecord sr;
    sr.t = t * env->params().control_dt();
    sr.state = s;
    sr.action = 0.5;
    double r = 0.0;
    sr.next_state = env->step(s, sr.action, &r, &sr.clipped);
    sr.reward = r;
    rec.steps.push_back(sr);
    s = sr.next_state;
  }
  CHECK(rec.steps.size() == 3);
  CHECK(rec.total_reward() == doctest::Approx(rec.steps[0].reward +
                                              rec.steps[1].reward +
                                              rec.steps[2].reward));
  const std::string csv = rec.to_csv(env->state_names());
  CHECK(csv.substr(0, csv.find('\n')) == "t,theta,theta_dot,action,reward");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
