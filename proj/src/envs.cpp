#include "pimdp/envs.hpp"

#include <algorithm>
#include <cmath>

#include "pimdp/csvio.hpp"
#include "pimdp/errors.hpp"

namespace pimdp {

Context nominal_context(const std::string& env_name) {
  if (env_name == "pendulum") return Context{1.0, 1.0, 10.0};
  if (env_name == "cartpole") return Context{1.0, 0.1, 9.81};
  throw ConfigError("unknown environment '" + env_name + "'");
}

double wrap_angle(double theta) {
  double r = std::fmod(theta + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;
}

EnvParams default_env_params(const std::string& env_name) {
  EnvParams p;
  if (env_name == "pendulum") {
    p.dt = 0.05;
    p.action_repeat = 1;
    p.horizon = 200;
    p.action_bound = 2.0;
    p.speed_bound = 8.0;
  } else if (env_name == "cartpole") {
    p.dt = 0.02;
    p.action_repeat = 5;
    p.horizon = 500;
    p.action_bound = 10.0;
    p.cart_mass = 1.0;
    p.track_bound = 2.4;
    p.sigma_r = 0.25;
  } else {
    throw ConfigError("unknown environment '" + env_name + "'");
  }
  return p;
}

double EpisodeRecord::total_reward() const {
  double sum = 0.0;
  for (const auto& s : steps) sum += s.reward;
  return sum;
}

const Eigen::VectorXd& EpisodeRecord::final_state() const {
  if (steps.empty())
    throw std::logic_error("episode record has no steps");
  return steps.back().next_state;
}

std::string EpisodeRecord::to_csv(
    const std::vector<std::string>& state_names) const {
  std::vector<std::string> header{"t"};
  header.insert(header.end(), state_names.begin(), state_names.end());
  header.push_back("action");
  header.push_back("reward");
  CsvWriter w(header);
  for (const auto& s : steps) {
    std::vector<double> row{s.t};
    for (int i = 0; i < s.state.size(); ++i) row.push_back(s.state[i]);
    row.push_back(s.action);
    row.push_back(s.reward);
    w.add_row(row);
  }
  return w.str();
}

Eigen::VectorXd Env::observe(const Eigen::VectorXd& state) const {
  const int ia = angle_index();
  Eigen::VectorXd obs(state.size() + 1);
  int k = 0;
  for (int i = 0; i < state.size(); ++i) {
    if (i == ia) {
      obs[k++] = std::sin(state[i]);
      obs[k++] = std::cos(state[i]);
    } else {
      obs[k++] = state[i];
    }
  }
  return obs;
}

namespace {

void check_finite(const Eigen::VectorXd& s, const char* env) {
  if (!s.allFinite())
    throw SimulationError(std::string(env) + " produced a non-finite state");
}

}  // namespace

// ---------------------------------------------------------------------------
// Pendulum

double PendulumEnv::reward(const Eigen::VectorXd& state, double action) const {
  const double th = wrap_angle(state[0]);
  const double thdot = state[1];
  const double u = std::clamp(action, -params_.action_bound,
                              params_.action_bound);
  return -(th * th + 0.1 * thdot * thdot + 0.001 * u * u);
}

Eigen::VectorXd PendulumEnv::step_impl(const Eigen::VectorXd& state,
                                       double action, double* reward_accum,
                                       bool* clipped) const {
  check_finite(state, "pendulum");
  const double u = std::clamp(action, -params_.action_bound,
                              params_.action_bound);
  if (clipped) *clipped = u != action;
  const double L = context_.L, M = context_.M, g = context_.g;
  const double dt = params_.dt;

  double th = state[0], thdot = state[1];
  double reward_sum = 0.0;
  for (int k = 0; k < params_.action_repeat; ++k) {
    Eigen::Vector2d cur(th, thdot);
    reward_sum += reward(cur, u);
    const double thddot =
        3.0 * g / (2.0 * L) * std::sin(th) + 3.0 / (M * L * L) * u;
    thdot = std::clamp(thdot + thddot * dt, -params_.speed_bound,
                       params_.speed_bound);
    th = wrap_angle(th + thdot * dt);
  }
  if (reward_accum) *reward_accum = reward_sum;
  Eigen::VectorXd next(2);
  next << th, thdot;
  check_finite(next, "pendulum");
  return next;
}

Eigen::VectorXd PendulumEnv::reset(std::mt19937_64& rng,
                                   ResetMode mode) const {
  Eigen::VectorXd s(2);
  if (mode == ResetMode::Nominal) {
    s << M_PI, 0.0;
    return s;
  }
  std::uniform_real_distribution<double> utheta(-M_PI, M_PI);
  std::uniform_real_distribution<double> uvel(-1.0, 1.0);
  s << utheta(rng), uvel(rng);
  return s;
}

bool PendulumEnv::is_success(const Eigen::VectorXd& final_state, double eps,
                             bool velocity_only) const {
  if (std::abs(final_state[1]) > eps) return false;
  if (velocity_only) return true;
  return std::abs(wrap_angle(final_state[0])) <= params_.success_angle;
}

double PendulumEnv::energy(const Eigen::VectorXd& state) const {
  const double L = context_.L, M = context_.M, g = context_.g;
  const double inertia = M * L * L / 3.0;
  return 0.5 * inertia * state[1] * state[1] +
         0.5 * M * g * L * std::cos(state[0]);
}

// ---------------------------------------------------------------------------
// Cartpole

Eigen::Vector4d CartpoleEnv::derivatives(const Eigen::Vector4d& s,
                                         double force) const {
  const double theta = s[1], x_dot = s[2], theta_dot = s[3];
  const double m_p = context_.M, m_c = params_.cart_mass, g = context_.g;
  const double l = context_.L / 2.0;  // distance pivot -> pole center of mass
  const double total = m_c + m_p;
  const double sin_t = std::sin(theta), cos_t = std::cos(theta);

  const double temp =
      (force + m_p * l * theta_dot * theta_dot * sin_t) / total;
  const double theta_acc =
      (g * sin_t - cos_t * temp) /
      (l * (4.0 / 3.0 - m_p * cos_t * cos_t / total));
  const double x_acc = temp - m_p * l * theta_acc * cos_t / total;
  return Eigen::Vector4d(x_dot, theta_dot, x_acc, theta_acc);
}

double CartpoleEnv::tip_distance(const Eigen::VectorXd& state) const {
  const double L = context_.L;
  const double tip_x = state[0] + L * std::sin(state[1]);
  const double tip_y = L * std::cos(state[1]);
  return std::sqrt(tip_x * tip_x + (tip_y - L) * (tip_y - L));
}

double CartpoleEnv::reward(const Eigen::VectorXd& state,
                           double /*action*/) const {
  const double d = tip_distance(state);
  const double s2 = params_.sigma_r * params_.sigma_r;
  return std::exp(-d * d / (2.0 * s2)) - 1.0;
}

Eigen::VectorXd CartpoleEnv::step_impl(const Eigen::VectorXd& state,
                                       double action, double* reward_accum,
                                       bool* clipped) const {
  check_finite(state, "cartpole");
  const double F = std::clamp(action, -params_.action_bound,
                              params_.action_bound);
  if (clipped) *clipped = F != action;
  const double dt = params_.dt;

  Eigen::Vector4d s = state.head<4>();
  double reward_sum = 0.0;
  for (int k = 0; k < params_.action_repeat; ++k) {
    reward_sum += reward(s, F);
    const Eigen::Vector4d k1 = derivatives(s, F);
    const Eigen::Vector4d k2 = derivatives(s + 0.5 * dt * k1, F);
    const Eigen::Vector4d k3 = derivatives(s + 0.5 * dt * k2, F);
    const Eigen::Vector4d k4 = derivatives(s + dt * k3, F);
    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  s[1] = wrap_angle(s[1]);
  if (reward_accum) *reward_accum = reward_sum;
  Eigen::VectorXd next = s;
  check_finite(next, "cartpole");
  return next;
}

Eigen::VectorXd CartpoleEnv::reset(std::mt19937_64& rng,
                                   ResetMode mode) const {
  Eigen::VectorXd s(4);
  if (mode == ResetMode::Nominal) {
    s << 0.0, M_PI, 0.0, 0.0;
    return s;
  }
  std::normal_distribution<double> noise(0.0, 0.01);
  s << noise(rng), wrap_angle(M_PI + noise(rng)), noise(rng), noise(rng);
  return s;
}

bool CartpoleEnv::is_success(const Eigen::VectorXd& final_state, double eps,
                             bool velocity_only) const {
  if (std::abs(final_state[2]) > eps || std::abs(final_state[3]) > eps)
    return false;
  if (velocity_only) return true;
  return tip_distance(final_state) <= params_.success_distance;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name, const Context& c,
                              const EnvParams& params) {
  if (!c.valid())
    throw ConfigError("context values must be strictly positive");
  if (name == "pendulum") return std::make_unique<PendulumEnv>(c, params);
  if (name == "cartpole") return std::make_unique<CartpoleEnv>(c, params);
  throw ConfigError("unknown environment '" + name + "'");
}

std::unique_ptr<Env> make_env(const std::string& name, const Context& c) {
  return make_env(name, c, default_env_params(name));
}

}  // namespace pimdp
