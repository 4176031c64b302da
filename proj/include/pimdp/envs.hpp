#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pimdp/buckingham.hpp"

namespace pimdp {

/// Physical parameters perturbing the dynamics; static within an episode.
struct Context {
  double L = 1.0;  // pole length [m]
  double M = 1.0;  // pole mass [kg]
  double g = 10.0; // gravity [m s^-2]

  ContextValues values() const { return {{"M", M}, {"g", g}, {"L", L}}; }
  bool valid() const { return L > 0.0 && M > 0.0 && g > 0.0; }
};

Context nominal_context(const std::string& env_name);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double theta);

enum class ResetMode { Nominal, Random };

struct EnvParams {
  double dt = 0.05;        // integrator step [s]
  int action_repeat = 1;   // simulator substeps per control step
  int horizon = 200;       // episode length in simulator steps
  double action_bound = 2.0;  // |u| or |F| limit, natural units
  double speed_bound = 8.0;   // pendulum |theta_dot| clip
  double cart_mass = 1.0;     // cartpole cart mass [kg]
  double track_bound = 2.4;   // cartpole |x| limit before the episode is
                              // flagged failed
  double sigma_r = 0.25;      // cartpole reward length scale [m]
  double success_angle = 0.25;    // pendulum |theta| tolerance [rad]
  double success_distance = 0.25; // cartpole tip distance tolerance [m]

  int control_steps() const { return horizon / action_repeat; }
  double control_dt() const { return dt * action_repeat; }
};

EnvParams default_env_params(const std::string& env_name);

struct StepRecord {
  double t = 0.0;
  Eigen::VectorXd state;
  double action = 0.0;      // natural action actually applied (pre-clip value)
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool clipped = false;     // actuator bound clipped the requested action
};

struct EpisodeRecord {
  Context context;
  std::vector<StepRecord> steps;
  bool failed = false;  // track bound exceeded or simulation error

  double total_reward() const;
  const Eigen::VectorXd& final_state() const;
  std::string to_csv(const std::vector<std::string>& state_names) const;
};

/// A contextual simulator exposing control-step transitions over raw state
/// vectors in system-spec order. Instances hold no episode state; callers
/// own the state vector.
class Env {
 public:
  Env(Context c, EnvParams p) : context_(c), params_(p) {}
  virtual ~Env() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int angle_index() const = 0;  // raw-state coordinate holding the angle
  virtual std::vector<std::string> state_names() const = 0;
  virtual std::vector<int> velocity_indices() const = 0;

  /// One control step: clips the action to the actuator bound, advances
  /// action_repeat simulator substeps and accumulates the per-substep reward.
  /// Throws SimulationError if the state leaves the finite range.
  Eigen::VectorXd step(const Eigen::VectorXd& state, double action,
                       double* reward_accum = nullptr,
                       bool* clipped = nullptr) const {
    return step_impl(state, action, reward_accum, clipped);
  }

  /// Reward of taking `action` in `state` (before stepping).
  virtual double reward(const Eigen::VectorXd& state, double action) const = 0;

  virtual Eigen::VectorXd reset(std::mt19937_64& rng, ResetMode mode) const = 0;

  /// Success check on a final state: velocity components within eps, and,
  /// unless velocity_only, position near the upright target.
  virtual bool is_success(const Eigen::VectorXd& final_state, double eps,
                          bool velocity_only) const = 0;

  /// Angle expanded to (sin, cos) in place.
  Eigen::VectorXd observe(const Eigen::VectorXd& state) const;

  const Context& context() const { return context_; }
  const EnvParams& params() const { return params_; }

 protected:
  virtual Eigen::VectorXd step_impl(const Eigen::VectorXd& state,
                                    double action, double* reward_accum,
                                    bool* clipped) const = 0;
  Context context_;
  EnvParams params_;
};

/// Gymnasium-style underactuated pendulum generalized to context (L, M, g).
/// theta = 0 is upright; theta wraps to (-pi, pi]; theta_dot clips to the
/// speed bound.
class PendulumEnv : public Env {
 public:
  PendulumEnv(Context c, EnvParams p) : Env(c, p) {}
  std::string name() const override { return "pendulum"; }
  int state_dim() const override { return 2; }
  int angle_index() const override { return 0; }
  std::vector<std::string> state_names() const override {
    return {"theta", "theta_dot"};
  }
  std::vector<int> velocity_indices() const override { return {1}; }
  double reward(const Eigen::VectorXd& state, double action) const override;
  Eigen::VectorXd reset(std::mt19937_64& rng, ResetMode mode) const override;
  bool is_success(const Eigen::VectorXd& final_state, double eps,
                  bool velocity_only) const override;

  /// Conserved quantity of the frictionless unforced dynamics; the energy
  /// drift oracle in the tests uses this.
  double energy(const Eigen::VectorXd& state) const;

 protected:
  Eigen::VectorXd step_impl(const Eigen::VectorXd& state, double action,
                            double* reward_accum, bool* clipped) const override;
};

/// Frictionless cart-pole with pole mass M, pole length L, gravity g and a
/// fixed cart mass; RK4 substeps under a held force per control step.
/// theta = 0 is upright (swing-up starts hanging at theta = pi).
class CartpoleEnv : public Env {
 public:
  CartpoleEnv(Context c, EnvParams p) : Env(c, p) {}
  std::string name() const override { return "cartpole"; }
  int state_dim() const override { return 4; }
  int angle_index() const override { return 1; }
  std::vector<std::string> state_names() const override {
    return {"x", "theta", "x_dot", "theta_dot"};
  }
  std::vector<int> velocity_indices() const override { return {2, 3}; }
  double reward(const Eigen::VectorXd& state, double action) const override;
  Eigen::VectorXd reset(std::mt19937_64& rng, ResetMode mode) const override;
  bool is_success(const Eigen::VectorXd& final_state, double eps,
                  bool velocity_only) const override;

  /// Distance from the pole tip to the upright target above the origin.
  double tip_distance(const Eigen::VectorXd& state) const;
  /// Time derivative of the raw state under a given force; RK4 integrand.
  Eigen::Vector4d derivatives(const Eigen::Vector4d& s, double force) const;

 protected:
  Eigen::VectorXd step_impl(const Eigen::VectorXd& state, double action,
                            double* reward_accum, bool* clipped) const override;
};

std::unique_ptr<Env> make_env(const std::string& name, const Context& c,
                              const EnvParams& params);
std::unique_ptr<Env> make_env(const std::string& name, const Context& c);

}  // namespace pimdp
