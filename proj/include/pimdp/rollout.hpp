#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <vector>

#include "pimdp/gaussian.hpp"
#include "pimdp/gp.hpp"
#include "pimdp/policy.hpp"

namespace pimdp {

/// Expected one-step reward of the modeled system, evaluated on the
/// re-dimensionalized state. Dimensionless values divide by the stored
/// factors to recover natural units (factor = prod c^z of the Pi group).
struct RewardModel {
  enum class Kind { PendulumQuadratic, CartpoleSaturating };
  Kind kind = Kind::PendulumQuadratic;

  Eigen::VectorXd state_factors;  // per raw state coordinate
  double action_factor = 1.0;

  // pendulum quadratic: -(theta^2 + c_vel thdot^2 + c_act u^2)
  double c_vel = 0.1;
  double c_act = 0.001;

  // cartpole saturating: exp(-d^2 / (2 sigma_r^2)) - 1, tip at distance
  // pole_len above the cart when upright
  double sigma_r = 0.25;
  double pole_len = 1.0;

  // substeps accumulated per control step in the real environment
  double steps_per_control = 1.0;
};

struct RolloutConfig {
  int horizon = 1;
  int angle_index = 0;       // raw-state coordinate holding the angle
  double divergence_trace = 1e6;
  RewardModel reward;
};

struct RolloutResult {
  std::vector<GaussianState> states;  // s_0 .. s_H (dimensionless)
  std::vector<double> rewards;        // E[r] per step, length = steps done
  double expected_return = 0.0;       // -inf when diverged
  bool diverged = false;
};

/// Moment-matched closed-loop rollout; optionally the exact gradient of the
/// expected return with respect to the packed policy parameters, computed by
/// forward accumulation through the analytic recursion.
RolloutResult rollout_moments(const GpModel& model, const RbfPolicy& policy,
                              const GaussianState& s0,
                              const RolloutConfig& cfg,
                              Eigen::VectorXd* return_grad = nullptr);

/// Sampling-based fallback: propagates particles through the same model and
/// policy, sampling each GP transition independently. Used as the Monte
/// Carlo oracle for the moment-matched rollout and available for debugging.
struct ParticleRolloutResult {
  std::vector<Eigen::VectorXd> state_means;  // per step
  std::vector<Eigen::VectorXd> state_vars;   // per-dim variance
  double mean_return = 0.0;
  double return_std_error = 0.0;
  std::vector<double> mean_rewards;
};

ParticleRolloutResult rollout_particles(const GpModel& model,
                                        const RbfPolicy& policy,
                                        const GaussianState& s0,
                                        const RolloutConfig& cfg,
                                        int n_particles, std::mt19937_64& rng);

/// Expected reward of a Gaussian (state, action) pair under the model's
/// reward; exposed for tests.
double expected_reward(const RewardModel& reward, int angle_index,
                       const GaussianState& state, double action_mean,
                       double action_var);

}  // namespace pimdp
