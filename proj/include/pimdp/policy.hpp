#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>

#include "pimdp/buckingham.hpp"
#include "pimdp/gaussian.hpp"
#include "pimdp/gp_moments.hpp"

namespace pimdp {

/// Squashing nonlinearity: bounded, smooth, with analytic Gaussian moments.
inline double squash(double z) {
  return (9.0 * std::sin(z) + std::sin(3.0 * z)) / 8.0;
}

/// Single-layer RBF controller over dimensionless observations with a
/// bounded output: u = bound * squash(sum_i w_i k(s, c_i)).
class RbfPolicy {
 public:
  RbfPolicy() = default;
  RbfPolicy(Eigen::MatrixXd centers, Eigen::VectorXd weights,
            Eigen::VectorXd log_lengthscales, double bound);

  int n_basis() const { return static_cast<int>(centers_.rows()); }
  int input_dim() const { return static_cast<int>(centers_.cols()); }
  double bound() const { return bound_; }
  const Eigen::MatrixXd& centers() const { return centers_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const Eigen::VectorXd& log_lengthscales() const { return log_lengthscales_; }

  /// Dimensionless action for a dimensionless observation.
  double act(const Eigen::VectorXd& obs_pi) const;

  /// Pre-squash activation (for diagnostics and tests).
  double activation(const Eigen::VectorXd& obs_pi) const;

  /// Moments of the action under a Gaussian observation, with
  /// Cov(obs, u) = Sigma * v. Optionally the Jacobians w.r.t. the input
  /// moments ([mu; vec(Sigma)]) and the packed parameters.
  struct UncertainAction {
    double mean = 0.0;
    double var = 0.0;
    Eigen::VectorXd v;  // D
  };
  struct UncertainActionGrads {
    Eigen::RowVectorXd dmean_din, dvar_din;  // 1 x (D + D^2)
    Eigen::MatrixXd dv_din;                  // D x (D + D^2)
    Eigen::RowVectorXd dmean_dp, dvar_dp;    // 1 x P
    Eigen::MatrixXd dv_dp;                   // D x P
  };
  UncertainAction act_uncertain(const Eigen::VectorXd& mu,
                                const Eigen::MatrixXd& sigma,
                                UncertainActionGrads* grads = nullptr) const;

  /// Packed trainable parameters [weights; centers row-major; log-len].
  int n_params() const {
    return n_basis() + n_basis() * input_dim() + input_dim();
  }
  Eigen::VectorXd pack_params() const;
  void unpack_params(const Eigen::VectorXd& p);

  std::string to_json() const;
  static RbfPolicy from_json(const std::string& text);

 private:
  Eigen::MatrixXd centers_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd log_lengthscales_;
  double bound_ = 1.0;
};

/// Draw a fresh policy: centers sampled from the given dimensionless
/// observations (from a [-1, 1] prior box when there are too few), weights
/// ~ N(0, 0.1^2), lengthscales set to the per-dimension spread.
RbfPolicy init_policy(std::mt19937_64& rng,
                      const Eigen::MatrixXd& seed_observations, int n_basis,
                      int input_dim, double bound);

/// Dimensionless observation of a raw natural state: scale by the state
/// Pi factors, then expand the angle into (sin, cos).
Eigen::VectorXd pi_observation(const Eigen::VectorXd& state, int angle_index,
                               const Eigen::VectorXd& state_scale_factors);

struct NaturalAction {
  double action = 0.0;   // after clipping to the actuator bound
  double preclip = 0.0;  // dimensionalized action before clipping
  bool clipped = false;
};

/// Full natural-space evaluation: nondimensionalize, act, dimensionalize,
/// clip to the physical actuator bound. scale factors are the basis factors
/// at the episode context (states first, action last).
NaturalAction act_natural(const RbfPolicy& policy,
                          const Eigen::VectorXd& natural_state,
                          int angle_index,
                          const Eigen::VectorXd& state_scale_factors,
                          double action_scale_factor, double actuator_bound);

/// Serialized policy checkpoint including the PiBasis it was trained under.
struct PolicyCheckpoint {
  RbfPolicy policy;
  PiBasis basis;
  std::string env_name;
  std::string space;  // "pi" or "natural"

  void save(const std::string& path) const;
  static PolicyCheckpoint load(const std::string& path);
};

std::string pi_basis_to_json(const PiBasis& basis);
PiBasis pi_basis_from_json(const std::string& text);

}  // namespace pimdp
