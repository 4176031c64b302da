#pragma once

#include <Eigen/Dense>

namespace pimdp {

// Analytic Gaussian moment propagation through the fixed nonlinearities of
// the pipeline: angle -> (sin, cos) expansion, the trigonometric action
// squashing, and the saturating exponential reward. Each stage returns the
// exact first two moments plus V with Cov(input, output) = Sigma_in * V, and
// optionally the Jacobians with respect to the input moments.
//
// Jacobian packing convention: the input moment vector is [mu; vec(Sigma)]
// with vec() column-major and Sigma treated as a full (unconstrained)
// matrix. Every stage is written to be well-defined for slightly
// non-symmetric Sigma so central differences in single entries match.

/// Result of expanding one angle coordinate into (sin, cos).
struct TrigResult {
  Eigen::VectorXd mean;   // d+1
  Eigen::MatrixXd cov;    // (d+1) x (d+1)
  Eigen::MatrixXd vmat;   // d x (d+1)
};

struct TrigGrads {
  Eigen::MatrixXd dmean;  // (d+1) x (d + d^2)
  Eigen::MatrixXd dcov;   // (d+1)^2 x (d + d^2)
  Eigen::MatrixXd dvmat;  // d(d+1) x (d + d^2)
};

TrigResult trig_expand(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                       int angle_index, TrigGrads* grads = nullptr);

/// Moments of u = bound * (9 sin z + sin 3z) / 8 for scalar z ~ N(m, v).
struct SquashResult {
  double mean = 0.0;
  double var = 0.0;
  double v_scalar = 0.0;  // Cov(z, u) = v * v_scalar
};

struct SquashGrads {
  // rows: [mean, var, v_scalar]; columns: [m, v]
  Eigen::Matrix<double, 3, 2> d;
};

SquashResult squash_moments(double m, double v, double bound,
                            SquashGrads* grads = nullptr);

/// E[exp(-0.5 (z - target)' W (z - target))] for z ~ N(m, S). W may be
/// singular. Returns the expectation and optionally its derivatives.
struct SatExpGrads {
  Eigen::VectorXd dmean;   // d
  Eigen::MatrixXd dsigma;  // d x d
};

double saturating_exp_expectation(const Eigen::VectorXd& m,
                                  const Eigen::MatrixXd& S,
                                  const Eigen::VectorXd& target,
                                  const Eigen::MatrixXd& W,
                                  SatExpGrads* grads = nullptr);

}  // namespace pimdp
