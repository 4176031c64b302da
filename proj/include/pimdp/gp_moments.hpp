#pragma once

#include <Eigen/Dense>
#include <vector>

#include "pimdp/gaussian.hpp"
#include "pimdp/gp.hpp"

namespace pimdp {

// Exact moments of SE-ARD function outputs under a Gaussian input
// N(mu, Sigma), for a family of outputs sharing the input point set X:
// GP posteriors (beta = (K + sn2 I)^{-1} y, with the model-uncertainty trace
// term) and deterministic RBF networks (beta = weights) use the same core.
//
// Jacobian packing: input moments are [mu; vec(Sigma)] column-major, size
// D + D^2, with Sigma unconstrained. All derivative formulas are exact at
// symmetric Sigma, which is where they are only ever evaluated.

struct MomentOutputSpec {
  const Eigen::VectorXd* beta = nullptr;  // n
  Eigen::VectorXd ilam;                   // D, inverse squared lengthscales
  double sf2 = 1.0;
  double sn2 = 0.0;                       // added to the output variance
  const Eigen::MatrixXd* kinv = nullptr;  // set for GPs: (K + sn2 I)^{-1}
};

struct MomentMatchResult {
  Eigen::VectorXd mean;  // E
  Eigen::MatrixXd cov;   // E x E
  Eigen::MatrixXd vmat;  // D x E, Cov(x, f) = Sigma * vmat
};

struct MomentMatchGrads {
  Eigen::MatrixXd dmean;  // E x (D + D^2)
  Eigen::MatrixXd dcov;   // E^2 x (D + D^2)
  Eigen::MatrixXd dvmat;  // (D E) x (D + D^2)
};

/// Parameter derivatives for a single deterministic RBF output, packed as
/// [beta (n); centers row-major (n D); log-lengthscales (D)].
struct RbfParamGrads {
  Eigen::RowVectorXd dmean;  // P
  Eigen::RowVectorXd dcov;   // P
  Eigen::MatrixXd dvmat;     // D x P
};

void moment_match(const Eigen::MatrixXd& X,
                  const std::vector<MomentOutputSpec>& outputs,
                  const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                  MomentMatchResult& result,
                  MomentMatchGrads* grads = nullptr,
                  RbfParamGrads* param_grads = nullptr);

/// GP prediction at an uncertain input: output Gaussian over the state
/// deltas plus the input-output cross-covariance. The covariance is
/// symmetrized and eigenvalue-clamped at -1e-10. Throws std::domain_error
/// when the input covariance is not PSD.
struct UncertainPrediction {
  GaussianState delta;
  Eigen::MatrixXd input_output_cov;  // D x E
};

UncertainPrediction predict_uncertain(const GpModel& model,
                                      const GaussianState& input);

}  // namespace pimdp
