#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace pimdp {

/// Gaussian belief over a state (or any vector quantity).
struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  GaussianState() = default;
  GaussianState(Eigen::VectorXd m, Eigen::MatrixXd c)
      : mean(std::move(m)), cov(std::move(c)) {}

  int dim() const { return static_cast<int>(mean.size()); }

  void symmetrize() { cov = 0.5 * (cov + cov.transpose()).eval(); }

  /// Clamp eigenvalues at zero when anything dips below -tol; throws if the
  /// covariance is not even approximately PSD.
  void clamp_psd(double tol = 1e-10) {
    symmetrize();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.eigenvalues().minCoeff() >= 0.0) return;
    if (es.eigenvalues().minCoeff() < -1e6 * tol - 1e-6)
      throw std::domain_error("covariance is far from positive semidefinite");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }

  bool is_psd(double tol = 1e-10) const {
    Eigen::MatrixXd s = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    return es.eigenvalues().minCoeff() >= -tol;
  }
};

}  // namespace pimdp
