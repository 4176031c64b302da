#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pimdp {

/// Dimensionless one-step regression data: rows of (state, action) inputs
/// against state-delta targets.
struct TrainingSet {
  Eigen::MatrixXd inputs;   // n x D
  Eigen::MatrixXd targets;  // n x E

  int n() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int output_dim() const { return static_cast<int>(targets.cols()); }
  void validate() const;
};

/// Log-parameterized SE-ARD hyperparameters for one output dimension.
struct GpHyperparams {
  Eigen::VectorXd log_lengthscales;  // D
  double log_signal = 0.0;           // log sigma_f
  double log_noise = -2.3;           // log sigma_n

  Eigen::VectorXd pack() const;
  static GpHyperparams unpack(const Eigen::VectorXd& v);
  double sf2() const { return std::exp(2.0 * log_signal); }
  double sn2() const { return std::exp(2.0 * log_noise); }
};

/// Exact log marginal likelihood of one output dimension and its gradient
/// with respect to the log hyperparameters (lengthscales, signal, noise).
/// Throws ConditioningError when the kernel matrix cannot be factorized
/// even with the jitter ladder.
double log_marginal_likelihood(const GpHyperparams& hp,
                               const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               Eigen::VectorXd* grad = nullptr);

struct GpFitOptions {
  int restarts = 3;           // independent optimizer runs, first from the
                              // heuristic (or warm-start) initialization
  int max_iters = 100;
  double plateau_tol = 1e-5;
  double snr_cap = 1e3;       // soft bound on sigma_f / sigma_n; keeps
                              // (K + sn2 I) well-conditioned on noise-free data
  std::uint64_t seed = 0;
  std::vector<GpHyperparams> warm_start;  // optional, one per output dim
};

/// Independent SE-ARD GP per output dimension over shared inputs, trained by
/// maximizing the (stabilized) marginal likelihood. Fitted models are
/// immutable.
class GpModel {
 public:
  /// Requires n >= 5.
  static GpModel fit(const TrainingSet& train, const GpFitOptions& opts);

  /// Construct directly from given hyperparameters (no optimization).
  static GpModel from_hyperparams(const TrainingSet& train,
                                  std::vector<GpHyperparams> hps);

  int input_dim() const { return static_cast<int>(X_.cols()); }
  int output_dim() const { return static_cast<int>(outputs_.size()); }
  int n() const { return static_cast<int>(X_.rows()); }

  /// Posterior mean and variance per output dimension at a single input.
  /// Variance includes the noise term, so it never falls below sigma_n^2.
  void predict_point(const Eigen::VectorXd& x, Eigen::VectorXd& mean,
                     Eigen::VectorXd& var) const;

  const Eigen::MatrixXd& train_inputs() const { return X_; }
  const GpHyperparams& hyperparams(int dim) const {
    return outputs_[static_cast<std::size_t>(dim)].hp;
  }
  const Eigen::VectorXd& beta(int dim) const {
    return outputs_[static_cast<std::size_t>(dim)].beta;
  }
  /// (K + sigma_n^2 I)^{-1}, needed by the uncertain-input propagation.
  const Eigen::MatrixXd& kinv(int dim) const {
    return outputs_[static_cast<std::size_t>(dim)].kinv;
  }
  /// Elementwise inverse squared lengthscales.
  const Eigen::VectorXd& inv_sq_lengthscales(int dim) const {
    return outputs_[static_cast<std::size_t>(dim)].ilam;
  }

  std::string to_json() const;
  static GpModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static GpModel load(const std::string& path);

 private:
  struct PerOutput {
    GpHyperparams hp;
    Eigen::VectorXd ilam;   // exp(-2 log_lengthscales)
    Eigen::VectorXd beta;   // (K + sn2 I)^{-1} y
    Eigen::MatrixXd kinv;   // (K + sn2 I)^{-1}
  };

  GpModel() = default;
  void finalize(const TrainingSet& train);

  Eigen::MatrixXd X_;
  Eigen::MatrixXd Y_;
  std::vector<PerOutput> outputs_;
  std::uint64_t fit_seed_ = 0;
};

/// SE-ARD kernel matrix between row sets A (n x D) and B (m x D).
Eigen::MatrixXd se_ard_kernel(const GpHyperparams& hp,
                              const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B);

}  // namespace pimdp
