#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pimdp/buckingham.hpp"
#include "pimdp/envs.hpp"
#include "pimdp/gp.hpp"
#include "pimdp/policy.hpp"
#include "pimdp/rollout.hpp"

namespace pimdp {

struct SearchConfig {
  int episodes = 15;            // environment episodes, seed episode included
  int rollout_horizon = 45;     // model rollout length H (control steps)
  int n_basis = 50;
  int opt_max_steps = 300;
  double opt_plateau_tol = 1e-4;
  double opt_step_size = 1.0;   // initial line-search step
  int gp_max_points = 400;      // keep most recent
  int gp_opt_iters = 80;
  int gp_restarts = 3;
  double divergence_trace = 1e6;
  std::uint64_t seed = 0;
};

/// Accumulated dimensionless transitions plus the bookkeeping needed to
/// reconstruct the natural ones (context and raw values per row).
class Dataset {
 public:
  void append(const EpisodeRecord& record, const Env& env,
              const PiBasis& basis);

  int size() const { return static_cast<int>(inputs_.size()); }
  /// Most recent `cap` rows as a GP training set (all rows if cap <= 0).
  TrainingSet training_set(int cap) const;
  /// All dimensionless observations seen, for policy initialization.
  Eigen::MatrixXd observations() const;

  struct Row {
    Eigen::VectorXd input;     // (obs_pi, action_pi)
    Eigen::VectorXd target;    // delta of dimensionless state
    Eigen::VectorXd state;     // natural state
    Eigen::VectorXd next;      // natural successor
    double action = 0.0;       // natural action applied
    Context context;
  };
  const std::vector<Row>& rows() const { return rows_; }

 private:
  std::vector<Eigen::VectorXd> inputs_;
  std::vector<Eigen::VectorXd> targets_;
  std::vector<Row> rows_;
};

/// One closed-loop environment episode under the dimensionless policy
/// (Algorithm 1: nondimensionalize, act, dimensionalize, step).
EpisodeRecord collect_episode(const Env& env, const RbfPolicy& policy,
                              const PiBasis& basis, std::mt19937_64& rng,
                              ResetMode mode);

/// Gaussian matched to the environment's reset distribution, mapped into
/// dimensionless coordinates.
GaussianState reset_distribution_pi(const Env& env, const PiBasis& basis);

/// Reward model of the environment's reward over re-dimensionalized states.
RewardModel make_reward_model(const Env& env, const PiBasis& basis);

/// Sum of expected rewards over a moment-matched rollout (H = 0 gives 0;
/// -inf when the rollout diverges).
double estimate_return(const GpModel& model, const RbfPolicy& policy,
                       const GaussianState& s0, int horizon,
                       const RolloutConfig& cfg);

enum class GradientMethod { Analytic, FiniteDifference };

/// Gradient of the estimated return with respect to the packed policy
/// parameters. Throws std::runtime_error on a non-finite gradient.
Eigen::VectorXd policy_gradient(const GpModel& model, const RbfPolicy& policy,
                                const GaussianState& s0, int horizon,
                                const RolloutConfig& cfg,
                                GradientMethod method = GradientMethod::Analytic);

/// Gradient-ascent policy improvement against a fixed model, with a
/// backtracking line search; never returns a policy with a lower estimated
/// return than the input.
RbfPolicy improve_policy(const RbfPolicy& policy, const GpModel& model,
                         const GaussianState& s0, const RolloutConfig& rollout,
                         const SearchConfig& cfg);

struct EpisodeStats {
  int episode = 0;
  double real_return = 0.0;
  double estimated_return = 0.0;
  bool clipped_any = false;
};

struct PilcoResult {
  RbfPolicy policy;
  PiBasis basis;
  Dataset dataset;
  std::vector<EpisodeStats> history;
  std::vector<GpHyperparams> final_hyperparams;
};

/// Hook called after each episode; used by the CLI to write checkpoints.
using EpisodeCallback =
    std::function<void(int episode, const RbfPolicy&, const GpModel*,
                       const EpisodeRecord&)>;

/// The full training loop: one random-policy seed episode, then alternate
/// fit / improve / collect until the episode budget is spent, with one final
/// improvement pass over all data.
PilcoResult pilco_loop(const Env& env, const PiBasis& basis,
                       const SearchConfig& cfg,
                       const EpisodeCallback& callback = nullptr);

}  // namespace pimdp
