#pragma once

#include <Eigen/Dense>
#include <functional>

namespace pimdp {

/// Objective callback: returns f(x) and fills grad. May return +inf to mark
/// an infeasible point (the line search backs off).
using ObjectiveFn =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OptimizeOptions {
  int max_iters = 300;
  double plateau_tol = 1e-4;  // stop when relative improvement drops below
  int lbfgs_history = 8;
  double init_step = 1.0;
  int max_line_search = 25;
  double armijo_c1 = 1e-4;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iters = 0;
  int accepted = 0;
  bool plateaued = false;
};

/// L-BFGS descent with backtracking (Armijo) line search. Accepted steps
/// never increase the objective; returns the best point seen.
OptimizeResult minimize(const ObjectiveFn& fg, Eigen::VectorXd x0,
                        const OptimizeOptions& opts);

}  // namespace pimdp
