#include "pimdp/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace pimdp {

namespace {

struct Correction {
  Eigen::VectorXd s, y;
  double rho = 0.0;
};

// Two-loop recursion; falls back to the bare gradient with an initial
// Hessian scaling when no history is available.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& grad,
                                const std::deque<Correction>& hist) {
  Eigen::VectorXd q = grad;
  std::vector<double> alpha(hist.size());
  for (int i = static_cast<int>(hist.size()) - 1; i >= 0; --i) {
    alpha[i] = hist[i].rho * hist[i].s.dot(q);
    q -= alpha[i] * hist[i].y;
  }
  double gamma = 1.0;
  if (!hist.empty()) {
    const auto& last = hist.back();
    const double yy = last.y.squaredNorm();
    if (yy > 0.0) gamma = last.s.dot(last.y) / yy;
  }
  q *= gamma;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double beta = hist[i].rho * hist[i].y.dot(q);
    q += (alpha[i] - beta) * hist[i].s;
  }
  return -q;
}

struct LineSearchResult {
  bool ok = false;
  double t = 0.0;
  double f = 0.0;
  Eigen::VectorXd x, grad;
};

// Wolfe line search (bracket + bisection zoom). Guarantees the Armijo
// decrease on acceptance; tries for the curvature condition so the next
// L-BFGS pair has positive s'y.
LineSearchResult wolfe_search(const ObjectiveFn& fg, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& dir, double f0,
                              double slope0, const OptimizeOptions& opts) {
  const double c1 = opts.armijo_c1;
  const double c2 = 0.9;
  LineSearchResult res;
  res.grad.resize(x.size());

  const auto eval = [&](double t, double& f, Eigen::VectorXd& g) {
    f = fg(x + t * dir, g);
    return std::isfinite(f);
  };

  double lo = 0.0, f_lo = f0;
  double t = opts.init_step;
  double t_prev = 0.0, f_prev = f0;
  double hi = -1.0, f_hi = 0.0;
  Eigen::VectorXd g(x.size());

  // Bracket phase.
  bool bracketed = false;
  for (int i = 0; i < 12 && !bracketed; ++i) {
    double f_t;
    if (!eval(t, f_t, g)) {
      // infeasible: shrink hard
      t *= 0.25;
      continue;
    }
    if (f_t > f0 + c1 * t * slope0 || (i > 0 && f_t >= f_prev)) {
      lo = t_prev;
      f_lo = f_prev;
      hi = t;
      f_hi = f_t;
      bracketed = true;
      break;
    }
    const double slope_t = g.dot(dir);
    if (std::abs(slope_t) <= -c2 * slope0) {
      res.ok = true;
      res.t = t;
      res.f = f_t;
      res.x = x + t * dir;
      res.grad = g;
      return res;
    }
    if (slope_t >= 0.0) {
      lo = t;
      f_lo = f_t;
      hi = t_prev;
      f_hi = f_prev;
      bracketed = true;
      break;
    }
    t_prev = t;
    f_prev = f_t;
    t *= 2.0;
  }
  if (!bracketed) {
    // Ran off without satisfying curvature; fall back to plain backtracking
    // from the initial step.
    double bt = opts.init_step;
    for (int i = 0; i < opts.max_line_search; ++i) {
      double f_t;
      if (eval(bt, f_t, g) && f_t <= f0 + c1 * bt * slope0) {
        res.ok = true;
        res.t = bt;
        res.f = f_t;
        res.x = x + bt * dir;
        res.grad = g;
        return res;
      }
      bt *= 0.5;
    }
    return res;
  }

  // Zoom phase (bisection).
  for (int i = 0; i < opts.max_line_search; ++i) {
    t = 0.5 * (lo + hi);
    double f_t;
    if (!eval(t, f_t, g)) {
      hi = t;
      continue;
    }
    if (f_t > f0 + c1 * t * slope0 || f_t >= f_lo) {
      hi = t;
      f_hi = f_t;
    } else {
      const double slope_t = g.dot(dir);
      if (std::abs(slope_t) <= -c2 * slope0) {
        res.ok = true;
        res.t = t;
        res.f = f_t;
        res.x = x + t * dir;
        res.grad = g;
        return res;
      }
      if (slope_t * (hi - lo) >= 0.0) {
        hi = lo;
        f_hi = f_lo;
      }
      lo = t;
      f_lo = f_t;
    }
  }
  // Curvature never satisfied: accept the best Armijo point if there is one.
  if (lo > 0.0 && f_lo <= f0 + c1 * lo * slope0) {
    double f_t;
    if (eval(lo, f_t, g)) {
      res.ok = true;
      res.t = lo;
      res.f = f_t;
      res.x = x + lo * dir;
      res.grad = g;
    }
  }
  return res;
}

}  // namespace

OptimizeResult minimize(const ObjectiveFn& fg, Eigen::VectorXd x0,
                        const OptimizeOptions& opts) {
  const auto n = x0.size();
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd grad(n);
  double f = fg(x, grad);

  OptimizeResult best;
  best.x = x;
  best.f = f;

  if (!std::isfinite(f)) return best;

  std::deque<Correction> hist;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    best.iters = iter + 1;
    Eigen::VectorXd dir = lbfgs_direction(grad, hist);
    double slope = grad.dot(dir);
    if (!(slope < 0.0) || !dir.allFinite()) {
      hist.clear();
      dir = -grad;
      slope = -grad.squaredNorm();
      if (!(slope < 0.0)) break;  // zero gradient
    }

    const auto ls = wolfe_search(fg, x, dir, f, slope, opts);
    if (!ls.ok) {
      if (hist.empty()) break;  // stuck even in the steepest direction
      hist.clear();
      continue;
    }

    Correction c;
    c.s = ls.x - x;
    c.y = ls.grad - grad;
    const double sy = c.s.dot(c.y);
    if (sy > 1e-12 * c.s.norm() * c.y.norm()) {
      c.rho = 1.0 / sy;
      hist.push_back(std::move(c));
      if (static_cast<int>(hist.size()) > opts.lbfgs_history)
        hist.pop_front();
    }

    const double improvement = f - ls.f;
    x = ls.x;
    grad = ls.grad;
    f = ls.f;
    best.accepted += 1;
    if (f < best.f) {
      best.f = f;
      best.x = x;
    }
    if (improvement < opts.plateau_tol * std::max(1.0, std::abs(f))) {
      best.plateaued = true;
      break;
    }
  }
  return best;
}

}  // namespace pimdp
