#include "pimdp/buckingham.hpp"

#include <algorithm>
#include <cmath>

#include "pimdp/errors.hpp"

namespace pimdp {

PiBasis PiBasis::identity(const SystemSpec& spec) {
  PiBasis basis;
  for (const auto& cv : spec.context_vars) basis.context_names.push_back(cv.name);
  for (const auto& v : spec.dynamic_vars()) {
    PiGroup g;
    g.target = v.name;
    g.context_exps.assign(spec.context_vars.size(), Rational(0));
    basis.groups.push_back(std::move(g));
  }
  return basis;
}

namespace {

// Row-echelon reduction in place over a working copy; returns pivot columns.
std::vector<std::size_t> echelon(std::vector<std::vector<Rational>>& m) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows ? m[0].size() : 0;
  std::vector<std::size_t> pivots;
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t pivot = r;
    while (pivot < rows && m[pivot][c].is_zero()) ++pivot;
    if (pivot == rows) continue;
    std::swap(m[r], m[pivot]);
    const Rational inv = Rational(1) / m[r][c];
    for (std::size_t j = c; j < cols; ++j) m[r][j] *= inv;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || m[i][c].is_zero()) continue;
      const Rational f = m[i][c];
      for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
    }
    pivots.push_back(c);
    ++r;
  }
  return pivots;
}

}  // namespace

std::size_t RationalMatrix::rank() const {
  std::vector<std::vector<Rational>> m(rows_, std::vector<Rational>(cols_));
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) m[i][j] = at(i, j);
  return echelon(m).size();
}

bool RationalMatrix::solve(const std::vector<Rational>& b,
                           std::vector<Rational>& x,
                           std::size_t* bad_row) const {
  // Augmented elimination; inconsistency shows up as a zero row with a
  // nonzero right-hand side.
  std::vector<std::vector<Rational>> m(rows_,
                                       std::vector<Rational>(cols_ + 1));
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) m[i][j] = at(i, j);
    m[i][cols_] = b[i];
  }
  // Track where each eliminated row came from so the failing base dimension
  // can be named.
  std::vector<std::size_t> origin(rows_);
  for (std::size_t i = 0; i < rows_; ++i) origin[i] = i;

  std::size_t r = 0;
  std::vector<std::size_t> pivot_col_of_row;
  for (std::size_t c = 0; c < cols_ && r < rows_; ++c) {
    std::size_t pivot = r;
    while (pivot < rows_ && m[pivot][c].is_zero()) ++pivot;
    if (pivot == rows_) continue;
    std::swap(m[r], m[pivot]);
    std::swap(origin[r], origin[pivot]);
    const Rational inv = Rational(1) / m[r][c];
    for (std::size_t j = c; j <= cols_; ++j) m[r][j] *= inv;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (i == r || m[i][c].is_zero()) continue;
      const Rational f = m[i][c];
      for (std::size_t j = c; j <= cols_; ++j) m[i][j] -= f * m[r][j];
    }
    pivot_col_of_row.push_back(c);
    ++r;
  }
  for (std::size_t i = r; i < rows_; ++i) {
    if (!m[i][cols_].is_zero()) {
      if (bad_row) *bad_row = origin[i];
      return false;
    }
  }
  x.assign(cols_, Rational(0));
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t pc = pivot_col_of_row[i];
    Rational v = m[i][cols_];
    for (std::size_t j = pc + 1; j < cols_; ++j)
      if (!m[i][j].is_zero()) v -= m[i][j] * x[j];
    x[pc] = v;
  }
  return true;
}

ContextMatrixReport context_matrix(const SystemSpec& spec) {
  if (spec.context_vars.empty())
    throw ConfigError("system '" + spec.name + "' declares no context variables");
  const std::size_t k = spec.context_vars.front().dim.size();
  ContextMatrixReport report{RationalMatrix(k, spec.context_vars.size())};
  for (std::size_t j = 0; j < spec.context_vars.size(); ++j) {
    const Dimension& d = spec.context_vars[j].dim;
    if (d.size() != k)
      throw DimensionError("context variable '" + spec.context_vars[j].name +
                           "' has basis length " + std::to_string(d.size()) +
                           ", expected " + std::to_string(k));
    for (std::size_t i = 0; i < k; ++i) report.matrix.at(i, j) = d[i];
  }
  report.rank = report.matrix.rank();
  report.full_rank = report.rank == spec.context_vars.size();
  return report;
}

namespace {

Rational l1_norm(const std::vector<Rational>& v) {
  Rational s(0);
  for (const auto& e : v) s += e.abs();
  return s;
}

bool lex_less(const std::vector<Rational>& a, const std::vector<Rational>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

// All index subsets of {0..n-1} with size <= max_size, in deterministic
// order. n is the number of context variables, so this stays tiny.
void enumerate_subsets(std::size_t n, std::size_t max_size,
                       std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> cur;
  // Iterative bitmask enumeration keeps the order reproducible.
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) > max_size)
      continue;
    cur.clear();
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::uint64_t(1) << i)) cur.push_back(i);
    out.push_back(cur);
  }
}

}  // namespace

PiGroup solve_pi_group(const VariableSpec& var,
                       const std::vector<VariableSpec>& context_vars,
                       const RationalMatrix& matrix) {
  const std::size_t k = matrix.rows();
  const std::size_t n = matrix.cols();
  std::vector<Rational> rhs(k);
  for (std::size_t i = 0; i < k; ++i) rhs[i] = -var.dim[i];

  PiGroup group;
  group.target = var.name;
  group.target_exp = Rational(1);

  if (var.dim.is_dimensionless()) {
    group.context_exps.assign(n, Rational(0));
    return group;
  }

  // A minimal-L1 point of an affine solution set can always be taken with
  // support of at most rank(matrix) columns, so enumerating small supports
  // finds it exactly. For a full-rank square context this reduces to the
  // unique solve.
  const std::size_t rank = matrix.rank();
  std::vector<std::vector<std::size_t>> subsets;
  enumerate_subsets(n, rank, subsets);

  bool found = false;
  std::vector<Rational> best;
  Rational best_l1(0);
  std::size_t bad_row = 0;
  for (const auto& s : subsets) {
    RationalMatrix sub(k, s.size());
    for (std::size_t j = 0; j < s.size(); ++j)
      for (std::size_t i = 0; i < k; ++i) sub.at(i, j) = matrix.at(i, s[j]);
    std::vector<Rational> xs;
    if (!sub.solve(rhs, xs, &bad_row)) continue;
    std::vector<Rational> full(n, Rational(0));
    for (std::size_t j = 0; j < s.size(); ++j) full[s[j]] = xs[j];
    const Rational l1 = l1_norm(full);
    if (!found || l1 < best_l1 || (l1 == best_l1 && lex_less(full, best))) {
      best = std::move(full);
      best_l1 = l1;
      found = true;
    }
  }
  if (!found) {
    const auto& names = base_dimension_names();
    throw NonDimensionalizableError(
        var.name, bad_row < names.size() ? names[bad_row]
                                         : std::to_string(bad_row));
  }
  group.context_exps = std::move(best);
  return group;
}

PiBasis build_pi_basis(const SystemSpec& spec) {
  const auto report = context_matrix(spec);
  PiBasis basis;
  for (const auto& cv : spec.context_vars) basis.context_names.push_back(cv.name);
  for (const auto& v : spec.dynamic_vars())
    basis.groups.push_back(solve_pi_group(v, spec.context_vars, report.matrix));
  return basis;
}

bool verify_dimensionless(const PiGroup& group, const SystemSpec& spec) {
  const VariableSpec* target = spec.find(group.target);
  if (!target) return false;
  Dimension combined = dim_pow(target->dim, group.target_exp);
  for (std::size_t j = 0; j < spec.context_vars.size(); ++j) {
    if (j >= group.context_exps.size()) return false;
    combined = dim_mul(combined,
                       dim_pow(spec.context_vars[j].dim, group.context_exps[j]));
  }
  return combined.is_dimensionless();
}

std::string pi_group_str(const PiGroup& group,
                         const std::vector<std::string>& context_names) {
  std::string out = group.target;
  for (std::size_t j = 0; j < group.context_exps.size(); ++j) {
    const Rational& e = group.context_exps[j];
    if (e.is_zero()) continue;
    const std::string name = j < context_names.size()
                                 ? context_names[j]
                                 : ("c" + std::to_string(j));
    out += " * " + name + "^{" + e.str() + "}";
  }
  return out;
}

Eigen::VectorXd pi_scale_factors(const PiBasis& basis, const ContextValues& c) {
  std::vector<double> ctx(basis.context_names.size());
  for (std::size_t j = 0; j < basis.context_names.size(); ++j) {
    const auto it = c.find(basis.context_names[j]);
    if (it == c.end())
      throw ConfigError("context value missing for '" + basis.context_names[j] +
                        "'");
    if (!(it->second > 0.0) || !std::isfinite(it->second))
      throw std::domain_error("context value for '" + basis.context_names[j] +
                              "' must be strictly positive and finite");
    ctx[j] = it->second;
  }
  Eigen::VectorXd factors(static_cast<Eigen::Index>(basis.groups.size()));
  for (std::size_t i = 0; i < basis.groups.size(); ++i) {
    double f = 1.0;
    for (std::size_t j = 0; j < basis.groups[i].context_exps.size(); ++j) {
      const Rational& e = basis.groups[i].context_exps[j];
      if (e.is_zero()) continue;
      f *= std::pow(ctx[j], e.to_double());
    }
    factors[static_cast<Eigen::Index>(i)] = f;
  }
  return factors;
}

Eigen::VectorXd nondimensionalize(const Eigen::VectorXd& values,
                                  const PiBasis& basis,
                                  const ContextValues& c) {
  if (values.size() != static_cast<Eigen::Index>(basis.groups.size()))
    throw DimensionError("value vector length " + std::to_string(values.size()) +
                         " does not match basis size " +
                         std::to_string(basis.groups.size()));
  return values.cwiseProduct(pi_scale_factors(basis, c));
}

Eigen::VectorXd dimensionalize(const Eigen::VectorXd& values_pi,
                               const PiBasis& basis, const ContextValues& c) {
  if (values_pi.size() != static_cast<Eigen::Index>(basis.groups.size()))
    throw DimensionError("value vector length " +
                         std::to_string(values_pi.size()) +
                         " does not match basis size " +
                         std::to_string(basis.groups.size()));
  return values_pi.cwiseQuotient(pi_scale_factors(basis, c));
}

}  // namespace pimdp
