#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "pimdp/rational.hpp"
#include "pimdp/system_spec.hpp"

namespace pimdp {

/// Observed physical parameter values, keyed by context variable name.
/// All values must be strictly positive: the Pi power laws take rational
/// powers of them.
using ContextValues = std::map<std::string, double>;

/// One dimensionless product: target^(+1) * prod_i context_i^(z_i).
/// Context exponents are aligned with SystemSpec::context_vars order.
struct PiGroup {
  std::string target;
  Rational target_exp{1};
  std::vector<Rational> context_exps;

  bool is_identity() const {
    for (const auto& e : context_exps)
      if (!e.is_zero()) return false;
    return true;
  }
};

/// One PiGroup per state variable and per action variable, in spec order.
struct PiBasis {
  std::vector<PiGroup> groups;
  std::vector<std::string> context_names;

  std::size_t size() const { return groups.size(); }

  /// All-identity basis over the same variables: the "natural space" mode.
  static PiBasis identity(const SystemSpec& spec);
};

/// Dense matrix of exact rationals with Gaussian elimination. Small sizes
/// only (base dims x context vars).
class RationalMatrix {
 public:
  RationalMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, Rational(0)) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Rational& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Rational& at(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::size_t rank() const;

  /// Exact solve of A x = b. Returns true and fills x if consistent; when
  /// underdetermined the free variables are set to zero (callers wanting a
  /// particular selection rule enumerate supports themselves). Returns false
  /// if inconsistent, reporting the row index that failed.
  bool solve(const std::vector<Rational>& b, std::vector<Rational>& x,
             std::size_t* bad_row = nullptr) const;

 private:
  std::size_t rows_, cols_;
  std::vector<Rational> data_;
};

struct ContextMatrixReport {
  RationalMatrix matrix;  // k_base x n_context, column i = dim of context i
  std::size_t rank = 0;
  bool full_rank = false;  // rank == number of context variables
};

/// Column i is the exponent vector of context variable i over the base
/// dimensions; rank by exact Gaussian elimination.
ContextMatrixReport context_matrix(const SystemSpec& spec);

/// Solve [var] + sum_i z_i [c_i] = 0 exactly, target exponent fixed at +1.
/// When the system is underdetermined, the minimal-L1 solution is returned,
/// ties broken by lexicographic comparison in context order. Throws
/// NonDimensionalizableError when [var] is outside the context column space.
PiGroup solve_pi_group(const VariableSpec& var,
                       const std::vector<VariableSpec>& context_vars,
                       const RationalMatrix& matrix);

/// One group per state/action variable; already-dimensionless variables get
/// the identity group without touching the solver.
PiBasis build_pi_basis(const SystemSpec& spec);

/// Exact check that the group's combined dimension vanishes.
bool verify_dimensionless(const PiGroup& group, const SystemSpec& spec);

/// Canonical text form: "x * L^{-1}", "xdot * L^{-1/2} * g^{-1/2}",
/// bare variable name for identity groups.
std::string pi_group_str(const PiGroup& group,
                         const std::vector<std::string>& context_names);

/// Per-variable multipliers lambda_i = prod_j c_j^{z_ij}: v_pi = lambda * v.
/// Context values must be strictly positive.
Eigen::VectorXd pi_scale_factors(const PiBasis& basis, const ContextValues& c);

/// v_pi[i] = v[i] * prod_j c_j^{z_ij}, order preserved.
Eigen::VectorXd nondimensionalize(const Eigen::VectorXd& values,
                                  const PiBasis& basis,
                                  const ContextValues& c);

/// Exact inverse of nondimensionalize.
Eigen::VectorXd dimensionalize(const Eigen::VectorXd& values_pi,
                               const PiBasis& basis, const ContextValues& c);

}  // namespace pimdp
