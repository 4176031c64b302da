#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "pimdp/errors.hpp"
#include "pimdp/rational.hpp"

namespace pimdp {

/// Names of the base dimensions, in the fixed order used throughout.
/// Mechanics only: mass, length, time. The vector length is not hard-coded
/// anywhere below, so extending the basis is a matter of passing longer
/// exponent vectors.
inline const std::vector<std::string>& base_dimension_names() {
  static const std::vector<std::string> names = {"M", "L", "T"};
  return names;
}

/// Physical dimension as an exact rational exponent vector over the base
/// dimensions (M, L, T). [L T^-2] is {0, 1, -2}.
class Dimension {
 public:
  Dimension() : exps_(base_dimension_names().size(), Rational(0)) {}
  explicit Dimension(std::vector<Rational> exps) : exps_(std::move(exps)) {}
  Dimension(std::initializer_list<Rational> exps) : exps_(exps) {}

  static Dimension dimensionless(std::size_t n_base = 3) {
    return Dimension(std::vector<Rational>(n_base, Rational(0)));
  }

  std::size_t size() const { return exps_.size(); }
  const Rational& operator[](std::size_t i) const { return exps_[i]; }
  const std::vector<Rational>& exponents() const { return exps_; }

  bool is_dimensionless() const {
    for (const auto& e : exps_)
      if (!e.is_zero()) return false;
    return true;
  }

  friend bool operator==(const Dimension& a, const Dimension& b) {
    return a.exps_ == b.exps_;
  }
  friend bool operator!=(const Dimension& a, const Dimension& b) {
    return !(a == b);
  }

  /// e.g. "[M L^2 T^-2]", "[1]" when dimensionless.
  std::string str() const {
    if (is_dimensionless()) return "[1]";
    std::string out = "[";
    bool first = true;
    for (std::size_t i = 0; i < exps_.size(); ++i) {
      if (exps_[i].is_zero()) continue;
      if (!first) out += " ";
      out += base_dimension_names()[i % base_dimension_names().size()];
      if (exps_[i] != Rational(1)) out += "^" + exps_[i].str();
      first = false;
    }
    return out + "]";
  }

 private:
  std::vector<Rational> exps_;
};

/// Element-wise exponent sum. Both operands must share the basis length.
inline Dimension dim_mul(const Dimension& a, const Dimension& b) {
  if (a.size() != b.size())
    throw DimensionError("dimension basis length mismatch: " +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  std::vector<Rational> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return Dimension(std::move(out));
}

/// Exponents scaled by an exact rational power.
inline Dimension dim_pow(const Dimension& a, const Rational& gamma) {
  std::vector<Rational> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * gamma;
  return Dimension(std::move(out));
}

/// A magnitude carrying a dimension.
struct Quantity {
  double magnitude = 0.0;
  Dimension dim;

  Quantity() = default;
  Quantity(double m, Dimension d) : magnitude(m), dim(std::move(d)) {
    if (!std::isfinite(m))
      throw DimensionError("quantity magnitude must be finite");
  }
};

/// Addition is only defined between like dimensions.
inline Quantity dim_add_check(const Quantity& a, const Quantity& b) {
  if (a.dim != b.dim)
    throw DimensionError("cannot add quantities of dimensions " + a.dim.str() +
                         " and " + b.dim.str());
  return Quantity(a.magnitude + b.magnitude, a.dim);
}

inline Quantity operator*(const Quantity& a, const Quantity& b) {
  return Quantity(a.magnitude * b.magnitude, dim_mul(a.dim, b.dim));
}

}  // namespace pimdp
