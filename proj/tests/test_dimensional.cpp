#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pimdp/buckingham.hpp"
#include "pimdp/dimension.hpp"
#include "pimdp/errors.hpp"
#include "pimdp/rational.hpp"
#include "pimdp/system_spec.hpp"

using namespace pimdp;

namespace {

Dimension dim(std::int64_t m, std::int64_t l, std::int64_t t) {
  return Dimension({Rational(m), Rational(l), Rational(t)});
}

}  // namespace

TEST_CASE("rational arithmetic stays exact and normalized") {
  CHECK(Rational(2, 4) == Rational(1, 2));
  CHECK(Rational(1, -2) == Rational(-1, 2));
  CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
  CHECK(Rational(1, 2) * Rational(2, 3) == Rational(1, 3));
  CHECK(Rational(1, 2) - Rational(1, 2) == Rational(0));
  CHECK(Rational(-3, 7).abs() == Rational(3, 7));
  CHECK(Rational(1, 3) < Rational(1, 2));
  CHECK(Rational(7, 2).str() == "7/2");
  CHECK(Rational(-4).str() == "-4");
  CHECK_THROWS_AS(Rational(1, 0), std::domain_error);
  CHECK_THROWS_AS(Rational(1) / Rational(0), std::domain_error);
}

TEST_CASE("dim_mul adds exponents") {
  // [L] * [T^-1] = [L T^-1]
  CHECK(dim_mul(dim(0, 1, 0), dim(0, 0, -1)) == dim(0, 1, -1));
  // force times inverse force is dimensionless
  CHECK(dim_mul(dim(1, 1, -2), dim(-1, -1, 2)).is_dimensionless());
  // [L] * [L] = [L^2]
  CHECK(dim_mul(dim(0, 1, 0), dim(0, 1, 0)) == dim(0, 2, 0));
  CHECK_THROWS_AS(dim_mul(dim(0, 1, 0), Dimension({Rational(1)})),
                  DimensionError);
}

TEST_CASE("dim_pow scales exponents exactly") {
  // [L T^-2]^(1/2) = [L^1/2 T^-1]
  const Dimension half = dim_pow(dim(0, 1, -2), Rational(1, 2));
  CHECK(half == Dimension({Rational(0), Rational(1, 2), Rational(-1)}));
  CHECK(dim_pow(dim(1, 2, -2), Rational(0)).is_dimensionless());
  // [T^-1]^(-2) = [T^2]
  CHECK(dim_pow(dim(0, 0, -1), Rational(-2)) == dim(0, 0, 2));
}

TEST_CASE("dim_add_check enforces like dimensions") {
  const Quantity a(2.0, dim(0, 1, 0));
  const Quantity b(3.0, dim(0, 1, 0));
  CHECK(dim_add_check(a, b).magnitude == doctest::Approx(5.0));
  CHECK(dim_add_check(a, b).dim == dim(0, 1, 0));

  const Quantity t(1.0, dim(0, 0, 1));
  CHECK_THROWS_AS(dim_add_check(a, t), DimensionError);

  const Quantity x(4.25, Dimension::dimensionless());
  const Quantity zero(0.0, Dimension::dimensionless());
  CHECK(dim_add_check(x, zero).magnitude == doctest::Approx(4.25));
}

TEST_CASE("context matrix for (M, g, L) matches the hand computation") {
  const SystemSpec spec = pendulum_system_spec();
  const auto report = context_matrix(spec);
  REQUIRE(report.matrix.rows() == 3);
  REQUIRE(report.matrix.cols() == 3);
  // rows M, L, T; columns M, g, L
  const std::int64_t expected[3][3] = {{1, 0, 0}, {0, 1, 1}, {0, -2, 0}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(report.matrix.at(i, j) == Rational(expected[i][j]));
  CHECK(report.rank == 3);
  CHECK(report.full_rank);
}

TEST_CASE("degenerate context matrices report reduced rank") {
  SystemSpec spec = pendulum_system_spec();
  spec.context_vars = {spec.context_vars[0]};  // M only
  CHECK(context_matrix(spec).rank == 1);

  SystemSpec dup = pendulum_system_spec();
  dup.context_vars = {dup.context_vars[2], dup.context_vars[2]};
  dup.context_vars[1].name = "L2";  // two length columns
  const auto report = context_matrix(dup);
  CHECK(report.rank == 1);
  CHECK_FALSE(report.full_rank);
}

TEST_CASE("solve_pi_group reproduces the cartpole groups") {
  const SystemSpec spec = cartpole_system_spec();
  const auto report = context_matrix(spec);

  SUBCASE("cart position x -> x / L") {
    const auto g = solve_pi_group(*spec.find("x"), spec.context_vars,
                                  report.matrix);
    CHECK(g.context_exps[0] == Rational(0));   // M
    CHECK(g.context_exps[1] == Rational(0));   // g
    CHECK(g.context_exps[2] == Rational(-1));  // L
    CHECK(verify_dimensionless(g, spec));
  }
  SUBCASE("force u -> u / (M g)") {
    const auto g = solve_pi_group(*spec.find("u"), spec.context_vars,
                                  report.matrix);
    CHECK(g.context_exps[0] == Rational(-1));
    CHECK(g.context_exps[1] == Rational(-1));
    CHECK(g.context_exps[2] == Rational(0));
    CHECK(verify_dimensionless(g, spec));
  }
  SUBCASE("cart speed -> x_dot / sqrt(L g)") {
    const auto g = solve_pi_group(*spec.find("x_dot"), spec.context_vars,
                                  report.matrix);
    CHECK(g.context_exps[0] == Rational(0));
    CHECK(g.context_exps[1] == Rational(-1, 2));
    CHECK(g.context_exps[2] == Rational(-1, 2));
    CHECK(verify_dimensionless(g, spec));
  }
  SUBCASE("angular speed -> theta_dot * sqrt(L / g)") {
    // The exact nullspace solve gives L^{+1/2} g^{-1/2}; the opposite sign
    // pairing has dimension T^-2 and must fail verification.
    const auto g = solve_pi_group(*spec.find("theta_dot"), spec.context_vars,
                                  report.matrix);
    CHECK(g.context_exps[0] == Rational(0));
    CHECK(g.context_exps[1] == Rational(-1, 2));
    CHECK(g.context_exps[2] == Rational(1, 2));
    CHECK(verify_dimensionless(g, spec));

    PiGroup flipped = g;
    flipped.context_exps[1] = Rational(1, 2);
    flipped.context_exps[2] = Rational(-1, 2);
    CHECK_FALSE(verify_dimensionless(flipped, spec));
  }
}

TEST_CASE("pendulum torque declaration yields u / (M g L)") {
  const SystemSpec spec = pendulum_system_spec();
  const auto basis = build_pi_basis(spec);
  REQUIRE(basis.groups.size() == 3);
  const PiGroup& gu = basis.groups[2];
  CHECK(gu.target == "u");
  CHECK(gu.context_exps[0] == Rational(-1));
  CHECK(gu.context_exps[1] == Rational(-1));
  CHECK(gu.context_exps[2] == Rational(-1));
  CHECK(pi_group_str(gu, basis.context_names) ==
        "u * M^{-1} * g^{-1} * L^{-1}");

  // force-dimension variant reproduces the appendix treatment
  const SystemSpec fspec = pendulum_system_spec(/*force_input=*/true);
  const auto fbasis = build_pi_basis(fspec);
  CHECK(pi_group_str(fbasis.groups[2], fbasis.context_names) ==
        "u * M^{-1} * g^{-1}");
}

TEST_CASE("build_pi_basis gives identity groups to angles") {
  const SystemSpec spec = cartpole_system_spec();
  const auto basis = build_pi_basis(spec);
  REQUIRE(basis.groups.size() == 5);  // x, theta, x_dot, theta_dot, u
  CHECK(basis.groups[1].target == "theta");
  CHECK(basis.groups[1].is_identity());
  CHECK(pi_group_str(basis.groups[1], basis.context_names) == "theta");
  for (const auto& g : basis.groups) CHECK(verify_dimensionless(g, spec));
}

TEST_CASE("a dimensionless spec with no context needs no solving") {
  SystemSpec spec;
  spec.name = "angles_only";
  VariableSpec a;
  a.name = "alpha";
  a.role = VarRole::State;
  a.dim = Dimension::dimensionless();
  VariableSpec b = a;
  b.name = "beta";
  b.role = VarRole::Action;
  spec.state_vars = {a};
  spec.action_vars = {b};
  // No context vars: build_pi_basis would reject, identity basis is the
  // supported path for natural-space use.
  const auto basis = PiBasis::identity(spec);
  CHECK(basis.groups.size() == 2);
  for (const auto& g : basis.groups) CHECK(g.is_identity());
}

TEST_CASE("unsolvable variables name the offending base dimension") {
  SystemSpec spec = pendulum_system_spec();
  spec.context_vars = {spec.context_vars[2]};  // L only
  const auto report = context_matrix(spec);
  VariableSpec v;
  v.name = "m_var";
  v.role = VarRole::State;
  v.dim = dim(1, 0, 0);  // pure mass, not in span(L)
  CHECK_THROWS_AS(solve_pi_group(v, spec.context_vars, report.matrix),
                  NonDimensionalizableError);
  try {
    solve_pi_group(v, spec.context_vars, report.matrix);
  } catch (const NonDimensionalizableError& e) {
    CHECK(e.variable_name == "m_var");
    CHECK(e.offending_base == "M");
  }
}

TEST_CASE("underdetermined contexts take the minimal-L1 solution") {
  // Contexts (L, H) both lengths: v of dimension [L] can use either column;
  // minimal L1 is exponent -1 on a single column, lexicographic tie-break
  // picks the vector that sorts first in context order.
  SystemSpec spec;
  spec.name = "two_lengths";
  VariableSpec v = {"v", dim(0, 1, 0), VarRole::State};
  spec.state_vars = {v};
  spec.context_vars = {{"La", dim(0, 1, 0), VarRole::Context},
                       {"Lb", dim(0, 1, 0), VarRole::Context}};
  const auto report = context_matrix(spec);
  CHECK(report.rank == 1);
  const auto g = solve_pi_group(v, spec.context_vars, report.matrix);
  const Rational l1 = g.context_exps[0].abs() + g.context_exps[1].abs();
  CHECK(l1 == Rational(1));
  // (-1, 0) sorts before (0, -1)
  CHECK(g.context_exps[0] == Rational(-1));
  CHECK(g.context_exps[1] == Rational(0));
}

TEST_CASE("nondimensionalize applies the Table-1 scale factors") {
  const SystemSpec spec = cartpole_system_spec();
  const auto basis = build_pi_basis(spec);
  const ContextValues c{{"M", 1.0}, {"g", 10.0}, {"L", 0.5}};

  // x = 2.0 m with L = 0.5 -> x_pi = 4.0
  Eigen::VectorXd v(5);
  v << 2.0, 0.3, 0.0, 0.0, 0.0;
  const Eigen::VectorXd vp = nondimensionalize(v, basis, c);
  CHECK(vp[0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(vp[1] == doctest::Approx(0.3).epsilon(1e-14));  // angle untouched

  // u = 2.0 under u/(Mg) with M=1, g=10 -> 2 / 10 = 0.2
  Eigen::VectorXd u(5);
  u << 0, 0, 0, 0, 2.0;
  const ContextValues c2{{"M", 1.0}, {"g", 10.0}, {"L", 1.0}};
  CHECK(nondimensionalize(u, basis, c2)[4] ==
        doctest::Approx(0.2).epsilon(1e-14));
  // inverse direction: u_pi = 0.02 -> u = 0.02 * M g = 0.2
  Eigen::VectorXd up(5);
  up << 0, 0, 0, 0, 0.02;
  CHECK(dimensionalize(up, basis, c2)[4] ==
        doctest::Approx(0.2).epsilon(1e-14));

  // identity context changes nothing
  const ContextValues ones{{"M", 1.0}, {"g", 1.0}, {"L", 1.0}};
  const Eigen::VectorXd same = nondimensionalize(v, basis, ones);
  for (int i = 0; i < 5; ++i) CHECK(same[i] == v[i]);
}

TEST_CASE("round trip is identity to 1e-12 over random values and contexts") {
  const SystemSpec spec = cartpole_system_spec();
  const auto basis = build_pi_basis(spec);
  std::mt19937_64 rng(20250810);
  std::uniform_real_distribution<double> uval(-10.0, 10.0);
  std::uniform_real_distribution<double> uctx(0.1, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd v(5);
    for (int i = 0; i < 5; ++i) v[i] = uval(rng);
    const ContextValues c{
        {"M", uctx(rng)}, {"g", uctx(rng)}, {"L", uctx(rng)}};
    const Eigen::VectorXd back = dimensionalize(nondimensionalize(v, basis, c),
                                                basis, c);
    for (int i = 0; i < 5; ++i) {
      const double denom = std::max(1.0, std::abs(v[i]));
      CHECK(std::abs(back[i] - v[i]) / denom <= 1e-12);
    }
  }
}

TEST_CASE("power-law structure relates any two contexts exactly") {
  const SystemSpec spec = cartpole_system_spec();
  const auto basis = build_pi_basis(spec);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uctx(0.2, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ContextValues c{{"M", uctx(rng)}, {"g", uctx(rng)}, {"L", uctx(rng)}};
    const ContextValues c2{{"M", uctx(rng)}, {"g", uctx(rng)}, {"L", uctx(rng)}};
    const Eigen::VectorXd f1 = pi_scale_factors(basis, c);
    const Eigen::VectorXd f2 = pi_scale_factors(basis, c2);
    for (std::size_t i = 0; i < basis.groups.size(); ++i) {
      double expected = 1.0;
      const auto& exps = basis.groups[i].context_exps;
      const std::vector<std::string> names = basis.context_names;
      for (std::size_t j = 0; j < names.size(); ++j)
        expected *= std::pow(c.at(names[j]) / c2.at(names[j]),
                             exps[j].to_double());
      const double ratio = f1[static_cast<Eigen::Index>(i)] /
                           f2[static_cast<Eigen::Index>(i)];
      CHECK(ratio == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("non-positive context values are rejected") {
  const SystemSpec spec = cartpole_system_spec();
  const auto basis = build_pi_basis(spec);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(5);
  CHECK_THROWS_AS(
      nondimensionalize(v, basis, {{"M", 1.0}, {"g", -10.0}, {"L", 1.0}}),
      std::domain_error);
  CHECK_THROWS_AS(
      nondimensionalize(v, basis, {{"M", 0.0}, {"g", 10.0}, {"L", 1.0}}),
      std::domain_error);
}

TEST_CASE("system specs survive a JSON round trip") {
  const SystemSpec spec = cartpole_system_spec();
  const SystemSpec back = parse_system_spec(system_spec_to_json(spec));
  CHECK(back.name == spec.name);
  REQUIRE(back.state_vars.size() == spec.state_vars.size());
  for (std::size_t i = 0; i < spec.state_vars.size(); ++i) {
    CHECK(back.state_vars[i].name == spec.state_vars[i].name);
    CHECK(back.state_vars[i].dim == spec.state_vars[i].dim);
  }
  const auto basis = build_pi_basis(back);
  CHECK(pi_group_str(basis.groups[0], basis.context_names) == "x * L^{-1}");

  CHECK_THROWS_AS(parse_system_spec("{ not json"), ConfigError);
  CHECK_THROWS_AS(parse_system_spec(R"({"variables": [{"name":"a"}]})"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_system_spec(
          R"({"variables": [{"name":"a","role":"state","dim":[0.5,0,0]}]})"),
      ConfigError);
}
