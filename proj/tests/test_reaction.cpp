#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"

#include "fitted.hpp"
#include "mcstab/reaction.hpp"
#include "oracles.hpp"

using namespace mcstab;

namespace {

double max_rel_gap(const RealMatrix& a, const RealMatrix& b) {
  const double scale = std::max(a.max_abs(), 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(a(i, j)), 1e-3 * scale));
  return worst;
}

// e_m^T adj(sI - A) e_m / det(sI - A), both by cofactor expansion.
cplx cramer_tf(const RealMatrix& A, cplx s) {
  const std::size_t m = A.rows();
  oracle::Rows<cplx> M(m, std::vector<cplx>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) M[i][j] = (i == j ? s : cplx{}) - A(i, j);
  if (m == 1) return 1.0 / M[0][0];
  oracle::Rows<cplx> minor(m - 1, std::vector<cplx>(m - 1));
  for (std::size_t i = 0; i + 1 < m; ++i)
    for (std::size_t j = 0; j + 1 < m; ++j) minor[i][j] = M[i][j];
  return oracle::cofactor_det(minor) / oracle::cofactor_det(M);
}

}  // namespace

TEST_CASE("ARD vector field at the origin and under transport balance") {
  const auto p = fitted::ard(2.5);
  const auto f0 = ard_vector_field(p, StateVector{0, 0, 0, 0});
  CHECK(f0 == StateVector{0.0, 0.0, p.gamma_d, 0.0});
  const auto f = ard_vector_field(p, StateVector{3.0, 1.5, 4.25, 4.25});
  CHECK(f[3] == 0.0);
}

TEST_CASE("ARD parameters: defaults, validation and map round trip") {
  auto map = fitted::ard(2.5).to_map();
  map.erase("k");
  CHECK(ArdParams::from_map(map).k == 0.05);
  map["delta_a"] = 0.0;
  CHECK_THROWS_AS(ArdParams::from_map(map), ConfigError);
  map["delta_a"] = 0.035;
  map["typo"] = 1.0;
  CHECK_THROWS_AS(ArdParams::from_map(map), ConfigError);
  map.erase("typo");
  map.erase("K_d");
  CHECK_THROWS_AS(ArdParams::from_map(map), ConfigError);
}

TEST_CASE("model registry") {
  CHECK(make_model("linear_decay", {{"delta", 2.0}}).m == 1);
  CHECK_THROWS_AS(make_model("linear_decay", {{"delta", -1.0}}), ConfigError);
  CHECK_THROWS_AS(make_model("linear_decay", {}), ConfigError);
  CHECK_THROWS_AS(make_model("nope", {}), ConfigError);
  const auto lin = make_model("linear", {{"a_1_1", -1}, {"a_1_2", 2}, {"a_2_1", 0}, {"a_2_2", -3}, {"b_1", 1}, {"b_2", 6}});
  CHECK(lin.m == 2);
  CHECK(lin.f(StateVector{0, 0}) == StateVector{1.0, 6.0});
  CHECK_THROWS_AS(make_model("linear", {{"a_1_1", -1}, {"b_1", 1}, {"b_2", 1}}), ConfigError);
}

TEST_CASE("find_equilibrium on an affine model converges in one step") {
  const auto model = make_affine_model(RealMatrix{{-1.0}}, {3.0});
  NewtonOptions opt;
  opt.max_iterations = 2;  // one step plus the convergence check
  const auto eq = find_equilibrium(model, StateVector{0.0}, opt);
  CHECK(eq.x_star[0] == 3.0);
  CHECK(eq.residual == 0.0);
  CHECK(eq.jacobian(0, 0) == -1.0);
}

TEST_CASE("find_equilibrium error paths") {
  CHECK_THROWS_AS(find_equilibrium(make_affine_model(RealMatrix{{-1.0}}, {-1.0}), StateVector{0.5}), NegativeState);
  ReactionModel no_root{"no-root", 1, {}, [](std::span<const double> x) { return StateVector{x[0] * x[0] + 1.0}; }, {}};
  CHECK_THROWS_AS(find_equilibrium(no_root, StateVector{0.5}), NoConvergence);
}

TEST_CASE("jacobian of linear and ARD models") {
  const auto neg = make_affine_model(RealMatrix{{-1, 0}, {0, -1}}, {0, 0});
  CHECK(jacobian(neg, StateVector{3.0, -2.0}) == RealMatrix{{-1, 0}, {0, -1}});

  const auto p = fitted::ard(2.5);
  const auto model = make_ard_model(p);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 30.0);
  for (int rep = 0; rep < 200; ++rep) {
    const StateVector x{u(rng), u(rng), u(rng), u(rng)};
    const auto J = jacobian(model, x);
    CHECK(J(3, 0) == 0.0);
    CHECK(J(3, 1) == 0.0);
    CHECK(J(3, 2) == p.k);
    CHECK(J(3, 3) == -p.k);
    CHECK(J(0, 2) == 0.0);
    CHECK(J(0, 3) == 0.0);
    CHECK(max_rel_gap(J, finite_difference_jacobian(model, x)) < 1e-6);
  }
}

TEST_CASE("fitted ARD equilibria lie near the target ones") {
  for (const auto& [ga, guess] : {std::pair{2.5, fitted::kGuessLow}, std::pair{3.0, fitted::kGuessHigh}}) {
    const auto model = make_ard_model(fitted::ard(ga));
    const auto eq = find_equilibrium(model, guess);
    CHECK(eq.residual < 1e-9);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(eq.x_star[i] - guess[i]) <= 0.1);
    CHECK(std::abs(eq.x_star[2] - eq.x_star[3]) < 1e-8);
    CHECK(max_rel_gap(eq.jacobian, finite_difference_jacobian(model, eq.x_star)) < 1e-6);

    // Stationary under one more Newton step.
    const auto fx = model.f(eq.x_star);
    std::vector<double> neg(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) neg[i] = -fx[i];
    const auto dx = lu_solve(eq.jacobian, std::span<const double>(neg));
    for (double d : dx) CHECK(std::abs(d) < 1e-12);
  }
}

TEST_CASE("fitted ARD has three equilibria on the seed grid") {
  const auto all = find_equilibria(make_ard_model(fitted::ard(2.5)));
  REQUIRE(all.size() == 3);
  CHECK(std::is_sorted(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.x_star < b.x_star; }));
  CHECK(std::abs(all.back().x_star[0] - 7.6) < 0.1);
}

TEST_CASE("robot_tf: scalar resolvent, high-frequency limit and conjugate symmetry") {
  const RealMatrix D{{-0.7}};
  for (cplx s : {cplx(0, 0), cplx(1, 2), cplx(-0.3, -4)}) CHECK(std::abs(robot_tf(D, s) - 1.0 / (s + 0.7)) < 1e-15);
  CHECK_THROWS_AS(robot_tf(D, cplx(-0.7, 0)), ResolventSingular);

  const auto A = make_ard_model(fitted::ard(3.0)).analytic_jacobian(fitted::kGuessHigh);
  for (cplx s : {cplx(1e9, 0), cplx(0, 1e9), cplx(-7e8, 7e8)}) CHECK(std::abs(robot_tf(A, s) * s - 1.0) < 1e-8);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 100; ++rep) {
    const cplx s(g(rng), g(rng));
    CHECK(std::abs(robot_tf(A, std::conj(s)) - std::conj(robot_tf(A, s))) <= 1e-14 * std::abs(robot_tf(A, s)));
  }
}

TEST_CASE("robot_tf matches Cramer's rule at the ARD equilibrium") {
  const auto model = make_ard_model(fitted::ard(2.5));
  const auto eq = find_equilibrium(model, fitted::kGuessLow);
  for (cplx s : {cplx(0, 0.01), cplx(0, 1.0), cplx(0.2, -0.05)}) {
    const cplx h = robot_tf(eq.jacobian, s);
    const cplx ref = cramer_tf(eq.jacobian, s);
    CHECK(std::abs(h - ref) <= 1e-9 * std::abs(ref));
  }
}
