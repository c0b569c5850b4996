#include <doctest.h>

#include "core/dataset.hpp"
#include "support/primal_oracle.hpp"
#include "support/test_util.hpp"

using namespace ksos;
using ksos::testing::primal_oracle;
using ksos::testing::random_instance;

namespace {

KsosProblem case1_problem(int n, std::uint64_t seed, double a, double b, double theta_f) {
  const Dataset data = generate_case(1, n, 1, seed);
  return make_problem(data, HyperParams{a, b, 1.0, 1.0}, 4.0, isotropic_kernel(0.25, 1, 0.5),
                      isotropic_kernel(theta_f, 1));
}

}  // namespace

TEST_CASE("solver trajectory is deterministic and stays in the feasible cone") {
  const KsosProblem prob = case1_problem(40, 7, 0.0, 10.0, 0.4);
  SolverConfig cfg;
  cfg.max_iter = 600;
  const auto [s1, m1] = solve_dual(prob, cfg);
  const auto [s2, m2] = solve_dual(prob, cfg);
  CHECK((s1.gamma_mult.array() == s2.gamma_mult.array()).all());
  CHECK(s1.theta_mult == s2.theta_mult);
  CHECK(m1.diagnostics.iterations == m2.diagnostics.iterations);
  CHECK(s1.gamma_mult.minCoeff() >= 0.0);
  CHECK(s1.theta_mult >= 0.0);
}

TEST_CASE("best-so-far dual objective trace is non-decreasing") {
  const KsosProblem prob = case1_problem(50, 8, 0.0, 10.0, 0.4);
  SolverConfig cfg;
  cfg.max_iter = 2000;
  cfg.record_trace = true;
  const auto [state, model] = solve_dual(prob, cfg);
  double best = -std::numeric_limits<double>::infinity();
  for (double value : model.diagnostics.objective_trace) {
    const double running = std::max(best, value);
    CHECK(running >= best);
    best = running;
  }
  CHECK(model.diagnostics.objective_trace.size() >= 2);
}

TEST_CASE("solve on a small case-1 instance converges to both tolerances") {
  const KsosProblem prob = case1_problem(60, 9, 0.0, 0.0, 0.4);
  SolverConfig cfg;  // defaults: lr 1e-2, momentum 0.9, tol 1e-4
  const auto [state, model] = solve_dual(prob, cfg);
  CHECK(model.diagnostics.converged);
  CHECK(model.diagnostics.max_violation <= 1e-4);
  CHECK(model.diagnostics.final_gap <= 1e-4);
  // training predictions satisfy the coverage constraints up to tolerance
  for (int i = 0; i < prob.n(); ++i) {
    const Vector x = prob.data.x.row(i);
    const double resid = prob.data.y(i) - model.predict_mean(x);
    const double f = model.predict_scale(x);
    CHECK(resid * resid - f <= 2e-4 * (1.0 + resid * resid));
  }
}

TEST_CASE("dual optimum matches the brute-force primal oracle") {
  const KsosProblem prob =
      random_instance(14, 1, HyperParams{1.0, 10.0, 1.0, 1.0}, 1.5, 0.5, 0.4, 31);
  SolverConfig cfg;
  cfg.max_iter = 20000;
  cfg.tol_constraints = 1e-6;
  cfg.tol_gap = 1e-6;
  const auto [state, model] = solve_dual(prob, cfg);
  const auto oracle = primal_oracle(prob);
  CHECK(oracle.max_violation <= 1e-4);
  const double rel =
      std::abs(model.diagnostics.dual_objective - oracle.objective) / (1.0 + std::abs(oracle.objective));
  CHECK(rel <= 1e-3);
}

TEST_CASE("not converged is soft and carries diagnostics") {
  const KsosProblem prob = case1_problem(50, 10, 0.0, 10.0, 0.4);
  SolverConfig cfg;
  cfg.max_iter = 30;  // far too few
  const auto [state, model] = solve_dual(prob, cfg);
  CHECK_FALSE(model.diagnostics.converged);
  CHECK(model.diagnostics.iterations == 30);
  CHECK(model.gamma_hat.size() == 50);
}

TEST_CASE("solver configuration validation") {
  const KsosProblem prob = case1_problem(20, 11, 0.0, 10.0, 0.4);
  SolverConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(solve_dual(prob, bad), Error);
  bad = SolverConfig{};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(solve_dual(prob, bad), Error);
}

TEST_CASE("lambda2 must be positive to build a problem") {
  const Dataset data = generate_case(1, 10, 1, 0);
  CHECK_THROWS_AS(make_problem(data, HyperParams{0.0, 1.0, 1.0, 0.0}, 1.0,
                               isotropic_kernel(0.3, 1), isotropic_kernel(0.4, 1)),
                  Error);
}
