#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "core/conformal.hpp"
#include "core/dataset.hpp"
#include "core/kernel.hpp"

namespace ksos {

struct HyperParams {
  double a = 0.0;
  double b = 10.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

// Pre-training data, hyperparameters and the kernel factorizations shared by
// every dual evaluation. Immutable once built.
struct KsosProblem {
  Dataset data;
  double a = 0.0, b = 10.0, lambda1 = 1.0, lambda2 = 1.0;
  double s = 0.0;
  KernelSpec kernel_m, kernel_f;
  GramFactorization fact_m;  // K^m
  GramFactorization fact_f;  // K^f, supplies V with K^f + jitter = V^T V

  int n() const { return data.n(); }
};

KsosProblem make_problem(Dataset data, const HyperParams& hyper, double s, KernelSpec kernel_m,
                         KernelSpec kernel_f);

// Lagrange multipliers (Gamma, theta) in Delta = R_+^{n+1} with the Nesterov
// velocity buffer; layout of momentum and gradients is [Gamma..., theta].
struct DualState {
  Vector gamma_mult;
  double theta_mult = 1.0;
  Vector momentum;
  int iteration = 0;
  double objective = 0.0;
};

DualState initial_state(const KsosProblem& prob);

struct SolverConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int max_iter = 10000;
  int check_every = 50;
  double tol_constraints = 1e-4;
  double tol_gap = 1e-4;
  bool record_trace = false;
  std::uint64_t seed = 0;  // iteration itself is deterministic
};

struct SolveDiagnostics {
  int iterations = 0;
  bool converged = false;
  double final_gap = 0.0;
  double max_violation = 0.0;
  double dual_objective = 0.0;
  std::vector<double> objective_trace;
};

// Recovered primal solution: mean weights gamma_hat and the PSD matrix A_hat
// defining the scale function f(x) = Phi(x)' A Phi(x).
class KsosModel final : public BandPredictor {
 public:
  Vector gamma_hat;
  Matrix a_hat;          // dense symmetric PSD
  Matrix a_hat_factor;   // n x k with A = F F', used for evaluation
  Matrix train_x;
  Vector train_y;
  KernelSpec kernel_m, kernel_f;
  GramFactorization fact_f;
  HyperParams hyper;
  double s = 0.0;
  double mean_train_scale = 0.0;  // mean of f over training points
  SolveDiagnostics diagnostics;

  double predict_mean(const Vector& x) const override;
  double predict_scale(const Vector& x) const override;
  double score_floor() const override;
  int input_dim() const override { return static_cast<int>(train_x.cols()); }
};

struct PrimalCheck {
  double objective = 0.0;
  double max_rel_violation = 0.0;  // coverage constraints, relative
  double norm_violation = 0.0;     // mean-norm constraint, relative
};

// Objective and constraint violations of Eq-style primal at (gamma, A);
// A is expected PSD (nuclear norm taken as the trace).
PrimalCheck primal_objective(const Vector& gamma, const Matrix& a, const KsosProblem& prob);

double dual_objective(const DualState& state, const KsosProblem& prob);

// Analytic gradient of the dual, [dGamma..., dtheta].
Vector dual_gradient(const DualState& state, const KsosProblem& prob);

std::pair<DualState, KsosModel> solve_dual(const KsosProblem& prob, const SolverConfig& cfg);

KsosModel recover_primal(const DualState& state, const KsosProblem& prob);

// Interior point (gamma = 0, A strictly feasible) used for weak-duality
// checks; exists whenever K^f is full rank after jitter.
std::pair<Vector, Matrix> strictly_feasible_point(const KsosProblem& prob);

inline double duality_gap(double primal_value, double dual_value) {
  return (primal_value - dual_value) / (1.0 + std::abs(primal_value));
}

// Max relative error between the analytic gradient and central finite
// differences of the objective over random interior multiplier points.
double gradient_check(const KsosProblem& prob, int num_points, std::uint64_t seed);

}  // namespace ksos
