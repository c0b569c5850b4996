#pragma once

#include <cstdint>
#include <vector>

#include "core/dual.hpp"

namespace ksos {

// Energy-distance kernel gram, G_ij = |v_i| + |v_j| - |v_i - v_j|.
Matrix energy_kernel_gram(const Vector& v);

// Biased V-statistic (1/M^2) tr(K_u H K_v H) with energy-kernel grams and
// H the centering matrix.
double hsic_v_statistic(const Vector& u, const Vector& v);

// Pair-resampling bootstrap percentile interval for the statistic.
std::pair<double, double> hsic_bootstrap_ci(const Vector& u, const Vector& v, int n_boot,
                                            double level, std::uint64_t seed);

// Out-of-fold squared residuals and scale values from K-fold refits.
struct HsicSample {
  Vector residuals_sq;
  Vector scales;
  std::vector<int> fold_id;
  bool all_converged = true;
};

// Everything the cross-validated refits share; theta_f varies per candidate.
struct ProblemTemplate {
  HyperParams hyper;
  double s = 0.0;
  KernelSpec kernel_m;
  double variance_f = 1.0;
};

HsicSample cv_residual_scale_pairs(const Dataset& data, int folds, const Vector& theta_f,
                                   const ProblemTemplate& base, const SolverConfig& solver_cfg,
                                   std::uint64_t seed, int jobs = 1);

struct TunePoint {
  Vector theta;
  double hsic = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct TuneResult {
  Vector best_lengthscale;
  std::vector<TunePoint> curve;
  int evaluations = 0;
};

struct TuneConfig {
  int folds = 10;
  Vector log10_lo, log10_hi;  // per-dimension bounds on theta_f
  int budget = 14;            // max objective evaluations
  std::uint64_t seed = 0;
  int jobs = 1;
  int n_boot = 200;
  double ci_level = 0.9;
  double step_tol = 0.05;  // refinement stop, log10 units
};

TuneConfig default_tune_config(const Dataset& data, int budget = 14, std::uint64_t seed = 0);

// Log-spaced grid (7 per dimension for d <= 2, Latin hypercube of budget/2
// points otherwise) followed by pattern-search refinement around the best
// grid point. Strict-improvement acceptance, so a flat objective returns the
// first candidate evaluated.
TuneResult tune_lengthscale(const Dataset& data, const ProblemTemplate& base, const TuneConfig& cfg,
                            const SolverConfig& solver_cfg);

}  // namespace ksos
