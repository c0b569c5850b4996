#include "core/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "core/rng.hpp"

namespace ksos {

Matrix energy_kernel_gram(const Vector& v) {
  require(v.allFinite(), ErrorCode::invalid_argument, "energy_kernel_gram: non-finite input");
  const auto m = v.size();
  Matrix g(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double val = std::abs(v(i)) + std::abs(v(j)) - std::abs(v(i) - v(j));
      g(i, j) = val;
      g(j, i) = val;
    }
  }
  return g;
}

namespace {

// doubly centered gram H G H
Matrix centered(const Matrix& g) {
  const Vector row_mean = g.rowwise().mean();
  const double grand = row_mean.mean();
  Matrix c = g;
  c.colwise() -= row_mean;
  c.rowwise() -= row_mean.transpose();
  c.array() += grand;
  return c;
}

}  // namespace

double hsic_v_statistic(const Vector& u, const Vector& v) {
  require(u.size() == v.size(), ErrorCode::dimension_mismatch, "hsic: length mismatch");
  require(u.size() >= 2, ErrorCode::invalid_argument, "hsic: need at least two samples");
  const double m = static_cast<double>(u.size());
  // tr(Ku H Kv H) = <H Ku H, H Kv H> since H is idempotent; centering both
  // sides keeps the statistic exactly symmetric in (u, v)
  const Matrix ku_c = centered(energy_kernel_gram(u));
  const Matrix kv_c = centered(energy_kernel_gram(v));
  return ku_c.cwiseProduct(kv_c).sum() / (m * m);
}

std::pair<double, double> hsic_bootstrap_ci(const Vector& u, const Vector& v, int n_boot,
                                            double level, std::uint64_t seed) {
  require(n_boot >= 100, ErrorCode::invalid_argument, "hsic_bootstrap_ci: n_boot must be >= 100");
  require(level > 0.0 && level < 1.0, ErrorCode::invalid_argument,
          "hsic_bootstrap_ci: level must be in (0,1)");
  const auto m = u.size();
  Rng rng = Rng::stream(seed, Stream::bootstrap);
  std::vector<double> stats(n_boot);
  Vector ub(m), vb(m);
  for (int b = 0; b < n_boot; ++b) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
      ub(i) = u(j);
      vb(i) = v(j);
    }
    stats[b] = hsic_v_statistic(ub, vb);
  }
  std::sort(stats.begin(), stats.end());
  auto quantile = [&](double p) {
    const auto idx = static_cast<std::size_t>(
        std::clamp(std::ceil(p * n_boot) - 1.0, 0.0, static_cast<double>(n_boot - 1)));
    return stats[idx];
  };
  return {quantile((1.0 - level) / 2.0), quantile((1.0 + level) / 2.0)};
}

namespace {

std::vector<std::vector<int>> fold_assignment(int n, int folds, std::uint64_t seed) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  Rng rng = Rng::stream(seed, Stream::fold_split);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  // contiguous blocks of the permutation
  std::vector<std::vector<int>> out(folds);
  for (int k = 0; k < folds; ++k) {
    const int lo = (n * k) / folds;
    const int hi = (n * (k + 1)) / folds;
    out[k].assign(perm.begin() + lo, perm.begin() + hi);
    std::sort(out[k].begin(), out[k].end());
  }
  return out;
}

}  // namespace

HsicSample cv_residual_scale_pairs(const Dataset& data, int folds, const Vector& theta_f,
                                   const ProblemTemplate& base, const SolverConfig& solver_cfg,
                                   std::uint64_t seed, int jobs) {
  const int n = data.n();
  require(folds >= 2, ErrorCode::invalid_argument, "cv pairs: need at least 2 folds");
  require(n >= 2 * folds, ErrorCode::invalid_argument, "cv pairs: need n >= 2*folds");
  require(theta_f.size() == data.d(), ErrorCode::dimension_mismatch, "cv pairs: theta_f dimension");

  const auto fold_sets = fold_assignment(n, folds, seed);
  HsicSample sample;
  sample.residuals_sq.resize(n);
  sample.scales.resize(n);
  sample.fold_id.assign(n, -1);

  std::vector<std::string> failures(folds);
  std::vector<char> not_converged(folds, 0);

  auto run_fold = [&](int k) {
    const auto& held = fold_sets[k];
    std::vector<char> is_held(n, 0);
    for (int idx : held) is_held[idx] = 1;
    Dataset train;
    train.x.resize(n - static_cast<int>(held.size()), data.d());
    train.y.resize(train.x.rows());
    int row = 0;
    for (int i = 0; i < n; ++i) {
      if (is_held[i]) continue;
      train.x.row(row) = data.x.row(i);
      train.y(row) = data.y(i);
      ++row;
    }
    try {
      KernelSpec kf;
      kf.lengthscales = theta_f;
      kf.variance = base.variance_f;
      const KsosProblem prob = make_problem(train, base.hyper, base.s, base.kernel_m, kf);
      auto [state, model] = solve_dual(prob, solver_cfg);
      if (!model.diagnostics.converged) not_converged[k] = 1;
      for (int idx : held) {
        const Vector xi = data.x.row(idx);
        const double resid = data.y(idx) - model.predict_mean(xi);
        sample.residuals_sq(idx) = resid * resid;
        sample.scales(idx) = model.predict_scale(xi);
        sample.fold_id[idx] = k;
      }
    } catch (const Error& err) {
      failures[k] = std::string("fold ") + std::to_string(k) + ": " + err.what();
    }
  };

  if (jobs <= 1) {
    for (int k = 0; k < folds; ++k) run_fold(k);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(jobs, folds);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int k = next.fetch_add(1); k < folds; k = next.fetch_add(1)) run_fold(k);
      });
    }
    for (auto& th : pool) th.join();
  }

  for (int k = 0; k < folds; ++k) {
    if (!failures[k].empty())
      throw Error(ErrorCode::singular_system, "cv pairs: " + failures[k]);
    if (not_converged[k]) sample.all_converged = false;
  }
  return sample;
}

TuneConfig default_tune_config(const Dataset& data, int budget, std::uint64_t seed) {
  TuneConfig cfg;
  cfg.folds = (data.n() >= 100) ? 10 : 5;
  cfg.budget = budget;
  cfg.seed = seed;
  const int d = data.d();
  cfg.log10_lo.resize(d);
  cfg.log10_hi.resize(d);
  for (int l = 0; l < d; ++l) {
    double range = data.x.col(l).maxCoeff() - data.x.col(l).minCoeff();
    if (!(range > 0.0)) range = 1.0;
    cfg.log10_lo(l) = std::log10(0.05 * range);
    cfg.log10_hi(l) = std::log10(2.5 * range);
  }
  return cfg;
}

TuneResult tune_lengthscale(const Dataset& data, const ProblemTemplate& base, const TuneConfig& cfg,
                            const SolverConfig& solver_cfg) {
  const int d = data.d();
  require(cfg.budget >= 5, ErrorCode::invalid_argument, "tune: budget must be >= 5");
  require(cfg.log10_lo.size() == d && cfg.log10_hi.size() == d, ErrorCode::dimension_mismatch,
          "tune: bounds dimension");
  for (int l = 0; l < d; ++l)
    require(std::isfinite(cfg.log10_lo(l)) && std::isfinite(cfg.log10_hi(l)) &&
                cfg.log10_lo(l) <= cfg.log10_hi(l),
            ErrorCode::invalid_argument, "tune: bounds must be finite with lo <= hi");

  TuneResult result;
  int failures = 0;

  auto evaluate = [&](const Vector& log_theta) -> double {
    Vector theta(d);
    for (int l = 0; l < d; ++l) theta(l) = std::pow(10.0, log_theta(l));
    try {
      const HsicSample sample = cv_residual_scale_pairs(data, cfg.folds, theta, base, solver_cfg,
                                                        cfg.seed, cfg.jobs);
      TunePoint point;
      point.theta = theta;
      point.hsic = hsic_v_statistic(sample.residuals_sq, sample.scales);
      const auto ci = hsic_bootstrap_ci(sample.residuals_sq, sample.scales, cfg.n_boot,
                                        cfg.ci_level, derive_seed(cfg.seed, Stream::bootstrap,
                                                                  result.curve.size()));
      point.ci_lo = ci.first;
      point.ci_hi = ci.second;
      result.curve.push_back(point);
      ++result.evaluations;
      return point.hsic;
    } catch (const Error&) {
      ++failures;
      ++result.evaluations;
      return -std::numeric_limits<double>::infinity();
    }
  };

  // coarse exploration
  std::vector<Vector> grid;
  if (d <= 2) {
    const int per_dim = 7;
    std::vector<int> index(d, 0);
    for (;;) {
      Vector q(d);
      for (int l = 0; l < d; ++l) {
        const double t = (per_dim == 1) ? 0.5 : static_cast<double>(index[l]) / (per_dim - 1);
        q(l) = cfg.log10_lo(l) + t * (cfg.log10_hi(l) - cfg.log10_lo(l));
      }
      grid.push_back(q);
      int l = 0;
      while (l < d && ++index[l] == per_dim) index[l++] = 0;
      if (l == d) break;
    }
  } else {
    const int count = std::max(5, cfg.budget / 2);
    Rng rng = Rng::stream(cfg.seed, Stream::instances);
    std::vector<std::vector<int>> strata(d, std::vector<int>(count));
    for (int l = 0; l < d; ++l) {
      for (int i = 0; i < count; ++i) strata[l][i] = i;
      for (int i = count - 1; i > 0; --i)
        std::swap(strata[l][i], strata[l][rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    for (int i = 0; i < count; ++i) {
      Vector q(d);
      for (int l = 0; l < d; ++l) {
        const double u = (strata[l][i] + rng.uniform01()) / count;
        q(l) = cfg.log10_lo(l) + u * (cfg.log10_hi(l) - cfg.log10_lo(l));
      }
      grid.push_back(q);
    }
  }

  Vector best_q;
  double best_val = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (const Vector& q : grid) {
    if (result.evaluations >= cfg.budget) break;
    const double val = evaluate(q);
    if (!have_best || val > best_val) {
      best_q = q;
      best_val = val;
      have_best = true;
    }
  }
  require(have_best && result.evaluations > failures, ErrorCode::tune_failed,
          "tune: every candidate evaluation failed");

  // local refinement around the best grid point
  double step = 0.25 * (cfg.log10_hi - cfg.log10_lo).maxCoeff();
  while (step >= cfg.step_tol && result.evaluations < cfg.budget) {
    bool improved = false;
    for (int l = 0; l < d && result.evaluations < cfg.budget; ++l) {
      for (const double dir : {+1.0, -1.0}) {
        if (result.evaluations >= cfg.budget) break;
        Vector cand = best_q;
        cand(l) = std::clamp(cand(l) + dir * step, cfg.log10_lo(l), cfg.log10_hi(l));
        if (cand(l) == best_q(l)) continue;
        const double val = evaluate(cand);
        if (val > best_val) {
          best_q = cand;
          best_val = val;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }

  result.best_lengthscale.resize(d);
  for (int l = 0; l < d; ++l) result.best_lengthscale(l) = std::pow(10.0, best_q(l));
  return result;
}

}  // namespace ksos
