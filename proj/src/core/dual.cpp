#include "core/dual.hpp"

#include <algorithm>
#include <cmath>

#include "core/linalg.hpp"
#include "core/rng.hpp"

namespace ksos {

namespace {

// Effective theta used inside C when a = 0; dodges the exactly singular
// corner Gamma = 0, theta = 0 without perturbing the reported multipliers.
double guarded_theta(const KsosProblem& prob, double theta) {
  return (prob.a == 0.0) ? std::max(theta, 1e-12) : theta;
}

// Linear solves with C = Diag(da) K^m + theta I. When a = 0 the clipped
// multipliers leave exact zeros in da; those rows reduce to theta*x_i = rhs_i
// and the remaining system shrinks to the active set.
class CSolver {
 public:
  CSolver(const Matrix& k, const Vector& da, double theta) : k_(k), da_(da), theta_(theta) {
    const auto n = k.rows();
    for (Eigen::Index i = 0; i < n; ++i) (da(i) > 0.0 ? act_ : zer_).push_back(static_cast<int>(i));
    reduced_ = !zer_.empty() && static_cast<Eigen::Index>(act_.size()) <= n / 2;
    if (reduced_) {
      require(theta_ > 0.0, ErrorCode::singular_system,
              "dual: C(Gamma, theta) is singular (zero multipliers with theta = 0)");
      if (act_.empty()) return;  // C = theta I
      const auto r = static_cast<Eigen::Index>(act_.size());
      const auto z = static_cast<Eigen::Index>(zer_.size());
      da_act_.resize(r);
      Matrix k_aa(r, r);
      k_az_.resize(r, z);
      for (Eigen::Index i = 0; i < r; ++i) {
        da_act_(i) = da(act_[i]);
        for (Eigen::Index j = 0; j < r; ++j) k_aa(i, j) = k(act_[i], act_[j]);
        for (Eigen::Index j = 0; j < z; ++j) k_az_(i, j) = k(act_[i], zer_[j]);
      }
      Matrix m = da_act_.asDiagonal() * k_aa;
      m.diagonal().array() += theta_;
      lu_.compute(m);
    } else {
      Matrix c = da.asDiagonal() * k;
      c.diagonal().array() += theta_;
      lu_.compute(c);
    }
    const Vector piv = lu_.matrixLU().diagonal().cwiseAbs();
    require(piv.size() == 0 || (piv.maxCoeff() > 0.0 && piv.minCoeff() > 0.0),
            ErrorCode::singular_system, "dual: C(Gamma, theta) is numerically singular");
  }

  Vector solve(const Vector& rhs) const {
    if (!reduced_) return lu_.solve(rhs);
    if (act_.empty()) return rhs / theta_;
    const auto r = static_cast<Eigen::Index>(act_.size());
    const auto z = static_cast<Eigen::Index>(zer_.size());
    Vector rhs_z(z), rhs_a(r);
    for (Eigen::Index j = 0; j < z; ++j) rhs_z(j) = rhs(zer_[j]);
    for (Eigen::Index i = 0; i < r; ++i) rhs_a(i) = rhs(act_[i]);
    const Vector x_z = rhs_z / theta_;
    const Vector x_a = lu_.solve((rhs_a - da_act_.cwiseProduct(k_az_ * x_z)).eval());
    return scatter(x_a, x_z);
  }

  // solves C^T x = rhs
  Vector solve_transpose(const Vector& rhs) const {
    if (!reduced_) return lu_.transpose().solve(rhs);
    if (act_.empty()) return rhs / theta_;
    const auto r = static_cast<Eigen::Index>(act_.size());
    const auto z = static_cast<Eigen::Index>(zer_.size());
    Vector rhs_z(z), rhs_a(r);
    for (Eigen::Index j = 0; j < z; ++j) rhs_z(j) = rhs(zer_[j]);
    for (Eigen::Index i = 0; i < r; ++i) rhs_a(i) = rhs(act_[i]);
    const Vector x_a = lu_.transpose().solve(rhs_a);
    const Vector x_z = (rhs_z - k_az_.transpose() * da_act_.cwiseProduct(x_a)) / theta_;
    return scatter(x_a, x_z);
  }

 private:
  Vector scatter(const Vector& x_a, const Vector& x_z) const {
    Vector x(k_.rows());
    for (std::size_t i = 0; i < act_.size(); ++i) x(act_[i]) = x_a(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < zer_.size(); ++j) x(zer_[j]) = x_z(static_cast<Eigen::Index>(j));
    return x;
  }

  const Matrix& k_;
  Vector da_;
  double theta_;
  bool reduced_ = false;
  std::vector<int> act_, zer_;
  Vector da_act_;
  Matrix k_az_;
  Eigen::PartialPivLU<Matrix> lu_;
};

// Spectral data of [B - lambda1 I]_+ with B = V Diag(Gamma - b/n) V^T.
// Only eigenpairs above lambda1 matter; `w` holds those eigenvectors of B and
// `z` = V^T w. diag(V^T grad V) doubles as f at the training points.
struct OmegaTerm {
  double value = 0.0;
  Vector excess;      // eigenvalues of B minus lambda1, positive entries only
  Matrix w;           // n x k
  Matrix z;           // n x k
  Vector grad_gamma;  // diag(V' [grad Omega*] V), zeros when k = 0

  int rank() const { return static_cast<int>(excess.size()); }
};

OmegaTerm omega_star_term(const KsosProblem& prob, const Vector& gamma_mult, bool need_vectors) {
  const auto n = prob.n();
  const double shift = prob.b / static_cast<double>(n);
  OmegaTerm term;
  term.excess.resize(0);
  term.w.resize(n, 0);
  term.z.resize(n, 0);
  if (need_vectors) term.grad_gamma = Vector::Zero(n);

  std::vector<int> pos;
  pos.reserve(n);
  for (int i = 0; i < n; ++i)
    if (gamma_mult(i) - shift > 0.0) pos.push_back(i);
  if (pos.empty()) return term;

  // B <= V Diag((Gamma - b/n)_+) V^T, whose spectrum matches the reduced
  // matrix S = D^{1/2} G D^{1/2} with G the jittered K^f block on `pos`.
  // A Gershgorin bound on S below lambda1 lets the whole term vanish.
  const auto r = static_cast<Eigen::Index>(pos.size());
  const Matrix& kf = prob.fact_f.gram;
  const double jit = prob.fact_f.jitter;
  Vector sq(r);
  for (Eigen::Index i = 0; i < r; ++i) sq(i) = std::sqrt(gamma_mult(pos[i]) - shift);
  Matrix s_red(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < r; ++j) {
      double g = kf(pos[i], pos[j]);
      if (i == j) g += jit;
      s_red(i, j) = sq(i) * g * sq(j);
    }
  }
  if (abs_row_sum_bound(s_red) <= prob.lambda1) return term;

  const bool exact_reduced = (prob.b == 0.0) && (r <= n / 2);
  Eigh es;
  if (exact_reduced) {
    es = eigh(s_red);
  } else {
    const Vector d_b = gamma_mult.array() - shift;
    const Matrix big = prob.fact_f.chol_upper * d_b.asDiagonal() * prob.fact_f.chol_upper.transpose();
    es = eigh(symmetrized(big));
  }

  const auto total = es.eigenvalues.size();
  Eigen::Index first = total;
  while (first > 0 && es.eigenvalues(first - 1) > prob.lambda1) --first;
  const auto k = total - first;
  if (k == 0) return term;
  term.excess = es.eigenvalues.tail(k).array() - prob.lambda1;
  term.value = term.excess.squaredNorm() / (4.0 * prob.lambda2);

  if (!need_vectors) return term;

  if (exact_reduced) {
    // w_j = V(:, pos) (sq .* q_j) / sqrt(mu_j); z_j = K_jit(:, pos) (...)
    Matrix q = es.eigenvectors.rightCols(k);
    for (Eigen::Index j = 0; j < k; ++j)
      q.col(j) = sq.cwiseProduct(q.col(j)) / std::sqrt(es.eigenvalues(first + j));
    Matrix v_cols(n, r), k_cols(n, r);
    for (Eigen::Index i = 0; i < r; ++i) {
      v_cols.col(i) = prob.fact_f.chol_upper.col(pos[i]);
      k_cols.col(i) = kf.col(pos[i]);
      k_cols(pos[i], i) += jit;
    }
    term.w = v_cols * q;
    term.z = k_cols * q;
  } else {
    term.w = es.eigenvectors.rightCols(k);
    term.z = prob.fact_f.chol_upper.transpose() * term.w;
  }
  term.grad_gamma =
      (term.z.array().square().matrix() * term.excess) / (2.0 * prob.lambda2);
  return term;
}

struct DualParts {
  Vector da;
  Vector gamma;
  Vector r;
  double mean_norm = 0.0;  // gamma' K^m gamma
  OmegaTerm omega;
  double value = 0.0;
  Vector grad;  // empty unless requested
};

DualParts eval_dual(const KsosProblem& prob, const Vector& gamma_mult, double theta,
                    bool need_grad, bool need_vectors) {
  const auto n = prob.n();
  require(gamma_mult.size() == n, ErrorCode::dimension_mismatch, "dual: multiplier size mismatch");
  require(gamma_mult.minCoeff() >= 0.0 && theta >= 0.0, ErrorCode::invalid_argument,
          "dual: multipliers must lie in Delta = R_+^{n+1}");
  const Matrix& k = prob.fact_m.gram;
  const Vector& y = prob.data.y;

  DualParts parts;
  parts.da = gamma_mult.array() + prob.a / static_cast<double>(n);
  const CSolver csolve(k, parts.da, guarded_theta(prob, theta));
  parts.gamma = csolve.solve(parts.da.cwiseProduct(y));
  parts.r = y - k * parts.gamma;
  parts.mean_norm = parts.gamma.dot(y - parts.r);
  parts.omega = omega_star_term(prob, gamma_mult, need_grad || need_vectors);
  parts.value = parts.r.dot(parts.da.cwiseProduct(parts.r)) +
                theta * (parts.mean_norm - prob.s) - parts.omega.value;

  if (need_grad) {
    const Vector s_vec = csolve.solve_transpose((k * parts.da.cwiseProduct(parts.r)).eval());
    const Vector p = csolve.solve_transpose((y - parts.r).eval());
    const Vector t = k * csolve.solve(parts.gamma);
    parts.grad.resize(n + 1);
    parts.grad.head(n) = parts.r.array().square().matrix() -
                         2.0 * s_vec.cwiseProduct(parts.r) +
                         2.0 * theta * p.cwiseProduct(parts.r) - parts.omega.grad_gamma;
    parts.grad(n) = 2.0 * parts.r.dot(parts.da.cwiseProduct(t)) +
                    (parts.mean_norm - prob.s) - 2.0 * theta * parts.gamma.dot(t);
  }
  return parts;
}

// Primal value and violations of the candidate recovered from the current
// multipliers, evaluated without materializing A (the omega eigenpairs are
// orthonormal, so trace and Frobenius norms come from `excess` alone).
PrimalCheck candidate_check(const KsosProblem& prob, const DualParts& parts) {
  const auto n = prob.n();
  const double l2 = prob.lambda2;
  const Vector& f_train = parts.omega.grad_gamma;  // diag(V' A V)
  PrimalCheck check;
  const double trace_a = parts.omega.excess.sum() / (2.0 * l2);
  const double frob_sq_a = parts.omega.excess.squaredNorm() / (4.0 * l2 * l2);
  check.objective = (prob.a / n) * parts.r.squaredNorm() + (prob.b / n) * f_train.sum() +
                    prob.lambda1 * trace_a + l2 * frob_sq_a;
  for (int i = 0; i < n; ++i) {
    const double rr = parts.r(i) * parts.r(i);
    const double gap = std::max(0.0, rr - f_train(i)) / (1.0 + rr);
    check.max_rel_violation = std::max(check.max_rel_violation, gap);
  }
  check.norm_violation = std::max(0.0, parts.mean_norm - prob.s) / (1.0 + prob.s);
  return check;
}

}  // namespace

KsosProblem make_problem(Dataset data, const HyperParams& hyper, double s, KernelSpec kernel_m,
                         KernelSpec kernel_f) {
  require(data.n() >= 1, ErrorCode::empty_input, "make_problem: empty dataset");
  require(hyper.lambda2 > 0.0, ErrorCode::invalid_argument, "make_problem: lambda2 must be > 0");
  require(hyper.a >= 0.0 && hyper.b >= 0.0 && hyper.lambda1 >= 0.0 && s >= 0.0,
          ErrorCode::invalid_argument, "make_problem: a, b, lambda1, s must be >= 0");
  kernel_m.validate();
  kernel_f.validate();
  require(kernel_m.dim() == data.d() && kernel_f.dim() == data.d(), ErrorCode::dimension_mismatch,
          "make_problem: kernel dimension must match the data");
  KsosProblem prob;
  prob.data = std::move(data);
  prob.a = hyper.a;
  prob.b = hyper.b;
  prob.lambda1 = hyper.lambda1;
  prob.lambda2 = hyper.lambda2;
  prob.s = s;
  prob.kernel_m = std::move(kernel_m);
  prob.kernel_f = std::move(kernel_f);
  prob.fact_m = cholesky_upper(gram_matrix(prob.data.x, prob.data.x, prob.kernel_m));
  prob.fact_f = cholesky_upper(gram_matrix(prob.data.x, prob.data.x, prob.kernel_f));
  return prob;
}

DualState initial_state(const KsosProblem& prob) {
  DualState state;
  state.gamma_mult = Vector::Constant(prob.n(), 1.0 / prob.n());
  state.theta_mult = 1.0;
  state.momentum = Vector::Zero(prob.n() + 1);
  return state;
}

PrimalCheck primal_objective(const Vector& gamma, const Matrix& a, const KsosProblem& prob) {
  const auto n = prob.n();
  require(gamma.size() == n, ErrorCode::dimension_mismatch, "primal_objective: gamma size");
  require(a.rows() == n && a.cols() == n, ErrorCode::dimension_mismatch, "primal_objective: A size");
  const Matrix& k = prob.fact_m.gram;
  const Vector resid = prob.data.y - k * gamma;
  const Matrix& v = prob.fact_f.chol_upper;
  const Vector f_train = (v.transpose() * a * v).diagonal();
  PrimalCheck check;
  check.objective = (prob.a / n) * resid.squaredNorm() + (prob.b / n) * f_train.sum() +
                    prob.lambda1 * a.trace() + prob.lambda2 * a.squaredNorm();
  for (int i = 0; i < n; ++i) {
    const double rr = resid(i) * resid(i);
    check.max_rel_violation =
        std::max(check.max_rel_violation, std::max(0.0, rr - f_train(i)) / (1.0 + rr));
  }
  const double mean_norm = gamma.dot(k * gamma);
  check.norm_violation = std::max(0.0, mean_norm - prob.s) / (1.0 + prob.s);
  return check;
}

double dual_objective(const DualState& state, const KsosProblem& prob) {
  return eval_dual(prob, state.gamma_mult, state.theta_mult, false, false).value;
}

Vector dual_gradient(const DualState& state, const KsosProblem& prob) {
  return eval_dual(prob, state.gamma_mult, state.theta_mult, true, false).grad;
}

namespace {

KsosModel model_from_parts(const KsosProblem& prob, const DualParts& parts) {
  KsosModel model;
  model.gamma_hat = parts.gamma;
  const auto n = prob.n();
  const auto k = parts.omega.rank();
  const Vector coef = parts.omega.excess / (2.0 * prob.lambda2);
  model.a_hat_factor = parts.omega.w * coef.cwiseSqrt().asDiagonal();
  model.a_hat = (k > 0) ? Matrix(model.a_hat_factor * model.a_hat_factor.transpose())
                        : Matrix(Matrix::Zero(n, n));
  model.train_x = prob.data.x;
  model.train_y = prob.data.y;
  model.kernel_m = prob.kernel_m;
  model.kernel_f = prob.kernel_f;
  model.fact_f = prob.fact_f;
  model.hyper = HyperParams{prob.a, prob.b, prob.lambda1, prob.lambda2};
  model.s = prob.s;
  model.mean_train_scale = parts.omega.grad_gamma.size() ? parts.omega.grad_gamma.mean() : 0.0;
  return model;
}

}  // namespace

KsosModel recover_primal(const DualState& state, const KsosProblem& prob) {
  const DualParts parts = eval_dual(prob, state.gamma_mult, state.theta_mult, false, true);
  return model_from_parts(prob, parts);
}

std::pair<DualState, KsosModel> solve_dual(const KsosProblem& prob, const SolverConfig& cfg) {
  require(cfg.learning_rate > 0.0, ErrorCode::invalid_argument, "solve_dual: learning_rate must be > 0");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, ErrorCode::invalid_argument,
          "solve_dual: momentum must lie in [0, 1)");
  require(cfg.max_iter >= 1 && cfg.check_every >= 1, ErrorCode::invalid_argument,
          "solve_dual: iteration counts must be positive");
  const auto n = prob.n();

  DualState state = initial_state(prob);
  Vector x(n + 1), look(n + 1);
  x.head(n) = state.gamma_mult;
  x(n) = state.theta_mult;
  look = x;

  SolveDiagnostics diag;
  double last_gap = std::numeric_limits<double>::infinity();
  double last_viol = std::numeric_limits<double>::infinity();
  Vector x_best = x;
  double best_objective = -std::numeric_limits<double>::infinity();
  double best_gap = last_gap, best_viol = last_viol;

  // Scale-free cap on a single update; gradient spikes near theta = 0 (where
  // gamma approaches an ill-conditioned interpolant) would otherwise eject
  // the trajectory beyond recovery. Ordinary steps sit far below the cap.
  const auto clipped_step = [](const Vector& point, const Vector& raw) {
    const Vector cap = (point.cwiseAbs().array() + 1.0).matrix();
    return raw.cwiseMin(cap).cwiseMax(-cap);
  };

  int iter = 0;
  while (iter < cfg.max_iter) {
    ++iter;
    const DualParts at_look = eval_dual(prob, look.head(n), look(n), true, false);
    Vector x_new =
        (look + clipped_step(look, cfg.learning_rate * at_look.grad)).cwiseMax(0.0);
    if (!x_new.allFinite()) {  // diverged step; keep the last valid iterate
      diag.converged = false;
      break;
    }
    const Vector velocity = x_new - x;
    x = x_new;
    look = (x + cfg.momentum * velocity).cwiseMax(0.0);
    state.momentum = velocity;

    if (iter % cfg.check_every == 0 || iter == cfg.max_iter) {
      const DualParts at_x = eval_dual(prob, x.head(n), x(n), false, true);
      const PrimalCheck cand = candidate_check(prob, at_x);
      const double gap = duality_gap(cand.objective, at_x.value);
      const double viol = std::max(cand.max_rel_violation, cand.norm_violation);
      state.objective = at_x.value;
      if (cfg.record_trace) diag.objective_trace.push_back(at_x.value);
      last_gap = gap;
      last_viol = viol;
      if (at_x.value > best_objective) {
        best_objective = at_x.value;
        x_best = x;
        best_gap = gap;
        best_viol = viol;
      }
      if (viol <= cfg.tol_constraints && gap <= cfg.tol_gap) {
        diag.converged = true;
        break;
      }
    }
  }

  // a trajectory that ended below its best checkpoint reports that
  // checkpoint instead; ascent steps may oscillate or blow up past it
  if (!diag.converged && std::isfinite(best_objective) && best_objective > state.objective) {
    x = x_best;
    state.objective = best_objective;
    last_gap = best_gap;
    last_viol = best_viol;
  }

  state.gamma_mult = x.head(n);
  state.theta_mult = x(n);
  state.iteration = iter;
  diag.iterations = iter;
  diag.final_gap = last_gap;
  diag.max_violation = last_viol;
  diag.dual_objective = state.objective;

  KsosModel model = recover_primal(state, prob);
  model.diagnostics = diag;
  return {std::move(state), std::move(model)};
}

std::pair<Vector, Matrix> strictly_feasible_point(const KsosProblem& prob) {
  const auto n = prob.n();
  const Matrix& v = prob.fact_f.chol_upper;
  // alpha solves (K^f + jitter I) alpha = Y through the stored factor
  const Vector alpha = v.triangularView<Eigen::Upper>().solve(
      v.transpose().triangularView<Eigen::Lower>().solve(prob.data.y));
  Vector b0 = alpha.array().square();
  const double eps = 1e-12 * (1.0 + b0.maxCoeff());
  for (int i = 0; i < n; ++i)
    if (alpha(i) == 0.0) b0(i) = eps;

  // K rows with the jitter folded in, so Y = K_jit alpha holds exactly
  Matrix k_jit = prob.fact_f.gram;
  k_jit.diagonal().array() += prob.fact_f.jitter;

  // f(X_i) = n * sum_j B0_jj K_jit(i,j)^2 must beat Y_i^2 strictly; bump the
  // diagonal if Cauchy-Schwarz happens to be tight
  const Matrix k_sq = k_jit.array().square();
  double bump = eps;
  for (int attempt = 0; attempt < 60; ++attempt) {
    const Vector f_vals = static_cast<double>(n) * (k_sq * b0);
    bool strict = true;
    for (int i = 0; i < n && strict; ++i)
      strict = f_vals(i) > prob.data.y(i) * prob.data.y(i);
    if (strict) break;
    b0.array() += bump;
    bump *= 10.0;
  }

  const Matrix a0 = static_cast<double>(n) * (v * b0.asDiagonal() * v.transpose());
  return {Vector::Zero(n), a0};
}

double gradient_check(const KsosProblem& prob, int num_points, std::uint64_t seed) {
  require(num_points >= 1, ErrorCode::invalid_argument, "gradient_check: num_points must be >= 1");
  const auto n = prob.n();
  double worst = 0.0;
  for (int pt = 0; pt < num_points; ++pt) {
    Rng rng = Rng::stream(seed, Stream::instances, static_cast<std::uint64_t>(pt));
    DualState state = initial_state(prob);
    for (int i = 0; i < n; ++i) state.gamma_mult(i) = rng.uniform(0.05, 1.0);
    state.theta_mult = rng.uniform(0.1, 2.0);

    const Vector analytic = dual_gradient(state, prob);
    for (int c = 0; c <= n; ++c) {
      const double base = (c < n) ? state.gamma_mult(c) : state.theta_mult;
      const double h = 1e-6 * (1.0 + std::abs(base));
      DualState lo = state, hi = state;
      (c < n ? lo.gamma_mult(c) : lo.theta_mult) = base - h;
      (c < n ? hi.gamma_mult(c) : hi.theta_mult) = base + h;
      const double fd = (dual_objective(hi, prob) - dual_objective(lo, prob)) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(fd), std::abs(analytic(c))});
      worst = std::max(worst, std::abs(fd - analytic(c)) / denom);
    }
  }
  return worst;
}

double KsosModel::predict_mean(const Vector& x) const {
  const Matrix kx = gram_matrix(train_x, x.transpose(), kernel_m);
  return kx.col(0).dot(gamma_hat);
}

double KsosModel::predict_scale(const Vector& x) const {
  if (a_hat_factor.cols() == 0) return 0.0;
  const Matrix kx = gram_matrix(train_x, x.transpose(), kernel_f);
  const Vector phi = feature_map(fact_f, kx.col(0));
  return (a_hat_factor.transpose() * phi).squaredNorm();
}

double KsosModel::score_floor() const {
  return std::max(1e-12 * mean_train_scale, std::numeric_limits<double>::min());
}

}  // namespace ksos
