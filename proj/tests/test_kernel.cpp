#include <doctest.h>

#include "core/kernel.hpp"
#include "core/linalg.hpp"
#include "core/rng.hpp"

using namespace ksos;

namespace {

Matrix random_points(int n, int d, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, Stream::instances);
  Matrix x(n, d);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < d; ++l) x(i, l) = rng.uniform(-2.0, 2.0);
  return x;
}

}  // namespace

TEST_CASE("gram_matrix closed-form values") {
  Matrix zero(1, 1);
  zero << 0.0;
  KernelSpec unit = isotropic_kernel(1.0, 1);
  CHECK(gram_matrix(zero, zero, unit)(0, 0) == 1.0);

  Matrix one(1, 1);
  one << 1.0;
  CHECK(gram_matrix(zero, one, unit)(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  Matrix a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 1.0, 2.0;
  KernelSpec ard;
  ard.lengthscales.resize(2);
  ard.lengthscales << 1.0, 2.0;
  CHECK(gram_matrix(a, b, ard)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("gram_matrix diagonal equals variance exactly") {
  const Matrix x = random_points(12, 3, 7);
  KernelSpec spec = isotropic_kernel(0.7, 3, 2.5);
  const Matrix k = gram_matrix(x, x, spec);
  for (int i = 0; i < 12; ++i) CHECK(k(i, i) == 2.5);
}

TEST_CASE("gram_matrix input validation") {
  const Matrix x = random_points(3, 2, 1);
  CHECK_THROWS_AS(gram_matrix(x, x, isotropic_kernel(1.0, 3)), Error);
  KernelSpec bad = isotropic_kernel(1.0, 2);
  bad.lengthscales(1) = 0.0;
  CHECK_THROWS_AS(gram_matrix(x, x, bad), Error);
  bad.lengthscales(1) = -1.0;
  CHECK_THROWS_AS(gram_matrix(x, x, bad), Error);
}

TEST_CASE("gram matrices are symmetric PSD") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const int n = 10 + static_cast<int>(seed) * 8;
    const int d = 1 + static_cast<int>(seed % 5);
    const Matrix x = random_points(n, d, 100 + seed);
    const Matrix k = gram_matrix(x, x, isotropic_kernel(0.8, d));
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigh es = eigh(k);
    const double top = es.eigenvalues.cwiseAbs().maxCoeff();
    CHECK(es.eigenvalues.minCoeff() >= -1e-10 * top);
  }
}

TEST_CASE("cholesky_upper hand values") {
  const Matrix id = Matrix::Identity(3, 3);
  const GramFactorization f1 = cholesky_upper(id);
  CHECK(f1.jitter == 0.0);
  CHECK((f1.chol_upper - id).cwiseAbs().maxCoeff() == 0.0);

  Matrix diag(2, 2);
  diag << 4.0, 0.0, 0.0, 9.0;
  const GramFactorization f2 = cholesky_upper(diag);
  CHECK(f2.chol_upper(0, 0) == doctest::Approx(2.0));
  CHECK(f2.chol_upper(1, 1) == doctest::Approx(3.0));
  CHECK(f2.chol_upper(0, 1) == 0.0);
}

TEST_CASE("cholesky_upper jitter escalation on duplicated rows") {
  Matrix x(4, 1);
  x << 0.3, 0.3, -0.5, 0.9;  // duplicate input makes the gram singular
  const Matrix k = gram_matrix(x, x, isotropic_kernel(0.5, 1));
  try {
    const GramFactorization fact = cholesky_upper(k);
    CHECK(fact.jitter > 0.0);
    CHECK((fact.chol_upper.diagonal().array() > 0.0).all());
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::not_positive_definite);
  }
}

TEST_CASE("cholesky round trip within 1e-10 of jittered input") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Matrix x = random_points(20, 2, 200 + seed);
    const Matrix k = gram_matrix(x, x, isotropic_kernel(0.6, 2));
    const GramFactorization fact = cholesky_upper(k);
    Matrix jittered = k;
    jittered.diagonal().array() += fact.jitter;
    const double err = (fact.chol_upper.transpose() * fact.chol_upper - jittered).norm();
    CHECK(err <= 1e-10 * k.norm());
  }
}

TEST_CASE("feature_map identity factor") {
  GramFactorization fact;
  fact.gram = Matrix::Identity(2, 2);
  fact.chol_upper = Matrix::Identity(2, 2);
  Vector kx(2);
  kx << 1.0, 2.0;
  CHECK((feature_map(fact, kx) - kx).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feature_map at training points gives columns of V") {
  const Matrix x = random_points(15, 1, 42);
  const KernelSpec spec = isotropic_kernel(0.5, 1);
  const Matrix k = gram_matrix(x, x, spec);
  const GramFactorization fact = cholesky_upper(k);
  REQUIRE(fact.jitter == 0.0);
  for (int i : {0, 7, 14}) {
    const Vector phi = feature_map(fact, k.col(i));
    CHECK((phi - fact.chol_upper.col(i)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("feature_map inner products equal k_x' K^{-1} k_y") {
  const Matrix x = random_points(12, 2, 43);
  const KernelSpec spec = isotropic_kernel(0.9, 2);
  const Matrix k = gram_matrix(x, x, spec);
  const GramFactorization fact = cholesky_upper(k);
  REQUIRE(fact.jitter == 0.0);
  const Matrix probe = random_points(3, 2, 44);
  const Matrix kp = gram_matrix(x, probe, spec);  // 12 x 3
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double via_phi = feature_map(fact, kp.col(a)).dot(feature_map(fact, kp.col(b)));
      const double direct = kp.col(a).dot(Eigen::LLT<Matrix>(k).solve(kp.col(b)));
      CHECK(via_phi == doctest::Approx(direct).epsilon(1e-8));
    }
  }
}

TEST_CASE("stacked feature maps reproduce the gram matrix") {
  const Matrix x = random_points(18, 1, 45);
  const Matrix k = gram_matrix(x, x, isotropic_kernel(0.7, 1));
  const GramFactorization fact = cholesky_upper(k);
  const Matrix phi = feature_map_columns(fact, k);  // columns Phi(X_i)
  const Matrix reproduced = phi.transpose() * phi;
  Matrix jittered = k;
  jittered.diagonal().array() += fact.jitter;
  CHECK((reproduced - jittered).norm() <= 1e-8 * k.norm());
}

TEST_CASE("positive_part hand values") {
  Matrix d(2, 2);
  d << 1.0, 0.0, 0.0, -2.0;
  Matrix expected(2, 2);
  expected << 1.0, 0.0, 0.0, 0.0;
  CHECK((positive_part(d) - expected).cwiseAbs().maxCoeff() <= 1e-14);

  Matrix flip(2, 2);
  flip << 0.0, 1.0, 1.0, 0.0;
  Matrix half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  CHECK((positive_part(flip) - half).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("positive_part is identity on PSD and idempotent") {
  const Matrix x = random_points(9, 2, 46);
  const Matrix k = gram_matrix(x, x, isotropic_kernel(1.1, 2));
  const double top = eigh(k).eigenvalues.cwiseAbs().maxCoeff();
  CHECK((positive_part(k) - k).norm() <= 1e-10 * top * 9);

  Rng rng = Rng::stream(5, Stream::instances);
  Matrix s(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = rng.normal();
  const Matrix once = positive_part(s);
  const Matrix twice = positive_part(once);
  const double scale = eigh(s).eigenvalues.cwiseAbs().maxCoeff();
  CHECK((once - twice).norm() <= 1e-10 * scale);
  CHECK(eigh(once).eigenvalues.minCoeff() >= -1e-10 * scale);
}

TEST_CASE("positive_part rejects non-finite input") {
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(positive_part(s), Error);
}

TEST_CASE("psd_norms values") {
  const PsdNorms n1 = psd_norms(Matrix::Identity(3, 3));
  CHECK(n1.nuclear == 3.0);
  CHECK(n1.frobenius_sq == 3.0);

  Matrix d(2, 2);
  d << 2.0, 0.0, 0.0, 0.0;
  const PsdNorms n2 = psd_norms(d);
  CHECK(n2.nuclear == 2.0);
  CHECK(n2.frobenius_sq == 4.0);

  Matrix m(2, 2);
  m << 2.0, 1.0, 1.0, 2.0;
  const PsdNorms n3 = psd_norms(m);
  CHECK(n3.nuclear == 4.0);
  CHECK(n3.frobenius_sq == 10.0);
}
