#pragma once

#include <cstdint>

#include "core/rng.hpp"
#include "core/types.hpp"

namespace ksos {

struct DatasetMeta {
  int case_id = 0;
  std::uint64_t seed = 0;
  int n = 0;
  int d = 1;
  Vector beta;  // case-4 projection direction, empty otherwise
};

struct Dataset {
  Matrix x;  // n x d
  Vector y;  // n
  DatasetMeta meta;

  int n() const { return static_cast<int>(x.rows()); }
  int d() const { return static_cast<int>(x.cols()); }
};

// Synthetic regression cases, Y = m(X) + sigma(X) * eps:
//   1: piecewise sinusoid, sigma = sqrt(0.1 + 2x^2),       X ~ U[-1,1],  eps ~ N(0,1), d = 1
//   2: m = 0.5 sum x_l,    sigma = sum |sin x_l|,           X ~ N(0,I),   eps ~ N(0,1)
//   3: m = 0.5 sum x_l,    sigma = sum 4/3 phi(2 x_l / 3),  X ~ N(0,I),   eps ~ N(0,1)
//   4: m = 2 sin(pi b'x) + pi b'x, sigma = sqrt(1+(b'x)^2), X ~ U[0,1]^d, eps ~ N(0,1), d in {1,5}
//   5: m = sin 2x,         sigma = 0.5 + 2x,                X ~ U[-1,1],  eps ~ Exp(1), d = 1
Dataset generate_case(int case_id, int n, int d, std::uint64_t seed);

void validate_case(int case_id, int d);
Vector case_beta(int case_id, int d);
double case_mean(int case_id, const Vector& x);
double case_sigma(int case_id, const Vector& x);

// one row of X from the case's input distribution
Vector sample_case_input(int case_id, int d, Rng& rng);
// one draw of Y | X = x
double sample_case_output(int case_id, const Vector& x, Rng& rng);

// Exact conditional central (1-alpha) band. Gaussian noise gives
// m(x) -+ z_{1-alpha/2} sigma(x); the exponential case uses the equal-tailed
// quantiles of its conditional law.
std::pair<double, double> oracle_band(int case_id, const Vector& x, double alpha_level);

double normal_quantile(double p);

}  // namespace ksos
