#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lesionprior/tensor.hpp"

namespace testing {

inline lesionprior::Tensor5 random_tensor(std::array<std::size_t, 5> s, std::mt19937_64& rng,
                                          double lo = -1.0, double hi = 1.0) {
  lesionprior::Tensor5 t(s[0], s[1], s[2], s[3], s[4]);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
  std::vector<double> v(n);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& x : v) x = u(rng);
  return v;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Central difference of f with respect to x[i].
inline double central_difference(std::vector<double>& x, std::size_t i,
                                 const std::function<double()>& f, double eps = 1e-5) {
  const double keep = x[i];
  x[i] = keep + eps;
  const double up = f();
  x[i] = keep - eps;
  const double down = f();
  x[i] = keep;
  return (up - down) / (2.0 * eps);
}

/// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
/// turning rounding noise into large relative errors.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Largest relative error between analytic gradient entries and central
/// differences of f, over every entry of x.
inline double max_gradient_error(std::vector<double>& x, const std::vector<double>& analytic,
                                 const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], central_difference(x, i, f)));
  }
  return worst;
}

}  // namespace testing
