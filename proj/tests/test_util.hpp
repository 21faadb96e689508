#pragma once

#include <random>

#include "mts/models.hpp"

namespace mts::test {

// Central-difference Jacobian of f: R^n -> R^m.
template <class F>
Mat fd_jacobian(const F& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    const double hj = h * (1.0 + std::abs(x(j)));
    Vec xp = x, xm = x;
    xp(j) += hj;
    xm(j) -= hj;
    J.col(j) = (f(xp) - f(xm)) / (2.0 * hj);
  }
  return J;
}

inline double rel_err(const Mat& got, const Mat& want) {
  return (got - want).norm() / (1.0 + want.norm());
}

inline Vec random_vec(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace mts::test
