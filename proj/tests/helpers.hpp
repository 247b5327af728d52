#pragma once

// Shared generators and small independent oracles for the test suite.
// Oracles here deliberately avoid the library code paths they check.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "stmix/mixture.hpp"
#include "stmix/rng.hpp"

namespace testutil {

inline Eigen::VectorXd random_simplex(stmix::Rng& rng, int k) {
  // normalized exponentials: uniform on the simplex
  Eigen::VectorXd p(k);
  for (int j = 0; j < k; ++j) p[j] = stmix::draw_gamma(rng, 1.0, 1.0);
  return p / p.sum();
}

inline Eigen::Matrix2d random_spd2(stmix::Rng& rng, double base = 0.5) {
  Eigen::Matrix2d a;
  a << stmix::draw_normal(rng), stmix::draw_normal(rng), stmix::draw_normal(rng),
      stmix::draw_normal(rng);
  return a * a.transpose() + base * Eigen::Matrix2d::Identity();
}

inline stmix::Component random_component(stmix::Rng& rng, double mu_scale = 3.0) {
  stmix::Component c;
  c.mu << mu_scale * stmix::draw_normal(rng), mu_scale * stmix::draw_normal(rng);
  c.sigma = random_spd2(rng);
  return c;
}

// Bivariate normal density through the explicit 2x2 quadratic form,
// independent of the library's precomputed-precision path.
inline double gaussian2_oracle(double sx, double sy, double mx, double my,
                               const Eigen::Matrix2d& sigma) {
  const double det = sigma(0, 0) * sigma(1, 1) - sigma(0, 1) * sigma(1, 0);
  const double dx = sx - mx;
  const double dy = sy - my;
  const double q = (sigma(1, 1) * dx * dx - 2.0 * sigma(0, 1) * dx * dy +
                    sigma(0, 0) * dy * dy) /
                   det;
  return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(det));
}

// Long-double softmax of (pi_1..pi_{K-1}, 0) for overflow checks.
inline std::vector<long double> softmax_oracle(const Eigen::VectorXd& pi) {
  long double m = 0.0L;
  for (Eigen::Index r = 0; r < pi.size(); ++r) m = std::max(m, static_cast<long double>(pi[r]));
  std::vector<long double> e(pi.size() + 1);
  long double z = 0.0L;
  for (Eigen::Index r = 0; r < pi.size(); ++r) {
    e[r] = expl(static_cast<long double>(pi[r]) - m);
    z += e[r];
  }
  e[pi.size()] = expl(-m);
  z += e[pi.size()];
  for (auto& v : e) v /= z;
  return e;
}

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testutil
