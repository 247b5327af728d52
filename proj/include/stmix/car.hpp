#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "stmix/rng.hpp"

namespace stmix {

// Propriety bound for the circular 4-neighbor autoregression: the adjacency
// spectrum tops out at 4, so the precision I - rho*A stays positive definite
// exactly for rho < 1/4.
inline constexpr double kCarRhoUpper = 0.25;

// Circular neighborhood on blocks 1..n_blocks: one step back and forward,
// plus the same slot one day back and forward (lag daily_lag).
struct CarNeighborhood {
  int n_blocks{84};
  int daily_lag{12};
};

inline void validate(const CarNeighborhood& nb) {
  if (nb.daily_lag < 1) throw std::invalid_argument("car: daily_lag must be >= 1");
  if (nb.n_blocks <= 2 * nb.daily_lag)
    throw std::invalid_argument("car: need n_blocks > 2 * daily_lag");
}

// The four neighbors of block b (1-based), circularly wrapped. With
// daily_lag == 1 the multiset contains duplicates; sums run over all four.
inline std::array<int, 4> neighbors(int b, const CarNeighborhood& nb) {
  if (b < 1 || b > nb.n_blocks) throw std::invalid_argument("car: block index out of range");
  const int B = nb.n_blocks;
  auto wrap = [B](int v) { return (v - 1 + B) % B + 1; };
  return {wrap(b - 1), wrap(b + 1), wrap(b - nb.daily_lag), wrap(b + nb.daily_lag)};
}

// Transformed-weight state: pi is n_blocks x (K-1), one column per non-
// reference component, with per-column intercept c, persistence rho and
// conditional variance nu2.
struct CarState {
  Eigen::MatrixXd pi;
  Eigen::VectorXd c;
  Eigen::VectorXd rho;
  Eigen::VectorXd nu2;

  int n_columns() const { return static_cast<int>(pi.cols()); }
};

inline void validate(const CarState& st) {
  const Eigen::Index m = st.pi.cols();
  if (st.c.size() != m || st.rho.size() != m || st.nu2.size() != m)
    throw std::invalid_argument("car state: c, rho, nu2 must have one entry per pi column");
  if (!st.pi.allFinite() || !st.c.allFinite())
    throw std::invalid_argument("car state: non-finite parameter");
  for (Eigen::Index r = 0; r < m; ++r) {
    if (!(st.rho[r] >= 0.0) || !(st.rho[r] < kCarRhoUpper))
      throw std::invalid_argument("car state: rho must lie in [0, 0.25)");
    if (!(st.nu2[r] > 0.0)) throw std::invalid_argument("car state: nu2 must be positive");
  }
}

// Full conditional of pi_{b,r} given the rest of its column:
// mean c_r + rho_r * sum_{b' ~ b} (pi_{b',r} - c_r), variance nu2_r.
inline std::pair<double, double> car_conditional(int b, int r, const CarState& st,
                                                 const CarNeighborhood& nb) {
  if (r < 1 || r > st.n_columns()) throw std::invalid_argument("car: column index out of range");
  const auto nbs = neighbors(b, nb);
  const double c = st.c[r - 1];
  double acc = 0.0;
  for (int bp : nbs) acc += st.pi(bp - 1, r - 1) - c;
  return {c + st.rho[r - 1] * acc, st.nu2[r - 1]};
}

// Joint precision Q of one pi column: Q_bb = 1/nu2, Q_bb' = -rho/nu2 for
// neighbors (accumulated over the multiset), zero otherwise.
inline Eigen::MatrixXd car_precision(double rho, double nu2, const CarNeighborhood& nb) {
  validate(nb);
  if (!(rho >= 0.0) || !(rho < kCarRhoUpper))
    throw std::domain_error("car: precision is proper only for rho in [0, 0.25)");
  if (!(nu2 > 0.0)) throw std::invalid_argument("car: nu2 must be positive");
  const int B = nb.n_blocks;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(B, B);
  for (int b = 1; b <= B; ++b) {
    q(b - 1, b - 1) = 1.0 / nu2;
    for (int bp : neighbors(b, nb)) q(b - 1, bp - 1) -= rho / nu2;
  }
  return q;
}

inline Eigen::MatrixXd car_joint_precision(int r, const CarState& st, const CarNeighborhood& nb) {
  if (r < 1 || r > st.n_columns()) throw std::invalid_argument("car: column index out of range");
  return car_precision(st.rho[r - 1], st.nu2[r - 1], nb);
}

// Eigenvalues of the circulant adjacency: a_k = 2cos(2 pi k/B) + 2cos(2 pi k d/B).
inline Eigen::VectorXd car_adjacency_eigenvalues(const CarNeighborhood& nb) {
  validate(nb);
  const int B = nb.n_blocks;
  Eigen::VectorXd a(B);
  for (int k = 0; k < B; ++k) {
    const double w = 2.0 * std::numbers::pi * k / B;
    a[k] = 2.0 * std::cos(w) + 2.0 * std::cos(w * nb.daily_lag);
  }
  return a;
}

// log det Q = -B log nu2 + sum_k log(1 - rho a_k), via the circulant spectrum.
inline double car_logdet_precision(double rho, double nu2, const CarNeighborhood& nb) {
  if (!(rho >= 0.0) || !(rho < kCarRhoUpper))
    throw std::domain_error("car: precision is proper only for rho in [0, 0.25)");
  if (!(nu2 > 0.0)) throw std::invalid_argument("car: nu2 must be positive");
  const Eigen::VectorXd a = car_adjacency_eigenvalues(nb);
  double acc = -nb.n_blocks * std::log(nu2);
  for (Eigen::Index k = 0; k < a.size(); ++k) acc += std::log1p(-rho * a[k]);
  return acc;
}

// (pi - c 1)' Q (pi - c 1) in O(B) using the neighbor structure.
inline double car_quadform(const Eigen::VectorXd& pi_col, double c, double rho, double nu2,
                           const CarNeighborhood& nb) {
  const int B = nb.n_blocks;
  if (pi_col.size() != B) throw std::invalid_argument("car: pi column has wrong length");
  double self = 0.0, cross = 0.0;
  for (int b = 1; b <= B; ++b) {
    const double x = pi_col[b - 1] - c;
    self += x * x;
    double nsum = 0.0;
    for (int bp : neighbors(b, nb)) nsum += pi_col[bp - 1] - c;
    cross += x * nsum;
  }
  return (self - rho * cross) / nu2;
}

// Full log density of one pi column under the proper joint normal
// N(c 1, Q^-1).
inline double car_joint_logpdf(const Eigen::VectorXd& pi_col, double c, double rho, double nu2,
                               const CarNeighborhood& nb) {
  const int B = nb.n_blocks;
  return -0.5 * B * std::log(2.0 * std::numbers::pi) +
         0.5 * car_logdet_precision(rho, nu2, nb) -
         0.5 * car_quadform(pi_col, c, rho, nu2, nb);
}

// Exact draw of one pi column from N(c 1, Q^-1) via the Cholesky factor of Q.
inline Eigen::VectorXd sample_car_column(double c, double rho, double nu2,
                                         const CarNeighborhood& nb, Rng& rng) {
  const Eigen::MatrixXd q = car_precision(rho, nu2, nb);
  Eigen::LLT<Eigen::MatrixXd> llt(q);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("car: precision Cholesky failed despite rho < 0.25");
  Eigen::VectorXd z(nb.n_blocks);
  for (int b = 0; b < nb.n_blocks; ++b) z[b] = draw_normal(rng);
  return Eigen::VectorXd::Constant(nb.n_blocks, c) +
         llt.matrixU().solve(z);  // L^-T z has covariance Q^-1
}

}  // namespace stmix
