#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace stmix {

// Single engine type everywhere so a seed fixes the whole pipeline.
using Rng = std::mt19937_64;

// Distribution objects are constructed fresh per call: std:: distributions may
// cache variates across calls, which would make draw order depend on call
// history rather than on the engine state alone.

inline double draw_uniform(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_gamma(Rng& rng, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("draw_gamma: shape and scale must be positive");
  return std::gamma_distribution<double>(shape, scale)(rng);
}

inline double draw_chisq(Rng& rng, double df) {
  return draw_gamma(rng, 0.5 * df, 2.0);
}

inline long draw_poisson(Rng& rng, double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("draw_poisson: mean must be >= 0");
  if (mean == 0.0) return 0;  // degenerate, consumes no randomness
  return std::poisson_distribution<long>(mean)(rng);
}

inline double draw_exponential(Rng& rng, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("draw_exponential: rate must be positive");
  return std::exponential_distribution<double>(rate)(rng);
}

// Beta(1, k) via inverse cdf: F(x) = 1 - (1-x)^k.
inline double draw_beta_one_k(Rng& rng, int k) {
  if (k < 1) throw std::invalid_argument("draw_beta_one_k: k must be >= 1");
  return 1.0 - std::pow(draw_uniform(rng), 1.0 / static_cast<double>(k));
}

// N(mean, cov) given the lower Cholesky factor of the covariance.
inline Eigen::Vector2d draw_mvn2_cov(Rng& rng, const Eigen::Vector2d& mean,
                                     const Eigen::Matrix2d& chol_cov) {
  Eigen::Vector2d z(draw_normal(rng), draw_normal(rng));
  return mean + chol_cov * z;
}

// N(mean, P^-1) given the lower Cholesky factor of the precision P:
// x = mean + L^-T z has covariance (L L^T)^-1.
inline Eigen::Vector2d draw_mvn2_prec(Rng& rng, const Eigen::Vector2d& mean,
                                      const Eigen::Matrix2d& chol_prec) {
  Eigen::Vector2d z(draw_normal(rng), draw_normal(rng));
  return mean + chol_prec.transpose().triangularView<Eigen::Upper>().solve(z);
}

// Wishart(df, scale) for 2x2 matrices by the Bartlett decomposition,
// in the convention where the mean is df * scale. Requires df > 1.
inline Eigen::Matrix2d draw_wishart2(Rng& rng, double df, const Eigen::Matrix2d& scale) {
  if (!(df > 1.0)) throw std::invalid_argument("draw_wishart2: df must exceed dimension - 1");
  Eigen::LLT<Eigen::Matrix2d> llt(scale);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("draw_wishart2: scale matrix not positive definite");
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = std::sqrt(draw_chisq(rng, df));
  a(1, 0) = draw_normal(rng);
  a(1, 1) = std::sqrt(draw_chisq(rng, df - 1.0));
  Eigen::Matrix2d la = llt.matrixL() * a;
  return la * la.transpose();
}

}  // namespace stmix
