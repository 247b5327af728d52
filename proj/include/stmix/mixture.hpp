#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stmix/geometry.hpp"
#include "stmix/seasonality.hpp"
#include "stmix/simplex.hpp"

namespace stmix {

// One bivariate Gaussian component; sigma is a covariance matrix.
struct Component {
  Eigen::Vector2d mu{0.0, 0.0};
  Eigen::Matrix2d sigma{Eigen::Matrix2d::Identity()};
};

inline void validate(const Component& comp) {
  if (!comp.mu.allFinite() || !comp.sigma.allFinite())
    throw std::invalid_argument("component: non-finite parameter");
  const double scale = comp.sigma.cwiseAbs().maxCoeff();
  if (std::abs(comp.sigma(0, 1) - comp.sigma(1, 0)) > 1e-12 * std::max(scale, 1.0))
    throw std::invalid_argument("component: covariance must be symmetric");
  const double det = comp.sigma(0, 0) * comp.sigma(1, 1) - comp.sigma(0, 1) * comp.sigma(1, 0);
  if (!(comp.sigma(0, 0) > 0.0) || !(det > 0.0))
    throw std::domain_error("component: covariance must be positive definite");
}

// Component with its inverse and normalizing constant precomputed, for
// repeated density evaluation.
struct Gaussian2 {
  Eigen::Vector2d mu;
  Eigen::Matrix2d prec;
  double log_norm;  // -log(2 pi) - 0.5 log det sigma

  static Gaussian2 from(const Component& comp) {
    validate(comp);
    const double det = comp.sigma(0, 0) * comp.sigma(1, 1) - comp.sigma(0, 1) * comp.sigma(1, 0);
    Gaussian2 g;
    g.mu = comp.mu;
    g.prec << comp.sigma(1, 1) / det, -comp.sigma(0, 1) / det, -comp.sigma(1, 0) / det,
        comp.sigma(0, 0) / det;
    g.log_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det);
    return g;
  }

  double logpdf(const SpatialPoint& s) const {
    const double dx = s.x - mu[0];
    const double dy = s.y - mu[1];
    const double q = prec(0, 0) * dx * dx + 2.0 * prec(0, 1) * dx * dy + prec(1, 1) * dy * dy;
    return log_norm - 0.5 * q;
  }
  double pdf(const SpatialPoint& s) const { return std::exp(logpdf(s)); }
};

inline double gaussian_logpdf2d(const SpatialPoint& s, const Component& comp) {
  return Gaussian2::from(comp).logpdf(s);
}

inline double gaussian_pdf2d(const SpatialPoint& s, const Component& comp) {
  return std::exp(gaussian_logpdf2d(s, comp));
}

// Throws unless every row of w is a probability vector (entries >= 0,
// row sums within 1e-12 of 1).
inline void validate_weight_matrix(const Eigen::MatrixXd& w) {
  if (w.rows() < 1 || w.cols() < 1)
    throw std::invalid_argument("weights: matrix must be non-empty");
  for (Eigen::Index b = 0; b < w.rows(); ++b) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      if (!std::isfinite(w(b, j)) || w(b, j) < 0.0)
        throw std::invalid_argument("weights: entries must be finite and non-negative");
      sum += w(b, j);
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("weights: rows must sum to 1");
  }
}

// Full spatial model for one posterior draw or simulation scenario: shared
// components plus one weight row per seasonal block.
struct MixtureState {
  std::vector<Component> components;
  Eigen::MatrixXd weights;  // n_blocks x K
  SeasonalityConfig season;

  int k() const { return static_cast<int>(components.size()); }
};

inline void validate(const MixtureState& m) {
  validate(m.season);
  if (m.components.empty()) throw std::invalid_argument("mixture: needs at least one component");
  for (std::size_t j = 0; j < m.components.size(); ++j) {
    try {
      validate(m.components[j]);
    } catch (const std::exception& e) {
      throw std::invalid_argument("component " + std::to_string(j + 1) + ": " + e.what());
    }
  }
  validate_weight_matrix(m.weights);
  if (m.weights.rows() != m.season.n_blocks)
    throw std::invalid_argument("mixture: weight rows must match n_blocks");
  if (m.weights.cols() != static_cast<Eigen::Index>(m.components.size()))
    throw std::invalid_argument("mixture: weight columns must match component count");
}

// log f_b(s) for block b (1-based), by log-sum-exp over components.
inline double log_mixture_density_block(const SpatialPoint& s, int b, const MixtureState& m) {
  if (b < 1 || b > m.season.n_blocks)
    throw std::invalid_argument("mixture: block index out of range");
  const int k = m.k();
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(k, -std::numeric_limits<double>::infinity());
  for (int j = 0; j < k; ++j) {
    const double w = m.weights(b - 1, j);
    if (w <= 0.0) continue;
    terms[j] = std::log(w) + gaussian_logpdf2d(s, m.components[j]);
    best = std::max(best, terms[j]);
  }
  if (!std::isfinite(best)) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (int j = 0; j < k; ++j) {
    if (std::isfinite(terms[j])) acc += std::exp(terms[j] - best);
  }
  return best + std::log(acc);
}

inline double mixture_density_block(const SpatialPoint& s, int b, const MixtureState& m) {
  return std::exp(log_mixture_density_block(s, b, m));
}

// Density for period t, which is the density of t's seasonal block.
inline double mixture_density(const SpatialPoint& s, int t, const MixtureState& m) {
  return mixture_density_block(s, block_of(t, m.season), m);
}

}  // namespace stmix
