#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace stmix {

// Multinomial logit coordinates of a length-K simplex vector, with the last
// category as reference: pi_r = log(p_r / p_K), r = 1..K-1.
inline Eigen::VectorXd logit_transform(const Eigen::VectorXd& p) {
  const Eigen::Index k = p.size();
  if (k < 2) throw std::invalid_argument("logit_transform: need at least 2 categories");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!std::isfinite(p[j])) throw std::invalid_argument("logit_transform: non-finite weight");
    if (!(p[j] > 0.0)) throw std::domain_error("logit_transform: weights must be strictly positive");
    sum += p[j];
  }
  if (std::abs(sum - 1.0) > 1e-8)
    throw std::invalid_argument("logit_transform: weights must sum to 1");
  const double log_ref = std::log(p[k - 1]);
  Eigen::VectorXd pi(k - 1);
  for (Eigen::Index r = 0; r + 1 < k; ++r) pi[r] = std::log(p[r]) - log_ref;
  return pi;
}

// Log weights from logit coordinates: log-softmax of (pi_1..pi_{K-1}, 0),
// shifted by the max so large coordinates cannot overflow.
inline Eigen::VectorXd log_weights_from_logits(const Eigen::VectorXd& pi) {
  const Eigen::Index k = pi.size() + 1;
  for (Eigen::Index r = 0; r + 1 < k; ++r) {
    if (!std::isfinite(pi[r]))
      throw std::invalid_argument("log_weights_from_logits: non-finite coordinate");
  }
  double m = 0.0;  // the implicit reference coordinate
  for (Eigen::Index r = 0; r + 1 < k; ++r) m = std::max(m, pi[r]);
  double z = std::exp(-m);
  for (Eigen::Index r = 0; r + 1 < k; ++r) z += std::exp(pi[r] - m);
  const double log_z = m + std::log(z);
  Eigen::VectorXd lw(k);
  for (Eigen::Index r = 0; r + 1 < k; ++r) lw[r] = pi[r] - log_z;
  lw[k - 1] = -log_z;
  return lw;
}

// Inverse of logit_transform; always lands exactly on the simplex.
inline Eigen::VectorXd inverse_logit(const Eigen::VectorXd& pi) {
  return log_weights_from_logits(pi).array().exp();
}

}  // namespace stmix
