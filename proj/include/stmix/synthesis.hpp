#pragma once

// Synthetic event generation from a known mixture truth: per-period Poisson
// counts with iid locations from the block density, optionally rejected into
// the study region. Ground-truth weight columns come from exact joint draws
// of the transformed-weight prior.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stmix/car.hpp"
#include "stmix/geometry.hpp"
#include "stmix/mixture.hpp"
#include "stmix/rng.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// A fully specified generating model. The car state records the parameters
// the weight matrix was drawn from, so recovery tests can compare against
// them; simulate itself only reads the mixture.
struct Scenario {
  MixtureState truth;
  CarState car;
  Eigen::VectorXd delta;  // expected events per period
  StudyRegion region;
  bool truncate_to_region{false};
  std::uint64_t seed{0};
};

inline void validate(const Scenario& sc) {
  validate(sc.truth);
  if (sc.delta.size() != sc.truth.season.n_periods)
    throw std::invalid_argument("scenario: need one delta entry per period");
  for (Eigen::Index t = 0; t < sc.delta.size(); ++t) {
    if (!(sc.delta[t] >= 0.0) || !std::isfinite(sc.delta[t]))
      throw std::invalid_argument("scenario: delta must be finite and >= 0");
  }
  if (sc.truncate_to_region) validate(sc.region);
}

// Exact draw of the B x (K-1) transformed-weight matrix from its joint
// normal: each column r is N(c_r 1, Q_r^-1) with Q_r the circular-lag
// precision, sampled by back-solving the Cholesky factor of Q_r.
inline Eigen::MatrixXd sample_car_weights(const Eigen::VectorXd& c, const Eigen::VectorXd& rho,
                                          const Eigen::VectorXd& nu2, const CarNeighborhood& nb,
                                          Rng& rng) {
  if (c.size() != rho.size() || c.size() != nu2.size())
    throw std::invalid_argument("sample_car_weights: c, rho, nu2 sizes disagree");
  const int B = nb.n_blocks;
  Eigen::MatrixXd pi(B, c.size());
  for (Eigen::Index r = 0; r < c.size(); ++r) {
    const Eigen::MatrixXd q = car_precision(rho[r], nu2[r], nb);
    Eigen::LLT<Eigen::MatrixXd> llt(q);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("sample_car_weights: precision not positive definite");
    Eigen::VectorXd z(B);
    for (int b = 0; b < B; ++b) z[b] = draw_normal(rng);
    pi.col(r) = llt.matrixU().solve(z);
    pi.col(r).array() += c[r];
  }
  return pi;
}

namespace detail {

// One location from block b of the truth, shared Cholesky factors supplied
// by the caller. Counts proposals so simulate can abort scenarios whose
// region rejects essentially everything.
inline SpatialPoint simulate_location(const Scenario& sc, int b,
                                      const std::vector<Eigen::Matrix2d>& chol, Rng& rng,
                                      long& proposals, long& accepted) {
  const int k = sc.truth.k();
  while (true) {
    double pick = draw_uniform(rng);
    int j = 0;
    while (j + 1 < k && pick > sc.truth.weights(b - 1, j)) {
      pick -= sc.truth.weights(b - 1, j);
      ++j;
    }
    const Eigen::Vector2d s =
        draw_mvn2_cov(rng, sc.truth.components[static_cast<size_t>(j)].mu, chol[static_cast<size_t>(j)]);
    const SpatialPoint p{s[0], s[1]};
    proposals += 1;
    if (!sc.truncate_to_region || point_in_region(p, sc.region)) {
      accepted += 1;
      return p;
    }
    if (proposals >= 1000 && accepted < static_cast<long>(1e-3 * static_cast<double>(proposals)))
      throw std::runtime_error("simulate: region rejects nearly every proposal");
  }
}

}  // namespace detail

// Events for all periods: n_t ~ Poisson(delta_t), then n_t iid locations
// from the period's block density. Fully deterministic given the seed.
inline std::vector<Event> simulate(const Scenario& sc) {
  validate(sc);
  Rng rng(sc.seed);
  std::vector<Eigen::Matrix2d> chol;
  chol.reserve(sc.truth.components.size());
  for (const auto& comp : sc.truth.components) {
    Eigen::LLT<Eigen::Matrix2d> llt(comp.sigma);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("simulate: component covariance not positive definite");
    chol.push_back(llt.matrixL());
  }
  std::vector<Event> events;
  long proposals = 0;
  long accepted = 0;
  for (int t = 1; t <= sc.truth.season.n_periods; ++t) {
    const long n = draw_poisson(rng, sc.delta[t - 1]);
    const int b = block_of(t, sc.truth.season);
    for (long i = 0; i < n; ++i)
      events.push_back({t, detail::simulate_location(sc, b, chol, rng, proposals, accepted)});
  }
  return events;
}

}  // namespace stmix
