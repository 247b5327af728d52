#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stmix/car.hpp"
#include "stmix/mixture.hpp"
#include "stmix/rng.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// Fixed prior ranges for the weight-process hyperparameters.
inline constexpr double kCarInterceptVariance = 1e4;  // c_r ~ N(0, 1e4)
inline constexpr double kNu2Upper = 1e4;              // nu2_r ~ U(0, 1e4)
// rho_r ~ U(0, kCarRhoUpper), see car.hpp

// Data-driven hyperparameters for the component priors. kappa and h are the
// diagonals of a 2x2 precision and a 2x2 scale matrix respectively.
struct Hyperparams {
  Eigen::Vector2d xi{0.0, 0.0};
  Eigen::Vector2d kappa{1.0, 1.0};
  double alpha{3.0};
  double g{1.0};
  Eigen::Vector2d h{1.0, 1.0};
};

inline void validate(const Hyperparams& hp) {
  if (!hp.xi.allFinite()) throw std::invalid_argument("hyperparams: xi must be finite");
  if (!(hp.kappa[0] > 0.0) || !(hp.kappa[1] > 0.0))
    throw std::invalid_argument("hyperparams: kappa diagonal must be positive");
  if (!(hp.h[0] > 0.0) || !(hp.h[1] > 0.0))
    throw std::invalid_argument("hyperparams: h diagonal must be positive");
  if (!(hp.alpha > 0.5) || !(hp.g > 0.5))
    throw std::invalid_argument("hyperparams: Wishart half-dfs must exceed 1/2");
}

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// xi = coordinate-wise medians; kappa = diag(1/R1^2, 1/R2^2) and
// h = diag(10/R1^2, 10/R2^2) where R_i is the coordinate range length.
inline Hyperparams hyperparams_from_data(std::span<const Event> events) {
  if (events.size() < 2)
    throw std::invalid_argument("hyperparams_from_data: need at least 2 events");
  std::vector<double> xs, ys;
  xs.reserve(events.size());
  ys.reserve(events.size());
  for (const auto& e : events) {
    xs.push_back(e.location.x);
    ys.push_back(e.location.y);
  }
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double r1 = *xmax - *xmin;
  const double r2 = *ymax - *ymin;
  if (!(r1 > 0.0) || !(r2 > 0.0))
    throw std::domain_error("hyperparams_from_data: zero coordinate range, data degenerate");
  Hyperparams hp;
  hp.xi << detail::median(xs), detail::median(ys);
  hp.kappa << 1.0 / (r1 * r1), 1.0 / (r2 * r2);
  hp.h << 10.0 / (r1 * r1), 10.0 / (r2 * r2);
  return hp;
}

// log N(x; mean, diag(1/prec)) for 2-vectors with diagonal precision.
inline double log_normal2_diag(const Eigen::Vector2d& x, const Eigen::Vector2d& mean,
                               const Eigen::Vector2d& prec) {
  const double d0 = x[0] - mean[0];
  const double d1 = x[1] - mean[1];
  return -std::log(2.0 * std::numbers::pi) + 0.5 * (std::log(prec[0]) + std::log(prec[1])) -
         0.5 * (prec[0] * d0 * d0 + prec[1] * d1 * d1);
}

// log density of Wishart(df, scale) for 2x2 matrices in the mean = df*scale
// convention. Multivariate gamma: Gamma_2(a) = sqrt(pi) Gamma(a) Gamma(a - 1/2).
inline double log_wishart2(const Eigen::Matrix2d& x, double df, const Eigen::Matrix2d& scale) {
  const double detx = x(0, 0) * x(1, 1) - x(0, 1) * x(1, 0);
  const double dets = scale(0, 0) * scale(1, 1) - scale(0, 1) * scale(1, 0);
  if (!(detx > 0.0) || !(x(0, 0) > 0.0)) throw std::domain_error("log_wishart2: x not PD");
  if (!(dets > 0.0) || !(scale(0, 0) > 0.0))
    throw std::domain_error("log_wishart2: scale not PD");
  if (!(df > 1.0)) throw std::invalid_argument("log_wishart2: df must exceed 1");
  // tr(scale^-1 x)
  const double tr = (scale(1, 1) * x(0, 0) - scale(0, 1) * x(1, 0) - scale(1, 0) * x(0, 1) +
                     scale(0, 0) * x(1, 1)) /
                    dets;
  const double log_gamma2 = 0.5 * std::log(std::numbers::pi) + std::lgamma(0.5 * df) +
                            std::lgamma(0.5 * df - 0.5);
  return 0.5 * (df - 3.0) * std::log(detx) - 0.5 * tr - df * std::log(2.0) -
         0.5 * df * std::log(dets) - log_gamma2;
}

// Everything the joint prior sees: shared components, the weight process,
// and the hierarchical Wishart scale beta.
struct ParamSet {
  std::vector<Component> components;
  CarState car;  // pi has K-1 columns
  Eigen::Matrix2d beta{Eigen::Matrix2d::Identity()};

  int k() const { return static_cast<int>(components.size()); }
};

// Joint log prior density. Support violations return -infinity rather than
// throwing, so Metropolis steps can evaluate proposals blindly.
inline double log_prior(const ParamSet& draw, const Hyperparams& hp, const CarNeighborhood& nb) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  validate(hp);
  if (draw.components.empty()) throw std::invalid_argument("log_prior: no components");
  if (draw.car.pi.cols() != draw.k() - 1 || draw.car.pi.rows() != nb.n_blocks)
    throw std::invalid_argument("log_prior: pi must be n_blocks x (K-1)");

  // support checks first
  const double detb = draw.beta(0, 0) * draw.beta(1, 1) - draw.beta(0, 1) * draw.beta(1, 0);
  if (!(detb > 0.0) || !(draw.beta(0, 0) > 0.0)) return neg_inf;
  for (const auto& comp : draw.components) {
    const double det = comp.sigma(0, 0) * comp.sigma(1, 1) - comp.sigma(0, 1) * comp.sigma(1, 0);
    if (!(det > 0.0) || !(comp.sigma(0, 0) > 0.0)) return neg_inf;
  }
  for (int r = 0; r < draw.k() - 1; ++r) {
    if (!(draw.car.rho[r] >= 0.0) || !(draw.car.rho[r] < kCarRhoUpper)) return neg_inf;
    if (!(draw.car.nu2[r] > 0.0) || !(draw.car.nu2[r] < kNu2Upper)) return neg_inf;
  }

  const Eigen::Matrix2d inv2beta = (2.0 * draw.beta).inverse();
  double acc = log_wishart2(draw.beta, 2.0 * hp.g,
                            Eigen::Vector2d(0.5 / hp.h[0], 0.5 / hp.h[1]).asDiagonal());
  for (const auto& comp : draw.components) {
    acc += log_normal2_diag(comp.mu, hp.xi, hp.kappa);
    acc += log_wishart2(comp.sigma.inverse(), 2.0 * hp.alpha, inv2beta);
  }
  for (int r = 0; r < draw.k() - 1; ++r) {
    acc += car_joint_logpdf(draw.car.pi.col(r), draw.car.c[r], draw.car.rho[r], draw.car.nu2[r],
                            nb);
    acc += -0.5 * std::log(2.0 * std::numbers::pi * kCarInterceptVariance) -
           0.5 * draw.car.c[r] * draw.car.c[r] / kCarInterceptVariance;
    acc += std::log(1.0 / kCarRhoUpper);  // U(0, 0.25)
    acc += std::log(1.0 / kNu2Upper);     // U(0, 1e4)
  }
  return acc;
}

// mu ~ N(xi, kappa^-1), sigma^-1 ~ Wishart(2 alpha, (2 beta)^-1).
inline Component sample_prior_component(const Hyperparams& hp, const Eigen::Matrix2d& beta,
                                        Rng& rng) {
  validate(hp);
  Component comp;
  comp.mu[0] = hp.xi[0] + draw_normal(rng) / std::sqrt(hp.kappa[0]);
  comp.mu[1] = hp.xi[1] + draw_normal(rng) / std::sqrt(hp.kappa[1]);
  const Eigen::Matrix2d prec = draw_wishart2(rng, 2.0 * hp.alpha, (2.0 * beta).inverse());
  comp.sigma = prec.inverse();
  // keep the stored covariance exactly symmetric
  comp.sigma(0, 1) = comp.sigma(1, 0) = 0.5 * (comp.sigma(0, 1) + comp.sigma(1, 0));
  return comp;
}

// beta ~ Wishart(2g, (2h)^-1) with diagonal h.
inline Eigen::Matrix2d sample_prior_beta(const Hyperparams& hp, Rng& rng) {
  const Eigen::Matrix2d scale = Eigen::Vector2d(0.5 / hp.h[0], 0.5 / hp.h[1]).asDiagonal();
  return draw_wishart2(rng, 2.0 * hp.g, scale);
}

// Hyperparameter triple of one weight column, drawn from the priors.
struct CarHyperDraw {
  double c, rho, nu2;
};

inline CarHyperDraw sample_prior_car_hyper(Rng& rng) {
  CarHyperDraw d;
  d.c = std::sqrt(kCarInterceptVariance) * draw_normal(rng);
  d.rho = kCarRhoUpper * draw_uniform(rng);
  d.nu2 = kNu2Upper * draw_uniform(rng);
  return d;
}

// Weight-process hyperparameters and pi columns drawn from their priors.
inline CarState sample_prior_car(int k, const CarNeighborhood& nb, Rng& rng) {
  if (k < 1) throw std::invalid_argument("sample_prior_car: k must be >= 1");
  CarState st;
  const int m = k - 1;
  st.pi.resize(nb.n_blocks, m);
  st.c.resize(m);
  st.rho.resize(m);
  st.nu2.resize(m);
  for (int r = 0; r < m; ++r) {
    const CarHyperDraw d = sample_prior_car_hyper(rng);
    st.c[r] = d.c;
    st.rho[r] = d.rho;
    st.nu2[r] = d.nu2;
    st.pi.col(r) = sample_car_column(st.c[r], st.rho[r], st.nu2[r], nb, rng);
  }
  return st;
}

}  // namespace stmix
