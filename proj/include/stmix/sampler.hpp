#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmix/car.hpp"
#include "stmix/mixture.hpp"
#include "stmix/priors.hpp"
#include "stmix/rng.hpp"
#include "stmix/seasonality.hpp"
#include "stmix/simplex.hpp"

namespace stmix {

// Full state of the data-augmented chain. Labels are 1-based component
// indices, one per event, in the order the events were passed in.
struct ChainState {
  std::vector<int> labels;
  MixtureState mixture;
  CarState car;
  Eigen::Matrix2d beta{Eigen::Matrix2d::Identity()};

  int k() const { return mixture.k(); }
};

inline void validate(const ChainState& st) {
  validate(st.mixture);
  validate(st.car);
  if (st.car.pi.cols() != st.k() - 1 || st.car.pi.rows() != st.mixture.season.n_blocks)
    throw std::invalid_argument("chain state: pi must be n_blocks x (K-1)");
  for (int z : st.labels) {
    if (z < 1 || z > st.k()) throw std::invalid_argument("chain state: label out of 1..K");
  }
  const double detb = st.beta(0, 0) * st.beta(1, 1) - st.beta(0, 1) * st.beta(1, 0);
  if (!(detb > 0.0) || !(st.beta(0, 0) > 0.0))
    throw std::invalid_argument("chain state: beta must be positive definite");
  // weights must be the softmax image of pi
  for (int b = 0; b < st.mixture.season.n_blocks; ++b) {
    const Eigen::VectorXd w = inverse_logit(st.car.pi.row(b).transpose());
    if ((w - st.mixture.weights.row(b).transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("chain state: weights out of sync with pi");
  }
}

struct McmcConfig {
  long n_iter{50000};
  long burn_in{25000};
  long thin{10};
  double rw_step_pi{0.1};
  double rw_step_c{0.1};
  double rw_step_rho{0.01};
  double rw_step_lognu{0.2};
  bool adapt_steps{true};  // burn-in only; frozen afterwards
  bool init_kmeans{false};
  std::uint64_t seed{0};
};

inline void validate(const McmcConfig& cfg) {
  if (cfg.n_iter < 1) throw std::invalid_argument("mcmc: n_iter must be >= 1");
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.n_iter)
    throw std::invalid_argument("mcmc: need 0 <= burn_in < n_iter");
  if (cfg.thin < 1) throw std::invalid_argument("mcmc: thin must be >= 1");
  for (double s : {cfg.rw_step_pi, cfg.rw_step_c, cfg.rw_step_rho, cfg.rw_step_lognu}) {
    if (!(s > 0.0)) throw std::invalid_argument("mcmc: random-walk steps must be positive");
  }
}

// Parameter snapshot stored for one retained iteration; labels are dropped.
struct PosteriorDraw {
  long iteration{0};
  std::vector<Component> components;
  Eigen::MatrixXd pi;
  Eigen::VectorXd c, rho, nu2;
  Eigen::Matrix2d beta;

  int k() const { return static_cast<int>(components.size()); }
};

inline MixtureState mixture_from_draw(const PosteriorDraw& draw, const SeasonalityConfig& season) {
  MixtureState m;
  m.components = draw.components;
  m.season = season;
  m.weights.resize(season.n_blocks, draw.k());
  for (int b = 0; b < season.n_blocks; ++b)
    m.weights.row(b) = inverse_logit(draw.pi.row(b).transpose()).transpose();
  return m;
}

struct AcceptanceCounter {
  long proposed{0};
  long accepted{0};
  double rate() const { return proposed > 0 ? double(accepted) / double(proposed) : 0.0; }
};

struct AcceptanceCounters {
  AcceptanceCounter pi, c, rho, lognu;
};

namespace detail {

// log phi_j(s_i) for every event and component; the dominant per-sweep cost.
inline Eigen::MatrixXd log_density_cache(const std::vector<Event>& events,
                                         const std::vector<Component>& comps) {
  const int n = static_cast<int>(events.size());
  const int k = static_cast<int>(comps.size());
  Eigen::MatrixXd logphi(n, k);
  for (int j = 0; j < k; ++j) {
    const Gaussian2 g = Gaussian2::from(comps[j]);
    for (int i = 0; i < n; ++i) logphi(i, j) = g.logpdf(events[i].location);
  }
  return logphi;
}

// event indices bucketed by seasonal block (0-based blocks)
inline std::vector<std::vector<int>> block_buckets(const std::vector<Event>& events,
                                                   const SeasonalityConfig& season) {
  std::vector<std::vector<int>> buckets(season.n_blocks);
  for (std::size_t i = 0; i < events.size(); ++i)
    buckets[block_of(events[i].period, season) - 1].push_back(static_cast<int>(i));
  return buckets;
}

// mixture log likelihood of the bucketed events of one block under the
// given log weights, using cached component log densities
inline double block_loglik(const std::vector<int>& idx, const Eigen::VectorXd& logw,
                           const Eigen::MatrixXd& logphi) {
  const int k = static_cast<int>(logw.size());
  double acc = 0.0;
  for (int i : idx) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) best = std::max(best, logw[j] + logphi(i, j));
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(logw[j] + logphi(i, j) - best);
    acc += best + std::log(z);
  }
  return acc;
}

// z_{t,i} ~ categorical with Pr(j) proportional to p_{b,j} phi_j(s), computed
// through log-sum-exp so simultaneous underflow of all densities is harmless.
inline void update_labels_impl(ChainState& st, const std::vector<Event>& events,
                               const Eigen::MatrixXd& logphi, Rng& rng) {
  const int n = static_cast<int>(events.size());
  const int k = st.k();
  st.labels.resize(n);
  std::vector<double> terms(k);
  for (int i = 0; i < n; ++i) {
    const int b = block_of(events[i].period, st.mixture.season) - 1;
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) {
      const double w = st.mixture.weights(b, j);
      terms[j] = w > 0.0 ? std::log(w) + logphi(i, j) : -std::numeric_limits<double>::infinity();
      best = std::max(best, terms[j]);
    }
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      terms[j] = std::isfinite(terms[j]) ? std::exp(terms[j] - best) : 0.0;
      z += terms[j];
    }
    const double u = draw_uniform(rng) * z;
    double cum = 0.0;
    int pick = k;  // falls through to the last component on rounding slack
    for (int j = 0; j < k; ++j) {
      cum += terms[j];
      if (u <= cum) {
        pick = j + 1;
        break;
      }
    }
    st.labels[i] = std::min(pick, k);
  }
}

}  // namespace detail

inline void update_labels(ChainState& st, const std::vector<Event>& events, Rng& rng) {
  const Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);
  detail::update_labels_impl(st, events, logphi, rng);
}

// mu_j ~ N(m_j, P_j^-1), P_j = kappa + n_j Sigma_j^-1,
// m_j = P_j^-1 (kappa xi + Sigma_j^-1 sum of assigned points).
inline void update_means(ChainState& st, const std::vector<Event>& events, const Hyperparams& hp,
                         Rng& rng) {
  const int k = st.k();
  std::vector<int> counts(k, 0);
  std::vector<Eigen::Vector2d> sums(k, Eigen::Vector2d::Zero());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const int j = st.labels[i] - 1;
    counts[j] += 1;
    sums[j] += Eigen::Vector2d(events[i].location.x, events[i].location.y);
  }
  const Eigen::Matrix2d kappa = hp.kappa.asDiagonal();
  for (int j = 0; j < k; ++j) {
    const Eigen::Matrix2d sig_inv = st.mixture.components[j].sigma.inverse();
    const Eigen::Matrix2d prec = kappa + counts[j] * sig_inv;
    const Eigen::Vector2d rhs = kappa * hp.xi + sig_inv * sums[j];
    Eigen::LLT<Eigen::Matrix2d> llt(prec);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("update_means: conditional precision not PD");
    const Eigen::Vector2d mean = llt.solve(rhs);
    st.mixture.components[j].mu = draw_mvn2_prec(rng, mean, llt.matrixL());
  }
}

// Sigma_j^-1 ~ Wishart(2 alpha + n_j, (2 beta + S_j)^-1) with scatter S_j
// about the current mu_j.
inline void update_covariances(ChainState& st, const std::vector<Event>& events,
                               const Hyperparams& hp, Rng& rng) {
  const int k = st.k();
  std::vector<Eigen::Matrix2d> scatter(k, Eigen::Matrix2d::Zero());
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const int j = st.labels[i] - 1;
    const Eigen::Vector2d d = Eigen::Vector2d(events[i].location.x, events[i].location.y) -
                              st.mixture.components[j].mu;
    scatter[j] += d * d.transpose();
    counts[j] += 1;
  }
  for (int j = 0; j < k; ++j) {
    const Eigen::Matrix2d scale = (2.0 * st.beta + scatter[j]).inverse();
    const Eigen::Matrix2d prec = draw_wishart2(rng, 2.0 * hp.alpha + counts[j], scale);
    Eigen::Matrix2d sigma = prec.inverse();
    sigma(0, 1) = sigma(1, 0) = 0.5 * (sigma(0, 1) + sigma(1, 0));
    st.mixture.components[j].sigma = sigma;
  }
}

// Conditional of the shared scale: beta ~ Wishart(2g + 2 alpha K,
// (2h + 2 sum_j Sigma_j^-1)^-1). Exposed separately so the empty-component
// edge (pure prior) stays testable.
inline std::pair<double, Eigen::Matrix2d> beta_conditional(
    const std::vector<Component>& comps, const Hyperparams& hp) {
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  for (const auto& comp : comps) acc += comp.sigma.inverse();
  const Eigen::Matrix2d two_h = Eigen::Vector2d(2.0 * hp.h[0], 2.0 * hp.h[1]).asDiagonal();
  const double df = 2.0 * hp.g + 2.0 * hp.alpha * static_cast<double>(comps.size());
  return {df, (two_h + 2.0 * acc).inverse()};
}

inline void update_beta(ChainState& st, const Hyperparams& hp, Rng& rng) {
  const auto [df, scale] = beta_conditional(st.mixture.components, hp);
  st.beta = draw_wishart2(rng, df, scale);
}

namespace detail {

struct WeightUpdateWorkspace {
  const std::vector<std::vector<int>>* buckets;
  const Eigen::MatrixXd* logphi;
};

// Single-site random walk over all (b, r) sites. The acceptance ratio
// multiplies the mixture likelihood of the block's events by the CAR full
// conditional of the site; both are evaluated without any approximation.
inline void mh_update_weights_impl(ChainState& st, const CarNeighborhood& nb, double step,
                                   const WeightUpdateWorkspace& ws, Rng& rng,
                                   AcceptanceCounter& counter) {
  const int n_blocks = st.mixture.season.n_blocks;
  const int m = st.k() - 1;
  if (m == 0) return;
  for (int b = 1; b <= n_blocks; ++b) {
    const std::vector<int>& idx = (*ws.buckets)[b - 1];
    Eigen::VectorXd logw = log_weights_from_logits(st.car.pi.row(b - 1).transpose());
    double cur_lik = block_loglik(idx, logw, *ws.logphi);
    for (int r = 1; r <= m; ++r) {
      counter.proposed += 1;
      const double cur = st.car.pi(b - 1, r - 1);
      const double prop = cur + step * draw_normal(rng);
      Eigen::VectorXd pi_row = st.car.pi.row(b - 1).transpose();
      pi_row[r - 1] = prop;
      const Eigen::VectorXd logw_prop = log_weights_from_logits(pi_row);
      const double prop_lik = block_loglik(idx, logw_prop, *ws.logphi);
      const auto [cmean, cvar] = car_conditional(b, r, st.car, nb);
      const double dprior = (-(prop - cmean) * (prop - cmean) + (cur - cmean) * (cur - cmean)) /
                            (2.0 * cvar);
      const double log_ratio = prop_lik - cur_lik + dprior;
      if (std::log(draw_uniform(rng)) < log_ratio) {
        counter.accepted += 1;
        st.car.pi(b - 1, r - 1) = prop;
        logw = logw_prop;
        cur_lik = prop_lik;
      }
    }
    st.mixture.weights.row(b - 1) = logw.array().exp().matrix().transpose();
  }
}

// Random-walk updates of c_r, rho_r and nu2_r against the joint CAR density
// of the column. nu2 walks on the log scale, hence the Jacobian term.
inline void mh_update_car_hyper_impl(ChainState& st, const CarNeighborhood& nb,
                                     const McmcConfig& cfg, const Eigen::VectorXd& adj_eigs,
                                     Rng& rng, AcceptanceCounters& counters) {
  const int m = st.k() - 1;
  auto column_logpdf = [&](int r, double c, double rho, double nu2) {
    double logdet = -nb.n_blocks * std::log(nu2);
    for (Eigen::Index kk = 0; kk < adj_eigs.size(); ++kk)
      logdet += std::log1p(-rho * adj_eigs[kk]);
    return 0.5 * logdet - 0.5 * car_quadform(st.car.pi.col(r), c, rho, nu2, nb);
  };
  for (int r = 0; r < m; ++r) {
    {  // intercept, Gaussian prior N(0, kCarInterceptVariance)
      counters.c.proposed += 1;
      const double cur = st.car.c[r];
      const double prop = cur + cfg.rw_step_c * draw_normal(rng);
      const double log_ratio = column_logpdf(r, prop, st.car.rho[r], st.car.nu2[r]) -
                               column_logpdf(r, cur, st.car.rho[r], st.car.nu2[r]) -
                               0.5 * (prop * prop - cur * cur) / kCarInterceptVariance;
      if (std::log(draw_uniform(rng)) < log_ratio) {
        counters.c.accepted += 1;
        st.car.c[r] = prop;
      }
    }
    {  // persistence, uniform prior on [0, 0.25)
      counters.rho.proposed += 1;
      const double cur = st.car.rho[r];
      const double prop = cur + cfg.rw_step_rho * draw_normal(rng);
      if (prop >= 0.0 && prop < kCarRhoUpper) {
        const double log_ratio = column_logpdf(r, st.car.c[r], prop, st.car.nu2[r]) -
                                 column_logpdf(r, st.car.c[r], cur, st.car.nu2[r]);
        if (std::log(draw_uniform(rng)) < log_ratio) {
          counters.rho.accepted += 1;
          st.car.rho[r] = prop;
        }
      }
    }
    {  // conditional variance, uniform prior on (0, kNu2Upper), log-scale walk
      counters.lognu.proposed += 1;
      const double cur = st.car.nu2[r];
      const double prop = cur * std::exp(cfg.rw_step_lognu * draw_normal(rng));
      if (prop > 0.0 && prop < kNu2Upper) {
        const double log_ratio = column_logpdf(r, st.car.c[r], st.car.rho[r], prop) -
                                 column_logpdf(r, st.car.c[r], st.car.rho[r], cur) +
                                 std::log(prop) - std::log(cur);
        if (std::log(draw_uniform(rng)) < log_ratio) {
          counters.lognu.accepted += 1;
          st.car.nu2[r] = prop;
        }
      }
    }
  }
}

}  // namespace detail

inline void mh_update_weights(ChainState& st, const std::vector<Event>& events,
                              const CarNeighborhood& nb, const McmcConfig& cfg, Rng& rng,
                              AcceptanceCounter* counter = nullptr) {
  const auto buckets = detail::block_buckets(events, st.mixture.season);
  const Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);
  AcceptanceCounter local;
  detail::WeightUpdateWorkspace ws{&buckets, &logphi};
  detail::mh_update_weights_impl(st, nb, cfg.rw_step_pi, ws, rng, counter ? *counter : local);
}

inline void mh_update_car_hyper(ChainState& st, const CarNeighborhood& nb, const McmcConfig& cfg,
                                Rng& rng, AcceptanceCounters* counters = nullptr) {
  const Eigen::VectorXd adj_eigs = car_adjacency_eigenvalues(nb);
  AcceptanceCounters local;
  detail::mh_update_car_hyper_impl(st, nb, cfg, adj_eigs, rng, counters ? *counters : local);
}

// Log acceptance ratio of one single-site weight proposal: block likelihood
// change plus CAR full-conditional change. Exposed so the ratio can be
// checked against brute-force joint-density computations.
inline double mh_weight_log_ratio(const ChainState& st, int b, int r, double proposal,
                                  const std::vector<Event>& events, const CarNeighborhood& nb) {
  if (b < 1 || b > st.mixture.season.n_blocks || r < 1 || r > st.k() - 1)
    throw std::invalid_argument("mh_weight_log_ratio: site out of range");
  const auto buckets = detail::block_buckets(events, st.mixture.season);
  const Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);
  const Eigen::VectorXd logw = log_weights_from_logits(st.car.pi.row(b - 1).transpose());
  Eigen::VectorXd pi_row = st.car.pi.row(b - 1).transpose();
  const double cur = pi_row[r - 1];
  pi_row[r - 1] = proposal;
  const Eigen::VectorXd logw_prop = log_weights_from_logits(pi_row);
  const auto [cmean, cvar] = car_conditional(b, r, st.car, nb);
  const double dprior =
      (-(proposal - cmean) * (proposal - cmean) + (cur - cmean) * (cur - cmean)) / (2.0 * cvar);
  return detail::block_loglik(buckets[b - 1], logw_prop, logphi) -
         detail::block_loglik(buckets[b - 1], logw, logphi) + dprior;
}

namespace detail {

// Lloyd k-means on the event locations, used only as an optional
// initialization for the component means. Seeds with the usual squared
// distance weighting and keeps the best of a few restarts; uniform seeding
// lands several centers in one cluster often enough to start the chain in a
// split/merge mode it takes a long time to leave.
inline void kmeans_init(ChainState& st, const std::vector<Event>& events, Rng& rng) {
  const int k = st.k();
  const int n = static_cast<int>(events.size());
  if (n == 0) return;
  std::vector<Eigen::Vector2d> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = Eigen::Vector2d(events[i].location.x, events[i].location.y);

  std::vector<Eigen::Vector2d> best_centers(k, pts[0]);
  std::vector<int> best_assign(n, 0);
  double best_sse = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < 6; ++restart) {
    std::vector<Eigen::Vector2d> centers;
    centers.push_back(pts[static_cast<int>(draw_uniform(rng) * n) % n]);
    std::vector<double> d2(n, 0.0);
    while (static_cast<int>(centers.size()) < k) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : centers) best = std::min(best, (pts[i] - c).squaredNorm());
        d2[i] = best;
        total += best;
      }
      int pick = static_cast<int>(draw_uniform(rng) * n) % n;
      if (total > 0.0) {
        double u = draw_uniform(rng) * total;
        for (int i = 0; i < n; ++i) {
          u -= d2[i];
          if (u <= 0.0) {
            pick = i;
            break;
          }
        }
      }
      centers.push_back(pts[pick]);
    }

    std::vector<int> assign(n, 0);
    for (int pass = 0; pass < 25; ++pass) {
      for (int i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
          const double d = (pts[i] - centers[j]).squaredNorm();
          if (d < best) {
            best = d;
            assign[i] = j;
          }
        }
      }
      std::vector<Eigen::Vector2d> sums(k, Eigen::Vector2d::Zero());
      std::vector<int> counts(k, 0);
      for (int i = 0; i < n; ++i) {
        sums[assign[i]] += pts[i];
        counts[assign[i]] += 1;
      }
      for (int j = 0; j < k; ++j) {
        if (counts[j] > 0) centers[j] = sums[j] / counts[j];
      }
    }

    double sse = 0.0;
    for (int i = 0; i < n; ++i) sse += (pts[i] - centers[assign[i]]).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best_centers = centers;
      best_assign = assign;
    }
  }

  for (int j = 0; j < k; ++j) st.mixture.components[j].mu = best_centers[j];
  for (int i = 0; i < n; ++i) st.labels[i] = best_assign[i] + 1;

  // start each covariance at the within-cluster scatter so the first label
  // pass sees densities on the data's scale; tiny clusters fall back to the
  // pooled covariance
  Eigen::Vector2d grand = Eigen::Vector2d::Zero();
  for (const auto& p : pts) grand += p;
  grand /= static_cast<double>(n);
  Eigen::Matrix2d pooled = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) pooled += (p - grand) * (p - grand).transpose();
  pooled = pooled / static_cast<double>(n) + 1e-3 * Eigen::Matrix2d::Identity();
  for (int j = 0; j < k; ++j) {
    Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (best_assign[i] != j) continue;
      const Eigen::Vector2d d = pts[i] - best_centers[j];
      scatter += d * d.transpose();
      count += 1;
    }
    st.mixture.components[j].sigma =
        count >= 5 ? Eigen::Matrix2d(scatter / count + 1e-3 * Eigen::Matrix2d::Identity())
                   : pooled;
  }
}

}  // namespace detail

// Fresh state with every parameter drawn from its prior; labels start at 1
// and are redrawn in the first sweep before anything reads them.
inline ChainState init_chain_state(const std::vector<Event>& events, const Hyperparams& hp,
                                   const SeasonalityConfig& season, int k, Rng& rng,
                                   bool init_kmeans = false) {
  validate(season);
  validate(hp);
  if (k < 1) throw std::invalid_argument("init_chain_state: k must be >= 1");
  ChainState st;
  st.beta = sample_prior_beta(hp, rng);
  st.mixture.season = season;
  for (int j = 0; j < k; ++j)
    st.mixture.components.push_back(sample_prior_component(hp, st.beta, rng));
  const CarNeighborhood nb{season.n_blocks, season.periods_per_day};
  st.car = sample_prior_car(k, nb, rng);
  st.mixture.weights.resize(season.n_blocks, k);
  for (int b = 0; b < season.n_blocks; ++b)
    st.mixture.weights.row(b) = inverse_logit(st.car.pi.row(b).transpose()).transpose();
  st.labels.assign(events.size(), 1);
  if (init_kmeans && !events.empty()) {
    detail::kmeans_init(st, events, rng);
    // flatten the weight process: prior draws of c and nu2 are diffuse enough
    // that the initial logits swamp the location term in the first label
    // pass, which would undo the k-means assignment immediately
    st.car.pi.setZero();
    st.car.c.setZero();
    st.car.rho.setConstant(0.5 * kCarRhoUpper);
    st.car.nu2.setConstant(1.0);
    st.mixture.weights.setConstant(1.0 / static_cast<double>(k));
  }
  return st;
}

struct ChainResult {
  std::vector<PosteriorDraw> draws;
  AcceptanceCounters acceptance;
  // step sizes actually in force after burn-in adaptation
  double step_pi{0.0}, step_c{0.0}, step_rho{0.0}, step_lognu{0.0};
};

// One seeded chain: prior initialization, then per iteration the sweep
// labels -> means -> covariances -> beta -> weights -> car hyper.
// Deterministic for a fixed seed and input order.
inline ChainResult run_chain(const std::vector<Event>& events, const Hyperparams& hp,
                             const SeasonalityConfig& season, int k, const McmcConfig& cfg) {
  validate(cfg);
  for (const auto& e : events) {
    if (e.period < 1 || e.period > season.n_periods)
      throw std::invalid_argument("run_chain: event period outside 1..n_periods");
    if (!std::isfinite(e.location.x) || !std::isfinite(e.location.y))
      throw std::invalid_argument("run_chain: non-finite event location");
  }
  Rng rng(cfg.seed);
  ChainState st = init_chain_state(events, hp, season, k, rng, cfg.init_kmeans);
  const CarNeighborhood nb{season.n_blocks, season.periods_per_day};
  const Eigen::VectorXd adj_eigs = car_adjacency_eigenvalues(nb);
  const auto buckets = detail::block_buckets(events, season);

  McmcConfig live = cfg;  // step sizes mutate during adaptation
  ChainResult out;
  AcceptanceCounters window;  // recent proposals, reset at each adaptation
  Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);

  // Aggressive early tuning matters: prior initialization can start c and
  // nu2 two orders of magnitude away from the posterior scale, and the walk
  // only unwinds that within the burn-in if the steps grow quickly.
  auto adapt = [](double& step, AcceptanceCounter& ctr) {
    if (ctr.proposed >= 20) {
      const double rate = ctr.rate();
      if (rate < 0.2 || rate > 0.4) {
        const double factor = std::clamp(std::exp(0.6 * (rate - 0.3)), 0.5, 2.0);
        step = std::clamp(step * factor, 1e-8, 1e4);
      }
      ctr = AcceptanceCounter{};
    }
  };

  for (long iter = 1; iter <= cfg.n_iter; ++iter) {
    detail::update_labels_impl(st, events, logphi, rng);
    update_means(st, events, hp, rng);
    update_covariances(st, events, hp, rng);
    logphi = detail::log_density_cache(events, st.mixture.components);
    update_beta(st, hp, rng);
    {
      detail::WeightUpdateWorkspace ws{&buckets, &logphi};
      AcceptanceCounter ctr;
      detail::mh_update_weights_impl(st, nb, live.rw_step_pi, ws, rng, ctr);
      out.acceptance.pi.proposed += ctr.proposed;
      out.acceptance.pi.accepted += ctr.accepted;
      window.pi.proposed += ctr.proposed;
      window.pi.accepted += ctr.accepted;
    }
    {
      AcceptanceCounters ctrs;
      detail::mh_update_car_hyper_impl(st, nb, live, adj_eigs, rng, ctrs);
      auto tally = [](AcceptanceCounter& total, AcceptanceCounter& win,
                      const AcceptanceCounter& fresh) {
        total.proposed += fresh.proposed;
        total.accepted += fresh.accepted;
        win.proposed += fresh.proposed;
        win.accepted += fresh.accepted;
      };
      tally(out.acceptance.c, window.c, ctrs.c);
      tally(out.acceptance.rho, window.rho, ctrs.rho);
      tally(out.acceptance.lognu, window.lognu, ctrs.lognu);
    }

    if (cfg.adapt_steps && iter <= cfg.burn_in && iter % 25 == 0) {
      adapt(live.rw_step_pi, window.pi);
      adapt(live.rw_step_c, window.c);
      adapt(live.rw_step_rho, window.rho);
      adapt(live.rw_step_lognu, window.lognu);
    }

    // a non-finite parameter indicates a numerical failure; abort loudly
    bool finite = st.car.pi.allFinite() && st.car.c.allFinite() && st.beta.allFinite();
    for (const auto& comp : st.mixture.components)
      finite = finite && comp.mu.allFinite() && comp.sigma.allFinite();
    if (!finite)
      throw std::runtime_error("run_chain: non-finite parameter at iteration " +
                               std::to_string(iter));

    if (iter > cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0) {
      PosteriorDraw d;
      d.iteration = iter;
      d.components = st.mixture.components;
      d.pi = st.car.pi;
      d.c = st.car.c;
      d.rho = st.car.rho;
      d.nu2 = st.car.nu2;
      d.beta = st.beta;
      out.draws.push_back(std::move(d));
    }
  }
  out.step_pi = live.rw_step_pi;
  out.step_c = live.rw_step_c;
  out.step_rho = live.rw_step_rho;
  out.step_lognu = live.rw_step_lognu;
  return out;
}

}  // namespace stmix
