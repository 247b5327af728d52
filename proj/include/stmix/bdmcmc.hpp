#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stmix/mixture.hpp"
#include "stmix/priors.hpp"
#include "stmix/rng.hpp"
#include "stmix/sampler.hpp"
#include "stmix/seasonality.hpp"
#include "stmix/simplex.hpp"

namespace stmix {

// Controls the continuous-time birth-death stage over the component count.
struct BirthDeathConfig {
  double tau{1.0};             // rate of the truncated Poisson prior on K
  int k_max{50};
  double birth_rate{1.0};      // births per unit virtual time; convention: = tau
  double stage_duration{1.0};  // virtual time simulated per iteration
};

inline void validate(const BirthDeathConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw std::invalid_argument("birth-death: tau must be positive");
  if (cfg.k_max < 1) throw std::invalid_argument("birth-death: k_max must be >= 1");
  // birth_rate 0 is allowed as the degenerate fixed-K mode (no move can fire)
  if (!(cfg.birth_rate >= 0.0))
    throw std::invalid_argument("birth-death: birth_rate must be >= 0");
  if (!(cfg.stage_duration >= 0.0))
    throw std::invalid_argument("birth-death: stage_duration must be >= 0");
}

// log P(K = k) under the prior tau^k / k! restricted to 1..k_max.
inline double truncated_poisson_logpmf(int k, const BirthDeathConfig& cfg) {
  validate(cfg);
  if (k < 1 || k > cfg.k_max)
    throw std::invalid_argument("truncated_poisson_logpmf: k outside 1..k_max");
  const double logtau = std::log(cfg.tau);
  auto logterm = [&](int i) { return i * logtau - std::lgamma(i + 1.0); };
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= cfg.k_max; ++i) best = std::max(best, logterm(i));
  double z = 0.0;
  for (int i = 1; i <= cfg.k_max; ++i) z += std::exp(logterm(i) - best);
  return logterm(k) - best - std::log(z);
}

namespace detail {

// log of L(events | mixture without component j, rows renormalized) minus
// log of L(events | full mixture). j is 0-based. Uses the cached n x K
// component log densities; only the weight mixing changes between the two.
inline double death_log_likelihood_ratio(int j, const MixtureState& m,
                                         const std::vector<Event>& events,
                                         const Eigen::MatrixXd& logphi) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  const int k = m.k();
  // surviving mass per block, summed directly so near-1 weights cannot
  // cancel catastrophically against 1 - w
  Eigen::VectorXd remaining = Eigen::VectorXd::Zero(m.weights.rows());
  for (int b = 0; b < m.weights.rows(); ++b) {
    for (int l = 0; l < k; ++l)
      if (l != j) remaining[b] += m.weights(b, l);
  }
  double acc = 0.0;
  std::vector<double> terms(k);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const int b = block_of(events[i].period, m.season) - 1;
    if (!(remaining[b] > 0.0)) return neg_inf;  // j carries the whole block
    double best_all = neg_inf, best_ex = neg_inf;
    for (int l = 0; l < k; ++l) {
      const double w = m.weights(b, l);
      terms[l] = w > 0.0 ? std::log(w) + logphi(i, l) : neg_inf;
      best_all = std::max(best_all, terms[l]);
      if (l != j) best_ex = std::max(best_ex, terms[l]);
    }
    double z_all = 0.0, z_ex = 0.0;
    for (int l = 0; l < k; ++l) {
      const double e_all = std::isfinite(terms[l]) ? std::exp(terms[l] - best_all) : 0.0;
      z_all += e_all;
      if (l != j && std::isfinite(terms[l])) z_ex += std::exp(terms[l] - best_ex);
    }
    if (!(z_ex > 0.0)) return neg_inf;  // every surviving density underflowed
    acc += (best_ex + std::log(z_ex) - std::log(remaining[b])) - (best_all + std::log(z_all));
  }
  return acc;
}

// Death rates for all K components, 0-based. The rate of component j is
// birth_rate * LR_j * P(K-1) / (K * P(K)), the form under which the no-data
// K-process is in detailed balance with the truncated Poisson prior.
inline Eigen::VectorXd all_death_rates(const ChainState& st, const std::vector<Event>& events,
                                       const BirthDeathConfig& cfg,
                                       const Eigen::MatrixXd& logphi) {
  const int k = st.k();
  Eigen::VectorXd rates = Eigen::VectorXd::Zero(k);
  if (k < 2 || cfg.birth_rate <= 0.0) return rates;  // the last component never dies
  const double dprior = truncated_poisson_logpmf(k - 1, cfg) - truncated_poisson_logpmf(k, cfg);
  const double base = std::log(cfg.birth_rate) + dprior - std::log(static_cast<double>(k));
  for (int j = 0; j < k; ++j) {
    const double lr = death_log_likelihood_ratio(j, st.mixture, events, logphi);
    // a rate near exp(700) fires instantly anyway; the cap keeps the
    // selection arithmetic below finite
    rates[j] = std::exp(std::min(base + lr, 700.0));
  }
  return rates;
}

// Insert a prior-drawn component just before the reference component, so the
// reference stays the same component and every existing weight column keeps
// its meaning. One shared birth weight w scales all blocks.
inline void apply_birth(ChainState& st, const Hyperparams& hp, Rng& rng) {
  const int k = st.k();
  const Component born = sample_prior_component(hp, st.beta, rng);
  const double w = draw_beta_one_k(rng, k);
  const CarHyperDraw hyper = sample_prior_car_hyper(rng);

  st.mixture.components.insert(st.mixture.components.begin() + (k - 1), born);
  const Eigen::Index rows = st.mixture.weights.rows();
  Eigen::MatrixXd nw(rows, k + 1);
  nw.leftCols(k - 1) = (1.0 - w) * st.mixture.weights.leftCols(k - 1);
  nw.col(k - 1).setConstant(w);
  nw.col(k) = (1.0 - w) * st.mixture.weights.col(k - 1);
  st.mixture.weights = std::move(nw);

  const Eigen::Index m = st.car.c.size();
  st.car.c.conservativeResize(m + 1);
  st.car.rho.conservativeResize(m + 1);
  st.car.nu2.conservativeResize(m + 1);
  st.car.c[m] = hyper.c;
  st.car.rho[m] = hyper.rho;
  st.car.nu2[m] = hyper.nu2;

  // only the reference component moved up one slot
  for (int& z : st.labels)
    if (z == k) z = k + 1;
}

inline void drop_entry(Eigen::VectorXd& v, int at) {
  const Eigen::Index m = v.size();
  for (Eigen::Index i = at; i + 1 < m; ++i) v[i] = v[i + 1];
  v.conservativeResize(m - 1);
}

// Remove component j (0-based) and renormalize each weight row over the
// survivors. Labels of the dead component become placeholders; every caller
// redraws labels from their full conditional before they are next read.
inline void apply_death(ChainState& st, int j) {
  const int k = st.k();
  st.mixture.components.erase(st.mixture.components.begin() + j);
  const Eigen::Index rows = st.mixture.weights.rows();
  Eigen::MatrixXd nw(rows, k - 1);
  for (Eigen::Index b = 0; b < rows; ++b) {
    int out = 0;
    double s = 0.0;
    for (int l = 0; l < k; ++l) {
      if (l == j) continue;
      nw(b, out++) = st.mixture.weights(b, l);
      s += st.mixture.weights(b, l);
    }
    if (s > 0.0) {
      nw.row(b) /= s;
    } else {
      // dead component held the entire row (saturated weights); fall back to
      // uniform so the state stays on the simplex
      nw.row(b).setConstant(1.0 / (k - 1));
    }
  }
  st.mixture.weights = std::move(nw);

  // hyper columns belong to non-reference components; if the reference died,
  // the promoted component's column disappears instead
  if (st.car.c.size() > 0) {
    const int drop = std::min<int>(j, static_cast<int>(st.car.c.size()) - 1);
    drop_entry(st.car.c, drop);
    drop_entry(st.car.rho, drop);
    drop_entry(st.car.nu2, drop);
  }

  for (int& z : st.labels) {
    if (z - 1 == j)
      z = 1;
    else if (z - 1 > j)
      z -= 1;
  }
}

// Weight rows can contain exact zeros after saturation; the transform
// rejects those, so clamp at the documented 1e-300 floor and renormalize.
inline void rebuild_pi_from_weights(ChainState& st) {
  const int k = st.k();
  const Eigen::Index rows = st.mixture.weights.rows();
  st.car.pi.resize(rows, k - 1);
  if (k == 1) return;
  for (Eigen::Index b = 0; b < rows; ++b) {
    Eigen::VectorXd w = st.mixture.weights.row(b).transpose().cwiseMax(1e-300);
    w /= w.sum();
    st.car.pi.row(b) = logit_transform(w).transpose();
  }
}

// Jump-process core; keeps the caller's component log-density cache in step
// with births and deaths. Returns the number of jumps executed.
inline int run_bd_stage_impl(ChainState& st, const std::vector<Event>& events,
                             const Hyperparams& hp, const BirthDeathConfig& cfg, Rng& rng,
                             Eigen::MatrixXd& logphi) {
  // with birth_rate 0 every rate is 0: nothing can fire and no randomness is
  // consumed, so interleaving the stage reproduces the fixed-K chain exactly
  if (cfg.stage_duration <= 0.0 || cfg.birth_rate <= 0.0) return 0;
  int jumps = 0;
  double t = 0.0;
  for (;;) {
    const int k = st.k();
    const double birth = k < cfg.k_max ? cfg.birth_rate : 0.0;
    const Eigen::VectorXd deaths = all_death_rates(st, events, cfg, logphi);
    const double total = birth + deaths.sum();
    if (!(total > 0.0)) break;  // absorbing for the rest of the stage
    t += draw_exponential(rng, total);
    if (t >= cfg.stage_duration) break;
    const double u = draw_uniform(rng) * total;
    if (u < birth) {
      apply_birth(st, hp, rng);
    } else {
      double cum = birth;
      int victim = k - 1;
      for (int j = 0; j < k; ++j) {
        cum += deaths[j];
        if (u <= cum) {
          victim = j;
          break;
        }
      }
      apply_death(st, victim);
    }
    jumps += 1;
    logphi = log_density_cache(events, st.mixture.components);
  }
  if (jumps > 0) rebuild_pi_from_weights(st);
  return jumps;
}

}  // namespace detail

// Death rate of component j (1-based) in the current state. K=1 is forced
// immortal rather than an error so callers can evaluate rates uniformly.
inline double death_rate(int j, const ChainState& st, const std::vector<Event>& events,
                         const BirthDeathConfig& cfg) {
  validate(cfg);
  if (j < 1 || j > st.k()) throw std::invalid_argument("death_rate: component index out of 1..K");
  if (st.k() == 1) return 0.0;
  const Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);
  return detail::all_death_rates(st, events, cfg, logphi)[j - 1];
}

// Simulate the birth-death jump process for stage_duration units of virtual
// time, mutating the state in place. Returns the number of jumps.
inline int run_bd_stage(ChainState& st, const std::vector<Event>& events, const Hyperparams& hp,
                        const BirthDeathConfig& cfg, Rng& rng) {
  validate(cfg);
  if (cfg.stage_duration <= 0.0 || cfg.birth_rate <= 0.0) return 0;
  Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);
  return detail::run_bd_stage_impl(st, events, hp, cfg, rng, logphi);
}

// K drawn from the truncated Poisson prior by inverse cdf.
inline int sample_prior_k(const BirthDeathConfig& cfg, Rng& rng) {
  validate(cfg);
  if (cfg.k_max == 1) return 1;  // point mass, no randomness to consume
  const double u = draw_uniform(rng);
  double cum = 0.0;
  for (int k = 1; k < cfg.k_max; ++k) {
    cum += std::exp(truncated_poisson_logpmf(k, cfg));
    if (u <= cum) return k;
  }
  return cfg.k_max;
}

// Variable-K chain: per iteration one birth-death stage, then one full
// fixed-K sweep. K of each stored draw is its component count. k_init 0
// means "draw the initial K from its prior".
inline ChainResult run_bd_chain(const std::vector<Event>& events, const Hyperparams& hp,
                                const SeasonalityConfig& season, const McmcConfig& cfg,
                                const BirthDeathConfig& bd, int k_init = 0) {
  validate(cfg);
  validate(bd);
  for (const auto& e : events) {
    if (e.period < 1 || e.period > season.n_periods)
      throw std::invalid_argument("run_bd_chain: event period outside 1..n_periods");
    if (!std::isfinite(e.location.x) || !std::isfinite(e.location.y))
      throw std::invalid_argument("run_bd_chain: non-finite event location");
  }
  Rng rng(cfg.seed);
  const int k0 = k_init > 0 ? k_init : sample_prior_k(bd, rng);
  if (k0 > bd.k_max) throw std::invalid_argument("run_bd_chain: k_init exceeds k_max");
  ChainState st = init_chain_state(events, hp, season, k0, rng, cfg.init_kmeans);
  const CarNeighborhood nb{season.n_blocks, season.periods_per_day};
  const Eigen::VectorXd adj_eigs = car_adjacency_eigenvalues(nb);
  const auto buckets = detail::block_buckets(events, season);

  McmcConfig live = cfg;
  ChainResult out;
  AcceptanceCounters window;
  Eigen::MatrixXd logphi = detail::log_density_cache(events, st.mixture.components);

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
    detail::run_bd_stage_impl(st, events, hp, bd, rng, logphi);
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

    bool finite = st.car.pi.allFinite() && st.car.c.allFinite() && st.beta.allFinite();
    for (const auto& comp : st.mixture.components)
      finite = finite && comp.mu.allFinite() && comp.sigma.allFinite();
    if (!finite)
      throw std::runtime_error("run_bd_chain: non-finite parameter at iteration " +
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
