#pragma once

#include <stdexcept>

#include "stmix/geometry.hpp"

namespace stmix {

// Calendar structure tying observation periods to seasonal blocks.
// Periods 1..n_periods wrap cyclically onto blocks 1..n_blocks, and
// periods_per_day is the offset between the same time slot on consecutive
// days inside the block cycle (used by the seasonal neighborhood).
struct SeasonalityConfig {
  int n_periods{336};
  int n_blocks{84};
  int periods_per_day{12};
};

inline void validate(const SeasonalityConfig& cfg) {
  if (cfg.n_periods < 1) throw std::invalid_argument("seasonality: n_periods must be >= 1");
  if (cfg.n_blocks < 1) throw std::invalid_argument("seasonality: n_blocks must be >= 1");
  if (cfg.periods_per_day < 1)
    throw std::invalid_argument("seasonality: periods_per_day must be >= 1");
  if (cfg.n_blocks > cfg.n_periods)
    throw std::invalid_argument("seasonality: n_blocks cannot exceed n_periods");
  if (cfg.n_blocks % cfg.periods_per_day != 0)
    throw std::invalid_argument("seasonality: periods_per_day must divide n_blocks");
}

// Block of period t (1-based). The block structure extends periodically, so
// any t >= 1 is meaningful (forecast periods may lie beyond n_periods).
inline int block_of(int t, const SeasonalityConfig& cfg) {
  if (t < 1) throw std::invalid_argument("block_of: period must be >= 1");
  return (t - 1) % cfg.n_blocks + 1;
}

// One observed point: the period it fell in and where.
struct Event {
  int period{1};
  SpatialPoint location;
};

}  // namespace stmix
