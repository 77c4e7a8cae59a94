#pragma once

// Simple-random-walk primitives on H: stepping, hitting times, truncated
// domain bookkeeping.

#include <functional>
#include <optional>

#include "sdla/lattice.hpp"
#include "sdla/rng.hpp"

namespace sdla {

enum class WalkStatus {
  Absorbed,   // entered the absorbing set
  LostSide,   // left the domain through a side boundary
  LostTop,    // left the domain through the top (only when top absorbs)
  Budget,     // step budget exhausted; replica must be discarded, not reused
};

struct WalkOutcome {
  Site hit_site{};       // absorbing site (valid when status == Absorbed)
  Site previous_site{};  // site occupied one step earlier
  long steps = 0;
  long visits_counted = 0;
  WalkStatus status = WalkStatus::Absorbed;
};

using SitePredicate = std::function<bool(const Site&)>;

struct WalkOptions {
  long step_budget = 10'000'000;
  // tau-bar allows absorption at step 0; tau requires at least one step.
  bool allow_zero_steps = true;
  // When set, an up-proposal from domain.y_max stays in place (lazy
  // reflection); the stay is a step and re-counts the site.  When unset the
  // top is a lost boundary like the sides.
  bool reflect_top = false;
};

// Simulates a walk from `start` until it enters `absorbing` or exits
// `domain`.  Counting (when supplied) tallies every time index, including 0,
// at which the walk occupies a counted site strictly before absorption.  A
// proposal below L_0 from a non-absorbing floor site is a contract violation
// and throws: every absorbing set in this artifact contains L_0.
WalkOutcome run_walk(const Site& start, const SitePredicate& absorbing,
                     const BoxRegion& domain, const SitePredicate& counting,
                     Rng& rng, const WalkOptions& opts = {});

inline WalkOutcome run_walk(const Site& start, const SitePredicate& absorbing,
                            const BoxRegion& domain, Rng& rng,
                            const WalkOptions& opts = {}) {
  return run_walk(start, absorbing, domain, nullptr, rng, opts);
}

}  // namespace sdla
