#include "sdla/walk.hpp"

namespace sdla {

WalkOutcome run_walk(const Site& start, const SitePredicate& absorbing,
                     const BoxRegion& domain, const SitePredicate& counting,
                     Rng& rng, const WalkOptions& opts) {
  if (!start.in_half_plane()) fail_pre("run_walk: start outside H");
  if (!domain.contains(start)) fail_pre("run_walk: start outside domain");

  WalkOutcome out;
  Site cur = start;
  Site prev = start;

  if (opts.allow_zero_steps && absorbing(cur)) {
    out.hit_site = cur;
    out.previous_site = cur;
    return out;
  }
  if (counting && counting(cur)) out.visits_counted++;

  for (long n = 0; n < opts.step_budget; ++n) {
    Dir d = Dir(rng.next_uint(4));
    Site next = step(cur, d);
    out.steps++;

    if (next.x2 < 0) {
      // Only reachable from a live height-0 site, i.e. the caller supplied an
      // absorbing set that does not contain L_0.
      fail_pre("run_walk: proposal below L_0 from " + cur.str());
    }
    if (next.x2 > domain.y_max && opts.reflect_top) {
      next = cur;  // lazy reflection: the stay is a full step
    } else if (next.x1 < domain.x_min || next.x1 > domain.x_max) {
      out.status = WalkStatus::LostSide;
      out.previous_site = cur;
      out.hit_site = next;
      return out;
    } else if (next.x2 > domain.y_max) {
      out.status = WalkStatus::LostTop;
      out.previous_site = cur;
      out.hit_site = next;
      return out;
    }

    prev = cur;
    cur = next;
    if (absorbing(cur)) {
      out.hit_site = cur;
      out.previous_site = prev;
      return out;
    }
    if (counting && counting(cur)) out.visits_counted++;
  }

  out.status = WalkStatus::Budget;
  out.previous_site = prev;
  out.hit_site = cur;
  return out;
}

}  // namespace sdla
