#pragma once

// Independent dense oracles for the solver tests.  These deliberately use
// the backward (per-start) formulation and plain Gauss-Seidel so they share
// no code path with StripSolver's forward visit-density solve.

#include <cmath>
#include <functional>
#include <vector>

#include "sdla/lattice.hpp"

namespace sdla_test {

using sdla::BoxRegion;
using sdla::Site;

// Expected number of visits to `counted` sites strictly before entering
// `absorbing`, for a walk started at `start` on the truncated strip
// (absorbing sides, lazy-reflecting top).  Visits at time 0 count when the
// start is a counted site.
inline double expected_visits_oracle(
    const Site& start, const std::function<bool(const Site&)>& absorbing,
    const std::function<bool(const Site&)>& counted, const BoxRegion& domain,
    double tol = 1e-12) {
  long w = domain.width();
  long h = domain.height();
  std::vector<double> u(size_t(w * h), 0.0);
  auto idx = [&](int x1, int x2) {
    return size_t(x2 - domain.y_min) * size_t(w) + size_t(x1 - domain.x_min);
  };
  auto val = [&](int x1, int x2) -> double {
    if (x1 < domain.x_min || x1 > domain.x_max) return 0.0;  // side exit
    if (x2 < domain.y_min) return 0.0;
    Site s{x1, x2};
    if (absorbing(s)) return 0.0;
    return u[idx(x1, x2)];
  };
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double maxdiff = 0.0;
    for (int x2 = domain.y_min; x2 <= domain.y_max; ++x2) {
      for (int x1 = domain.x_min; x1 <= domain.x_max; ++x1) {
        Site s{x1, x2};
        if (absorbing(s)) continue;
        double self = counted(s) ? 1.0 : 0.0;
        double up = (x2 == domain.y_max) ? u[idx(x1, x2)] : val(x1, x2 + 1);
        double t = self + 0.25 * (val(x1 - 1, x2) + val(x1 + 1, x2) +
                                  val(x1, x2 - 1) + up);
        double d = std::fabs(t - u[idx(x1, x2)]);
        if (d > maxdiff) maxdiff = d;
        u[idx(x1, x2)] = t;
      }
    }
    if (maxdiff < tol) break;
  }
  return absorbing(start) ? 0.0 : u[idx(start.x1, start.x2)];
}

// Backward per-edge oracle for the finite-N harmonic measure on the
// truncated strip: sums, over the free sites of the source line, the
// probability that the walk first enters the absorbing set at e.from with
// previous site e.to.
inline double edge_measure_oracle(
    const sdla::DirectedEdge& e,
    const std::function<bool(const Site&)>& absorbing, const BoxRegion& domain,
    double tol = 1e-12) {
  long w = domain.width();
  long h = domain.height();
  std::vector<double> u(size_t(w * h), 0.0);
  auto idx = [&](int x1, int x2) {
    return size_t(x2) * size_t(w) + size_t(x1 - domain.x_min);
  };
  auto val = [&](const Site& from, int x1, int x2) -> double {
    // Value of stepping from `from` to (x1, x2).
    if (x1 < domain.x_min || x1 > domain.x_max) return 0.0;
    if (x2 < 0) return 0.0;
    Site s{x1, x2};
    if (absorbing(s))
      return (s == e.from && from == e.to) ? 1.0 : 0.0;
    return u[idx(x1, x2)];
  };
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double maxdiff = 0.0;
    for (int x2 = 0; x2 <= domain.y_max; ++x2) {
      for (int x1 = domain.x_min; x1 <= domain.x_max; ++x1) {
        Site s{x1, x2};
        if (absorbing(s)) continue;
        double up = (x2 == domain.y_max) ? u[idx(x1, x2)]
                                         : val(s, x1, x2 + 1);
        double t = 0.25 * (val(s, x1 - 1, x2) + val(s, x1 + 1, x2) +
                           val(s, x1, x2 - 1) + up);
        double d = std::fabs(t - u[idx(x1, x2)]);
        if (d > maxdiff) maxdiff = d;
        u[idx(x1, x2)] = t;
      }
    }
    if (maxdiff < tol) break;
  }
  double sum = 0.0;
  for (int x1 = domain.x_min; x1 <= domain.x_max; ++x1) {
    Site z{x1, domain.y_max};
    if (!absorbing(z)) sum += u[idx(x1, domain.y_max)];
  }
  return sum;
}

}  // namespace sdla_test
