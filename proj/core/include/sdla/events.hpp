#pragma once

// Graphical representation: deterministic per-edge Poisson event streams
// with uniform marks, and the pure-growth interface process built on them.
//
// Edge x->y carries a Poisson clock of intensity c_dom * (sqrt(x2) v 1) and
// an i.i.d. U(0,1) mark per event.  Both are pure functions of
// (master_seed, x1, x2, direction, event index): gaps come from even
// counters of the edge substream, marks from odd counters, so the same edge
// sees the same events in every run that shares the seed.

#include <optional>
#include <queue>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sdla/lattice.hpp"
#include "sdla/rng.hpp"

namespace sdla {

struct EdgeEvent {
  DirectedEdge edge;
  double time = 0.0;
  long index = 0;    // j-th event of this edge, counted from time 0
  double mark = 0.0; // U(0,1), independent of the times
};

class EventStream {
 public:
  EventStream(uint64_t master_seed, double horizon, double c_dom = 1.0)
      : master_seed_(master_seed), horizon_(horizon), c_dom_(c_dom) {
    if (horizon < 0.0) fail_pre("EventStream: negative horizon");
    if (c_dom < 1.0) fail_pre("EventStream: c_dom must be >= 1");
  }

  uint64_t master_seed() const { return master_seed_; }
  double horizon() const { return horizon_; }
  double c_dom() const { return c_dom_; }

  // Dominating intensity of edge x->y: c_dom * (sqrt(x2) v 1), x = tail.
  double rate(const DirectedEdge& e) const {
    double base = e.from.x2 > 0 ? std::sqrt(double(e.from.x2)) : 1.0;
    return c_dom_ * std::max(base, 1.0);
  }

  uint64_t edge_key(const DirectedEdge& e) const;

  // j-th gap / mark of the edge substream (j >= 1).
  double gap(uint64_t key, long j, double rate) const {
    return -std::log(unit_at(key, uint64_t(2 * j - 2))) / rate;
  }
  double mark(uint64_t key, long j) const {
    return unit_at(key, uint64_t(2 * j - 1));
  }

  // All events of the edge inside [window_lo, window_hi]; repeated calls
  // agree exactly.
  std::vector<EdgeEvent> events_on(const DirectedEdge& e, double window_lo,
                                   double window_hi) const;

 private:
  uint64_t master_seed_;
  double horizon_;
  double c_dom_;
};

// Lazy per-edge cursor: the next pending event of one edge.
struct EdgeCursor {
  DirectedEdge edge;
  uint64_t key = 0;
  double rate = 0.0;
  long next_index = 0;   // index of the event currently exposed
  double next_time = 0.0;

  void advance(const EventStream& s) {
    next_index += 1;
    next_time += s.gap(key, next_index, rate);
  }
};

// Merged, time-ordered feed over the active edges of any number of engines.
// Simultaneous float times break ties by lexicographic edge order, then
// index, so replay is deterministic.
class EventFeed {
 public:
  explicit EventFeed(const EventStream& stream) : stream_(&stream) {}

  // Activates the four out-edges of an occupied site; events at or before
  // from_time are skipped (their indices are consumed, the ordering sees
  // only strictly later events).
  void activate_site(const Site& s, double from_time);

  // Next event at time <= t_end, or nullopt.  The edge cursor advances; call
  // retire(edge) to stop scheduling an edge whose head is occupied
  // everywhere.
  std::optional<EdgeEvent> pop(double t_end);
  void retire(const DirectedEdge& e) { retired_.insert(e); }

  long popped() const { return popped_; }

 private:
  struct QueueEntry {
    double time;
    long seq;  // index into cursors_
    long index;
  };
  struct Later {
    const std::vector<EdgeCursor>* cursors;
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
      if (a.time != b.time) return a.time > b.time;
      const DirectedEdge& ea = (*cursors)[size_t(a.seq)].edge;
      const DirectedEdge& eb = (*cursors)[size_t(b.seq)].edge;
      EdgeLexLess lt;
      if (!(ea == eb)) return lt(eb, ea);
      return a.index > b.index;
    }
  };

  const EventStream* stream_;
  std::vector<EdgeCursor> cursors_;
  std::unordered_set<DirectedEdge, EdgeHash> seen_;
  std::unordered_set<DirectedEdge, EdgeHash> retired_;
  std::vector<QueueEntry> heap_;
  long popped_ = 0;

  void push_entry(long seq);
};

// Interface process state: occupied sites with their birth times, clock,
// truncation flag.
struct InterfaceState {
  std::unordered_map<Site, double, SiteHash> occupied;  // site -> birth time
  double t = 0.0;
  bool truncation_hit = false;
  double hit_time = 0.0;
  long events_processed = 0;

  bool contains(const Site& s) const { return occupied.count(s) != 0; }
  size_t size() const { return occupied.size(); }
  double max_l2() const;
  int max_height() const;
  std::vector<Site> sites_canonical() const;
};

// Event-driven construction of the interface: an event on x->y with x
// occupied and y vacant occupies y (marks ignored).  Occupying a site
// outside `truncation` sets the flag and halts; the partial state is
// returned, never silently clipped.
InterfaceState simulate_interface(const std::vector<Site>& seed_sites,
                                  double t, const BoxRegion& truncation,
                                  const EventStream& stream);

}  // namespace sdla
