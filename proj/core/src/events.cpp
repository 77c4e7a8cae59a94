#include "sdla/events.hpp"

#include <algorithm>
#include <cmath>

namespace sdla {

uint64_t EventStream::edge_key(const DirectedEdge& e) const {
  int dir;
  int dx = e.to.x1 - e.from.x1, dy = e.to.x2 - e.from.x2;
  if (dx == 1 && dy == 0) dir = 0;
  else if (dx == -1 && dy == 0) dir = 1;
  else if (dx == 0 && dy == 1) dir = 2;
  else if (dx == 0 && dy == -1) dir = 3;
  else fail_pre("EventStream: not a nearest-neighbor edge " + e.str());
  return mix64(master_seed_, uint64_t(int64_t(e.from.x1)),
               uint64_t(int64_t(e.from.x2)), uint64_t(dir));
}

std::vector<EdgeEvent> EventStream::events_on(const DirectedEdge& e,
                                              double window_lo,
                                              double window_hi) const {
  if (window_lo < 0.0 || window_hi > horizon_)
    fail_pre("events_on: window outside [0, horizon]");
  std::vector<EdgeEvent> out;
  if (window_hi <= window_lo) return out;
  uint64_t key = edge_key(e);
  double r = rate(e);
  double t = 0.0;
  for (long j = 1;; ++j) {
    t += gap(key, j, r);
    if (t > window_hi) break;
    if (t > window_lo) out.push_back({e, t, j, mark(key, j)});
  }
  return out;
}

void EventFeed::push_entry(long seq) {
  heap_.push_back({cursors_[size_t(seq)].next_time, seq,
                   cursors_[size_t(seq)].next_index});
  std::push_heap(heap_.begin(), heap_.end(), Later{&cursors_});
}

void EventFeed::activate_site(const Site& s, double from_time) {
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    DirectedEdge e = edge_from(s, d);
    if (!e.to.in_half_plane()) continue;
    if (seen_.count(e)) continue;
    seen_.insert(e);
    if (retired_.count(e)) continue;
    EdgeCursor c;
    c.edge = e;
    c.key = stream_->edge_key(e);
    c.rate = stream_->rate(e);
    c.next_index = 0;
    c.next_time = 0.0;
    // Consume events at or before the activation time: the tail was not
    // occupied strictly before them, so they are no-ops.
    do {
      c.next_index += 1;
      c.next_time += stream_->gap(c.key, c.next_index, c.rate);
    } while (c.next_time <= from_time);
    if (c.next_time > stream_->horizon()) continue;
    cursors_.push_back(c);
    push_entry(long(cursors_.size()) - 1);
  }
}

std::optional<EdgeEvent> EventFeed::pop(double t_end) {
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), Later{&cursors_});
    QueueEntry top = heap_.back();
    heap_.pop_back();
    EdgeCursor& c = cursors_[size_t(top.seq)];
    if (top.index != c.next_index) continue;  // stale entry
    if (retired_.count(c.edge)) continue;     // head occupied everywhere
    if (c.next_time > t_end) {
      // put back; later pops may use a larger t_end
      heap_.push_back(top);
      std::push_heap(heap_.begin(), heap_.end(), Later{&cursors_});
      return std::nullopt;
    }
    EdgeEvent ev{c.edge, c.next_time, c.next_index,
                 stream_->mark(c.key, c.next_index)};
    c.advance(*stream_);
    if (c.next_time <= stream_->horizon()) push_entry(top.seq);
    popped_++;
    return ev;
  }
  return std::nullopt;
}

double InterfaceState::max_l2() const {
  double m = 0.0;
  for (const auto& [s, bt] : occupied) m = std::max(m, s.l2_norm());
  return m;
}

int InterfaceState::max_height() const {
  int m = 0;
  for (const auto& [s, bt] : occupied) m = std::max(m, s.x2);
  return m;
}

std::vector<Site> InterfaceState::sites_canonical() const {
  std::vector<Site> out;
  out.reserve(occupied.size());
  for (const auto& [s, bt] : occupied) out.push_back(s);
  std::sort(out.begin(), out.end(), SiteCanonicalLess{});
  return out;
}

InterfaceState simulate_interface(const std::vector<Site>& seed_sites,
                                  double t, const BoxRegion& truncation,
                                  const EventStream& stream) {
  if (t > stream.horizon()) fail_pre("simulate_interface: t beyond horizon");
  InterfaceState st;
  EventFeed feed(stream);
  for (const Site& s : seed_sites) {
    if (!truncation.contains(s))
      fail_pre("simulate_interface: seed outside truncation");
    if (st.occupied.emplace(s, 0.0).second) feed.activate_site(s, 0.0);
  }
  while (auto ev = feed.pop(t)) {
    st.events_processed++;
    const Site& y = ev->edge.to;
    if (st.occupied.count(y)) {
      feed.retire(ev->edge);
      continue;
    }
    // Tail is occupied by construction (only occupied sites activate edges).
    st.occupied.emplace(y, ev->time);
    st.t = ev->time;
    if (!truncation.contains(y)) {
      st.truncation_hit = true;
      st.hit_time = ev->time;
      return st;
    }
    feed.activate_site(y, ev->time);
  }
  st.t = t;
  return st;
}

}  // namespace sdla
