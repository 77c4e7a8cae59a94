#pragma once

// Geometry of the upper half-plane lattice H = {(x1, x2) : x2 >= 0} and the
// small value types shared by every module.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdla {

struct Site {
  int x1 = 0;  // horizontal
  int x2 = 0;  // height, >= 0 inside H

  friend bool operator==(const Site&, const Site&) = default;

  bool in_half_plane() const { return x2 >= 0; }
  int l1_norm() const { return std::abs(x1) + std::abs(x2); }
  double l2_norm() const {
    return std::sqrt(double(x1) * x1 + double(x2) * x2);
  }
  std::string str() const {
    return "(" + std::to_string(x1) + "," + std::to_string(x2) + ")";
  }
};

// Canonical order used for serialization and deterministic iteration:
// by height first, then horizontal coordinate.
struct SiteCanonicalLess {
  bool operator()(const Site& a, const Site& b) const {
    if (a.x2 != b.x2) return a.x2 < b.x2;
    return a.x1 < b.x1;
  }
};

inline int l1_dist(const Site& a, const Site& b) {
  return std::abs(a.x1 - b.x1) + std::abs(a.x2 - b.x2);
}

// Step directions in a fixed order; the order is part of the deterministic
// replay contract (uniform draws map to directions by index).
enum class Dir : int { PlusX = 0, MinusX = 1, Up = 2, Down = 3 };

inline Site step(const Site& s, Dir d) {
  switch (d) {
    case Dir::PlusX: return {s.x1 + 1, s.x2};
    case Dir::MinusX: return {s.x1 - 1, s.x2};
    case Dir::Up: return {s.x1, s.x2 + 1};
    case Dir::Down: return {s.x1, s.x2 - 1};
  }
  return s;
}

struct DirectedEdge {
  Site from;
  Site to;

  friend bool operator==(const DirectedEdge&, const DirectedEdge&) = default;

  bool nearest_neighbor() const { return l1_dist(from, to) == 1; }
  std::string str() const { return from.str() + "->" + to.str(); }
};

inline DirectedEdge edge_from(const Site& s, Dir d) { return {s, step(s, d)}; }

struct EdgeCanonicalLess {
  bool operator()(const DirectedEdge& a, const DirectedEdge& b) const {
    SiteCanonicalLess lt;
    if (!(a.from == b.from)) return lt(a.from, b.from);
    return lt(a.to, b.to);
  }
};

// Lexicographic order on (from.x1, from.x2, to.x1, to.x2); used to break
// simultaneous-event ties deterministically.
struct EdgeLexLess {
  bool operator()(const DirectedEdge& a, const DirectedEdge& b) const {
    if (a.from.x1 != b.from.x1) return a.from.x1 < b.from.x1;
    if (a.from.x2 != b.from.x2) return a.from.x2 < b.from.x2;
    if (a.to.x1 != b.to.x1) return a.to.x1 < b.to.x1;
    return a.to.x2 < b.to.x2;
  }
};

struct BoxRegion {
  int x_min = 0;
  int x_max = 0;
  int y_min = 0;
  int y_max = 0;

  friend bool operator==(const BoxRegion&, const BoxRegion&) = default;

  bool valid() const { return x_min <= x_max && 0 <= y_min && y_min <= y_max; }
  bool contains(const Site& s) const {
    return s.x1 >= x_min && s.x1 <= x_max && s.x2 >= y_min && s.x2 <= y_max;
  }
  bool contains(const BoxRegion& o) const {
    return o.x_min >= x_min && o.x_max <= x_max && o.y_min >= y_min &&
           o.y_max <= y_max;
  }
  long width() const { return long(x_max) - x_min + 1; }
  long height() const { return long(y_max) - y_min + 1; }
  long cells() const { return width() * height(); }
  std::string str() const {
    return "[" + std::to_string(x_min) + "," + std::to_string(x_max) + "]x[" +
           std::to_string(y_min) + "," + std::to_string(y_max) + "]";
  }
};

// 2-4 lattice neighbors of s that lie in H (x2 = -1 proposals excluded).
inline int neighbors(const Site& s, std::array<Site, 4>& out) {
  int n = 0;
  for (Dir d : {Dir::PlusX, Dir::MinusX, Dir::Up, Dir::Down}) {
    Site t = step(s, d);
    if (t.in_half_plane()) out[n++] = t;
  }
  return n;
}

inline std::vector<Site> neighbors(const Site& s) {
  std::array<Site, 4> buf;
  int n = neighbors(s, buf);
  return std::vector<Site>(buf.begin(), buf.begin() + n);
}

struct SiteHash {
  size_t operator()(const Site& s) const {
    uint64_t z = (uint64_t(uint32_t(s.x1)) << 32) | uint32_t(s.x2);
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdULL;
    z ^= z >> 33;
    return size_t(z);
  }
};

struct EdgeHash {
  size_t operator()(const DirectedEdge& e) const {
    SiteHash h;
    return h(e.from) * 0x9e3779b97f4a7c15ULL + h(e.to);
  }
};

// Error taxonomy shared across the library.  Precondition violations and
// numerical failures carry distinct codes so the CLI can map them to exit
// statuses.
enum class ErrorCode { Precondition = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail_pre(const std::string& what) {
  throw Error(ErrorCode::Precondition, what);
}
[[noreturn]] inline void fail_num(const std::string& what) {
  throw Error(ErrorCode::Numerical, what);
}

}  // namespace sdla
