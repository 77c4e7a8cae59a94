#pragma once

// Aggregate state: the harmonic-facing site set and the engine-facing DLA
// forest, plus the shared structured-text file format.

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sdla/lattice.hpp"

namespace sdla {

// Finite site set B; the effective set seen by every harmonic operation is
// sites plus L_0 (the union with the floor is always implied).
class AggregateSet {
 public:
  AggregateSet() = default;
  explicit AggregateSet(std::vector<Site> sites, bool includes_floor = true);

  bool contains(const Site& s) const {
    return set_.count(s) != 0;
  }
  // Membership in the effective set sites in B or on L_0.
  bool effective_contains(const Site& s) const {
    return s.x2 == 0 || set_.count(s) != 0;
  }

  const std::vector<Site>& sites() const { return sites_; }  // canonical order
  bool includes_floor() const { return includes_floor_; }
  void set_includes_floor(bool v) { includes_floor_ = v; }

  int max_height() const { return max_height_; }
  int min_x1() const { return min_x1_; }
  int max_x1() const { return max_x1_; }
  bool empty() const { return sites_.empty(); }

  void insert(const Site& s);

 private:
  std::vector<Site> sites_;  // sorted (x2, x1)
  std::unordered_set<Site, SiteHash> set_;
  bool includes_floor_ = true;
  int max_height_ = 0;
  int min_x1_ = 0;
  int max_x1_ = 0;
};

// DLA state A_t = (V_t, E_t), a forest rooted on the seed.  Every non-seed
// site has exactly one incoming attachment edge.
class Aggregate {
 public:
  Aggregate() = default;
  explicit Aggregate(const std::vector<Site>& seed);

  bool contains(const Site& s) const { return vset_.count(s) != 0; }
  const std::vector<Site>& sites() const { return v_; }  // attach order
  const std::vector<DirectedEdge>& edges() const { return e_; }
  const std::unordered_map<Site, Site, SiteHash>& parent() const {
    return parent_;
  }
  size_t seed_size() const { return seed_size_; }
  double time() const { return t_; }
  void set_time(double t) { t_ = t; }
  int max_height() const { return max_height_; }
  // Attachment time of a site; 0 for seed sites.
  double attach_time(const Site& s) const {
    auto it = attach_time_.find(s);
    return it == attach_time_.end() ? 0.0 : it->second;
  }

  // Attaches e.to via edge e at time t.  Tail must be occupied, head free.
  void attach(const DirectedEdge& e, double t);

  std::vector<Site> sites_canonical() const;
  std::vector<DirectedEdge> edges_canonical() const;

  // Forest invariants: |E| = |V| - |V_0|, every non-seed site has one parent
  // that was attached earlier, every seed component touches L_0 when
  // require_floor_attachment is set.
  void validate_forest(bool require_floor_attachment = true) const;

 private:
  std::vector<Site> v_;
  std::vector<DirectedEdge> e_;
  std::unordered_set<Site, SiteHash> vset_;
  std::unordered_map<Site, Site, SiteHash> parent_;
  std::unordered_map<Site, double, SiteHash> attach_time_;
  size_t seed_size_ = 0;
  double t_ = 0.0;
  int max_height_ = 0;
};

// Shared aggregate file format (structured text, bit-exact):
//   {"edges": [[[x1,x2],[x1,x2]], ...], "includes_floor": bool,
//    "sites": [[x1,x2], ...]}
// Sites sorted by (x2, x1); edges by (from, to).  Round trips byte-exactly.
std::string serialize_aggregate(const std::vector<Site>& sites,
                                const std::vector<DirectedEdge>& edges,
                                bool includes_floor);
std::string serialize(const AggregateSet& b);
std::string serialize(const Aggregate& a);

void write_aggregate_file(const std::string& path, const std::string& body);

struct ParsedAggregate {
  std::vector<Site> sites;
  std::vector<DirectedEdge> edges;
  bool includes_floor = true;
};

// Throws Error(Precondition) with line/field context on malformed input.
ParsedAggregate parse_aggregate(const std::string& body);
ParsedAggregate load_aggregate_file(const std::string& path);

AggregateSet to_aggregate_set(const ParsedAggregate& p);
Aggregate to_aggregate(const ParsedAggregate& p);

}  // namespace sdla
