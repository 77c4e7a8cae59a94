#include "sdla/aggregate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sdla {

AggregateSet::AggregateSet(std::vector<Site> sites, bool includes_floor)
    : includes_floor_(includes_floor) {
  for (const Site& s : sites) insert(s);
}

void AggregateSet::insert(const Site& s) {
  if (!s.in_half_plane()) fail_pre("AggregateSet: site outside H " + s.str());
  if (!set_.insert(s).second) return;
  auto it = std::lower_bound(sites_.begin(), sites_.end(), s,
                             SiteCanonicalLess{});
  sites_.insert(it, s);
  max_height_ = std::max(max_height_, s.x2);
  if (sites_.size() == 1) {
    min_x1_ = max_x1_ = s.x1;
  } else {
    min_x1_ = std::min(min_x1_, s.x1);
    max_x1_ = std::max(max_x1_, s.x1);
  }
}

Aggregate::Aggregate(const std::vector<Site>& seed) {
  for (const Site& s : seed) {
    if (!s.in_half_plane()) fail_pre("Aggregate: seed site outside H");
    if (vset_.insert(s).second) {
      v_.push_back(s);
      max_height_ = std::max(max_height_, s.x2);
    }
  }
  seed_size_ = v_.size();
}

void Aggregate::attach(const DirectedEdge& e, double t) {
  if (!e.nearest_neighbor()) fail_pre("attach: not a nearest-neighbor edge");
  if (!vset_.count(e.from)) fail_pre("attach: tail not occupied " + e.str());
  if (vset_.count(e.to)) fail_pre("attach: head already occupied " + e.str());
  if (!e.to.in_half_plane()) fail_pre("attach: head outside H");
  vset_.insert(e.to);
  v_.push_back(e.to);
  e_.push_back(e);
  parent_[e.to] = e.from;
  attach_time_[e.to] = t;
  t_ = t;
  max_height_ = std::max(max_height_, e.to.x2);
}

std::vector<Site> Aggregate::sites_canonical() const {
  std::vector<Site> out = v_;
  std::sort(out.begin(), out.end(), SiteCanonicalLess{});
  return out;
}

std::vector<DirectedEdge> Aggregate::edges_canonical() const {
  std::vector<DirectedEdge> out = e_;
  std::sort(out.begin(), out.end(), EdgeCanonicalLess{});
  return out;
}

void Aggregate::validate_forest(bool require_floor_attachment) const {
  if (e_.size() != v_.size() - seed_size_)
    fail_pre("forest: |E| != |V| - |V_0|");
  for (size_t i = seed_size_; i < v_.size(); ++i) {
    auto it = parent_.find(v_[i]);
    if (it == parent_.end()) fail_pre("forest: non-seed site without parent");
    if (!vset_.count(it->second)) fail_pre("forest: parent not in V");
  }
  if (!require_floor_attachment) return;
  // Each connected component of V must contain a floor site.
  std::unordered_map<Site, int, SiteHash> comp;
  int ncomp = 0;
  for (const Site& s : v_) {
    if (comp.count(s)) continue;
    int id = ncomp++;
    std::vector<Site> stack{s};
    comp[s] = id;
    bool touches_floor = false;
    while (!stack.empty()) {
      Site cur = stack.back();
      stack.pop_back();
      if (cur.x2 == 0) touches_floor = true;
      for (const Site& nb : neighbors(cur)) {
        if (vset_.count(nb) && !comp.count(nb)) {
          comp[nb] = id;
          stack.push_back(nb);
        }
      }
    }
    if (!touches_floor) fail_pre("forest: component not attached to L_0");
  }
}

namespace {

void append_site(std::string& out, const Site& s) {
  out += "[";
  out += std::to_string(s.x1);
  out += ",";
  out += std::to_string(s.x2);
  out += "]";
}

}  // namespace

std::string serialize_aggregate(const std::vector<Site>& sites,
                                const std::vector<DirectedEdge>& edges,
                                bool includes_floor) {
  std::vector<Site> ss = sites;
  std::sort(ss.begin(), ss.end(), SiteCanonicalLess{});
  std::vector<DirectedEdge> es = edges;
  std::sort(es.begin(), es.end(), EdgeCanonicalLess{});

  std::string out = "{\"edges\": [";
  for (size_t i = 0; i < es.size(); ++i) {
    if (i) out += ", ";
    out += "[";
    append_site(out, es[i].from);
    out += ",";
    append_site(out, es[i].to);
    out += "]";
  }
  out += "], \"includes_floor\": ";
  out += includes_floor ? "true" : "false";
  out += ", \"sites\": [";
  for (size_t i = 0; i < ss.size(); ++i) {
    if (i) out += ", ";
    append_site(out, ss[i]);
  }
  out += "]}\n";
  return out;
}

std::string serialize(const AggregateSet& b) {
  return serialize_aggregate(b.sites(), {}, b.includes_floor());
}

std::string serialize(const Aggregate& a) {
  return serialize_aggregate(a.sites_canonical(), a.edges_canonical(), true);
}

void write_aggregate_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_pre("cannot open for write: " + path);
  f << body;
  if (!f) fail_num("write failed: " + path);
}

namespace {

Site parse_site(const nlohmann::json& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer())
    fail_pre("aggregate file: " + ctx + ": expected [x1,x2], got " + j.dump());
  Site s{j[0].get<int>(), j[1].get<int>()};
  if (!s.in_half_plane())
    fail_pre("aggregate file: " + ctx + ": site below L_0: " + s.str());
  return s;
}

}  // namespace

ParsedAggregate parse_aggregate(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    fail_pre(std::string("aggregate file: ") + e.what());
  }
  if (!j.is_object()) fail_pre("aggregate file: top level must be an object");

  ParsedAggregate out;
  if (!j.contains("sites") || !j["sites"].is_array())
    fail_pre("aggregate file: missing 'sites' array");
  for (size_t i = 0; i < j["sites"].size(); ++i)
    out.sites.push_back(parse_site(j["sites"][i],
                                   "sites[" + std::to_string(i) + "]"));
  if (j.contains("edges")) {
    if (!j["edges"].is_array()) fail_pre("aggregate file: 'edges' not array");
    for (size_t i = 0; i < j["edges"].size(); ++i) {
      const auto& je = j["edges"][i];
      std::string ctx = "edges[" + std::to_string(i) + "]";
      if (!je.is_array() || je.size() != 2)
        fail_pre("aggregate file: " + ctx + ": expected [[..],[..]]");
      DirectedEdge e{parse_site(je[0], ctx + ".from"),
                     parse_site(je[1], ctx + ".to")};
      if (!e.nearest_neighbor())
        fail_pre("aggregate file: " + ctx + ": not nearest-neighbor");
      out.edges.push_back(e);
    }
  }
  if (j.contains("includes_floor")) {
    if (!j["includes_floor"].is_boolean())
      fail_pre("aggregate file: 'includes_floor' not a bool");
    out.includes_floor = j["includes_floor"].get<bool>();
  }
  return out;
}

ParsedAggregate load_aggregate_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_pre("cannot open aggregate file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_aggregate(ss.str());
}

AggregateSet to_aggregate_set(const ParsedAggregate& p) {
  return AggregateSet(p.sites, p.includes_floor);
}

Aggregate to_aggregate(const ParsedAggregate& p) {
  // Rebuild the forest: roots are sites without an incoming edge.
  std::unordered_set<Site, SiteHash> heads;
  for (const auto& e : p.edges) heads.insert(e.to);
  std::vector<Site> seed;
  for (const Site& s : p.sites)
    if (!heads.count(s)) seed.push_back(s);
  Aggregate a(seed);
  // Attach edges in dependency order.
  std::vector<DirectedEdge> pending = p.edges;
  double t = 0.0;
  while (!pending.empty()) {
    size_t before = pending.size();
    std::vector<DirectedEdge> next;
    for (const auto& e : pending) {
      if (a.contains(e.from) && !a.contains(e.to)) {
        a.attach(e, t);
      } else if (!a.contains(e.to)) {
        next.push_back(e);
      } else {
        fail_pre("aggregate file: duplicate attachment for " + e.to.str());
      }
    }
    if (next.size() == before)
      fail_pre("aggregate file: edges do not form a forest over sites");
    pending.swap(next);
  }
  a.set_time(0.0);
  return a;
}

}  // namespace sdla
