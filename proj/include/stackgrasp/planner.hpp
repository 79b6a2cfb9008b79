#pragma once

// Manipulation ordering: turns pairwise relation predictions into a directed
// "is on top of" graph and derives safe grasp orders from it. The structure
// is a DAG rather than a strict tree, since an object may rest on two
// supports. An edge a->b reads "a is on b": a must be removed before b is
// safely graspable. Cycles (possible from inconsistent predictions) are
// reported, never silently broken; explicit cycle breaking is opt-in.

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "stackgrasp/errors.hpp"
#include "stackgrasp/scene.hpp"

namespace stackgrasp {

struct RelationGraph {
  std::vector<int> nodes;                       // ascending object ids
  std::map<std::pair<int, int>, double> edges;  // (a,b) => confidence, a on b

  bool has_edge(int a, int b) const { return edges.count({a, b}) > 0; }

  std::vector<int> incoming(int b) const {
    std::vector<int> out;
    for (const auto& [e, w] : edges)
      if (e.second == b) out.push_back(e.first);
    return out;
  }
};

// Both directional 3-simplexes for an unordered object pair (i < j).
struct PairPrediction {
  int id_i = 0, id_j = 0;
  std::array<double, 3> probs_ij{};  // ordered (i,j): {On, Under, NoRel}
  std::array<double, 3> probs_ji{};  // ordered (j,i)
};

// Reconciles the two directional predictions of a pair. The two heads vote:
// score(kind) = probs_ij[kind] + probs_ji[inverse(kind)]. Ties break in the
// order On > Under > NoRel. Returns the relation in canonical (i,j) direction
// plus the winning score halved, a [0,1] confidence.
inline std::pair<Relation, double> symmetrize_pair_scored(const PairPrediction& p) {
  std::array<double, 3> score{};
  for (int k = 0; k < 3; ++k) {
    auto kind = static_cast<RelationKind>(k);
    auto inv = relation_inverse(kind);
    score[k] = p.probs_ij[k] + p.probs_ji[static_cast<int>(inv)];
  }
  int best = 0;
  for (int k = 1; k < 3; ++k)
    if (score[k] > score[best]) best = k;
  Relation r;
  r.from_id = p.id_i;
  r.to_id = p.id_j;
  r.kind = static_cast<RelationKind>(best);
  return {r, 0.5 * score[best]};
}

inline Relation symmetrize_pair(const PairPrediction& p) {
  return symmetrize_pair_scored(p).first;
}

// One edge a->b per On(a,b); Under(a,b) contributes b->a; NoRel contributes
// nothing. Edge weight carries the relation confidence when provided.
inline RelationGraph build_graph(const std::vector<ObjectBox>& objects,
                                 const std::vector<Relation>& rels,
                                 const std::vector<double>& confidences = {}) {
  RelationGraph g;
  std::set<int> known;
  for (const auto& o : objects) {
    g.nodes.push_back(o.id);
    known.insert(o.id);
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  for (size_t i = 0; i < rels.size(); ++i) {
    const Relation& r = rels[i];
    if (!known.count(r.from_id) || !known.count(r.to_id))
      throw DataError("relation references unknown object id");
    double w = i < confidences.size() ? confidences[i] : 1.0;
    std::pair<int, int> e;
    if (r.kind == RelationKind::On) e = {r.from_id, r.to_id};
    else if (r.kind == RelationKind::Under) e = {r.to_id, r.from_id};
    else continue;
    std::pair<int, int> rev{e.second, e.first};
    if (g.edges.count(rev))
      throw ConflictError("conflicting relations: both " + std::to_string(e.first) +
                          "->" + std::to_string(e.second) + " and its reverse asserted");
    auto it = g.edges.find(e);
    if (it == g.edges.end()) g.edges[e] = w;
    else it->second = std::max(it->second, w);
  }
  return g;
}

// Ids with nothing on top of them: no incoming ON-edge from any remaining node.
inline std::set<int> graspable_set(const RelationGraph& g) {
  std::set<int> out(g.nodes.begin(), g.nodes.end());
  for (const auto& [e, w] : g.edges) out.erase(e.second);
  return out;
}

// All elementary cycles of length >= 2, each reported once with its smallest
// node first. Empty iff the graph is a DAG. Scene graphs are small, so a
// path-marking DFS rooted at each minimum node is enough.
inline std::vector<std::vector<int>> detect_cycles(const RelationGraph& g) {
  std::map<int, std::vector<int>> adj;
  for (const auto& [e, w] : g.edges) adj[e.first].push_back(e.second);
  for (auto& [n, v] : adj) std::sort(v.begin(), v.end());

  std::vector<std::vector<int>> cycles;
  std::vector<int> path;
  std::set<int> on_path;

  auto dfs = [&](auto&& self, int start, int node) -> void {
    path.push_back(node);
    on_path.insert(node);
    for (int next : adj[node]) {
      if (next < start) continue;  // cycles through smaller ids were found earlier
      if (next == start) {
        cycles.push_back(path);
      } else if (!on_path.count(next)) {
        self(self, start, next);
      }
    }
    on_path.erase(node);
    path.pop_back();
  };

  for (int start : g.nodes) {
    path.clear();
    on_path.clear();
    dfs(dfs, start, start);
  }
  return cycles;
}

namespace detail {

// Kahn's algorithm with an ascending-id tie break; nodes restricted to
// `keep` when non-empty. Throws CycleError when the kept subgraph cycles.
inline std::vector<int> kahn_order(const RelationGraph& g, const std::set<int>& keep) {
  std::map<int, int> indeg;
  std::map<int, std::vector<int>> adj;
  auto kept = [&](int n) { return keep.empty() || keep.count(n) > 0; };
  for (int n : g.nodes)
    if (kept(n)) indeg[n] = 0;
  for (const auto& [e, w] : g.edges) {
    if (!kept(e.first) || !kept(e.second)) continue;
    adj[e.first].push_back(e.second);
    indeg[e.second]++;
  }
  std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
  for (const auto& [n, d] : indeg)
    if (d == 0) ready.push(n);
  std::vector<int> order;
  while (!ready.empty()) {
    int n = ready.top();
    ready.pop();
    order.push_back(n);
    for (int m : adj[n])
      if (--indeg[m] == 0) ready.push(m);
  }
  if (order.size() != indeg.size())
    throw CycleError("relation graph contains a cycle", detect_cycles(g));
  return order;
}

}  // namespace detail

// Topological clearing order over all nodes; every prefix removal leaves a
// valid graph. Deterministic: ties resolve by ascending id.
inline std::vector<int> full_clearing_order(const RelationGraph& g) {
  return detail::kahn_order(g, {});
}

// Minimal blocker order for one target: every node with an ON-path down to
// the target, topologically ordered, target last.
inline std::vector<int> grasp_order_for_target(const RelationGraph& g, int target) {
  if (std::find(g.nodes.begin(), g.nodes.end(), target) == g.nodes.end())
    throw DataError("target id " + std::to_string(target) + " not in graph");
  // ancestors via reverse reachability
  std::map<int, std::vector<int>> radj;
  for (const auto& [e, w] : g.edges) radj[e.second].push_back(e.first);
  std::set<int> need{target};
  std::vector<int> stack{target};
  while (!stack.empty()) {
    int n = stack.back();
    stack.pop_back();
    for (int p : radj[n])
      if (need.insert(p).second) stack.push_back(p);
  }
  return detail::kahn_order(g, need);
}

// Removes the lowest-confidence edge of each reported cycle until the graph
// is acyclic. Ties break on the lexicographically smallest (from, to) pair.
// Returns the removed edges.
inline std::vector<std::pair<int, int>> break_cycles_weakest_edge(RelationGraph& g) {
  std::vector<std::pair<int, int>> removed;
  for (;;) {
    auto cycles = detect_cycles(g);
    if (cycles.empty()) break;
    const auto& cyc = cycles.front();
    std::pair<int, int> worst{-1, -1};
    double worst_w = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < cyc.size(); ++i) {
      std::pair<int, int> e{cyc[i], cyc[(i + 1) % cyc.size()]};
      double w = g.edges.at(e);
      if (w < worst_w || (w == worst_w && e < worst)) {
        worst_w = w;
        worst = e;
      }
    }
    g.edges.erase(worst);
    removed.push_back(worst);
  }
  return removed;
}

// {"nodes":[...],"edges":[[a,b],...],"order":[...]} with fixed key order.
inline std::string relation_tree_json(const RelationGraph& g, const std::vector<int>& order) {
  std::string s = "{\"nodes\":[";
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(g.nodes[i]);
  }
  s += "],\"edges\":[";
  bool first = true;
  for (const auto& [e, w] : g.edges) {
    if (!first) s += ",";
    first = false;
    s += "[" + std::to_string(e.first) + "," + std::to_string(e.second) + "]";
  }
  s += "],\"order\":[";
  for (size_t i = 0; i < order.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(order[i]);
  }
  s += "]}";
  return s;
}

}  // namespace stackgrasp
