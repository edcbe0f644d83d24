#pragma once

// Open population of monitored entities, the enduring communication network
// over them, and analyst-defined cells.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/state_filter.hpp"
#include "threatnet/types.hpp"

namespace threatnet {

enum class EdgeOrigin { Kinship, Affiliation, PriorCrime, ObservedCommunication };

constexpr std::string_view to_string(EdgeOrigin o) {
  switch (o) {
    case EdgeOrigin::Kinship: return "kinship";
    case EdgeOrigin::Affiliation: return "affiliation";
    case EdgeOrigin::PriorCrime: return "prior-crime";
    case EdgeOrigin::ObservedCommunication: return "observed-communication";
  }
  return "observed-communication";
}

inline EdgeOrigin edge_origin_from_string(std::string_view s) {
  for (auto o : {EdgeOrigin::Kinship, EdgeOrigin::Affiliation, EdgeOrigin::PriorCrime, EdgeOrigin::ObservedCommunication})
    if (to_string(o) == s) return o;
  throw Error(ErrorCode::InvalidArgument, "unknown edge origin '" + std::string(s) + "'");
}

struct EntityRecord {
  Tick entered = 0;
  std::optional<Tick> exited;
  std::string model;  ///< name of the threat model filtering this entity

  bool operator==(const EntityRecord&) const = default;
};

struct EdgeRecord {
  Tick created = 0;
  EdgeOrigin origin = EdgeOrigin::ObservedCommunication;
  EdgeBelief belief;
  bool fresh = true;  ///< belief is still the creation-tick prior; no discount yet
  std::optional<Tick> archived;

  bool operator==(const EdgeRecord&) const = default;
};

struct Cell {
  std::string id;
  std::vector<EntityId> members;  ///< sorted, unique
  std::string model;              ///< threat model of the cell-level filter
  double ideal_size = 3.0;        ///< p*
  double threshold = 1.0;         ///< l, the cohesion rate threshold
  std::vector<std::size_t> individual_threat;  ///< T, indices in the members' state space
  std::vector<std::size_t> cell_threat;        ///< T^C, indices in the cell state space
  StateBelief belief;
  bool connectivity_broken = false;

  bool operator==(const Cell&) const = default;
};

class PopulationGraph {
 public:
  Tick tick() const noexcept { return tick_; }
  void set_tick(Tick t) noexcept { tick_ = t; }

  const std::map<EntityId, EntityRecord>& entities() const noexcept { return entities_; }
  const std::map<EntityPair, EdgeRecord>& edges() const noexcept { return edges_; }
  std::map<EntityPair, EdgeRecord>& edges() noexcept { return edges_; }
  const std::vector<std::pair<EntityPair, EdgeRecord>>& archived_edges() const noexcept { return archived_; }
  const std::map<std::string, Cell>& cells() const noexcept { return cells_; }

  bool present(const EntityId& e) const {
    auto it = entities_.find(e);
    return it != entities_.end() && !it->second.exited;
  }

  std::vector<EntityId> present_entities() const {
    std::vector<EntityId> out;
    for (const auto& [id, rec] : entities_)
      if (!rec.exited) out.push_back(id);
    return out;
  }

  bool has_edge(const EntityPair& p) const { return edges_.contains(p); }

  const EdgeRecord& edge(const EntityPair& p) const {
    auto it = edges_.find(p);
    if (it == edges_.end()) throw Error(ErrorCode::UnknownEdge, "no live edge " + p.label());
    return it->second;
  }
  EdgeRecord& edge(const EntityPair& p) {
    auto it = edges_.find(p);
    if (it == edges_.end()) throw Error(ErrorCode::UnknownEdge, "no live edge " + p.label());
    return it->second;
  }

  const Cell& cell(const std::string& id) const {
    auto it = cells_.find(id);
    if (it == cells_.end()) throw Error(ErrorCode::UnknownCell, "unknown cell '" + id + "'");
    return it->second;
  }
  Cell& cell(const std::string& id) {
    auto it = cells_.find(id);
    if (it == cells_.end()) throw Error(ErrorCode::UnknownCell, "unknown cell '" + id + "'");
    return it->second;
  }

  void add_entity(const EntityId& id, Tick tick, std::string model) {
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, "entity id must be non-empty");
    if (entities_.contains(id)) throw Error(ErrorCode::DuplicateEntity, "entity '" + id + "' already known");
    entities_.emplace(id, EntityRecord{tick, std::nullopt, std::move(model)});
  }

  /// Marks the entity departed, archives its incident edges and drops it from
  /// every cell. Affected cells get their connectivity flag recomputed.
  void remove_entity(const EntityId& id, Tick tick) {
    if (!present(id)) throw Error(ErrorCode::UnknownEntity, "cannot remove absent entity '" + id + "'");
    entities_.at(id).exited = tick;
    for (auto it = edges_.begin(); it != edges_.end();) {
      if (it->first.contains(id)) {
        it->second.archived = tick;
        archived_.emplace_back(it->first, it->second);
        it = edges_.erase(it);
      } else {
        ++it;
      }
    }
    for (auto& [cid, c] : cells_) {
      auto m = std::find(c.members.begin(), c.members.end(), id);
      if (m == c.members.end()) continue;
      c.members.erase(m);
      refresh_connectivity(c);
    }
  }

  void add_edge(const EntityPair& pair, EdgeOrigin origin, Tick tick, EdgeBelief belief) {
    for (const auto* e : {&pair.first(), &pair.second()})
      if (!present(*e)) throw Error(ErrorCode::UnknownEntity, "edge endpoint '" + *e + "' is not present");
    if (edges_.contains(pair)) throw Error(ErrorCode::DuplicateEdge, "edge " + pair.label() + " already exists");
    if (!(belief.alpha >= 0.0 && belief.beta >= 0.0))
      throw Error(ErrorCode::InvalidArgument, "edge prior must have alpha, beta >= 0");
    belief.pair = pair;
    edges_.emplace(pair, EdgeRecord{tick, origin, belief, true, std::nullopt});
  }

  /// Archives a live edge without touching its endpoints.
  void sever_edge(const EntityPair& pair, Tick tick) {
    auto it = edges_.find(pair);
    if (it == edges_.end()) throw Error(ErrorCode::UnknownEdge, "no live edge " + pair.label());
    it->second.archived = tick;
    archived_.emplace_back(it->first, it->second);
    edges_.erase(it);
    for (auto& [cid, c] : cells_)
      if (std::find(c.members.begin(), c.members.end(), pair.first()) != c.members.end()) refresh_connectivity(c);
  }

  void add_cell(Cell c) {
    if (c.id.empty()) throw Error(ErrorCode::InvalidArgument, "cell id must be non-empty");
    if (cells_.contains(c.id)) throw Error(ErrorCode::InvalidArgument, "duplicate cell '" + c.id + "'");
    if (c.members.empty()) throw Error(ErrorCode::InvalidArgument, "cell '" + c.id + "' has no members");
    std::sort(c.members.begin(), c.members.end());
    if (std::adjacent_find(c.members.begin(), c.members.end()) != c.members.end())
      throw Error(ErrorCode::InvalidArgument, "cell '" + c.id + "' lists a member twice");
    for (const auto& m : c.members)
      if (!present(m)) throw Error(ErrorCode::UnknownEntity, "cell member '" + m + "' is not present");
    if (!(c.ideal_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "ideal size must be > 0");
    if (!(c.threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be >= 0");
    refresh_connectivity(c);
    auto id = c.id;
    cells_.emplace(std::move(id), std::move(c));
  }

  void remove_cell_member(const std::string& cell_id, const EntityId& member) {
    auto& c = cell(cell_id);
    auto m = std::find(c.members.begin(), c.members.end(), member);
    if (m == c.members.end()) throw Error(ErrorCode::UnknownEntity, "'" + member + "' is not in cell '" + cell_id + "'");
    c.members.erase(m);
    refresh_connectivity(c);
  }

  void refresh_connectivity(Cell& c) const { c.connectivity_broken = c.members.empty() || !connected(c.members); }

  void refresh_all_connectivity() {
    for (auto& [id, c] : cells_) refresh_connectivity(c);
  }

  /// Connectivity of the subgraph induced by `members` on live edges.
  bool connected(const std::vector<EntityId>& members) const {
    if (members.empty()) throw Error(ErrorCode::InvalidArgument, "connectivity of an empty member set");
    std::set<EntityId> in(members.begin(), members.end());
    std::set<EntityId> seen{members.front()};
    std::queue<EntityId> frontier;
    frontier.push(members.front());
    while (!frontier.empty()) {
      const auto u = frontier.front();
      frontier.pop();
      for (const auto& [p, rec] : edges_) {
        if (!p.contains(u)) continue;
        const auto& v = p.other(u);
        if (in.contains(v) && seen.insert(v).second) frontier.push(v);
      }
    }
    return seen.size() == in.size();
  }

  std::vector<EntityPair> edges_among(const std::vector<EntityId>& members) const {
    std::set<EntityId> in(members.begin(), members.end());
    std::vector<EntityPair> out;
    for (const auto& [p, rec] : edges_)
      if (in.contains(p.first()) && in.contains(p.second())) out.push_back(p);
    return out;
  }

  std::size_t created_edge_count() const noexcept { return edges_.size() + archived_.size(); }

  /// Reassembles a graph from previously serialised parts without replaying history.
  static PopulationGraph restore(Tick tick, std::map<EntityId, EntityRecord> entities, std::map<EntityPair, EdgeRecord> edges,
                                 std::vector<std::pair<EntityPair, EdgeRecord>> archived, std::map<std::string, Cell> cells) {
    PopulationGraph g;
    g.tick_ = tick;
    g.entities_ = std::move(entities);
    g.edges_ = std::move(edges);
    g.archived_ = std::move(archived);
    g.cells_ = std::move(cells);
    for (const auto& [p, rec] : g.edges_)
      for (const auto* e : {&p.first(), &p.second()})
        if (!g.present(*e)) throw Error(ErrorCode::UnknownEntity, "edge endpoint '" + *e + "' is not present");
    for (const auto& [id, c] : g.cells_)
      for (const auto& m : c.members)
        if (!g.present(m)) throw Error(ErrorCode::UnknownEntity, "cell member '" + m + "' is not present");
    return g;
  }

  bool operator==(const PopulationGraph&) const = default;

 private:
  Tick tick_ = 0;
  std::map<EntityId, EntityRecord> entities_;
  std::map<EntityPair, EdgeRecord> edges_;
  std::vector<std::pair<EntityPair, EdgeRecord>> archived_;
  std::map<std::string, Cell> cells_;
};

/// Functional wrapper: additions take effect first, removals after.
inline PopulationGraph apply_population_delta(PopulationGraph graph, const std::vector<std::pair<EntityId, std::string>>& additions,
                                              const std::vector<EntityId>& removals, Tick tick) {
  for (const auto& [id, model] : additions) graph.add_entity(id, tick, model);
  for (const auto& id : removals) graph.remove_entity(id, tick);
  return graph;
}

inline PopulationGraph add_edge(PopulationGraph graph, const EntityPair& pair, EdgeOrigin origin, Tick tick,
                                EdgeBelief belief) {
  graph.add_edge(pair, origin, tick, belief);
  return graph;
}

/// Live edges among the cell's members over C(n, 2).
inline double cell_density(const PopulationGraph& graph, const std::vector<EntityId>& members) {
  const auto n = static_cast<double>(members.size());
  if (members.size() < 2) throw Error(ErrorCode::InvalidArgument, "density needs at least two members");
  return static_cast<double>(graph.edges_among(members).size()) / (n * (n - 1.0) / 2.0);
}

inline bool connected(const PopulationGraph& graph, const std::vector<EntityId>& members) {
  return graph.connected(members);
}

}  // namespace threatnet
