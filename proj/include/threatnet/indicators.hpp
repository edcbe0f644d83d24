#pragma once

// Cell threat measures m1..m5 and the ordered attack indicators phi(0..4).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/population_graph.hpp"
#include "threatnet/state_filter.hpp"

namespace threatnet {

using Measures = std::array<double, 5>;
using Indicators = std::array<double, 5>;

inline double collective_progress(const StateBelief& cell_belief, std::span<const std::size_t> cell_threat) {
  return marginal_threat(cell_belief, cell_threat);
}

inline double individual_threat(std::span<const StateBelief> members, std::span<const std::size_t> threat) {
  double out = 1.0;
  for (const auto& b : members) out *= marginal_threat(b, threat);
  return out;
}

struct Cohesion {
  std::vector<double> per_pair;
  double product = 1.0;
};

inline Cohesion pairwise_cohesion(std::span<const EdgeBelief> edges, double threshold) {
  Cohesion c;
  for (const auto& e : edges) {
    c.per_pair.push_back(tail_probability(e, threshold));
    c.product *= c.per_pair.back();
  }
  return c;
}

inline double cell_size_integrity(double n, double ideal_size) {
  if (!(ideal_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "ideal size must be > 0");
  return 1.0 / std::cosh((n - ideal_size) / ideal_size);
}

/// phi(i) = product of the 5 - i largest measures. Ties keep index order.
inline Indicators attack_indicators(const Measures& m) {
  for (double v : m)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "measures must lie in [0, 1]");
  std::array<std::size_t, 5> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m[a] > m[b]; });
  Indicators phi{};
  for (std::size_t i = 0; i < 5; ++i) {
    double p = 1.0;
    for (std::size_t j = 0; j < 5 - i; ++j) p *= m[order[j]];
    phi[i] = p;
  }
  return phi;
}

struct IndicatorInputs {
  std::vector<std::vector<double>> member_pi;
  std::vector<double> cell_pi;
  std::vector<std::pair<EntityPair, std::pair<double, double>>> edges;  ///< (alpha, beta)
  std::vector<double> tail;
  std::size_t n = 0;
  std::size_t k = 0;
  double ideal_size = 0.0;
  double threshold = 0.0;
  std::vector<std::size_t> individual_threat;
  std::vector<std::size_t> cell_threat;
};

struct IndicatorReport {
  std::string cell;
  Tick tick = 0;
  Measures m{};
  Indicators phi{};
  bool cohesion_degenerate = false;  ///< no live edges among members; m3 is the empty product
  bool density_degenerate = false;   ///< fewer than two members; m4 reported as 0
  bool connectivity_broken = false;
  IndicatorInputs inputs;
};

/// Full report for one cell from the live graph and current beliefs.
/// `member_beliefs` follows the cell's sorted member order.
inline IndicatorReport cell_indicators(const PopulationGraph& graph, const Cell& cell,
                                       std::span<const StateBelief> member_beliefs, Tick tick) {
  if (member_beliefs.size() != cell.members.size())
    throw Error(ErrorCode::InvalidArgument, "one belief per cell member is required");
  IndicatorReport r;
  r.cell = cell.id;
  r.tick = tick;
  auto& in = r.inputs;
  in.n = cell.members.size();
  in.ideal_size = cell.ideal_size;
  in.threshold = cell.threshold;
  in.individual_threat = cell.individual_threat;
  in.cell_threat = cell.cell_threat;
  in.cell_pi = cell.belief.marginal();
  for (const auto& b : member_beliefs) in.member_pi.push_back(b.marginal());

  std::vector<EdgeBelief> live;
  for (const auto& p : graph.edges_among(cell.members)) {
    const auto& b = graph.edge(p).belief;
    in.edges.push_back({p, {b.alpha, b.beta}});
    // An improper edge prior that has not seen data yet carries no cohesion evidence.
    if (b.proper()) live.push_back(b);
  }
  in.k = in.edges.size();
  const auto coh = pairwise_cohesion(live, cell.threshold);
  in.tail = coh.per_pair;

  r.m[0] = collective_progress(cell.belief, cell.cell_threat);
  r.m[1] = individual_threat(member_beliefs, cell.individual_threat);
  r.m[2] = coh.product;
  r.cohesion_degenerate = live.empty();
  if (in.n < 2) {
    r.m[3] = 0.0;
    r.density_degenerate = true;
  } else {
    r.m[3] = cell_density(graph, cell.members);
  }
  r.m[4] = cell_size_integrity(static_cast<double>(in.n), cell.ideal_size);
  for (auto& v : r.m) v = std::clamp(v, 0.0, 1.0);
  r.phi = attack_indicators(r.m);
  r.connectivity_broken = cell.connectivity_broken;
  return r;
}

/// Cell ids by descending phi(key); ties by id.
inline std::vector<std::string> rank_cells(std::span<const IndicatorReport> reports, std::size_t key) {
  if (key > 4) throw Error(ErrorCode::InvalidArgument, "indicator key must be in 0..4");
  std::vector<const IndicatorReport*> rs;
  for (const auto& r : reports) rs.push_back(&r);
  std::sort(rs.begin(), rs.end(), [key](const auto* a, const auto* b) {
    if (a->phi[key] != b->phi[key]) return a->phi[key] > b->phi[key];
    return a->cell < b->cell;
  });
  std::vector<std::string> out;
  for (const auto* r : rs) out.push_back(r->cell);
  return out;
}

}  // namespace threatnet
