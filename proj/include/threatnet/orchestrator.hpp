#pragma once

// Scenario state and the atomic per-tick commit that routes observations to
// edge filters, entity filters and cell filters, then scores every cell.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "threatnet/detail/parallel.hpp"
#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/indicators.hpp"
#include "threatnet/population_graph.hpp"
#include "threatnet/state_filter.hpp"
#include "threatnet/types.hpp"

namespace threatnet {

struct ThreatModel {
  std::string name;
  ThreatStateSpace space;
  TransitionModel transition;
  TaskModel tasks;
  std::vector<double> default_prior;
  std::shared_ptr<const TransitionOperator> op;

  void finalize() {
    space.validate();
    tasks.validate(space);
    op = std::make_shared<const TransitionOperator>(space, transition);
    check_prior(default_prior);
  }

  void check_prior(const std::vector<double>& pi) const {
    if (pi.size() != space.size())
      throw Error(ErrorCode::InvalidModel, "model '" + name + "': prior length != state count");
    double total = 0.0;
    for (double p : pi) {
      if (!(p >= 0.0)) throw Error(ErrorCode::InvalidModel, "model '" + name + "': negative prior mass");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidModel, "model '" + name + "': prior does not sum to 1");
  }

  std::vector<std::size_t> indices(const std::vector<std::string>& names) const {
    std::vector<std::size_t> out;
    for (const auto& n : names) out.push_back(space.index_of(n));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  SignalVector vacuous_signal(Tick tick) const {
    return SignalVector{std::vector<std::optional<double>>(tasks.tasks()), tick};
  }
};

/// Starting Gamma for a new edge. `empirical` starts from (0, 0) so the first
/// posterior is (sum s, sum xi).
struct EdgePrior {
  bool empirical = false;
  double alpha = 0.70;
  double beta = 1.41;

  bool operator==(const EdgePrior&) const = default;
};

struct EntitySpec {
  EntityId id;
  std::string model;
  std::optional<std::vector<double>> prior;
};

struct EdgeSpec {
  EntityId a;
  EntityId b;
  EdgeOrigin origin = EdgeOrigin::ObservedCommunication;
  std::optional<EdgePrior> prior;
};

struct CellSpec {
  std::string id;
  std::vector<EntityId> members;
  std::string model;
  std::optional<std::vector<double>> prior;
  double ideal_size = 3.0;
  double threshold = 1.0;
  std::vector<std::string> individual_threat;
  std::vector<std::string> cell_threat;
};

struct ScenarioConfig {
  int schema_version = 1;
  std::string name;
  std::uint64_t seed = 0;
  std::map<std::string, ThreatModel> models;
  std::vector<ChannelSpec> channels;
  DiscountMode discount_mode = DiscountMode::Fixed;
  double discount = 0.7;
  EdgePrior default_prior;
  std::map<EdgeOrigin, EdgePrior> origin_priors;
  std::optional<EdgePrior> auto_edge_prior;
  std::vector<EntitySpec> entities;
  std::vector<EdgeSpec> edges;
  std::vector<CellSpec> cells;

  void finalize() {
    if (schema_version != 1) throw Error(ErrorCode::SchemaError, "unsupported schema_version", "/schema_version");
    if (models.empty()) throw Error(ErrorCode::InvalidModel, "at least one threat model is required");
    for (auto& [name, m] : models) {
      m.name = name;
      m.finalize();
    }
    if (channels.empty()) throw Error(ErrorCode::InvalidModel, "at least one channel is required");
    std::set<int> ids;
    for (const auto& c : channels) {
      c.validate();
      if (!ids.insert(c.id).second) throw Error(ErrorCode::InvalidModel, "duplicate channel id " + std::to_string(c.id));
    }
    if (!(discount > 0.0 && discount <= 1.0)) throw Error(ErrorCode::InvalidModel, "discount must be in (0, 1]");
  }

  const ThreatModel& model(const std::string& name) const {
    auto it = models.find(name);
    if (it == models.end()) throw Error(ErrorCode::InvalidModel, "unknown threat model '" + name + "'");
    return it->second;
  }

  std::size_t channel_index(int id) const {
    for (std::size_t k = 0; k < channels.size(); ++k)
      if (channels[k].id == id) return k;
    throw Error(ErrorCode::InvalidArgument, "unknown channel id " + std::to_string(id));
  }

  EdgePrior prior_for(EdgeOrigin origin) const {
    auto it = origin_priors.find(origin);
    return it == origin_priors.end() ? default_prior : it->second;
  }

  EdgeBelief make_edge_belief(const EntityPair& pair, const EdgePrior& prior) const {
    EdgeBelief b;
    b.pair = pair;
    b.alpha = prior.empirical ? 0.0 : prior.alpha;
    b.beta = prior.empirical ? 0.0 : prior.beta;
    if (!prior.empirical && !(b.alpha > 0.0 && b.beta > 0.0))
      throw Error(ErrorCode::InvalidModel, "edge prior needs alpha > 0 and beta > 0");
    b.baseline_discount = discount;
    b.discount_mode = discount_mode;
    return b;
  }
};

// ---------------------------------------------------------------------------

struct EntityAddition {
  EntityId id;
  std::string model;
  std::optional<std::vector<double>> prior;
};

struct EdgeEvent {
  EntityPair pair;
  EdgeOrigin origin = EdgeOrigin::ObservedCommunication;
  std::optional<EdgePrior> prior;
};

struct TickBatch {
  Tick tick = 0;
  std::map<EntityId, SignalVector> signals;
  std::vector<ObservationVector> observations;
  std::vector<EntityAddition> additions;
  std::vector<EntityId> removals;
  std::vector<EdgeEvent> edge_events;
};

struct EdgeTickResult {
  EntityPair pair;
  double delta = 1.0;
  EdgeBelief prior;
  EdgeBelief posterior;
  bool observed = false;  ///< a monitored observation was applied
  std::optional<double> log_likelihood;
  bool rounded = false;
  bool predictive_skipped = false;  ///< improper prior, no predictive term
};

struct FilterTickResult {
  std::string id;
  std::vector<double> pi;
  double log_evidence = 0.0;
  bool vacuous = true;
};

struct TickReport {
  Tick tick = 0;
  std::vector<EdgeTickResult> edges;
  std::vector<FilterTickResult> entities;
  std::vector<FilterTickResult> cells;
  std::vector<IndicatorReport> indicators;
  std::vector<EntityPair> created_edges;
  double network_log_likelihood = 0.0;
  double cumulative_log_likelihood = 0.0;
  std::vector<std::string> flags;
};

struct ScenarioState {
  std::shared_ptr<const ScenarioConfig> config;
  PopulationGraph graph;
  std::map<EntityId, StateBelief> beliefs;
  Tick tick = 0;
  double cumulative_log_likelihood = 0.0;
  std::vector<TickBatch> event_log;
  std::vector<TickReport> history;  ///< history[t] is the report committed at tick t (0 = initial)

  const StateBelief& belief(const EntityId& id) const {
    auto it = beliefs.find(id);
    if (it == beliefs.end()) throw Error(ErrorCode::UnknownEntity, "unknown entity '" + id + "'");
    return it->second;
  }
};

struct CommitOptions {
  std::size_t threads = 1;
};

namespace detail {

inline std::vector<StateBelief> member_beliefs(const ScenarioState& s, const Cell& c) {
  std::vector<StateBelief> out;
  out.reserve(c.members.size());
  for (const auto& m : c.members) out.push_back(s.belief(m));
  return out;
}

inline std::vector<IndicatorReport> all_indicators(const ScenarioState& s, Tick tick, std::size_t threads) {
  std::vector<const Cell*> cells;
  for (const auto& [id, c] : s.graph.cells()) cells.push_back(&c);
  std::vector<IndicatorReport> out(cells.size());
  parallel_for(cells.size(), threads, [&](std::size_t i) {
    out[i] = cell_indicators(s.graph, *cells[i], member_beliefs(s, *cells[i]), tick);
  });
  return out;
}

/// Per-task max over members; a task is missing only if every member lacks it.
inline SignalVector fuse_signals(const std::vector<const SignalVector*>& members, std::size_t tasks, Tick tick) {
  SignalVector out{std::vector<std::optional<double>>(tasks), tick};
  for (const auto* z : members) {
    if (z->values.size() != tasks) throw Error(ErrorCode::InvalidBatch, "member signal length != cell task count");
    for (std::size_t j = 0; j < tasks; ++j)
      if (z->values[j]) out.values[j] = out.values[j] ? std::max(*out.values[j], *z->values[j]) : *z->values[j];
  }
  return out;
}

}  // namespace detail

inline ScenarioState initial_state(std::shared_ptr<const ScenarioConfig> config) {
  if (!config) throw Error(ErrorCode::InvalidArgument, "null scenario config");
  ScenarioState s;
  s.config = config;
  const auto& cfg = *config;
  for (const auto& e : cfg.entities) {
    const auto& m = cfg.model(e.model);
    const auto pi = e.prior.value_or(m.default_prior);
    m.check_prior(pi);
    s.graph.add_entity(e.id, 0, e.model);
    s.beliefs.emplace(e.id, StateBelief::from_marginal(pi, m.transition.duration_cap, 0));
  }
  for (const auto& e : cfg.edges) {
    EntityPair p(e.a, e.b);
    s.graph.add_edge(p, e.origin, 0, cfg.make_edge_belief(p, e.prior.value_or(cfg.prior_for(e.origin))));
  }
  for (const auto& spec : cfg.cells) {
    const auto& cm = cfg.model(spec.model);
    const auto pi = spec.prior.value_or(cm.default_prior);
    cm.check_prior(pi);
    Cell c;
    c.id = spec.id;
    c.members = spec.members;
    c.model = spec.model;
    c.ideal_size = spec.ideal_size;
    c.threshold = spec.threshold;
    c.cell_threat = cm.indices(spec.cell_threat);
    c.belief = StateBelief::from_marginal(pi, cm.transition.duration_cap, 0);
    for (const auto& m : spec.members) {
      if (!s.graph.present(m)) throw Error(ErrorCode::UnknownEntity, "cell member '" + m + "' is not declared");
      const auto& mm = cfg.model(s.graph.entities().at(m).model);
      if (mm.tasks.tasks() != cm.tasks.tasks())
        throw Error(ErrorCode::InvalidModel, "cell '" + spec.id + "' task count differs from member '" + m + "'");
      c.individual_threat = mm.indices(spec.individual_threat);
    }
    s.graph.add_cell(std::move(c));
  }
  TickReport r;
  r.indicators = detail::all_indicators(s, 0, 1);
  for (const auto& [id, c] : s.graph.cells())
    if (c.connectivity_broken) r.flags.push_back("cell-disconnected:" + id);
  s.history.push_back(std::move(r));
  return s;
}

inline std::pair<ScenarioState, TickReport> commit_tick(const ScenarioState& state, const TickBatch& batch,
                                                        const CommitOptions& options = {}) {
  const auto& cfg = *state.config;
  const std::span<const ChannelSpec> channels(cfg.channels);
  if (batch.tick != state.tick + 1)
    throw Error(ErrorCode::TickMismatch,
                "expected tick " + std::to_string(state.tick + 1) + ", got " + std::to_string(batch.tick));

  ScenarioState next = state;
  const Tick t = batch.tick;
  TickReport report;
  report.tick = t;
  next.graph.set_tick(t);

  // (1) additions, declared edges, auto-created edges
  for (const auto& a : batch.additions) {
    const auto& m = cfg.model(a.model);
    const auto pi = a.prior.value_or(m.default_prior);
    m.check_prior(pi);
    next.graph.add_entity(a.id, t, a.model);
    next.beliefs[a.id] = StateBelief::from_marginal(pi, m.transition.duration_cap, t - 1);
  }
  for (const auto& e : batch.edge_events) {
    next.graph.add_edge(e.pair, e.origin, t, cfg.make_edge_belief(e.pair, e.prior.value_or(cfg.prior_for(e.origin))));
    report.created_edges.push_back(e.pair);
  }
  std::map<EntityPair, const ObservationVector*> obs_by_pair;
  for (const auto& o : batch.observations) {
    if (o.tick != t) throw Error(ErrorCode::InvalidBatch, "observation for " + o.pair.label() + " has the wrong tick");
    if (!obs_by_pair.emplace(o.pair, &o).second)
      throw Error(ErrorCode::InvalidBatch, "duplicate observation for " + o.pair.label());
    if (o.values.size() != channels.size())
      throw Error(ErrorCode::InvalidBatch, "observation for " + o.pair.label() + " has wrong channel count");
    if (!o.monitored && std::any_of(o.values.begin(), o.values.end(), [](const auto& v) { return v.has_value(); }))
      throw Error(ErrorCode::InvalidBatch, "unmonitored observation for " + o.pair.label() + " carries values");
    for (const auto* e : {&o.pair.first(), &o.pair.second()})
      if (!next.graph.present(*e)) throw Error(ErrorCode::UnknownEntity, "observation references absent '" + *e + "'");
  }
  for (const auto& [pair, o] : obs_by_pair) {
    if (next.graph.has_edge(pair) || !o->monitored || !o->any_nonzero()) continue;
    const auto prior = cfg.auto_edge_prior.value_or(cfg.default_prior);
    next.graph.add_edge(pair, EdgeOrigin::ObservedCommunication, t, cfg.make_edge_belief(pair, prior));
    report.created_edges.push_back(pair);
    report.flags.push_back("auto-edge:" + pair.label());
  }
  next.graph.refresh_all_connectivity();

  // (2) edge filters
  std::vector<EdgeRecord*> records;
  for (auto& [p, rec] : next.graph.edges()) records.push_back(&rec);
  std::vector<EdgeTickResult> edge_results(records.size());
  detail::parallel_for(records.size(), options.threads, [&](std::size_t i) {
    auto& rec = *records[i];
    auto& res = edge_results[i];
    res.pair = rec.belief.pair;
    EdgeBelief prior = rec.belief;
    if (!rec.fresh) {
      res.delta = current_discount(prior);
      prior = evolve_prior(prior, res.delta);
    }
    res.prior = prior;
    auto it = obs_by_pair.find(res.pair);
    if (it != obs_by_pair.end() && it->second->monitored) {
      res.observed = true;
      if (prior.proper()) {
        const auto term = predictive_log_likelihood(prior, *it->second, channels);
        res.log_likelihood = term.log_likelihood;
        res.rounded = term.rounded;
      } else {
        res.predictive_skipped = true;
      }
      res.posterior = posterior_update(prior, *it->second, channels);
    } else {
      res.posterior = prior;
      res.posterior.last_observed_effort = 0.0;
    }
  });
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i]->belief = edge_results[i].posterior;
    records[i]->fresh = false;
    const auto& res = edge_results[i];
    if (res.log_likelihood) report.network_log_likelihood += *res.log_likelihood;
    if (res.rounded) report.flags.push_back("predictive-rounded:" + res.pair.label());
    if (res.predictive_skipped) report.flags.push_back("predictive-skipped:" + res.pair.label());
  }
  report.edges = std::move(edge_results);

  // (3) entity filters
  for (const auto& [id, z] : batch.signals)
    if (!next.graph.present(id)) throw Error(ErrorCode::UnknownEntity, "signals for absent entity '" + id + "'");
  const auto present = next.graph.present_entities();
  std::vector<FilterResult> entity_results(present.size());
  detail::parallel_for(present.size(), options.threads, [&](std::size_t i) {
    const auto& id = present[i];
    const auto& m = cfg.model(next.graph.entities().at(id).model);
    auto it = batch.signals.find(id);
    const auto z = it == batch.signals.end() ? m.vacuous_signal(t) : it->second;
    entity_results[i] = filter_tick(next.beliefs.at(id), *m.op, m.tasks, z);
  });
  for (std::size_t i = 0; i < present.size(); ++i) {
    auto it = batch.signals.find(present[i]);
    report.entities.push_back({present[i], entity_results[i].belief.marginal(), entity_results[i].log_evidence,
                               it == batch.signals.end() || it->second.vacuous()});
    next.beliefs.at(present[i]) = std::move(entity_results[i].belief);
  }

  // (4) cell filters on fused member signals
  std::vector<Cell*> cells;
  for (const auto& [id, c] : next.graph.cells()) cells.push_back(&next.graph.cell(id));
  std::vector<FilterResult> cell_results(cells.size());
  std::vector<bool> cell_vacuous(cells.size());
  detail::parallel_for(cells.size(), options.threads, [&](std::size_t i) {
    const auto& c = *cells[i];
    const auto& m = cfg.model(c.model);
    std::vector<const SignalVector*> zs;
    for (const auto& member : c.members) {
      auto it = batch.signals.find(member);
      if (it != batch.signals.end()) zs.push_back(&it->second);
    }
    const auto fused = detail::fuse_signals(zs, m.tasks.tasks(), t);
    cell_vacuous[i] = fused.vacuous();
    cell_results[i] = filter_tick(c.belief, *m.op, m.tasks, fused);
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    report.cells.push_back({cells[i]->id, cell_results[i].belief.marginal(), cell_results[i].log_evidence, cell_vacuous[i]});
    cells[i]->belief = std::move(cell_results[i].belief);
  }

  // (5) indicators
  report.indicators = detail::all_indicators(next, t, options.threads);
  for (const auto& r : report.indicators)
    if (r.connectivity_broken) report.flags.push_back("cell-disconnected:" + r.cell);

  // (6) removals
  for (const auto& id : batch.removals) next.graph.remove_entity(id, t);

  // (7) log
  next.tick = t;
  next.cumulative_log_likelihood += report.network_log_likelihood;
  report.cumulative_log_likelihood = next.cumulative_log_likelihood;
  next.event_log.push_back(batch);
  next.history.push_back(report);
  return {std::move(next), std::move(report)};
}

inline ScenarioState replay(std::shared_ptr<const ScenarioConfig> config, const std::vector<TickBatch>& batches,
                            const CommitOptions& options = {}) {
  auto s = initial_state(std::move(config));
  for (const auto& b : batches) s = commit_tick(s, b, options).first;
  return s;
}

/// Recomputed from scratch by replaying the event log.
inline double joint_log_marginal_likelihood(const ScenarioState& state) {
  auto s = initial_state(state.config);
  double total = 0.0;
  for (const auto& b : state.event_log) {
    auto [n, r] = commit_tick(s, b);
    total += r.network_log_likelihood;
    s = std::move(n);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Non-mutating interventions

struct RemoveMember {
  std::string cell;
  EntityId member;
};

/// Severs the listed pairs, or every live edge among the cell's members when `all` is set.
struct SeverEdges {
  std::string cell;
  std::vector<EntityPair> pairs;
  bool all = false;
};

struct SetEdgeBelief {
  std::string cell;
  EntityPair pair;
  double alpha = 1.0;
  double beta = 1.0;
};

struct ChangeThreatSet {
  std::string cell;
  std::optional<std::vector<std::string>> individual_threat;
  std::optional<std::vector<std::string>> cell_threat;
};

struct ChangeParameters {
  std::string cell;
  std::optional<double> threshold;
  std::optional<double> ideal_size;
};

using Intervention = std::variant<RemoveMember, SeverEdges, SetEdgeBelief, ChangeThreatSet, ChangeParameters>;

struct WhatIfResult {
  IndicatorReport before;
  IndicatorReport after;
};

inline WhatIfResult what_if(const ScenarioState& state, const Intervention& intervention) {
  const auto cell_id = std::visit([](const auto& iv) { return iv.cell; }, intervention);
  const auto& original = state.graph.cell(cell_id);
  WhatIfResult out;
  out.before = cell_indicators(state.graph, original, detail::member_beliefs(state, original), state.tick);

  ScenarioState sim = state;
  auto& g = sim.graph;
  const auto& cfg = *state.config;
  std::visit(
      [&](const auto& iv) {
        using T = std::decay_t<decltype(iv)>;
        if constexpr (std::is_same_v<T, RemoveMember>) {
          g.remove_cell_member(cell_id, iv.member);
        } else if constexpr (std::is_same_v<T, SeverEdges>) {
          const auto pairs = iv.all ? g.edges_among(g.cell(cell_id).members) : iv.pairs;
          for (const auto& p : pairs) g.sever_edge(p, state.tick);
        } else if constexpr (std::is_same_v<T, SetEdgeBelief>) {
          if (!(iv.alpha > 0.0 && iv.beta > 0.0)) throw Error(ErrorCode::InvalidArgument, "edge belief needs alpha, beta > 0");
          auto& b = g.edge(iv.pair).belief;
          b.alpha = iv.alpha;
          b.beta = iv.beta;
        } else if constexpr (std::is_same_v<T, ChangeThreatSet>) {
          auto& c = g.cell(cell_id);
          if (iv.cell_threat) c.cell_threat = cfg.model(c.model).indices(*iv.cell_threat);
          if (iv.individual_threat && !c.members.empty())
            c.individual_threat = cfg.model(g.entities().at(c.members.front()).model).indices(*iv.individual_threat);
        } else {
          auto& c = g.cell(cell_id);
          if (iv.threshold) {
            if (!(*iv.threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be >= 0");
            c.threshold = *iv.threshold;
          }
          if (iv.ideal_size) {
            if (!(*iv.ideal_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "ideal size must be > 0");
            c.ideal_size = *iv.ideal_size;
          }
        }
      },
      intervention);
  const auto& changed = g.cell(cell_id);
  out.after = cell_indicators(g, changed, detail::member_beliefs(sim, changed), state.tick);
  return out;
}

}  // namespace threatnet
