#pragma once

// JSON encoding of scenarios, beliefs, batches, reports and snapshots.
// Decoding reports schema violations as SchemaError with a JSON pointer.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/indicators.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/population_graph.hpp"
#include "threatnet/state_filter.hpp"
#include "threatnet/stream.hpp"

namespace threatnet::io {

using nlohmann::json;

inline constexpr int kSnapshotVersion = 1;

/// Read-only view of a JSON value that knows its own pointer.
class Cursor {
 public:
  explicit Cursor(const json& value, std::string path = {}) : value_(&value), path_(std::move(path)) {}

  const json& value() const noexcept { return *value_; }
  const std::string& path() const noexcept { return path_; }
  std::string where() const { return path_.empty() ? "/" : path_; }

  [[noreturn]] void fail(const std::string& message) const { throw Error(ErrorCode::SchemaError, where() + ": " + message, where()); }

  bool has(const std::string& key) const { return value_->is_object() && value_->contains(key); }

  Cursor at(const std::string& key) const {
    if (!value_->is_object()) fail("expected an object");
    auto it = value_->find(key);
    if (it == value_->end()) Cursor(*value_, child_path(key)).fail("required field is missing");
    return Cursor(*it, child_path(key));
  }

  std::optional<Cursor> maybe(const std::string& key) const {
    if (!value_->is_object()) fail("expected an object");
    auto it = value_->find(key);
    if (it == value_->end() || it->is_null()) return std::nullopt;
    return Cursor(*it, child_path(key));
  }

  std::size_t size() const {
    if (!value_->is_array()) fail("expected an array");
    return value_->size();
  }

  Cursor operator[](std::size_t i) const { return Cursor((*value_)[i], path_ + "/" + std::to_string(i)); }

  std::vector<std::pair<std::string, Cursor>> items() const {
    if (!value_->is_object()) fail("expected an object");
    std::vector<std::pair<std::string, Cursor>> out;
    for (auto it = value_->begin(); it != value_->end(); ++it) out.emplace_back(it.key(), Cursor(it.value(), child_path(it.key())));
    return out;
  }

  double number() const {
    if (!value_->is_number()) fail("expected a number");
    return value_->get<double>();
  }
  std::int64_t integer() const {
    if (value_->is_number_integer()) return value_->get<std::int64_t>();
    if (value_->is_number_float()) {
      const double d = value_->get<double>();
      if (d == static_cast<double>(static_cast<std::int64_t>(d))) return static_cast<std::int64_t>(d);
    }
    fail("expected an integer");
  }
  std::uint64_t unsigned_integer() const {
    if (value_->is_number_unsigned()) return value_->get<std::uint64_t>();
    const auto v = integer();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<std::uint64_t>(v);
  }
  std::string string() const {
    if (!value_->is_string()) fail("expected a string");
    return value_->get<std::string>();
  }
  bool boolean() const {
    if (!value_->is_boolean()) fail("expected a boolean");
    return value_->get<bool>();
  }
  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].number());
    return out;
  }
  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back((*this)[i].string());
    return out;
  }
  std::vector<std::optional<double>> optional_numbers() const {
    std::vector<std::optional<double>> out;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto c = (*this)[i];
      if (c.value().is_null()) out.emplace_back(std::nullopt);
      else out.emplace_back(c.number());
    }
    return out;
  }

 private:
  std::string child_path(const std::string& key) const {
    std::string esc;
    for (char c : key) {
      if (c == '~') esc += "~0";
      else if (c == '/') esc += "~1";
      else esc += c;
    }
    return path_ + "/" + esc;
  }

  const json* value_;
  std::string path_;
};

/// Re-raises model/argument errors from a decoded section with its pointer.
template <class Fn>
auto with_path(const Cursor& c, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SchemaError) throw;
    c.fail(e.detail());
  }
}

inline json optional_numbers_json(const std::vector<std::optional<double>>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
  return out;
}

// ---------------------------------------------------------------------------
// Models

inline json to_json(const HoldingDistribution& h) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, GeometricHolding>) return {{"family", "geometric"}, {"rho", x.rho}};
        else if constexpr (std::is_same_v<T, WeibullHolding>) return {{"family", "weibull"}, {"shape", x.shape}, {"scale", x.scale}};
        else return {{"family", "table"}, {"pmf", x.pmf}};
      },
      h);
}

inline HoldingDistribution holding_from_json(const Cursor& c) {
  const auto family = c.at("family").string();
  if (family == "geometric") return GeometricHolding{c.at("rho").number()};
  if (family == "weibull") return WeibullHolding{c.at("shape").number(), c.at("scale").number()};
  if (family == "table") return TabulatedHolding{c.at("pmf").numbers()};
  c.at("family").fail("unknown holding family '" + family + "'");
}

inline std::string_view to_string(SignalExtractor::Kind k) {
  switch (k) {
    case SignalExtractor::Kind::Mean: return "mean";
    case SignalExtractor::Kind::Max: return "max";
    case SignalExtractor::Kind::SaturatingCount: return "saturating_count";
  }
  return "max";
}

inline json to_json(const ThreatModel& m) {
  json j;
  j["states"] = m.space.states;
  json absorbing = json::array();
  for (auto a : m.space.absorbing) absorbing.push_back(m.space.states[a]);
  j["absorbing"] = absorbing;
  j["embedded"] = m.transition.embedded;
  j["duration_cap"] = m.transition.duration_cap;
  json holding = json::array();
  for (const auto& [key, h] : m.transition.holding) {
    auto e = to_json(h);
    e["from"] = m.space.states[key.first];
    e["to"] = m.space.states[key.second];
    holding.push_back(e);
  }
  j["holding"] = holding;
  json tasks = json::array();
  for (std::size_t t = 0; t < m.tasks.tasks(); ++t) {
    const auto& e = m.tasks.emissions[t];
    const auto& x = m.tasks.extractors[t];
    tasks.push_back({{"name", m.tasks.task_names[t]},
                     {"inactive", {{"alpha", e.inactive.alpha}, {"beta", e.inactive.beta}}},
                     {"active", {{"alpha", e.active.alpha}, {"beta", e.active.beta}}},
                     {"extractor", {{"kind", to_string(x.kind)}, {"scale", x.scale}}}});
  }
  j["tasks"] = tasks;
  json relevance = json::object();
  for (std::size_t i = 0; i < m.space.size(); ++i) {
    json r = json::object();
    for (const auto& link : m.tasks.relevant[i]) r[m.tasks.task_names[link.task]] = link.probability;
    relevance[m.space.states[i]] = r;
  }
  j["relevance"] = relevance;
  j["prior"] = m.default_prior;
  return j;
}

inline ThreatModel model_from_json(const std::string& name, const Cursor& c) {
  ThreatModel m;
  m.name = name;
  m.space.states = c.at("states").strings();
  auto state_index = [&](const Cursor& at) {
    const auto s = at.string();
    for (std::size_t i = 0; i < m.space.states.size(); ++i)
      if (m.space.states[i] == s) return i;
    at.fail("unknown state '" + s + "'");
  };
  if (auto a = c.maybe("absorbing"))
    for (std::size_t i = 0; i < a->size(); ++i) m.space.absorbing.push_back(state_index((*a)[i]));
  with_path(c.at("states"), [&] { m.space.validate(); });
  const auto emb = c.at("embedded");
  for (std::size_t i = 0; i < emb.size(); ++i) m.transition.embedded.push_back(emb[i].numbers());
  if (auto cap = c.maybe("duration_cap")) {
    const auto v = cap->integer();
    if (v < 1) cap->fail("duration_cap must be >= 1");
    m.transition.duration_cap = static_cast<std::size_t>(v);
  }
  if (auto h = c.maybe("holding")) {
    for (std::size_t k = 0; k < h->size(); ++k) {
      const auto e = (*h)[k];
      const auto key = std::pair{state_index(e.at("from")), state_index(e.at("to"))};
      if (!m.transition.holding.emplace(key, holding_from_json(e)).second) e.fail("duplicate holding entry");
    }
  }
  with_path(c, [&] { m.transition.validate(m.space); });

  const auto tasks = c.at("tasks");
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto e = tasks[t];
    m.tasks.task_names.push_back(e.at("name").string());
    TaskEmission em;
    auto beta = [](const Cursor& b) { return BetaEmission{b.at("alpha").number(), b.at("beta").number()}; };
    em.inactive = beta(e.at("inactive"));
    em.active = beta(e.at("active"));
    m.tasks.emissions.push_back(em);
    SignalExtractor x;
    if (auto xe = e.maybe("extractor")) {
      const auto kind = xe->at("kind").string();
      if (kind == "mean") x.kind = SignalExtractor::Kind::Mean;
      else if (kind == "max") x.kind = SignalExtractor::Kind::Max;
      else if (kind == "saturating_count") x.kind = SignalExtractor::Kind::SaturatingCount;
      else xe->at("kind").fail("unknown extractor kind '" + kind + "'");
      if (auto s = xe->maybe("scale")) x.scale = s->number();
    }
    m.tasks.extractors.push_back(x);
  }
  m.tasks.relevant.assign(m.space.size(), {});
  const auto rel = c.at("relevance");
  for (const auto& [state, links] : rel.items()) {
    std::size_t i = m.space.size();
    for (std::size_t s = 0; s < m.space.size(); ++s)
      if (m.space.states[s] == state) i = s;
    if (i == m.space.size()) links.fail("unknown state '" + state + "'");
    for (const auto& [task, p] : links.items()) {
      std::size_t j = m.tasks.tasks();
      for (std::size_t k = 0; k < m.tasks.tasks(); ++k)
        if (m.tasks.task_names[k] == task) j = k;
      if (j == m.tasks.tasks()) p.fail("unknown task '" + task + "'");
      m.tasks.relevant[i].push_back({j, p.number()});
    }
  }
  m.default_prior = c.at("prior").numbers();
  with_path(c, [&] { m.finalize(); });
  return m;
}

// ---------------------------------------------------------------------------
// Scenario configuration

inline std::string_view to_string(ChannelSpec::Summary s) {
  switch (s) {
    case ChannelSpec::Summary::Sum: return "sum";
    case ChannelSpec::Summary::Count: return "count";
    case ChannelSpec::Summary::FirstDifference: return "first_difference";
  }
  return "sum";
}

inline json to_json(const EdgePrior& p) {
  if (p.empirical) return "empirical";
  return {{"alpha", p.alpha}, {"beta", p.beta}};
}

inline EdgePrior edge_prior_from_json(const Cursor& c) {
  if (c.value().is_string()) {
    if (c.string() != "empirical") c.fail("edge prior must be an object or \"empirical\"");
    return EdgePrior{true, 0.0, 0.0};
  }
  EdgePrior p{false, c.at("alpha").number(), c.at("beta").number()};
  if (!(p.alpha > 0.0 && p.beta > 0.0)) c.fail("edge prior needs alpha > 0 and beta > 0");
  return p;
}

inline json to_json(const ScenarioConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["seed"] = c.seed;
  json models = json::object();
  for (const auto& [name, m] : c.models) models[name] = to_json(m);
  j["models"] = models;
  json channels = json::array();
  for (const auto& ch : c.channels)
    channels.push_back({{"id", ch.id},
                        {"name", ch.name},
                        {"efficiency", ch.efficiency},
                        {"r_max", ch.r_max},
                        {"scale_target", ch.scale_target},
                        {"clamp", ch.clamp},
                        {"summary", to_string(ch.summary)}});
  j["channels"] = channels;
  j["discount"] = {{"mode", c.discount_mode == DiscountMode::Fixed ? "fixed" : "adaptive"}, {"value", c.discount}};
  json priors = json::object();
  priors["default"] = to_json(c.default_prior);
  for (const auto& [origin, p] : c.origin_priors) priors[std::string(threatnet::to_string(origin))] = to_json(p);
  j["edge_priors"] = priors;
  j["auto_edge_prior"] = c.auto_edge_prior ? to_json(*c.auto_edge_prior) : json(nullptr);
  json entities = json::array();
  for (const auto& e : c.entities) {
    json x = {{"id", e.id}, {"model", e.model}};
    if (e.prior) x["prior"] = *e.prior;
    entities.push_back(x);
  }
  j["entities"] = entities;
  json edges = json::array();
  for (const auto& e : c.edges) {
    json x = {{"a", e.a}, {"b", e.b}, {"origin", threatnet::to_string(e.origin)}};
    if (e.prior) x["prior"] = to_json(*e.prior);
    edges.push_back(x);
  }
  j["edges"] = edges;
  json cells = json::array();
  for (const auto& cs : c.cells) {
    json x = {{"id", cs.id},
              {"members", cs.members},
              {"model", cs.model},
              {"ideal_size", cs.ideal_size},
              {"threshold", cs.threshold},
              {"individual_threat", cs.individual_threat},
              {"cell_threat", cs.cell_threat}};
    if (cs.prior) x["prior"] = *cs.prior;
    cells.push_back(x);
  }
  j["cells"] = cells;
  return j;
}

inline ScenarioConfig config_from_json(const json& doc) {
  const Cursor c(doc);
  if (!doc.is_object()) c.fail("scenario must be a JSON object");
  ScenarioConfig cfg;
  const auto version = c.at("schema_version");
  cfg.schema_version = static_cast<int>(version.integer());
  if (cfg.schema_version != 1) version.fail("unsupported schema_version " + std::to_string(cfg.schema_version));
  if (auto n = c.maybe("name")) cfg.name = n->string();
  if (auto s = c.maybe("seed")) cfg.seed = s->unsigned_integer();

  const auto models = c.at("models");
  for (const auto& [name, m] : models.items()) cfg.models.emplace(name, model_from_json(name, m));
  if (cfg.models.empty()) models.fail("at least one model is required");

  const auto channels = c.at("channels");
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto e = channels[k];
    ChannelSpec ch;
    ch.id = static_cast<int>(e.at("id").integer());
    if (auto n = e.maybe("name")) ch.name = n->string();
    ch.efficiency = e.at("efficiency").number();
    ch.r_max = e.at("r_max").number();
    if (auto s = e.maybe("scale_target")) ch.scale_target = s->number();
    if (auto s = e.maybe("clamp")) ch.clamp = s->boolean();
    if (auto s = e.maybe("summary")) {
      const auto kind = s->string();
      if (kind == "sum") ch.summary = ChannelSpec::Summary::Sum;
      else if (kind == "count") ch.summary = ChannelSpec::Summary::Count;
      else if (kind == "first_difference") ch.summary = ChannelSpec::Summary::FirstDifference;
      else s->fail("unknown summary '" + kind + "'");
    }
    with_path(e, [&] { ch.validate(); });
    for (const auto& prev : cfg.channels)
      if (prev.id == ch.id) e.at("id").fail("duplicate channel id");
    cfg.channels.push_back(ch);
  }
  if (cfg.channels.empty()) channels.fail("at least one channel is required");

  if (auto d = c.maybe("discount")) {
    const auto mode = d->at("mode").string();
    if (mode == "fixed") cfg.discount_mode = DiscountMode::Fixed;
    else if (mode == "adaptive") cfg.discount_mode = DiscountMode::Adaptive;
    else d->at("mode").fail("discount mode must be 'fixed' or 'adaptive'");
    cfg.discount = d->at("value").number();
    if (!(cfg.discount > 0.0 && cfg.discount <= 1.0)) d->at("value").fail("discount must be in (0, 1]");
  }
  if (auto p = c.maybe("edge_priors")) {
    for (const auto& [key, v] : p->items()) {
      if (key == "default") cfg.default_prior = edge_prior_from_json(v);
      else cfg.origin_priors[with_path(v, [&] { return edge_origin_from_string(key); })] = edge_prior_from_json(v);
    }
  }
  if (auto p = c.maybe("auto_edge_prior")) cfg.auto_edge_prior = edge_prior_from_json(*p);

  if (auto es = c.maybe("entities")) {
    for (std::size_t i = 0; i < es->size(); ++i) {
      const auto e = (*es)[i];
      EntitySpec s{e.at("id").string(), e.at("model").string(), std::nullopt};
      if (!cfg.models.contains(s.model)) e.at("model").fail("unknown model '" + s.model + "'");
      if (auto p = e.maybe("prior")) s.prior = p->numbers();
      cfg.entities.push_back(s);
    }
  }
  if (auto es = c.maybe("edges")) {
    for (std::size_t i = 0; i < es->size(); ++i) {
      const auto e = (*es)[i];
      EdgeSpec s{e.at("a").string(), e.at("b").string(), EdgeOrigin::ObservedCommunication, std::nullopt};
      if (auto o = e.maybe("origin")) s.origin = with_path(*o, [&] { return edge_origin_from_string(o->string()); });
      if (auto p = e.maybe("prior")) s.prior = edge_prior_from_json(*p);
      cfg.edges.push_back(s);
    }
  }
  if (auto cs = c.maybe("cells")) {
    for (std::size_t i = 0; i < cs->size(); ++i) {
      const auto e = (*cs)[i];
      CellSpec s;
      s.id = e.at("id").string();
      s.members = e.at("members").strings();
      s.model = e.at("model").string();
      if (!cfg.models.contains(s.model)) e.at("model").fail("unknown model '" + s.model + "'");
      if (auto p = e.maybe("prior")) s.prior = p->numbers();
      s.ideal_size = e.at("ideal_size").number();
      s.threshold = e.at("threshold").number();
      s.individual_threat = e.at("individual_threat").strings();
      s.cell_threat = e.at("cell_threat").strings();
      cfg.cells.push_back(s);
    }
  }
  with_path(c, [&] { cfg.finalize(); });
  // Entity/cell cross-references are checked by building the initial state.
  with_path(c, [&] { initial_state(std::make_shared<const ScenarioConfig>(cfg)); });
  return cfg;
}

// ---------------------------------------------------------------------------
// Beliefs and graph

inline json to_json(const StateBelief& b) {
  return {{"tick", b.tick()}, {"states", b.states()}, {"cap", b.cap()},
          {"joint", std::vector<double>(b.joint().begin(), b.joint().end())}};
}

inline StateBelief state_belief_from_json(const Cursor& c) {
  return with_path(c, [&] {
    return StateBelief(static_cast<std::size_t>(c.at("states").integer()), static_cast<std::size_t>(c.at("cap").integer()),
                       c.at("joint").numbers(), c.at("tick").integer());
  });
}

inline json belief_view(const StateBelief& b, const ThreatModel& m) {
  json pi = json::object();
  json durations = json::object();
  const auto marginal = b.marginal();
  for (std::size_t i = 0; i < m.space.size(); ++i) {
    pi[m.space.states[i]] = marginal[i];
    durations[m.space.states[i]] = b.duration_marginal(i);
  }
  return {{"tick", b.tick()}, {"pi", pi}, {"duration_marginal", durations}};
}

inline json to_json(const EdgeBelief& b) {
  return {{"a", b.pair.first()},
          {"b", b.pair.second()},
          {"alpha", b.alpha},
          {"beta", b.beta},
          {"baseline_discount", b.baseline_discount},
          {"discount_mode", b.discount_mode == DiscountMode::Fixed ? "fixed" : "adaptive"},
          {"last_observed_effort", b.last_observed_effort}};
}

inline EdgeBelief edge_belief_from_json(const Cursor& c) {
  EdgeBelief b;
  b.pair = with_path(c, [&] { return EntityPair(c.at("a").string(), c.at("b").string()); });
  b.alpha = c.at("alpha").number();
  b.beta = c.at("beta").number();
  b.baseline_discount = c.at("baseline_discount").number();
  const auto mode = c.at("discount_mode").string();
  if (mode != "fixed" && mode != "adaptive") c.at("discount_mode").fail("unknown discount mode");
  b.discount_mode = mode == "fixed" ? DiscountMode::Fixed : DiscountMode::Adaptive;
  b.last_observed_effort = c.at("last_observed_effort").number();
  return b;
}

inline json to_json(const EdgeRecord& r) {
  json j = {{"created", r.created}, {"origin", threatnet::to_string(r.origin)}, {"belief", to_json(r.belief)}, {"fresh", r.fresh}};
  j["archived"] = r.archived ? json(*r.archived) : json(nullptr);
  return j;
}

inline EdgeRecord edge_record_from_json(const Cursor& c) {
  EdgeRecord r;
  r.created = c.at("created").integer();
  r.origin = with_path(c.at("origin"), [&] { return edge_origin_from_string(c.at("origin").string()); });
  r.belief = edge_belief_from_json(c.at("belief"));
  r.fresh = c.at("fresh").boolean();
  if (auto a = c.maybe("archived")) r.archived = a->integer();
  return r;
}

inline json to_json(const PopulationGraph& g) {
  json entities = json::array();
  for (const auto& [id, rec] : g.entities()) {
    json e = {{"id", id}, {"entered", rec.entered}, {"model", rec.model}};
    e["exited"] = rec.exited ? json(*rec.exited) : json(nullptr);
    entities.push_back(e);
  }
  json edges = json::array();
  for (const auto& [p, rec] : g.edges()) edges.push_back(to_json(rec));
  json archived = json::array();
  for (const auto& [p, rec] : g.archived_edges()) archived.push_back(to_json(rec));
  json cells = json::array();
  for (const auto& [id, c] : g.cells())
    cells.push_back({{"id", c.id},
                     {"members", c.members},
                     {"model", c.model},
                     {"ideal_size", c.ideal_size},
                     {"threshold", c.threshold},
                     {"individual_threat", c.individual_threat},
                     {"cell_threat", c.cell_threat},
                     {"belief", to_json(c.belief)},
                     {"connectivity_broken", c.connectivity_broken}});
  return {{"tick", g.tick()}, {"entities", entities}, {"edges", edges}, {"archived_edges", archived}, {"cells", cells}};
}

/// Rebuilds a graph exactly as serialised.
inline PopulationGraph graph_from_json(const Cursor& c) {
  std::map<EntityId, EntityRecord> entities;
  const auto es = c.at("entities");
  for (std::size_t i = 0; i < es.size(); ++i) {
    const auto e = es[i];
    EntityRecord rec{e.at("entered").integer(), std::nullopt, e.at("model").string()};
    if (auto x = e.maybe("exited")) rec.exited = x->integer();
    if (!entities.emplace(e.at("id").string(), rec).second) e.at("id").fail("duplicate entity");
  }
  std::map<EntityPair, EdgeRecord> edges;
  const auto ed = c.at("edges");
  for (std::size_t i = 0; i < ed.size(); ++i) {
    auto rec = edge_record_from_json(ed[i]);
    if (!edges.emplace(rec.belief.pair, rec).second) ed[i].fail("duplicate edge");
  }
  std::vector<std::pair<EntityPair, EdgeRecord>> archived;
  const auto ar = c.at("archived_edges");
  for (std::size_t i = 0; i < ar.size(); ++i) {
    auto rec = edge_record_from_json(ar[i]);
    archived.emplace_back(rec.belief.pair, rec);
  }
  std::map<std::string, Cell> cells;
  const auto cs = c.at("cells");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto e = cs[i];
    Cell cell;
    cell.id = e.at("id").string();
    cell.members = e.at("members").strings();
    cell.model = e.at("model").string();
    cell.ideal_size = e.at("ideal_size").number();
    cell.threshold = e.at("threshold").number();
    for (double v : e.at("individual_threat").numbers()) cell.individual_threat.push_back(static_cast<std::size_t>(v));
    for (double v : e.at("cell_threat").numbers()) cell.cell_threat.push_back(static_cast<std::size_t>(v));
    cell.belief = state_belief_from_json(e.at("belief"));
    cell.connectivity_broken = e.at("connectivity_broken").boolean();
    auto id = cell.id;
    if (!cells.emplace(std::move(id), std::move(cell)).second) e.at("id").fail("duplicate cell");
  }
  return with_path(c, [&] {
    return PopulationGraph::restore(c.at("tick").integer(), std::move(entities), std::move(edges), std::move(archived),
                                    std::move(cells));
  });
}

// ---------------------------------------------------------------------------
// Batches and stream records

inline json to_json(const TickBatch& b) {
  json signals = json::object();
  for (const auto& [id, z] : b.signals) signals[id] = optional_numbers_json(z.values);
  json obs = json::array();
  for (const auto& o : b.observations)
    obs.push_back({{"a", o.pair.first()}, {"b", o.pair.second()}, {"values", optional_numbers_json(o.values)}, {"monitored", o.monitored}});
  json additions = json::array();
  for (const auto& a : b.additions) {
    json x = {{"id", a.id}, {"model", a.model}};
    if (a.prior) x["prior"] = *a.prior;
    additions.push_back(x);
  }
  json events = json::array();
  for (const auto& e : b.edge_events) {
    json x = {{"a", e.pair.first()}, {"b", e.pair.second()}, {"origin", threatnet::to_string(e.origin)}};
    if (e.prior) x["prior"] = to_json(*e.prior);
    events.push_back(x);
  }
  return {{"tick", b.tick}, {"signals", signals}, {"observations", obs}, {"additions", additions},
          {"removals", b.removals}, {"edge_events", events}};
}

inline TickBatch batch_from_json(const Cursor& c) {
  TickBatch b;
  b.tick = c.at("tick").integer();
  if (auto s = c.maybe("signals"))
    for (const auto& [id, v] : s->items()) b.signals.emplace(id, SignalVector{v.optional_numbers(), b.tick});
  if (auto os = c.maybe("observations")) {
    for (std::size_t i = 0; i < os->size(); ++i) {
      const auto o = (*os)[i];
      ObservationVector ov;
      ov.pair = with_path(o, [&] { return EntityPair(o.at("a").string(), o.at("b").string()); });
      ov.tick = b.tick;
      ov.values = o.at("values").optional_numbers();
      if (auto m = o.maybe("monitored")) ov.monitored = m->boolean();
      b.observations.push_back(std::move(ov));
    }
  }
  if (auto as = c.maybe("additions")) {
    for (std::size_t i = 0; i < as->size(); ++i) {
      const auto a = (*as)[i];
      EntityAddition x{a.at("id").string(), a.at("model").string(), std::nullopt};
      if (auto p = a.maybe("prior")) x.prior = p->numbers();
      b.additions.push_back(std::move(x));
    }
  }
  if (auto rs = c.maybe("removals")) b.removals = rs->strings();
  if (auto es = c.maybe("edge_events")) {
    for (std::size_t i = 0; i < es->size(); ++i) {
      const auto e = (*es)[i];
      EdgeEvent ev;
      ev.pair = with_path(e, [&] { return EntityPair(e.at("a").string(), e.at("b").string()); });
      if (auto o = e.maybe("origin")) ev.origin = with_path(*o, [&] { return edge_origin_from_string(o->string()); });
      if (auto p = e.maybe("prior")) ev.prior = edge_prior_from_json(*p);
      b.edge_events.push_back(std::move(ev));
    }
  }
  return b;
}

inline json to_json(const StreamRecord& r) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ObservationRecord>) {
          return {{"type", "observation"}, {"tick", x.tick}, {"entity_a", x.entity_a}, {"entity_b", x.entity_b},
                  {"channel_id", x.channel_id}, {"raw_value", x.raw_value}, {"monitored", x.monitored}};
        } else if constexpr (std::is_same_v<T, SignalRecord>) {
          return {{"type", "signal"}, {"tick", x.tick}, {"entity", x.entity}, {"values", optional_numbers_json(x.values)}};
        } else if constexpr (std::is_same_v<T, AddEntityRecord>) {
          json j = {{"type", "add_entity"}, {"tick", x.tick}, {"entity", x.entity}, {"model", x.model}};
          if (x.prior) j["prior"] = *x.prior;
          return j;
        } else if constexpr (std::is_same_v<T, RemoveEntityRecord>) {
          return {{"type", "remove_entity"}, {"tick", x.tick}, {"entity", x.entity}};
        } else {
          json j = {{"type", "add_edge"}, {"tick", x.tick}, {"entity_a", x.entity_a}, {"entity_b", x.entity_b},
                    {"origin", threatnet::to_string(x.origin)}};
          if (x.prior) j["prior"] = to_json(*x.prior);
          return j;
        }
      },
      r);
}

inline StreamRecord record_from_json(const Cursor& c) {
  const auto type = c.at("type").string();
  const Tick tick = c.at("tick").integer();
  if (type == "observation") {
    ObservationRecord r{tick, c.at("entity_a").string(), c.at("entity_b").string(),
                        static_cast<int>(c.at("channel_id").integer()), c.at("raw_value").number(), true};
    if (auto m = c.maybe("monitored")) r.monitored = m->boolean();
    if (!(r.raw_value >= 0.0)) c.at("raw_value").fail("raw_value must be >= 0");
    return r;
  }
  if (type == "signal") return SignalRecord{tick, c.at("entity").string(), c.at("values").optional_numbers()};
  if (type == "add_entity") {
    AddEntityRecord r{tick, c.at("entity").string(), c.at("model").string(), std::nullopt};
    if (auto p = c.maybe("prior")) r.prior = p->numbers();
    return r;
  }
  if (type == "remove_entity") return RemoveEntityRecord{tick, c.at("entity").string()};
  if (type == "add_edge") {
    AddEdgeRecord r{tick, c.at("entity_a").string(), c.at("entity_b").string(), EdgeOrigin::ObservedCommunication, std::nullopt};
    if (auto o = c.maybe("origin")) r.origin = with_path(*o, [&] { return edge_origin_from_string(o->string()); });
    if (auto p = c.maybe("prior")) r.prior = edge_prior_from_json(*p);
    return r;
  }
  c.at("type").fail("unknown record type '" + type + "'");
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const IndicatorReport& r) {
  json edges = json::array();
  for (std::size_t i = 0; i < r.inputs.edges.size(); ++i) {
    const auto& [p, ab] = r.inputs.edges[i];
    edges.push_back({{"a", p.first()}, {"b", p.second()}, {"alpha", ab.first}, {"beta", ab.second}});
  }
  return {{"cell", r.cell},
          {"tick", r.tick},
          {"m", r.m},
          {"phi", r.phi},
          {"cohesion_degenerate", r.cohesion_degenerate},
          {"density_degenerate", r.density_degenerate},
          {"connectivity_broken", r.connectivity_broken},
          {"inputs",
           {{"member_pi", r.inputs.member_pi},
            {"cell_pi", r.inputs.cell_pi},
            {"edges", edges},
            {"tail", r.inputs.tail},
            {"n", r.inputs.n},
            {"k", r.inputs.k},
            {"ideal_size", r.inputs.ideal_size},
            {"threshold", r.inputs.threshold},
            {"individual_threat", r.inputs.individual_threat},
            {"cell_threat", r.inputs.cell_threat}}}};
}

inline IndicatorReport indicator_report_from_json(const Cursor& c) {
  IndicatorReport r;
  r.cell = c.at("cell").string();
  r.tick = c.at("tick").integer();
  const auto m = c.at("m").numbers();
  const auto phi = c.at("phi").numbers();
  if (m.size() != 5 || phi.size() != 5) c.fail("m and phi need five entries");
  std::copy(m.begin(), m.end(), r.m.begin());
  std::copy(phi.begin(), phi.end(), r.phi.begin());
  r.cohesion_degenerate = c.at("cohesion_degenerate").boolean();
  r.density_degenerate = c.at("density_degenerate").boolean();
  r.connectivity_broken = c.at("connectivity_broken").boolean();
  const auto in = c.at("inputs");
  for (std::size_t i = 0; i < in.at("member_pi").size(); ++i) r.inputs.member_pi.push_back(in.at("member_pi")[i].numbers());
  r.inputs.cell_pi = in.at("cell_pi").numbers();
  const auto es = in.at("edges");
  for (std::size_t i = 0; i < es.size(); ++i) {
    const auto e = es[i];
    r.inputs.edges.push_back({with_path(e, [&] { return EntityPair(e.at("a").string(), e.at("b").string()); }),
                              {e.at("alpha").number(), e.at("beta").number()}});
  }
  r.inputs.tail = in.at("tail").numbers();
  r.inputs.n = static_cast<std::size_t>(in.at("n").integer());
  r.inputs.k = static_cast<std::size_t>(in.at("k").integer());
  r.inputs.ideal_size = in.at("ideal_size").number();
  r.inputs.threshold = in.at("threshold").number();
  for (double v : in.at("individual_threat").numbers()) r.inputs.individual_threat.push_back(static_cast<std::size_t>(v));
  for (double v : in.at("cell_threat").numbers()) r.inputs.cell_threat.push_back(static_cast<std::size_t>(v));
  return r;
}

inline json to_json(const EdgeTickResult& e) {
  json j = {{"a", e.pair.first()},
            {"b", e.pair.second()},
            {"delta", e.delta},
            {"prior", to_json(e.prior)},
            {"posterior", to_json(e.posterior)},
            {"observed", e.observed},
            {"rounded", e.rounded},
            {"predictive_skipped", e.predictive_skipped}};
  j["log_likelihood"] = e.log_likelihood ? json(*e.log_likelihood) : json(nullptr);
  return j;
}

inline EdgeTickResult edge_tick_result_from_json(const Cursor& c) {
  EdgeTickResult e;
  e.pair = with_path(c, [&] { return EntityPair(c.at("a").string(), c.at("b").string()); });
  e.delta = c.at("delta").number();
  e.prior = edge_belief_from_json(c.at("prior"));
  e.posterior = edge_belief_from_json(c.at("posterior"));
  e.observed = c.at("observed").boolean();
  e.rounded = c.at("rounded").boolean();
  e.predictive_skipped = c.at("predictive_skipped").boolean();
  if (auto l = c.maybe("log_likelihood")) e.log_likelihood = l->number();
  return e;
}

inline json to_json(const FilterTickResult& f) {
  return {{"id", f.id}, {"pi", f.pi}, {"log_evidence", f.log_evidence}, {"vacuous", f.vacuous}};
}

inline FilterTickResult filter_tick_result_from_json(const Cursor& c) {
  return {c.at("id").string(), c.at("pi").numbers(), c.at("log_evidence").number(), c.at("vacuous").boolean()};
}

inline json to_json(const TickReport& r) {
  json edges = json::array();
  for (const auto& e : r.edges) edges.push_back(to_json(e));
  json entities = json::array();
  for (const auto& e : r.entities) entities.push_back(to_json(e));
  json cells = json::array();
  for (const auto& e : r.cells) cells.push_back(to_json(e));
  json indicators = json::array();
  for (const auto& i : r.indicators) indicators.push_back(to_json(i));
  json created = json::array();
  for (const auto& p : r.created_edges) created.push_back({p.first(), p.second()});
  return {{"tick", r.tick},
          {"edges", edges},
          {"entities", entities},
          {"cells", cells},
          {"indicators", indicators},
          {"created_edges", created},
          {"network_log_likelihood", r.network_log_likelihood},
          {"cumulative_log_likelihood", r.cumulative_log_likelihood},
          {"flags", r.flags}};
}

inline TickReport tick_report_from_json(const Cursor& c) {
  TickReport r;
  r.tick = c.at("tick").integer();
  const auto es = c.at("edges");
  for (std::size_t i = 0; i < es.size(); ++i) r.edges.push_back(edge_tick_result_from_json(es[i]));
  const auto en = c.at("entities");
  for (std::size_t i = 0; i < en.size(); ++i) r.entities.push_back(filter_tick_result_from_json(en[i]));
  const auto cs = c.at("cells");
  for (std::size_t i = 0; i < cs.size(); ++i) r.cells.push_back(filter_tick_result_from_json(cs[i]));
  const auto is = c.at("indicators");
  for (std::size_t i = 0; i < is.size(); ++i) r.indicators.push_back(indicator_report_from_json(is[i]));
  const auto ce = c.at("created_edges");
  for (std::size_t i = 0; i < ce.size(); ++i) {
    const auto p = ce[i].strings();
    if (p.size() != 2) ce[i].fail("expected a pair");
    r.created_edges.push_back(with_path(ce[i], [&] { return EntityPair(p[0], p[1]); }));
  }
  r.network_log_likelihood = c.at("network_log_likelihood").number();
  r.cumulative_log_likelihood = c.at("cumulative_log_likelihood").number();
  r.flags = c.at("flags").strings();
  return r;
}

// ---------------------------------------------------------------------------
// Snapshots

inline json snapshot_to_json(const ScenarioState& s) {
  json beliefs = json::object();
  for (const auto& [id, b] : s.beliefs) beliefs[id] = to_json(b);
  json log = json::array();
  for (const auto& b : s.event_log) log.push_back(to_json(b));
  json history = json::array();
  for (const auto& r : s.history) history.push_back(to_json(r));
  return {{"format", "threatnet-snapshot"},
          {"version", kSnapshotVersion},
          {"config", to_json(*s.config)},
          {"state",
           {{"tick", s.tick},
            {"cumulative_log_likelihood", s.cumulative_log_likelihood},
            {"graph", to_json(s.graph)},
            {"beliefs", beliefs}}},
          {"event_log", log},
          {"history", history}};
}

inline ScenarioState snapshot_from_json(const json& doc) {
  const Cursor c(doc);
  if (c.at("format").string() != "threatnet-snapshot") c.at("format").fail("not a snapshot document");
  if (c.at("version").integer() != kSnapshotVersion) c.at("version").fail("unsupported snapshot version");
  ScenarioState s;
  const auto config = c.at("config");
  try {
    s.config = std::make_shared<const ScenarioConfig>(config_from_json(config.value()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SchemaError) throw;
    const auto inner = e.path() == "/" ? std::string() : e.path();
    const auto at = config.path() + inner;
    throw Error(ErrorCode::SchemaError, at + e.detail().substr(e.detail().find(':')), at);
  }
  const auto st = c.at("state");
  s.tick = st.at("tick").integer();
  s.cumulative_log_likelihood = st.at("cumulative_log_likelihood").number();
  s.graph = graph_from_json(st.at("graph"));
  for (const auto& [id, b] : st.at("beliefs").items()) s.beliefs.emplace(id, state_belief_from_json(b));
  const auto log = c.at("event_log");
  for (std::size_t i = 0; i < log.size(); ++i) s.event_log.push_back(batch_from_json(log[i]));
  const auto history = c.at("history");
  for (std::size_t i = 0; i < history.size(); ++i) s.history.push_back(tick_report_from_json(history[i]));
  if (s.event_log.size() != static_cast<std::size_t>(s.tick) || s.history.size() != s.event_log.size() + 1)
    c.fail("event log and history do not match the committed tick");
  return s;
}

/// Compact form; doubles print as shortest round-trip decimals.
inline std::string dump(const json& j) { return j.dump(); }

}  // namespace threatnet::io
