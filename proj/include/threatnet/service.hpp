#pragma once

// Transport-independent JSON API over one live scenario. The HTTP server in
// tools/ forwards requests here; tests call handle() directly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "threatnet/error.hpp"
#include "threatnet/indicators.hpp"
#include "threatnet/io/json.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/random.hpp"
#include "threatnet/stream.hpp"

namespace threatnet {

inline constexpr int kApiSchemaVersion = 1;

struct Response {
  int status = 200;
  io::json body;
};

namespace detail {

inline std::string percent_decode(std::string_view s, bool plus_as_space = false) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      const auto hex = std::string(s.substr(i + 1, 2));
      char* end = nullptr;
      const long v = std::strtol(hex.c_str(), &end, 16);
      if (end == hex.c_str() + 2) {
        out += static_cast<char>(v);
        i += 2;
        continue;
      }
    }
    out += plus_as_space && s[i] == '+' ? ' ' : s[i];
  }
  return out;
}

inline std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const auto j = path.find('/', i);
    const auto seg = path.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i);
    if (!seg.empty()) out.push_back(percent_decode(seg));
    if (j == std::string_view::npos) break;
    i = j;
  }
  return out;
}

inline std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  std::size_t i = 0;
  while (i <= q.size() && !q.empty()) {
    const auto j = q.find('&', i);
    const auto part = q.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i);
    const auto eq = part.find('=');
    if (!part.empty())
      out[percent_decode(part.substr(0, eq), true)] =
          eq == std::string_view::npos ? "" : percent_decode(part.substr(eq + 1), true);
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return out;
}

inline Response error_response(int status, std::string_view code, const std::string& message, const std::string& path = {}) {
  io::json err = {{"code", code}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  return {status, {{"error", err}}};
}

inline int status_for(ErrorCode code, bool lookup) {
  switch (code) {
    case ErrorCode::TickMismatch: return 409;
    case ErrorCode::UnknownEntity:
    case ErrorCode::UnknownEdge:
    case ErrorCode::UnknownCell: return lookup ? 404 : 422;
    case ErrorCode::IoError: return 500;
    default: return 422;
  }
}

inline Intervention intervention_from_json(const io::Cursor& c) {
  const auto type = c.at("type").string();
  const auto cell = c.at("cell").string();
  auto pair_at = [](const io::Cursor& p) {
    return io::with_path(p, [&] { return EntityPair(p.at("a").string(), p.at("b").string()); });
  };
  if (type == "remove_member") return RemoveMember{cell, c.at("member").string()};
  if (type == "sever_edges") {
    SeverEdges s{cell, {}, false};
    if (auto a = c.maybe("all")) s.all = a->boolean();
    if (auto ps = c.maybe("pairs"))
      for (std::size_t i = 0; i < ps->size(); ++i) s.pairs.push_back(pair_at((*ps)[i]));
    return s;
  }
  if (type == "set_edge_belief")
    return SetEdgeBelief{cell, pair_at(c.at("pair")), c.at("alpha").number(), c.at("beta").number()};
  if (type == "change_threat_set") {
    ChangeThreatSet s{cell, std::nullopt, std::nullopt};
    if (auto t = c.maybe("individual_threat")) s.individual_threat = t->strings();
    if (auto t = c.maybe("cell_threat")) s.cell_threat = t->strings();
    return s;
  }
  if (type == "change_parameters") {
    ChangeParameters s{cell, std::nullopt, std::nullopt};
    if (auto t = c.maybe("threshold")) s.threshold = t->number();
    if (auto t = c.maybe("ideal_size")) s.ideal_size = t->number();
    return s;
  }
  c.at("type").fail("unknown intervention '" + type + "'");
}

}  // namespace detail

class Service {
 public:
  explicit Service(ScenarioState state, CommitOptions options = {}) : state_(std::move(state)), options_(options) {}

  /// `target` is the request path with an optional "?query".
  Response handle(std::string_view method, std::string_view target, const std::string& body = {}) {
    const auto qpos = target.find('?');
    const auto path = detail::split_path(target.substr(0, qpos));
    const auto query = qpos == std::string_view::npos ? std::map<std::string, std::string>{}
                                                      : detail::parse_query(target.substr(qpos + 1));
    if (path.size() < 2 || path[0] != "api" || path[1] != "v1") return detail::error_response(404, "NotFound", "unknown route");
    const std::vector<std::string> r(path.begin() + 2, path.end());
    const bool get = method == "GET";
    const bool post = method == "POST";
    try {
      if (r.size() == 1 && r[0] == "status") return get ? status() : not_allowed();
      if (r.size() == 1 && r[0] == "graph") return get ? graph() : not_allowed();
      if (r.size() == 3 && r[0] == "entities" && r[2] == "belief") return get ? entity_belief(r[1]) : not_allowed();
      if (r.size() == 4 && r[0] == "edges" && r[3] == "belief") return get ? edge_belief(r[1], r[2], query) : not_allowed();
      if (r.size() == 2 && r[0] == "cells" && r[1] == "ranking") return get ? ranking(query) : not_allowed();
      if (r.size() == 3 && r[0] == "cells" && r[2] == "indicators") return get ? cell_indicators_series(r[1]) : not_allowed();
      if (r.size() == 1 && r[0] == "ticks") return post ? commit(body) : not_allowed();
      if (r.size() == 1 && r[0] == "what-if") return post ? what_if_request(body) : not_allowed();
      if (r.size() == 1 && r[0] == "snapshot") return get ? snapshot_get() : post ? snapshot_post(body) : not_allowed();
      return detail::error_response(404, "NotFound", "unknown route");
    } catch (const Error& e) {
      return detail::error_response(detail::status_for(e.code(), get), to_string(e.code()), e.detail(), e.path());
    } catch (const std::exception& e) {
      return detail::error_response(500, "Internal", e.what());
    }
  }

  ScenarioState state() const {
    std::shared_lock lock(mutex_);
    return state_;
  }

 private:
  static Response not_allowed() { return detail::error_response(405, "MethodNotAllowed", "method not allowed on this route"); }

  static io::json parse_body(const std::string& body) {
    try {
      return io::json::parse(body);
    } catch (const io::json::parse_error& e) {
      throw Error(ErrorCode::SchemaError, std::string("malformed JSON body: ") + e.what(), "/");
    }
  }

  Response status() const {
    std::shared_lock lock(mutex_);
    const auto& s = state_;
    return {200,
            {{"schema_version", kApiSchemaVersion},
             {"scenario", s.config->name},
             {"tick", s.tick},
             {"cumulative_log_likelihood", s.cumulative_log_likelihood},
             {"entities", s.graph.present_entities().size()},
             {"edges", s.graph.edges().size()},
             {"cells", s.graph.cells().size()},
             {"generator", kGeneratorName}}};
  }

  Response graph() const {
    std::shared_lock lock(mutex_);
    const auto& s = state_;
    io::json entities = io::json::array();
    for (const auto& [id, rec] : s.graph.entities()) {
      if (rec.exited) continue;
      const auto& m = s.config->model(rec.model);
      const auto pi = s.belief(id).marginal();
      const auto top = static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin());
      entities.push_back({{"id", id}, {"model", rec.model}, {"entered", rec.entered}, {"argmax_state", m.space.states[top]}, {"pi", pi}});
    }
    io::json edges = io::json::array();
    for (const auto& [p, rec] : s.graph.edges()) {
      io::json e = {{"a", p.first()}, {"b", p.second()}, {"origin", to_string(rec.origin)}, {"created", rec.created},
                    {"alpha", rec.belief.alpha}, {"beta", rec.belief.beta}};
      e["mean"] = rec.belief.proper() ? io::json(rec.belief.mean()) : io::json(nullptr);
      edges.push_back(e);
    }
    io::json cells = io::json::array();
    for (const auto& [id, c] : s.graph.cells())
      cells.push_back({{"id", id}, {"members", c.members}, {"connectivity_broken", c.connectivity_broken},
                       {"ideal_size", c.ideal_size}, {"threshold", c.threshold}});
    return {200, {{"schema_version", kApiSchemaVersion}, {"tick", s.tick}, {"entities", entities}, {"edges", edges},
                  {"archived_edges", s.graph.archived_edges().size()}, {"cells", cells}}};
  }

  Response entity_belief(const std::string& id) const {
    std::shared_lock lock(mutex_);
    if (!state_.graph.entities().contains(id)) throw Error(ErrorCode::UnknownEntity, "unknown entity '" + id + "'");
    const auto& m = state_.config->model(state_.graph.entities().at(id).model);
    auto view = io::belief_view(state_.belief(id), m);
    view["schema_version"] = kApiSchemaVersion;
    view["id"] = id;
    view["present"] = state_.graph.present(id);
    return {200, view};
  }

  Response edge_belief(const std::string& a, const std::string& b, const std::map<std::string, std::string>& query) const {
    std::shared_lock lock(mutex_);
    const auto& rec = state_.graph.edge(EntityPair(a, b));
    const auto& bel = rec.belief;
    io::json out = {{"schema_version", kApiSchemaVersion}, {"tick", state_.tick}, {"a", bel.pair.first()},
                    {"b", bel.pair.second()}, {"alpha", bel.alpha}, {"beta", bel.beta}, {"origin", to_string(rec.origin)}};
    if (!bel.proper()) {
      out["mean"] = nullptr;
      out["curve"] = io::json::array();
      return {200, out};
    }
    std::size_t points = 101;
    if (auto it = query.find("points"); it != query.end()) {
      try {
        points = static_cast<std::size_t>(std::stoul(it->second));
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "points must be a positive integer");
      }
      if (points < 2 || points > 10000) throw Error(ErrorCode::InvalidArgument, "points must be in 2..10000");
    }
    const double hi = bel.mean() + 6.0 * std::sqrt(bel.variance());
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) grid[i] = hi * static_cast<double>(i) / static_cast<double>(points - 1);
    const auto dens = posterior_density_curve(bel, grid);
    io::json curve = io::json::array();
    for (std::size_t i = 0; i < points; ++i) curve.push_back({grid[i], std::isfinite(dens[i]) ? io::json(dens[i]) : io::json(nullptr)});
    out["mean"] = bel.mean();
    out["variance"] = bel.variance();
    out["curve"] = curve;
    return {200, out};
  }

  Response cell_indicators_series(const std::string& id) const {
    std::shared_lock lock(mutex_);
    state_.graph.cell(id);
    io::json series = io::json::array();
    for (const auto& r : state_.history)
      for (const auto& ind : r.indicators)
        if (ind.cell == id) series.push_back(io::to_json(ind));
    return {200, {{"schema_version", kApiSchemaVersion}, {"cell", id}, {"tick", state_.tick}, {"series", series}}};
  }

  Response ranking(const std::map<std::string, std::string>& query) const {
    std::shared_lock lock(mutex_);
    std::size_t key = 0;
    if (auto it = query.find("key"); it != query.end()) {
      if (it->second.size() != 1 || it->second[0] < '0' || it->second[0] > '4')
        throw Error(ErrorCode::InvalidArgument, "key must be an indicator index 0..4");
      key = static_cast<std::size_t>(it->second[0] - '0');
    }
    const auto& latest = state_.history.back().indicators;
    io::json scores = io::json::object();
    for (const auto& r : latest) scores[r.cell] = r.phi[key];
    return {200, {{"schema_version", kApiSchemaVersion}, {"tick", state_.tick}, {"key", key},
                  {"ranking", rank_cells(latest, key)}, {"scores", scores}}};
  }

  Response commit(const std::string& body) {
    const auto doc = parse_body(body);
    const io::Cursor c(doc);
    const auto expected = c.at("expected_tick").integer();
    std::unique_lock lock(mutex_);
    if (expected != state_.tick)
      return detail::error_response(409, "TickMismatch",
                                    "committed tick is " + std::to_string(state_.tick) + ", request expected " +
                                        std::to_string(expected));
    TickBatch batch;
    if (auto b = c.maybe("batch")) {
      batch = io::batch_from_json(*b);
    } else {
      const auto rs = c.at("records");
      std::vector<StreamRecord> records;
      for (std::size_t i = 0; i < rs.size(); ++i) {
        records.push_back(io::record_from_json(rs[i]));
        if (record_tick(records.back()) != expected + 1) rs[i].at("tick").fail("record tick must be " + std::to_string(expected + 1));
      }
      batch = assemble_batches(*state_.config, records, expected + 1, expected + 1).front();
    }
    auto [next, report] = commit_tick(state_, batch, options_);
    state_ = std::move(next);
    return {200, {{"schema_version", kApiSchemaVersion}, {"tick", state_.tick}, {"report", io::to_json(report)}}};
  }

  Response what_if_request(const std::string& body) const {
    const auto doc = parse_body(body);
    const io::Cursor c(doc);
    const auto iv = detail::intervention_from_json(c.at("intervention"));
    std::shared_lock lock(mutex_);
    const auto result = what_if(state_, iv);
    io::json delta = {{"m", io::json::array()}, {"phi", io::json::array()}};
    for (std::size_t i = 0; i < 5; ++i) {
      delta["m"].push_back(result.after.m[i] - result.before.m[i]);
      delta["phi"].push_back(result.after.phi[i] - result.before.phi[i]);
    }
    return {200, {{"schema_version", kApiSchemaVersion}, {"tick", state_.tick}, {"before", io::to_json(result.before)},
                  {"after", io::to_json(result.after)}, {"delta", delta}}};
  }

  Response snapshot_get() const {
    std::shared_lock lock(mutex_);
    return {200, io::snapshot_to_json(state_)};
  }

  Response snapshot_post(const std::string& body) {
    auto loaded = io::snapshot_from_json(parse_body(body));
    std::unique_lock lock(mutex_);
    state_ = std::move(loaded);
    return {200, {{"schema_version", kApiSchemaVersion}, {"tick", state_.tick}, {"loaded", true}}};
  }

  mutable std::shared_mutex mutex_;
  ScenarioState state_;
  CommitOptions options_;
};

}  // namespace threatnet
