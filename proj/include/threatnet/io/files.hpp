#pragma once

// File formats: scenario/snapshot JSON, observation CSV, record JSONL, and
// the report files written by a replay.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "threatnet/error.hpp"
#include "threatnet/io/json.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/stream.hpp"

namespace threatnet::io {

namespace fs = std::filesystem;

inline constexpr const char* kCsvHeader = "tick,entity_a,entity_b,channel_id,raw_value,monitored_flag";

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, origin + ": malformed JSON (" + e.what() + ")", origin);
  }
}

inline ScenarioConfig load_config(const fs::path& path) {
  return config_from_json(parse_json(read_text(path), path.string()));
}

inline ScenarioState load_snapshot(const fs::path& path) {
  return snapshot_from_json(parse_json(read_text(path), path.string()));
}

inline void save_snapshot(const fs::path& path, const ScenarioState& s) { write_text(path, dump(snapshot_to_json(s)) + "\n"); }

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, where + ": not a number '" + s + "'", where);
  }
}

inline long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::SchemaError, where + ": not an integer '" + s + "'", where);
  }
}

}  // namespace detail

/// Observation rows. Fields are unquoted; the header must match exactly.
inline std::vector<StreamRecord> parse_observation_csv(const std::string& text, const std::string& origin = "csv") {
  std::istringstream in(text);
  std::string line;
  std::vector<StreamRecord> out;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (!header) {
      if (line != kCsvHeader) throw Error(ErrorCode::SchemaError, where + ": expected header '" + kCsvHeader + "'", where);
      header = true;
      continue;
    }
    const auto f = detail::split_csv_line(line);
    if (f.size() != 6) throw Error(ErrorCode::SchemaError, where + ": expected 6 fields", where);
    ObservationRecord r;
    r.tick = detail::parse_int(f[0], where + "/tick");
    r.entity_a = f[1];
    r.entity_b = f[2];
    if (r.entity_a.empty() || r.entity_b.empty() || r.entity_a == r.entity_b)
      throw Error(ErrorCode::SchemaError, where + ": entity ids must be distinct and non-empty", where);
    r.channel_id = static_cast<int>(detail::parse_int(f[3], where + "/channel_id"));
    r.raw_value = detail::parse_double(f[4], where + "/raw_value");
    if (!(r.raw_value >= 0.0)) throw Error(ErrorCode::SchemaError, where + ": raw_value must be >= 0", where);
    if (f[5] == "1" || f[5] == "true") r.monitored = true;
    else if (f[5] == "0" || f[5] == "false") r.monitored = false;
    else throw Error(ErrorCode::SchemaError, where + ": monitored_flag must be 0/1", where);
    out.emplace_back(r);
  }
  if (!header) throw Error(ErrorCode::SchemaError, origin + ": missing header", origin);
  return out;
}

inline std::vector<StreamRecord> parse_records_jsonl(const std::string& text, const std::string& origin = "jsonl") {
  std::istringstream in(text);
  std::string line;
  std::vector<StreamRecord> out;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto doc = parse_json(line, where);
    try {
      out.push_back(record_from_json(Cursor(doc)));
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, where + e.path() + ": " + e.detail(), where + e.path());
    }
  }
  return out;
}

/// Dispatches on the extension: .csv for observation rows, anything else as JSONL.
inline std::vector<StreamRecord> load_records(const fs::path& path) {
  const auto text = read_text(path);
  if (path.extension() == ".csv") return parse_observation_csv(text, path.string());
  return parse_records_jsonl(text, path.string());
}

inline std::string records_to_csv(const std::vector<StreamRecord>& records) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    const auto* o = std::get_if<ObservationRecord>(&r);
    if (!o) continue;
    out << o->tick << ',' << o->entity_a << ',' << o->entity_b << ',' << o->channel_id << ','
        << json(o->raw_value).dump() << ',' << (o->monitored ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string records_to_jsonl(const std::vector<StreamRecord>& records) {
  std::string out;
  for (const auto& r : records) out += dump(to_json(r)) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Report files

inline std::string event_log_jsonl(const ScenarioState& s) {
  std::string out;
  for (std::size_t t = 0; t < s.event_log.size(); ++t)
    out += dump(json{{"tick", s.event_log[t].tick}, {"batch", to_json(s.event_log[t])}, {"report", to_json(s.history[t + 1])}}) + "\n";
  return out;
}

inline std::string indicators_csv(const ScenarioState& s) {
  std::ostringstream out;
  out << "tick,cell,m1,m2,m3,m4,m5,phi0,phi1,phi2,phi3,phi4\n";
  for (const auto& r : s.history)
    for (const auto& ind : r.indicators) {
      out << ind.tick << ',' << ind.cell;
      for (double v : ind.m) out << ',' << json(v).dump();
      for (double v : ind.phi) out << ',' << json(v).dump();
      out << '\n';
    }
  return out.str();
}

inline std::string edges_csv(const ScenarioState& s) {
  std::ostringstream out;
  out << "tick,entity_a,entity_b,delta,prior_alpha,prior_beta,post_alpha,post_beta,observed,log_likelihood\n";
  for (const auto& r : s.history)
    for (const auto& e : r.edges)
      out << r.tick << ',' << e.pair.first() << ',' << e.pair.second() << ',' << json(e.delta).dump() << ','
          << json(e.prior.alpha).dump() << ',' << json(e.prior.beta).dump() << ',' << json(e.posterior.alpha).dump() << ','
          << json(e.posterior.beta).dump() << ',' << (e.observed ? 1 : 0) << ','
          << (e.log_likelihood ? json(*e.log_likelihood).dump() : std::string()) << '\n';
  return out.str();
}

namespace detail {

inline std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

}  // namespace detail

/// Fixed-width tables: edge (alpha, beta) priors and posteriors per tick, then
/// the measures and indicators per cell per tick. Values at 2 dp.
inline std::string summary_text(const ScenarioState& s) {
  std::ostringstream out;
  const auto ticks = s.history.size();
  out << "Edge rates: Gamma(alpha, beta) prior / posterior per tick\n\n";
  std::map<EntityPair, std::vector<const EdgeTickResult*>> by_edge;
  for (const auto& r : s.history)
    for (const auto& e : r.edges) by_edge[e.pair].push_back(&e);
  out << std::left << std::setw(14) << "edge" << std::setw(7) << "" << std::setw(7) << "";
  for (std::size_t t = 1; t < ticks; ++t) out << std::right << std::setw(7) << ("t" + std::to_string(t));
  out << '\n';
  for (const auto& [pair, rows] : by_edge) {
    for (int kind = 0; kind < 2; ++kind) {
      for (int param = 0; param < 2; ++param) {
        out << std::left << std::setw(14) << (kind == 0 && param == 0 ? pair.label() : "") << std::setw(7)
            << (param == 0 ? (kind == 0 ? "prior" : "post") : "") << std::setw(7) << (param == 0 ? "alpha" : "beta");
        std::map<Tick, const EdgeTickResult*> at;
        for (std::size_t t = 1; t < ticks; ++t)
          for (const auto& e : s.history[t].edges)
            if (e.pair == pair) at[static_cast<Tick>(t)] = &e;
        for (std::size_t t = 1; t < ticks; ++t) {
          auto it = at.find(static_cast<Tick>(t));
          std::string cell = "-";
          if (it != at.end()) {
            const auto& b = kind == 0 ? it->second->prior : it->second->posterior;
            cell = detail::fixed2(param == 0 ? b.alpha : b.beta);
          }
          out << std::right << std::setw(7) << cell;
        }
        out << '\n';
      }
    }
  }
  out << "\nCell indicators\n";
  std::map<std::string, std::vector<const IndicatorReport*>> by_cell;
  for (const auto& r : s.history)
    for (const auto& ind : r.indicators) by_cell[ind.cell].push_back(&ind);
  for (const auto& [cell, rows] : by_cell) {
    out << "\ncell " << cell << '\n' << std::left << std::setw(8) << "";
    for (const auto* r : rows) out << std::right << std::setw(7) << (r->tick == 0 ? std::string("prior") : "t" + std::to_string(r->tick));
    out << '\n';
    for (std::size_t i = 0; i < 5; ++i) {
      out << std::left << std::setw(8) << ("m" + std::to_string(i + 1));
      for (const auto* r : rows) out << std::right << std::setw(7) << detail::fixed2(r->m[i]);
      out << '\n';
    }
    for (std::size_t i = 0; i < 5; ++i) {
      out << std::left << std::setw(8) << ("phi" + std::to_string(i));
      for (const auto* r : rows) out << std::right << std::setw(7) << detail::fixed2(r->phi[i]);
      out << '\n';
    }
  }
  out << "\nnetwork log marginal likelihood: " << json(s.cumulative_log_likelihood).dump() << '\n';
  return out.str();
}

/// events.jsonl, snapshot.json, indicators.csv, edges.csv, summary.txt.
inline void write_run_outputs(const fs::path& dir, const ScenarioState& s) {
  fs::create_directories(dir);
  write_text(dir / "events.jsonl", event_log_jsonl(s));
  save_snapshot(dir / "snapshot.json", s);
  write_text(dir / "indicators.csv", indicators_csv(s));
  write_text(dir / "edges.csv", edges_csv(s));
  write_text(dir / "summary.txt", summary_text(s));
}

}  // namespace threatnet::io
