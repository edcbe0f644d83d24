// threatnet command-line entry point: simulate | run | serve | report

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "threatnet/threatnet.hpp"

namespace fs = std::filesystem;
using namespace threatnet;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void report_error(std::string_view code, const std::string& message, const std::string& path = {}) {
  io::json err = {{"code", code}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  std::cerr << io::json{{"error", err}}.dump() << '\n';
}

fs::path default_out_dir() {
  if (const char* env = std::getenv("THREATNET_DATA_DIR"); env && *env) return env;
  return "threatnet-data";
}

struct Options {
  std::string config;
  std::vector<std::string> data;
  std::string out;
  std::string snapshot;
  std::optional<std::uint64_t> seed;
  int port = 8080;
  bool paper_example = false;
  std::size_t threads = 1;
  Tick weeks = 0;
};

fs::path out_dir(const Options& o) { return o.out.empty() ? default_out_dir() : fs::path(o.out); }

std::vector<StreamRecord> load_all_records(const std::vector<std::string>& paths) {
  std::vector<StreamRecord> out;
  for (const auto& p : paths) {
    auto r = io::load_records(p);
    out.insert(out.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  }
  return out;
}

/// Synthetic data for a configured scenario: one semi-Markov path per entity
/// and a gamma-evolving rate per declared edge.
std::vector<StreamRecord> simulate_from_config(const ScenarioConfig& cfg, std::uint64_t seed, Tick weeks, io::json& truth) {
  std::vector<StreamRecord> records;
  truth = {{"seed", seed}, {"generator", kGeneratorName}, {"entities", io::json::object()}, {"edges", io::json::array()}};
  for (const auto& e : cfg.entities) {
    auto model = cfg.model(e.model);
    if (e.prior) model.default_prior = *e.prior;
    model.name = e.id;
    const auto path = simulate_entity_path(model, seed, weeks);
    io::json states = io::json::array();
    for (std::size_t t = 1; t < path.states.size(); ++t) {
      states.push_back(model.space.states[path.states[t]]);
      records.push_back(SignalRecord{static_cast<Tick>(t), e.id, path.signals[t].values});
    }
    truth["entities"][e.id] = states;
  }
  NetworkSimSpec spec;
  spec.channels = cfg.channels;
  spec.ticks = weeks;
  for (const auto& e : cfg.edges) {
    const auto prior = e.prior.value_or(cfg.prior_for(e.origin));
    const double shape = prior.empirical ? 2.0 : prior.alpha;
    const double rate = prior.empirical ? 1.0 : prior.beta;
    spec.pairs.push_back({EntityPair(e.a, e.b), GammaEvolvingRate{shape, rate, cfg.discount}});
  }
  const auto net = simulate_network_data(spec, seed);
  for (const auto& [pair, phi] : net.phi) truth["edges"].push_back({{"a", pair.first()}, {"b", pair.second()}, {"phi", phi}});
  for (const auto& tick_obs : net.observations)
    for (const auto& o : tick_obs)
      for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
        const auto& ch = cfg.channels[k];
        records.push_back(ObservationRecord{o.tick, o.pair.first(), o.pair.second(), ch.id,
                                            *o.values[k] * ch.r_max / ch.scale_target, true});
      }
  return records;
}

int cmd_simulate(const Options& o) {
  const auto dir = out_dir(o);
  fs::create_directories(dir);
  if (o.paper_example) {
    const auto bundle = bundled_worked_example();
    io::write_text(dir / "scenario.json", io::to_json(bundle.config).dump(2) + "\n");
    io::write_text(dir / "data.jsonl", io::records_to_jsonl(bundle.records));
    io::write_text(dir / "observations.csv", io::records_to_csv(bundle.records));
    std::cout << "wrote worked example to " << dir.string() << '\n';
    return 0;
  }
  if (o.config.empty()) throw Error(ErrorCode::InvalidArgument, "simulate needs --config or --paper-example");
  auto cfg = io::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  const Tick weeks = o.weeks > 0 ? o.weeks : 52;
  io::json truth;
  const auto records = simulate_from_config(cfg, cfg.seed, weeks, truth);
  io::write_text(dir / "scenario.json", io::to_json(cfg).dump(2) + "\n");
  io::write_text(dir / "data.jsonl", io::records_to_jsonl(records));
  io::write_text(dir / "truth.json", truth.dump() + "\n");
  std::cout << "wrote " << weeks << " simulated ticks to " << dir.string() << '\n';
  return 0;
}

ScenarioState replay_inputs(const Options& o) {
  ScenarioState state;
  std::shared_ptr<const ScenarioConfig> cfg;
  std::vector<StreamRecord> records;
  if (!o.snapshot.empty()) {
    state = io::load_snapshot(o.snapshot);
    cfg = state.config;
  } else if (o.paper_example) {
    auto bundle = bundled_worked_example();
    cfg = std::make_shared<const ScenarioConfig>(bundle.config);
    records = std::move(bundle.records);
    state = initial_state(cfg);
  } else {
    if (o.config.empty()) throw Error(ErrorCode::InvalidArgument, "need --config, --snapshot or --paper-example");
    cfg = std::make_shared<const ScenarioConfig>(io::load_config(o.config));
    state = initial_state(cfg);
  }
  auto more = load_all_records(o.data);
  records.insert(records.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  // Records at or before the committed tick were already applied.
  std::erase_if(records, [&](const StreamRecord& r) { return record_tick(r) <= state.tick; });
  const Tick last = std::max(state.tick + o.weeks, state.tick);
  if (records.empty() && last == state.tick) return state;
  const auto batches = assemble_batches(*cfg, records, state.tick + 1, last);
  const CommitOptions opts{o.threads};
  for (const auto& b : batches) state = commit_tick(state, b, opts).first;
  return state;
}

int cmd_run(const Options& o) {
  const auto state = replay_inputs(o);
  const auto dir = out_dir(o);
  io::write_run_outputs(dir, state);
  std::cout << io::summary_text(state);
  return 0;
}

int cmd_report(const Options& o) {
  if (o.snapshot.empty()) throw Error(ErrorCode::InvalidArgument, "report needs --snapshot");
  const auto state = io::load_snapshot(o.snapshot);
  if (!o.out.empty()) io::write_run_outputs(o.out, state);
  std::cout << io::summary_text(state);
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Options& o) {
  Service service(replay_inputs(o), CommitOptions{o.threads});
  httplib::Server server;
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    if (!req.params.empty()) {
      target += '?';
      bool first = true;
      for (const auto& [k, v] : req.params) {
        if (!first) target += '&';
        first = false;
        target += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v);
      }
    }
    const auto r = service.handle(req.method, target, req.body);
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/api/v1/.*)", forward);
  server.Post(R"(/api/v1/.*)", forward);
  server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  if (!server.bind_to_port("0.0.0.0", o.port)) throw Error(ErrorCode::IoError, "cannot bind port " + std::to_string(o.port));
  std::cerr << "serving on port " << o.port << '\n';
  server.listen_after_bind();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"threatnet: streaming threat-state and communication-network inference"};
  app.require_subcommand(1);
  Options o;

  auto* simulate = app.add_subcommand("simulate", "write a scenario and a synthetic data stream");
  auto* run = app.add_subcommand("run", "replay a data stream and write reports");
  auto* serve = app.add_subcommand("serve", "serve the JSON API over HTTP");
  auto* report = app.add_subcommand("report", "print report tables from a snapshot");

  for (auto* sub : {simulate, run, serve}) {
    sub->add_option("--config", o.config, "scenario JSON")->check(CLI::ExistingFile);
    sub->add_flag("--paper-example", o.paper_example, "use the bundled four-person worked example");
  }
  for (auto* sub : {run, serve}) {
    sub->add_option("--data", o.data, "observation CSV or record JSONL (repeatable)")->check(CLI::ExistingFile);
    sub->add_option("--snapshot", o.snapshot, "resume from a snapshot")->check(CLI::ExistingFile);
    sub->add_option("--threads", o.threads, "worker threads per tick")->check(CLI::Range(1, 256));
  }
  for (auto* sub : {simulate, run, report}) sub->add_option("--out", o.out, "output directory (default $THREATNET_DATA_DIR)");
  report->add_option("--snapshot", o.snapshot, "snapshot JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", o.seed, "master seed (overrides the scenario)");
  simulate->add_option("--weeks", o.weeks, "ticks to simulate (default 52)")->check(CLI::PositiveNumber);
  run->add_option("--weeks", o.weeks, "commit at least this many ticks after the start")->check(CLI::NonNegativeNumber);
  serve->add_option("--port", o.port, "TCP port")->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("UsageError", e.what());
    return kExitUsage;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*run) return cmd_run(o);
    if (*serve) return cmd_serve(o);
    if (*report) return cmd_report(o);
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.detail(), e.path());
    return e.code() == ErrorCode::SchemaError || e.code() == ErrorCode::InvalidArgument ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
