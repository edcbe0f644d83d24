#include <filesystem>

#include <gtest/gtest.h>

#include "threatnet/io/files.hpp"
#include "threatnet/io/json.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/scenario_sim.hpp"
#include "threatnet/stream.hpp"

using namespace threatnet;
using io::json;

namespace {

json example_config_json() { return io::to_json(bundled_worked_example().config); }

// Expects a SchemaError whose path is `path`.
template <class F>
void expect_schema_error(F&& f, const std::string& path) {
  try {
    f();
    ADD_FAILURE() << "no error for " << path;
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_EQ(e.path(), path);
  }
}

ScenarioState replayed() {
  const auto b = bundled_worked_example();
  auto cfg = std::make_shared<const ScenarioConfig>(b.config);
  return replay(cfg, assemble_batches(*cfg, b.records, 1, b.ticks));
}

}  // namespace

TEST(Config, RoundTripsThroughJson) {
  const auto j = example_config_json();
  const auto cfg = io::config_from_json(j);
  EXPECT_EQ(io::to_json(cfg), j);
  EXPECT_EQ(cfg.entities.size(), 4u);
  EXPECT_EQ(cfg.discount, 0.7);
  EXPECT_TRUE(cfg.auto_edge_prior.has_value());
}

TEST(Config, ErrorsCarryJsonPointers) {
  auto j = example_config_json();
  j["channels"][0].erase("efficiency");
  expect_schema_error([&] { io::config_from_json(j); }, "/channels/0/efficiency");

  j = example_config_json();
  j["channels"][0]["summary"] = "median";
  expect_schema_error([&] { io::config_from_json(j); }, "/channels/0/summary");

  j = example_config_json();
  j["discount"]["value"] = 1.5;
  expect_schema_error([&] { io::config_from_json(j); }, "/discount/value");

  j = example_config_json();
  j["entities"][2]["model"] = "robot";
  expect_schema_error([&] { io::config_from_json(j); }, "/entities/2/model");

  j = example_config_json();
  j["schema_version"] = 2;
  expect_schema_error([&] { io::config_from_json(j); }, "/schema_version");

  j = example_config_json();
  j["edges"][0]["origin"] = "rivalry";
  expect_schema_error([&] { io::config_from_json(j); }, "/edges/0/origin");

  j = example_config_json();
  j.erase("models");
  expect_schema_error([&] { io::config_from_json(j); }, "/models");
}

TEST(Config, CrossReferencesAreChecked) {
  auto j = example_config_json();
  j["cells"][0]["members"].push_back("p9");
  EXPECT_THROW(io::config_from_json(j), Error);
  j = example_config_json();
  j["edges"].push_back({{"a", "p1"}, {"b", "p2"}, {"origin", "kinship"}});
  EXPECT_THROW(io::config_from_json(j), Error);
}

TEST(Snapshot, SaveLoadSaveIsByteIdentical) {
  const auto s = replayed();
  const auto first = io::dump(io::snapshot_to_json(s));
  const auto loaded = io::snapshot_from_json(json::parse(first));
  EXPECT_EQ(io::dump(io::snapshot_to_json(loaded)), first);
  EXPECT_EQ(loaded.tick, 10);
  EXPECT_EQ(loaded.cumulative_log_likelihood, s.cumulative_log_likelihood);
  EXPECT_EQ(loaded.history.size(), 11u);
}

TEST(Snapshot, RejectsWrongVersionAndTruncation) {
  auto j = io::snapshot_to_json(replayed());
  auto bad = j;
  bad["version"] = 99;
  expect_schema_error([&] { io::snapshot_from_json(bad); }, "/version");
  bad = j;
  bad["config"]["channels"][0]["r_max"] = -1;
  expect_schema_error([&] { io::snapshot_from_json(bad); }, "/config/channels/0");
  bad = j;
  bad.erase("config");
  expect_schema_error([&] { io::snapshot_from_json(bad); }, "/config");
}

TEST(Snapshot, FilesOnDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "threatnet-io-test";
  std::filesystem::remove_all(dir);
  const auto s = replayed();
  io::write_run_outputs(dir, s);
  for (const auto* f : {"events.jsonl", "snapshot.json", "indicators.csv", "edges.csv", "summary.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  const auto loaded = io::load_snapshot(dir / "snapshot.json");
  EXPECT_EQ(io::dump(io::snapshot_to_json(loaded)), io::dump(io::snapshot_to_json(s)));
  const auto summary = io::read_text(dir / "summary.txt");
  EXPECT_NE(summary.find("p1~p2"), std::string::npos);
  EXPECT_NE(summary.find("network log marginal likelihood"), std::string::npos);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(io::read_text(dir / "missing.json"), Error);
}

TEST(Csv, ParsesRowsAndFlags) {
  const std::string text =
      "tick,entity_a,entity_b,channel_id,raw_value,monitored_flag\r\n"
      "1,p2,p1,1,3.5,1\n"
      "\n"
      "2, p1 ,p3,1,0,false\n";
  const auto rows = io::parse_observation_csv(text);
  ASSERT_EQ(rows.size(), 2u);
  const auto& a = std::get<ObservationRecord>(rows[0]);
  EXPECT_EQ(a.entity_a, "p2");
  EXPECT_EQ(a.raw_value, 3.5);
  EXPECT_TRUE(a.monitored);
  const auto& b = std::get<ObservationRecord>(rows[1]);
  EXPECT_EQ(b.entity_a, "p1");
  EXPECT_FALSE(b.monitored);
  EXPECT_EQ(io::parse_observation_csv(io::records_to_csv(rows)).size(), 2u);
}

TEST(Csv, ErrorsNameTheLine) {
  const std::string header = "tick,entity_a,entity_b,channel_id,raw_value,monitored_flag\n";
  expect_schema_error([&] { io::parse_observation_csv("tick,a,b\n", "obs.csv"); }, "obs.csv:1");
  expect_schema_error([&] { io::parse_observation_csv(header + "1,a,b,1,x,1\n", "obs.csv"); }, "obs.csv:2/raw_value");
  expect_schema_error([&] { io::parse_observation_csv(header + "1,a,b,1,2\n", "obs.csv"); }, "obs.csv:2");
  expect_schema_error([&] { io::parse_observation_csv(header + "1,a,a,1,2,1\n", "obs.csv"); }, "obs.csv:2");
  expect_schema_error([&] { io::parse_observation_csv(header + "1,a,b,1,-2,1\n", "obs.csv"); }, "obs.csv:2");
  expect_schema_error([&] { io::parse_observation_csv(header + "1,a,b,1,2,yes\n", "obs.csv"); }, "obs.csv:2");
  expect_schema_error([&] { io::parse_observation_csv("", "obs.csv"); }, "obs.csv");
}

TEST(Jsonl, RoundTripsEveryRecordKind) {
  const auto records = bundled_worked_example().records;
  const auto text = io::records_to_jsonl(records);
  const auto back = io::parse_records_jsonl(text);
  ASSERT_EQ(back.size(), records.size());
  EXPECT_EQ(io::records_to_jsonl(back), text);

  std::vector<StreamRecord> extra{AddEntityRecord{4, "p5", "person", std::vector<double>{0, 0, 0, 0, 1}},
                                  RemoveEntityRecord{6, "p5"}};
  const auto extra_text = io::records_to_jsonl(extra);
  EXPECT_EQ(io::records_to_jsonl(io::parse_records_jsonl(extra_text)), extra_text);
}

TEST(Jsonl, ErrorsNameLineAndField) {
  expect_schema_error([] { io::parse_records_jsonl("\n{oops\n", "data.jsonl"); }, "data.jsonl:2");
  try {
    io::parse_records_jsonl(R"({"type":"observation","tick":1,"a":"p1"})", "data.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.path().rfind("data.jsonl:1/", 0), 0u) << e.path();
  }
}

TEST(Stream, CollapsesRowsPerChannel) {
  auto cfg = bundled_worked_example().config;
  cfg.channels[0].r_max = 20.0;
  std::vector<StreamRecord> rows{
      ObservationRecord{1, "p1", "p2", 1, 4.0, true},
      ObservationRecord{1, "p2", "p1", 1, 2.0, true},
      ObservationRecord{1, "p1", "p3", 1, 9.0, false},
      ObservationRecord{2, "p1", "p3", 1, 9.0, false},
      ObservationRecord{2, "p1", "p3", 1, 1.0, true},
  };
  const auto batches = assemble_batches(cfg, rows, 1, 3);
  ASSERT_EQ(batches.size(), 3u);
  ASSERT_EQ(batches[0].observations.size(), 2u);
  const auto& summed = batches[0].observations[0];
  EXPECT_EQ(summed.pair, EntityPair("p1", "p2"));
  EXPECT_EQ(summed.values[0], 3.0);
  EXPECT_FALSE(batches[0].observations[1].monitored);
  EXPECT_FALSE(batches[0].observations[1].values[0].has_value());
  EXPECT_EQ(batches[1].observations[0].values[0], 0.5);
  EXPECT_TRUE(batches[2].observations.empty());
  EXPECT_THROW(assemble_batches(cfg, rows, 2, 3), Error);
  rows.push_back(ObservationRecord{1, "p1", "p2", 7, 1.0, true});
  EXPECT_THROW(assemble_batches(cfg, rows, 1, 3), Error);
}
