#pragma once

// Raw data-stream records and their grouping into tick batches.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/types.hpp"

namespace threatnet {

struct ObservationRecord {
  Tick tick = 0;
  EntityId entity_a;
  EntityId entity_b;
  int channel_id = 0;
  double raw_value = 0.0;
  bool monitored = true;
};

struct SignalRecord {
  Tick tick = 0;
  EntityId entity;
  std::vector<std::optional<double>> values;
};

struct AddEntityRecord {
  Tick tick = 0;
  EntityId entity;
  std::string model;
  std::optional<std::vector<double>> prior;
};

struct RemoveEntityRecord {
  Tick tick = 0;
  EntityId entity;
};

struct AddEdgeRecord {
  Tick tick = 0;
  EntityId entity_a;
  EntityId entity_b;
  EdgeOrigin origin = EdgeOrigin::ObservedCommunication;
  std::optional<EdgePrior> prior;
};

using StreamRecord = std::variant<ObservationRecord, SignalRecord, AddEntityRecord, RemoveEntityRecord, AddEdgeRecord>;

inline Tick record_tick(const StreamRecord& r) {
  return std::visit([](const auto& x) { return x.tick; }, r);
}

/// Groups records into consecutive batches for ticks first..last.
///
/// Raw rows for one (pair, channel) in a tick are collapsed with the
/// channel's summary and then scaled. A pair is monitored in a tick if any of
/// its rows is; unmonitored rows of a monitored pair are ignored.
inline std::vector<TickBatch> assemble_batches(const ScenarioConfig& config, const std::vector<StreamRecord>& records,
                                               Tick first, Tick last) {
  if (first < 1) throw Error(ErrorCode::InvalidArgument, "ticks start at 1");
  for (const auto& r : records) {
    const Tick t = record_tick(r);
    if (t < first) throw Error(ErrorCode::InvalidBatch, "record at tick " + std::to_string(t) + " precedes the stream start");
    last = std::max(last, t);
  }
  std::vector<TickBatch> out;
  for (Tick t = first; t <= last; ++t) {
    TickBatch b;
    b.tick = t;
    out.push_back(std::move(b));
  }
  auto batch_of = [&](Tick t) -> TickBatch& { return out[static_cast<std::size_t>(t - first)]; };

  struct PairRows {
    bool monitored = false;
    std::map<std::size_t, std::vector<double>> raw;  // channel position -> raw values in arrival order
  };
  std::map<std::pair<Tick, EntityPair>, PairRows> rows;

  for (const auto& r : records) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          auto& b = batch_of(x.tick);
          if constexpr (std::is_same_v<T, ObservationRecord>) {
            const auto k = config.channel_index(x.channel_id);
            if (!(x.raw_value >= 0.0))
              throw Error(ErrorCode::InvalidBatch, "negative raw value at tick " + std::to_string(x.tick));
            auto& pr = rows[{x.tick, EntityPair(x.entity_a, x.entity_b)}];
            if (x.monitored) {
              pr.monitored = true;
              pr.raw[k].push_back(x.raw_value);
            }
          } else if constexpr (std::is_same_v<T, SignalRecord>) {
            if (!b.signals.emplace(x.entity, SignalVector{x.values, x.tick}).second)
              throw Error(ErrorCode::InvalidBatch, "duplicate signals for '" + x.entity + "' at tick " + std::to_string(x.tick));
          } else if constexpr (std::is_same_v<T, AddEntityRecord>) {
            b.additions.push_back({x.entity, x.model, x.prior});
          } else if constexpr (std::is_same_v<T, RemoveEntityRecord>) {
            b.removals.push_back(x.entity);
          } else {
            b.edge_events.push_back({EntityPair(x.entity_a, x.entity_b), x.origin, x.prior});
          }
        },
        r);
  }
  for (const auto& [key, pr] : rows) {
    const auto& [t, pair] = key;
    ObservationVector o{pair, t, std::vector<std::optional<double>>(config.channels.size()), pr.monitored};
    for (const auto& [k, raw] : pr.raw) o.values[k] = scale_raw(config.channels[k].summarize(raw), config.channels[k]);
    batch_of(t).observations.push_back(std::move(o));
  }
  return out;
}

}  // namespace threatnet
