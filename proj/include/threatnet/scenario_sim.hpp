#pragma once

// Seeded synthetic data: latent edge rates with Poisson channel counts,
// semi-Markov threat-state paths with task activity and signals, and the
// bundled four-person worked example.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "threatnet/edge_inference.hpp"
#include "threatnet/error.hpp"
#include "threatnet/orchestrator.hpp"
#include "threatnet/random.hpp"
#include "threatnet/state_filter.hpp"
#include "threatnet/stream.hpp"

namespace threatnet {

// ---------------------------------------------------------------------------
// Network data

/// phi changes to `rate` at tick `from` and stays there until the next step.
struct PiecewiseRate {
  std::vector<std::pair<Tick, double>> steps;
};

/// phi_1 ~ Gamma(shape, rate); afterwards phi_t = phi_{t-1} * eta / delta with
/// eta ~ Beta(delta * shape, (1 - delta) * shape), which keeps E[phi_t | phi_{t-1}] = phi_{t-1}.
struct GammaEvolvingRate {
  double shape = 2.0;
  double rate = 1.0;
  double delta = 0.9;
};

struct PairTrajectory {
  EntityPair pair;
  std::variant<PiecewiseRate, GammaEvolvingRate> rate;
};

struct NetworkSimSpec {
  std::vector<ChannelSpec> channels;
  std::vector<PairTrajectory> pairs;
  Tick ticks = 10;
};

struct NetworkSimResult {
  std::vector<std::vector<ObservationVector>> observations;  ///< [tick - 1][pair]
  std::map<EntityPair, std::vector<double>> phi;             ///< latent rate per tick
};

inline NetworkSimResult simulate_network_data(const NetworkSimSpec& spec, std::uint64_t seed) {
  if (spec.ticks < 0) throw Error(ErrorCode::InvalidArgument, "tick count must be >= 0");
  for (const auto& c : spec.channels) c.validate();
  const auto n_ticks = static_cast<std::size_t>(spec.ticks);
  NetworkSimResult out;
  out.observations.assign(n_ticks, {});
  for (const auto& traj : spec.pairs) {
    Rng rng(derive_seed(seed, "network/" + traj.pair.label()));
    std::vector<double> phi(n_ticks, 0.0);
    std::visit(
        [&](const auto& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, PiecewiseRate>) {
            double current = 0.0;
            std::size_t s = 0;
            for (std::size_t t = 0; t < n_ticks; ++t) {
              while (s < r.steps.size() && r.steps[s].first <= static_cast<Tick>(t + 1)) current = r.steps[s++].second;
              if (current < 0.0) throw Error(ErrorCode::InvalidArgument, "rates must be >= 0");
              phi[t] = current;
            }
          } else {
            if (!(r.shape > 0.0 && r.rate > 0.0 && r.delta > 0.0 && r.delta <= 1.0))
              throw Error(ErrorCode::InvalidArgument, "invalid gamma-evolving rate parameters");
            for (std::size_t t = 0; t < n_ticks; ++t) {
              if (t == 0) {
                phi[t] = rng.gamma(r.shape, r.rate);
              } else if (r.delta < 1.0) {
                phi[t] = phi[t - 1] * rng.beta(r.delta * r.shape, (1.0 - r.delta) * r.shape) / r.delta;
              } else {
                phi[t] = phi[t - 1];
              }
            }
          }
        },
        traj.rate);
    for (std::size_t t = 0; t < n_ticks; ++t) {
      ObservationVector o{traj.pair, static_cast<Tick>(t + 1), {}, true};
      for (const auto& c : spec.channels)
        o.values.emplace_back(static_cast<double>(rng.poisson(c.efficiency * phi[t])));
      out.observations[t].push_back(std::move(o));
    }
    out.phi.emplace(traj.pair, std::move(phi));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threat-state paths

struct EntityPath {
  std::vector<std::size_t> states;     ///< [0..n], index 0 is the starting tick
  std::vector<std::size_t> durations;  ///< ticks spent in the state so far, 1-based
  std::vector<std::vector<bool>> tasks;  ///< [1..n] enacted tasks, entry 0 empty
  std::vector<SignalVector> signals;     ///< [1..n], entry 0 vacuous
};

namespace detail {

inline std::size_t sample_holding(Rng& rng, const HoldingDistribution& dist) {
  return std::visit(
      [&](const auto& h) -> std::size_t {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GeometricHolding>) {
          if (h.rho >= 1.0) return 1;
          return 1 + static_cast<std::size_t>(std::floor(std::log(rng.uniform_open()) / std::log1p(-h.rho)));
        } else if constexpr (std::is_same_v<T, WeibullHolding>) {
          return 1 + static_cast<std::size_t>(std::floor(h.scale * std::pow(-std::log(rng.uniform_open()), 1.0 / h.shape)));
        } else {
          return 1 + rng.categorical(h.pmf);
        }
      },
      dist);
}

struct Sojourn {
  std::size_t next = 0;
  std::size_t length = 0;  ///< 0 for absorbing states
};

inline Sojourn sample_sojourn(Rng& rng, const ThreatModel& model, std::size_t state) {
  if (model.space.is_absorbing(state)) return {state, 0};
  const auto next = rng.categorical(model.transition.embedded[state]);
  return {next, sample_holding(rng, model.transition.holding.at({state, next}))};
}

}  // namespace detail

/// Draws the task layer and signals for one tick in `state`. Tasks outside
/// the state's index set are enacted with probability 1/2.
inline SignalVector sample_signals(Rng& rng, const TaskModel& tasks, std::size_t state, Tick tick,
                                   std::vector<bool>* enacted = nullptr) {
  std::vector<double> p(tasks.tasks(), 0.5);
  for (const auto& link : tasks.relevant.at(state)) p[link.task] = link.probability;
  SignalVector z{std::vector<std::optional<double>>(tasks.tasks()), tick};
  if (enacted) enacted->assign(tasks.tasks(), false);
  for (std::size_t j = 0; j < tasks.tasks(); ++j) {
    const bool on = rng.bernoulli(p[j]);
    if (enacted) (*enacted)[j] = on;
    const auto& e = on ? tasks.emissions[j].active : tasks.emissions[j].inactive;
    z.values[j] = rng.beta(e.alpha, e.beta);
  }
  return z;
}

inline EntityPath simulate_entity_path(const ThreatModel& model, std::uint64_t seed, Tick n_ticks,
                                       std::optional<std::size_t> start = std::nullopt) {
  if (n_ticks < 0) throw Error(ErrorCode::InvalidArgument, "tick count must be >= 0");
  Rng rng(derive_seed(seed, "entity-path/" + model.name));
  EntityPath path;
  std::size_t state = start ? *start : rng.categorical(model.default_prior);
  if (state >= model.space.size()) throw Error(ErrorCode::InvalidArgument, "start state out of range");
  std::size_t duration = 1;
  auto sojourn = detail::sample_sojourn(rng, model, state);
  path.states.push_back(state);
  path.durations.push_back(duration);
  path.tasks.emplace_back();
  path.signals.push_back(model.vacuous_signal(0));
  for (Tick t = 1; t <= n_ticks; ++t) {
    if (sojourn.length != 0 && duration == sojourn.length) {
      state = sojourn.next;
      duration = 1;
      sojourn = detail::sample_sojourn(rng, model, state);
    } else {
      ++duration;
    }
    path.states.push_back(state);
    path.durations.push_back(duration);
    std::vector<bool> enacted;
    path.signals.push_back(sample_signals(rng, model.tasks, state, t, &enacted));
    path.tasks.push_back(std::move(enacted));
  }
  return path;
}

// ---------------------------------------------------------------------------
// Bundled worked example: four persons of interest over ten weekly ticks

struct ScenarioBundle {
  ScenarioConfig config;
  std::vector<StreamRecord> records;
  Tick ticks = 0;
};

namespace detail {

inline ThreatModel worked_example_model(std::string name, std::vector<double> prior) {
  ThreatModel m;
  m.name = std::move(name);
  m.space.states = {"Active", "Training", "Preparing", "Mobilised", "Neutral"};
  m.space.absorbing = {4};
  m.transition.embedded = {
      {0.00, 0.55, 0.15, 0.00, 0.30},
      {0.10, 0.00, 0.70, 0.00, 0.20},
      {0.00, 0.10, 0.00, 0.75, 0.15},
      {0.00, 0.00, 0.00, 0.00, 1.00},
      {0.00, 0.00, 0.00, 0.00, 1.00},
  };
  const std::array<double, 4> rho{0.25, 0.25, 0.30, 0.05};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (m.transition.embedded[i][j] > 0.0) m.transition.holding.emplace(std::pair{i, j}, GeometricHolding{rho[i]});
  m.tasks.task_names = {"radicalisation", "training", "acquisition", "reconnaissance", "logistics"};
  m.tasks.relevant = {
      {{0, 0.8}},
      {{1, 0.8}, {0, 0.6}},
      {{2, 0.7}, {3, 0.6}},
      {{3, 0.9}, {4, 0.9}},
      {},
  };
  for (std::size_t j = 0; j < 5; ++j) {
    m.tasks.emissions.push_back({BetaEmission{2.0, 5.0}, BetaEmission{5.0, 2.0}});
    m.tasks.extractors.push_back({SignalExtractor::Kind::Max, 1.0});
  }
  m.default_prior = std::move(prior);
  return m;
}

}  // namespace detail

/// Weekly call durations (hours) for the six pairs, ticks 1..10.
inline const std::map<std::pair<std::string, std::string>, std::array<double, 10>>& worked_example_calls() {
  static const std::map<std::pair<std::string, std::string>, std::array<double, 10>> table{
      {{"p1", "p2"}, {0, 3, 5, 5, 5, 5, 7, 6, 7, 7}},
      {{"p1", "p3"}, {0, 0, 0, 0, 2, 6, 6, 6, 7, 8}},
      {{"p1", "p4"}, {0, 0, 2, 5, 5, 6, 7, 8, 9, 11}},
      {{"p2", "p3"}, {0, 1, 0, 0, 0, 5, 6, 4, 7, 8}},
      {{"p2", "p4"}, {0, 0, 0, 0, 1, 6, 7, 8, 9, 10}},
      {{"p3", "p4"}, {0, 0, 0, 0, 0, 1, 7, 8, 9, 10}},
  };
  return table;
}

/// Synthetic activity signals for the worked example: per-task base curves
/// over the ten ticks, shifted per person. Authored, not observed data.
inline std::vector<SignalRecord> worked_example_signals() {
  static constexpr std::array<std::array<double, 10>, 5> base{{
      {0.55, 0.60, 0.62, 0.65, 0.65, 0.62, 0.60, 0.58, 0.58, 0.55},
      {0.30, 0.45, 0.60, 0.70, 0.72, 0.65, 0.50, 0.40, 0.35, 0.30},
      {0.20, 0.22, 0.30, 0.45, 0.55, 0.65, 0.72, 0.70, 0.65, 0.60},
      {0.15, 0.15, 0.20, 0.30, 0.45, 0.60, 0.72, 0.80, 0.85, 0.90},
      {0.10, 0.10, 0.12, 0.15, 0.20, 0.30, 0.55, 0.72, 0.82, 0.90},
  }};
  static constexpr std::array<double, 4> shift{0.04, 0.00, -0.03, -0.06};
  std::vector<SignalRecord> out;
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t t = 0; t < 10; ++t) {
      SignalRecord r{static_cast<Tick>(t + 1), "p" + std::to_string(p + 1), {}};
      for (std::size_t j = 0; j < 5; ++j) {
        // p4 only comes under surveillance from week 3.
        if (p == 3 && t < 2) {
          r.values.emplace_back(std::nullopt);
          continue;
        }
        const double v = std::clamp(base[j][t] + shift[p], 0.02, 0.98);
        r.values.emplace_back(std::round(v * 100.0) / 100.0);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline ScenarioBundle bundled_worked_example() {
  ScenarioBundle b;
  b.ticks = 10;
  auto& c = b.config;
  c.name = "four-person-cell";
  c.seed = 0;
  c.models.emplace("person", detail::worked_example_model("person", {0.6, 0.2, 0.1, 0.0, 0.1}));
  c.models.emplace("cell", detail::worked_example_model("cell", {0.2, 0.55, 0.15, 0.0, 0.1}));
  ChannelSpec phone;
  phone.id = 1;
  phone.name = "phone";
  phone.efficiency = 1.0;
  phone.r_max = 10.0;
  phone.scale_target = 10.0;
  c.channels = {phone};
  c.discount_mode = DiscountMode::Fixed;
  c.discount = 0.7;
  c.default_prior = EdgePrior{false, 0.70, 1.41};
  c.origin_priors[EdgeOrigin::ObservedCommunication] = EdgePrior{true, 0.0, 0.0};
  c.auto_edge_prior = EdgePrior{true, 0.0, 0.0};
  c.entities = {
      {"p1", "person", std::nullopt},
      {"p2", "person", std::nullopt},
      {"p3", "person", std::nullopt},
      {"p4", "person", std::vector<double>{0.2, 0.55, 0.15, 0.0, 0.1}},
  };
  c.edges = {
      {"p1", "p2", EdgeOrigin::Affiliation, std::nullopt},
      {"p2", "p3", EdgeOrigin::Affiliation, std::nullopt},
  };
  c.cells = {{"C", {"p1", "p2", "p3", "p4"}, "cell", std::nullopt, 3.0, 1.0,
              {"Preparing", "Mobilised"}, {"Preparing", "Mobilised"}}};
  c.finalize();

  b.records.push_back(AddEdgeRecord{3, "p1", "p4", EdgeOrigin::ObservedCommunication, std::nullopt});
  b.records.push_back(AddEdgeRecord{5, "p1", "p3", EdgeOrigin::ObservedCommunication, std::nullopt});
  b.records.push_back(AddEdgeRecord{5, "p2", "p4", EdgeOrigin::ObservedCommunication, std::nullopt});
  b.records.push_back(AddEdgeRecord{6, "p3", "p4", EdgeOrigin::ObservedCommunication, std::nullopt});
  for (const auto& [pair, hours] : worked_example_calls())
    for (std::size_t t = 0; t < hours.size(); ++t)
      b.records.push_back(ObservationRecord{static_cast<Tick>(t + 1), pair.first, pair.second, 1, hours[t], true});
  for (auto& s : worked_example_signals()) b.records.emplace_back(std::move(s));
  return b;
}

}  // namespace threatnet
