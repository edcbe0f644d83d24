#pragma once

// Latent threat-state filtering for one entity (a person or a whole cell).
//
// The threat state follows a semi-Markov process: jump targets come from an
// embedded Markov chain and dwell times from per-transition holding
// distributions. Exact filtering augments the state with the number of ticks
// already spent in it, so a belief is a joint mass over (state, duration).
// Durations live on 1..cap; the last bucket stands for "cap or longer".

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "threatnet/error.hpp"

namespace threatnet {

using Matrix = std::vector<std::vector<double>>;

struct ThreatStateSpace {
  std::vector<std::string> states;
  std::vector<std::size_t> absorbing;

  std::size_t size() const noexcept { return states.size(); }

  bool is_absorbing(std::size_t i) const {
    return std::find(absorbing.begin(), absorbing.end(), i) != absorbing.end();
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < states.size(); ++i)
      if (states[i] == name) return i;
    throw Error(ErrorCode::InvalidArgument, "unknown state '" + std::string(name) + "'");
  }

  void validate() const {
    if (states.size() < 2) throw Error(ErrorCode::InvalidModel, "state space needs at least two states");
    for (std::size_t i = 0; i < states.size(); ++i)
      for (std::size_t j = i + 1; j < states.size(); ++j)
        if (states[i] == states[j])
          throw Error(ErrorCode::InvalidModel, "duplicate state name '" + states[i] + "'");
    for (auto a : absorbing)
      if (a >= states.size()) throw Error(ErrorCode::InvalidModel, "absorbing index out of range");
  }
};

// ---------------------------------------------------------------------------
// Holding-time distributions over ticks (support 1, 2, ...)

struct GeometricHolding {
  double rho;  ///< per-tick exit probability, in (0, 1]
};

/// Discretised Weibull: P(H >= d) = exp(-((d - 1) / scale)^shape).
struct WeibullHolding {
  double shape;
  double scale;
};

/// Explicit table, pmf[d - 1] = P(H = d). Truncated to the duration cap and
/// renormalised when an operator is built.
struct TabulatedHolding {
  std::vector<double> pmf;
};

using HoldingDistribution = std::variant<GeometricHolding, WeibullHolding, TabulatedHolding>;

namespace detail {

struct HoldingCurve {
  std::vector<double> pmf;       // pmf[d - 1], d = 1..cap
  std::vector<double> survival;  // survival[d - 1] = P(H >= d)
};

inline HoldingCurve holding_curve(const HoldingDistribution& dist, std::size_t cap) {
  HoldingCurve c{std::vector<double>(cap, 0.0), std::vector<double>(cap, 0.0)};
  std::visit(
      [&](const auto& h) {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GeometricHolding>) {
          for (std::size_t d = 1; d <= cap; ++d) {
            const double s = std::pow(1.0 - h.rho, static_cast<double>(d - 1));
            c.survival[d - 1] = s;
            c.pmf[d - 1] = h.rho * s;
          }
        } else if constexpr (std::is_same_v<T, WeibullHolding>) {
          auto surv = [&](std::size_t d) {
            return std::exp(-std::pow(static_cast<double>(d - 1) / h.scale, h.shape));
          };
          for (std::size_t d = 1; d <= cap; ++d) {
            c.survival[d - 1] = surv(d);
            c.pmf[d - 1] = surv(d) - surv(d + 1);
          }
        } else {
          const std::size_t n = std::min(cap, h.pmf.size());
          double total = 0.0;
          for (std::size_t d = 0; d < n; ++d) total += h.pmf[d];
          for (std::size_t d = 0; d < n; ++d) c.pmf[d] = h.pmf[d] / total;
          double tail = 0.0;
          for (std::size_t d = cap; d-- > 0;) {
            tail += c.pmf[d];
            c.survival[d] = tail;
          }
        }
      },
      dist);
  return c;
}

inline void validate_holding(const HoldingDistribution& dist, std::size_t cap) {
  std::visit(
      [&](const auto& h) {
        using T = std::decay_t<decltype(h)>;
        if constexpr (std::is_same_v<T, GeometricHolding>) {
          if (!(h.rho > 0.0 && h.rho <= 1.0))
            throw Error(ErrorCode::InvalidModel, "geometric holding rho must be in (0, 1]");
        } else if constexpr (std::is_same_v<T, WeibullHolding>) {
          if (!(h.shape > 0.0 && h.scale > 0.0))
            throw Error(ErrorCode::InvalidModel, "weibull holding needs positive shape and scale");
        } else {
          double total = 0.0;
          for (std::size_t d = 0; d < h.pmf.size(); ++d) {
            if (!(h.pmf[d] >= 0.0)) throw Error(ErrorCode::InvalidModel, "holding table entries must be >= 0");
            if (d < cap) total += h.pmf[d];
          }
          if (!(total > 0.0))
            throw Error(ErrorCode::InvalidModel, "holding table has no mass within the duration cap");
        }
      },
      dist);
}

}  // namespace detail

struct TransitionModel {
  Matrix embedded;  ///< p_ij; rows sum to 1
  std::map<std::pair<std::size_t, std::size_t>, HoldingDistribution> holding;
  std::size_t duration_cap = 52;

  void validate(const ThreatStateSpace& space) const {
    const std::size_t m = space.size();
    if (embedded.size() != m) throw Error(ErrorCode::InvalidModel, "embedded matrix row count != state count");
    if (duration_cap < 1) throw Error(ErrorCode::InvalidModel, "duration cap must be positive");
    for (std::size_t i = 0; i < m; ++i) {
      const auto& row = embedded[i];
      if (row.size() != m) throw Error(ErrorCode::InvalidModel, "embedded matrix must be square");
      double sum = 0.0;
      for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidModel, "transition probability outside [0, 1]");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw Error(ErrorCode::InvalidModel, "row '" + space.states[i] + "' of the embedded matrix does not sum to 1");
      if (space.is_absorbing(i)) {
        if (row[i] != 1.0)
          throw Error(ErrorCode::InvalidModel, "absorbing state '" + space.states[i] + "' must map to itself");
        continue;
      }
      if (row[i] != 0.0)
        throw Error(ErrorCode::InvalidModel, "non-absorbing state '" + space.states[i] + "' has a self transition");
      for (std::size_t j = 0; j < m; ++j) {
        if (row[j] <= 0.0) continue;
        auto it = holding.find({i, j});
        if (it == holding.end())
          throw Error(ErrorCode::InvalidModel,
                      "missing holding distribution for " + space.states[i] + " -> " + space.states[j]);
        detail::validate_holding(it->second, duration_cap);
      }
    }
  }
};

// ---------------------------------------------------------------------------

/// Joint mass over (state, duration-in-state). Duration is 1-based; the last
/// duration bucket aggregates every duration >= cap.
class StateBelief {
 public:
  StateBelief() = default;

  StateBelief(std::size_t states, std::size_t cap, std::vector<double> joint, std::int64_t tick = 0)
      : states_(states), cap_(cap), joint_(std::move(joint)), tick_(tick) {
    if (states_ == 0 || cap_ == 0) throw Error(ErrorCode::InvalidArgument, "belief dimensions must be positive");
    if (joint_.size() != states_ * cap_) throw Error(ErrorCode::InvalidArgument, "belief size mismatch");
    double total = 0.0;
    for (double v : joint_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "belief entries must be finite and >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "belief does not sum to 1");
  }

  /// Mass placed at duration 1: every entity is taken to have just entered its state.
  static StateBelief from_marginal(std::span<const double> pi, std::size_t cap, std::int64_t tick = 0) {
    std::vector<double> joint(pi.size() * cap, 0.0);
    for (std::size_t i = 0; i < pi.size(); ++i) joint[i * cap] = pi[i];
    return StateBelief(pi.size(), cap, std::move(joint), tick);
  }

  std::size_t states() const noexcept { return states_; }
  std::size_t cap() const noexcept { return cap_; }
  std::int64_t tick() const noexcept { return tick_; }
  std::span<const double> joint() const noexcept { return joint_; }

  double at(std::size_t state, std::size_t duration) const { return joint_.at(state * cap_ + duration - 1); }

  std::vector<double> marginal() const {
    std::vector<double> pi(states_, 0.0);
    for (std::size_t i = 0; i < states_; ++i)
      for (std::size_t d = 0; d < cap_; ++d) pi[i] += joint_[i * cap_ + d];
    return pi;
  }

  /// P(duration = d | state) for d = 1..cap; all zeros when the state has no mass.
  std::vector<double> duration_marginal(std::size_t state) const {
    std::vector<double> out(joint_.begin() + static_cast<std::ptrdiff_t>(state * cap_),
                            joint_.begin() + static_cast<std::ptrdiff_t>((state + 1) * cap_));
    const double mass = std::accumulate(out.begin(), out.end(), 0.0);
    if (mass > 0.0)
      for (auto& v : out) v /= mass;
    return out;
  }

  double total() const { return std::accumulate(joint_.begin(), joint_.end(), 0.0); }

  bool operator==(const StateBelief&) const = default;

 private:
  std::size_t states_ = 0;
  std::size_t cap_ = 0;
  std::vector<double> joint_;
  std::int64_t tick_ = 0;
};

namespace detail {

inline StateBelief normalized(std::size_t states, std::size_t cap, std::vector<double> joint, std::int64_t tick) {
  const double total = std::accumulate(joint.begin(), joint.end(), 0.0);
  for (auto& v : joint) v /= total;
  return StateBelief(states, cap, std::move(joint), tick);
}

}  // namespace detail

/// Precomputed per-tick hazards of a semi-Markov model:
///   h_ij(d) = p_ij q_ij(d) / S_i(d),  S_i(d) = sum_j p_ij P(H_ij >= d).
/// Mass that does not leave stays in the state with its duration advanced.
class TransitionOperator {
 public:
  TransitionOperator(const ThreatStateSpace& space, const TransitionModel& model)
      : m_(space.size()), cap_(model.duration_cap) {
    space.validate();
    model.validate(space);
    absorbing_.assign(m_, false);
    hazard_.assign(m_ * cap_ * m_, 0.0);
    survival_.assign(m_ * cap_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (space.is_absorbing(i)) {
        absorbing_[i] = true;
        continue;
      }
      std::vector<std::pair<std::size_t, detail::HoldingCurve>> curves;
      for (std::size_t j = 0; j < m_; ++j)
        if (model.embedded[i][j] > 0.0)
          curves.emplace_back(j, detail::holding_curve(model.holding.at({i, j}), cap_));
      for (std::size_t d = 0; d < cap_; ++d) {
        double s = 0.0;
        for (const auto& [j, c] : curves) s += model.embedded[i][j] * c.survival[d];
        survival_[i * cap_ + d] = s;
        if (s <= 0.0) continue;
        for (const auto& [j, c] : curves) hazard_[(i * cap_ + d) * m_ + j] = model.embedded[i][j] * c.pmf[d] / s;
      }
    }
  }

  std::size_t states() const noexcept { return m_; }
  std::size_t cap() const noexcept { return cap_; }
  bool is_absorbing(std::size_t i) const { return absorbing_[i]; }

  /// Duration is 1-based.
  double hazard(std::size_t from, std::size_t duration, std::size_t to) const {
    return hazard_[(from * cap_ + duration - 1) * m_ + to];
  }
  double survival_mass(std::size_t state, std::size_t duration) const {
    return survival_[state * cap_ + duration - 1];
  }
  double retention(std::size_t state, std::size_t duration) const {
    if (absorbing_[state]) return 1.0;
    double out = 1.0;
    for (std::size_t j = 0; j < m_; ++j) out -= hazard(state, duration, j);
    return out;
  }

  /// One tick of the augmented chain. Unnormalised; callers renormalise.
  std::vector<double> step(std::span<const double> joint) const {
    std::vector<double> out(m_ * cap_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t d = 0; d < cap_; ++d) {
        const double mass = joint[i * cap_ + d];
        if (mass == 0.0) continue;
        const std::size_t next_d = std::min(d + 1, cap_ - 1);
        if (absorbing_[i]) {
          out[i * cap_ + next_d] += mass;
          continue;
        }
        if (survival_[i * cap_ + d] <= 0.0)
          throw Error(ErrorCode::DegenerateHolding, "belief has mass at a duration no holding distribution reaches");
        double leaving = 0.0;
        for (std::size_t j = 0; j < m_; ++j) {
          const double h = hazard_[(i * cap_ + d) * m_ + j];
          if (h == 0.0) continue;
          out[j * cap_] += mass * h;
          leaving += h;
        }
        // No holding time reaches next_d: what is left is round-off.
        const double stay = survival_[i * cap_ + next_d] > 0.0 ? 1.0 - leaving : 0.0;
        if (stay > 0.0) out[i * cap_ + next_d] += mass * stay;
      }
    }
    return out;
  }

 private:
  std::size_t m_;
  std::size_t cap_;
  std::vector<bool> absorbing_;
  std::vector<double> hazard_;    // [(i * cap + d) * m + j]
  std::vector<double> survival_;  // [i * cap + d]
};

inline TransitionOperator build_transition_operator(const ThreatStateSpace& space, const TransitionModel& model) {
  return TransitionOperator(space, model);
}

inline StateBelief predict_step(const StateBelief& belief, const TransitionOperator& op, std::int64_t n_ticks = 1) {
  if (n_ticks < 1) throw Error(ErrorCode::InvalidArgument, "predict_step needs n_ticks >= 1");
  if (belief.states() != op.states() || belief.cap() != op.cap())
    throw Error(ErrorCode::InvalidArgument, "belief shape does not match the transition model");
  std::vector<double> joint(belief.joint().begin(), belief.joint().end());
  for (std::int64_t k = 0; k < n_ticks; ++k) {
    joint = op.step(joint);
    const double total = std::accumulate(joint.begin(), joint.end(), 0.0);
    for (auto& v : joint) v /= total;
  }
  return detail::normalized(op.states(), op.cap(), std::move(joint), belief.tick() + n_ticks);
}

// ---------------------------------------------------------------------------
// Task layer and signal likelihoods

struct BetaEmission {
  double alpha = 1.0;
  double beta = 1.0;

  double log_density(double z) const {
    using boost::math::lgamma;
    const double norm = lgamma(alpha + beta) - lgamma(alpha) - lgamma(beta);
    const double lz = alpha == 1.0 ? 0.0 : (alpha - 1.0) * std::log(z);
    const double l1z = beta == 1.0 ? 0.0 : (beta - 1.0) * std::log1p(-z);
    return norm + lz + l1z;
  }

  double density(double z) const {
    const double v = std::exp(log_density(z));
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "emission density is unbounded at z");
    return v;
  }

  double cdf(double z) const {
    if (z <= 0.0) return 0.0;
    if (z >= 1.0) return 1.0;
    return boost::math::ibeta(alpha, beta, z);
  }
};

struct TaskEmission {
  BetaEmission inactive;  ///< g_j(z | task not enacted)
  BetaEmission active;    ///< g_j(z | task enacted)
};

/// Maps the raw activity records relevant to one task onto a signal in [0, 1].
struct SignalExtractor {
  enum class Kind { Mean, Max, SaturatingCount };
  Kind kind = Kind::Max;
  double scale = 1.0;  ///< SaturatingCount: z = 1 - exp(-count / scale)

  std::optional<double> apply(std::span<const double> records) const {
    if (records.empty()) return std::nullopt;
    double z = 0.0;
    switch (kind) {
      case Kind::Mean: z = std::accumulate(records.begin(), records.end(), 0.0) / static_cast<double>(records.size()); break;
      case Kind::Max: z = *std::max_element(records.begin(), records.end()); break;
      case Kind::SaturatingCount: z = 1.0 - std::exp(-static_cast<double>(records.size()) / scale); break;
    }
    return std::clamp(z, 0.0, 1.0);
  }
};

/// A task relevant to a state, with P(task enacted | state).
struct TaskLink {
  std::size_t task;
  double probability;
};

struct TaskModel {
  std::vector<std::string> task_names;           ///< size R
  std::vector<std::vector<TaskLink>> relevant;   ///< per state: I_i with p*_{i,j}
  std::vector<TaskEmission> emissions;           ///< per task
  std::vector<SignalExtractor> extractors;       ///< per task

  std::size_t tasks() const noexcept { return task_names.size(); }

  void validate(const ThreatStateSpace& space) const {
    const std::size_t r = tasks();
    if (r == 0) throw Error(ErrorCode::InvalidModel, "task model needs at least one task");
    if (relevant.size() != space.size()) throw Error(ErrorCode::InvalidModel, "task index sets must cover every state");
    if (emissions.size() != r || extractors.size() != r)
      throw Error(ErrorCode::InvalidModel, "emissions and extractors must be given per task");
    for (std::size_t i = 0; i < space.size(); ++i) {
      if (relevant[i].empty() && !space.is_absorbing(i))
        throw Error(ErrorCode::InvalidModel, "state '" + space.states[i] + "' has an empty task index set");
      for (std::size_t a = 0; a < relevant[i].size(); ++a) {
        const auto& link = relevant[i][a];
        if (link.task >= r) throw Error(ErrorCode::InvalidModel, "task index out of range");
        if (!(link.probability >= 0.0 && link.probability <= 1.0))
          throw Error(ErrorCode::InvalidModel, "task probability outside [0, 1]");
        for (std::size_t b = a + 1; b < relevant[i].size(); ++b)
          if (relevant[i][b].task == link.task) throw Error(ErrorCode::InvalidModel, "duplicate task in index set");
      }
    }
    for (const auto& e : emissions)
      for (const auto* b : {&e.inactive, &e.active})
        if (!(b->alpha > 0.0 && b->beta > 0.0)) throw Error(ErrorCode::InvalidModel, "beta emission parameters must be > 0");
  }
};

struct SignalVector {
  std::vector<std::optional<double>> values;
  std::int64_t tick = 0;

  bool vacuous() const {
    return std::none_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
  }
};

/// P(z | X = x_i) with independent per-task enactment given the state and
/// per-task signals given enactment. Tasks outside I_i enter as an even
/// mixture; missing signals contribute a factor of 1.
inline double signal_likelihood(const TaskModel& tasks, const SignalVector& z, std::size_t state) {
  if (z.values.size() != tasks.tasks()) throw Error(ErrorCode::InvalidArgument, "signal vector length != task count");
  if (state >= tasks.relevant.size()) throw Error(ErrorCode::InvalidArgument, "state index out of range");
  std::vector<double> p_active(tasks.tasks(), 0.5);
  for (const auto& link : tasks.relevant[state]) p_active[link.task] = link.probability;
  double lik = 1.0;
  for (std::size_t j = 0; j < tasks.tasks(); ++j) {
    if (!z.values[j]) continue;
    const double v = *z.values[j];
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "signal value outside [0, 1]");
    const auto& e = tasks.emissions[j];
    lik *= p_active[j] * e.active.density(v) + (1.0 - p_active[j]) * e.inactive.density(v);
  }
  return lik;
}

/// Signals observed only up to a bin. `edges` are interior cut points in
/// (0, 1); bin k covers [edges[k-1], edges[k]).
struct BinnedSignal {
  std::vector<double> edges;
  std::vector<std::optional<std::size_t>> bins;
};

inline double binned_signal_likelihood(const TaskModel& tasks, const BinnedSignal& z, std::size_t state) {
  if (z.bins.size() != tasks.tasks()) throw Error(ErrorCode::InvalidArgument, "signal vector length != task count");
  std::vector<double> p_active(tasks.tasks(), 0.5);
  for (const auto& link : tasks.relevant.at(state)) p_active[link.task] = link.probability;
  double lik = 1.0;
  for (std::size_t j = 0; j < tasks.tasks(); ++j) {
    if (!z.bins[j]) continue;
    const std::size_t k = *z.bins[j];
    if (k > z.edges.size()) throw Error(ErrorCode::InvalidArgument, "bin index out of range");
    const double lo = k == 0 ? 0.0 : z.edges[k - 1];
    const double hi = k == z.edges.size() ? 1.0 : z.edges[k];
    const auto& e = tasks.emissions[j];
    const double on = e.active.cdf(hi) - e.active.cdf(lo);
    const double off = e.inactive.cdf(hi) - e.inactive.cdf(lo);
    lik *= p_active[j] * on + (1.0 - p_active[j]) * off;
  }
  return lik;
}

struct FilterResult {
  StateBelief belief;
  double log_evidence = 0.0;
};

namespace detail {

inline FilterResult bayes_update(const StateBelief& belief, std::span<const double> likelihoods) {
  if (likelihoods.size() != belief.states()) throw Error(ErrorCode::InvalidArgument, "likelihood vector length != state count");
  for (double l : likelihoods)
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorCode::InvalidArgument, "likelihoods must be finite and >= 0");
  const auto pi = belief.marginal();
  double evidence = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) evidence += pi[i] * likelihoods[i];
  if (!(evidence > 0.0))
    throw Error(ErrorCode::TotalEvidenceZero, "observed signals have zero probability under the current belief");
  const std::size_t cap = belief.cap();
  std::vector<double> joint(belief.joint().begin(), belief.joint().end());
  for (std::size_t i = 0; i < belief.states(); ++i)
    for (std::size_t d = 0; d < cap; ++d) joint[i * cap + d] *= likelihoods[i] / evidence;
  return {normalized(belief.states(), cap, std::move(joint), belief.tick()), std::log(evidence)};
}

}  // namespace detail

inline StateBelief update_step(const StateBelief& belief, std::span<const double> likelihoods) {
  return detail::bayes_update(belief, likelihoods).belief;
}

inline std::vector<double> state_likelihoods(const TaskModel& tasks, const SignalVector& z) {
  std::vector<double> lik(tasks.relevant.size(), 1.0);
  if (z.vacuous()) return lik;
  for (std::size_t i = 0; i < lik.size(); ++i) lik[i] = signal_likelihood(tasks, z, i);
  return lik;
}

/// Predict one tick, then condition on the tick's likelihood vector.
inline FilterResult filter_tick(const StateBelief& belief, const TransitionOperator& op,
                                std::span<const double> likelihoods) {
  return detail::bayes_update(predict_step(belief, op, 1), likelihoods);
}

inline FilterResult filter_tick(const StateBelief& belief, const TransitionOperator& op, const TaskModel& tasks,
                                const SignalVector& z) {
  auto predicted = predict_step(belief, op, 1);
  if (z.vacuous()) {
    if (z.values.size() != tasks.tasks()) throw Error(ErrorCode::InvalidArgument, "signal vector length != task count");
    return {std::move(predicted), 0.0};
  }
  return detail::bayes_update(predicted, state_likelihoods(tasks, z));
}

inline double marginal_threat(const StateBelief& belief, std::span<const std::size_t> threat_set) {
  const auto pi = belief.marginal();
  double total = 0.0;
  for (auto i : threat_set) {
    if (i >= pi.size()) throw Error(ErrorCode::InvalidArgument, "threat set index out of range");
    total += pi[i];
  }
  return std::min(total, 1.0);
}

}  // namespace threatnet
