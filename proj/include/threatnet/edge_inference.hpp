#pragma once

// Gamma-Poisson filtering of pairwise communication rates.
//
// Each live edge carries phi ~ Gamma(alpha, beta) (shape / rate). Per tick:
//   prior      (alpha, beta) <- (delta * alpha, delta * beta)
//   data       s_k | phi ~ Poisson(xi_k * phi) for every present channel k
//   posterior  alpha += sum_k s_k,  beta += sum_k xi_k

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "threatnet/error.hpp"
#include "threatnet/types.hpp"

namespace threatnet {

struct ChannelSpec {
  enum class Summary { Sum, Count, FirstDifference };

  int id = 0;
  std::string name;
  double efficiency = 1.0;  ///< xi_k in (0, 1]
  double r_max = 10.0;
  double scale_target = 10.0;
  bool clamp = false;
  Summary summary = Summary::Sum;

  void validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0))
      throw Error(ErrorCode::InvalidModel, "channel " + std::to_string(id) + ": efficiency must be in (0, 1]");
    if (!(r_max > 0.0)) throw Error(ErrorCode::InvalidModel, "channel " + std::to_string(id) + ": r_max must be > 0");
    if (!(scale_target > 0.0))
      throw Error(ErrorCode::InvalidModel, "channel " + std::to_string(id) + ": scale_target must be > 0");
  }

  /// Collapses the raw records of one tick into a single raw value.
  /// FirstDifference is |last - first| for cumulative counters.
  double summarize(std::span<const double> records) const {
    if (records.empty()) return 0.0;
    switch (summary) {
      case Summary::Sum: {
        double s = 0.0;
        for (double r : records) s += r;
        return s;
      }
      case Summary::Count: return static_cast<double>(records.size());
      case Summary::FirstDifference: return std::abs(records.back() - records.front());
    }
    return 0.0;
  }
};

inline double scale_raw(double raw, const ChannelSpec& channel) {
  if (!(raw >= 0.0)) throw Error(ErrorCode::InvalidArgument, "raw channel value must be >= 0");
  const double s = raw / channel.r_max * channel.scale_target;
  return channel.clamp ? std::min(s, channel.scale_target) : s;
}

enum class DiscountMode { Fixed, Adaptive };

struct EdgeBelief {
  double alpha = 0.0;
  double beta = 0.0;
  EntityPair pair;
  double baseline_discount = 1.0;  ///< fixed delta, or the floor d of the adaptive rule
  DiscountMode discount_mode = DiscountMode::Fixed;
  double last_observed_effort = 0.0;  ///< sum_k s_k xi_k at the previous tick

  double mean() const { return alpha / beta; }
  double variance() const { return alpha / (beta * beta); }
  bool proper() const { return alpha > 0.0 && beta > 0.0; }

  bool operator==(const EdgeBelief&) const = default;
};

struct ObservationVector {
  EntityPair pair;
  Tick tick = 0;
  std::vector<std::optional<double>> values;  ///< scaled s_k per channel position
  bool monitored = true;

  bool any_nonzero() const {
    return std::any_of(values.begin(), values.end(), [](const auto& v) { return v && *v != 0.0; });
  }
};

inline EdgeBelief evolve_prior(EdgeBelief belief, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "discount must be in (0, 1]");
  belief.alpha *= delta;
  belief.beta *= delta;
  return belief;
}

inline double adaptive_discount(double d, double prev_effort) {
  if (!(d > 0.0 && d <= 1.0)) throw Error(ErrorCode::InvalidArgument, "baseline discount must be in (0, 1]");
  if (!(prev_effort >= 0.0)) throw Error(ErrorCode::InvalidArgument, "effort must be >= 0");
  return d + (1.0 - d) * std::exp(-prev_effort);
}

/// Discount applied when moving this belief one tick forward.
inline double current_discount(const EdgeBelief& belief) {
  return belief.discount_mode == DiscountMode::Fixed
             ? belief.baseline_discount
             : adaptive_discount(belief.baseline_discount, belief.last_observed_effort);
}

namespace detail {

inline void check_observation(const ObservationVector& obs, std::span<const ChannelSpec> channels) {
  if (obs.values.size() != channels.size())
    throw Error(ErrorCode::InvalidArgument, "observation for " + obs.pair.label() + " has wrong channel count");
  for (const auto& v : obs.values)
    if (v && !(*v >= 0.0 && std::isfinite(*v)))
      throw Error(ErrorCode::InvalidArgument, "observation for " + obs.pair.label() + " has a negative value");
}

}  // namespace detail

/// Zeros on a monitored tick are evidence: beta still grows by sum xi.
inline EdgeBelief posterior_update(EdgeBelief belief, const ObservationVector& obs,
                                   std::span<const ChannelSpec> channels) {
  if (!obs.monitored)
    throw Error(ErrorCode::UnmonitoredTick, "pair " + obs.pair.label() + " was not monitored this tick");
  detail::check_observation(obs, channels);
  double effort = 0.0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (!obs.values[k]) continue;
    belief.alpha += *obs.values[k];
    belief.beta += channels[k].efficiency;
    effort += *obs.values[k] * channels[k].efficiency;
  }
  belief.last_observed_effort = effort;
  return belief;
}

/// log P(s) for s ~ NegBin from phi ~ Gamma(alpha, beta), s | phi ~ Poisson(xi phi).
inline double gamma_poisson_log_pmf(double alpha, double beta, double xi, double s) {
  using boost::math::lgamma;
  const double log_p0 = -std::log1p(xi / beta);
  double out = alpha * log_p0;
  if (s > 0.0)
    out += lgamma(alpha + s) - lgamma(alpha) - lgamma(s + 1.0) + s * (std::log(xi) - std::log(beta + xi));
  return out;
}

struct PredictiveTerm {
  double log_likelihood = 0.0;
  std::vector<std::optional<double>> channel_terms;  ///< per channel; empty when absent
  bool rounded = false;  ///< some scaled value was non-integer and rounded for the mass
};

/// One-step-ahead log predictive of a tick's observation under `prior`.
/// Channel k is scored conditionally on the channels before it in the same
/// tick, so the terms sum to the joint predictive of the whole vector.
inline PredictiveTerm predictive_log_likelihood(const EdgeBelief& prior, const ObservationVector& obs,
                                                std::span<const ChannelSpec> channels) {
  if (!(prior.alpha > 0.0 && prior.beta > 0.0))
    throw Error(ErrorCode::InvalidArgument, "predictive needs alpha > 0 and beta > 0");
  detail::check_observation(obs, channels);
  PredictiveTerm out;
  out.channel_terms.assign(channels.size(), std::nullopt);
  if (!obs.monitored) return out;
  double alpha = prior.alpha;
  double beta = prior.beta;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (!obs.values[k]) continue;
    const double s = std::round(*obs.values[k]);
    if (s != *obs.values[k]) out.rounded = true;
    const double term = gamma_poisson_log_pmf(alpha, beta, channels[k].efficiency, s);
    out.channel_terms[k] = term;
    out.log_likelihood += term;
    alpha += s;
    beta += channels[k].efficiency;
  }
  return out;
}

/// P(phi > threshold) under the belief.
inline double tail_probability(const EdgeBelief& belief, double threshold) {
  if (!(belief.alpha > 0.0 && belief.beta > 0.0))
    throw Error(ErrorCode::InvalidArgument, "tail probability needs alpha > 0 and beta > 0");
  if (!(threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be >= 0");
  if (threshold == 0.0) return 1.0;
  return boost::math::gamma_q(belief.alpha, belief.beta * threshold);
}

inline std::vector<double> posterior_density_curve(const EdgeBelief& belief, std::span<const double> grid) {
  if (!(belief.alpha > 0.0 && belief.beta > 0.0))
    throw Error(ErrorCode::InvalidArgument, "density needs alpha > 0 and beta > 0");
  const double a = belief.alpha;
  const double b = belief.beta;
  const double log_norm = a * std::log(b) - boost::math::lgamma(a);
  std::vector<double> out;
  out.reserve(grid.size());
  for (double phi : grid) {
    if (phi < 0.0) {
      out.push_back(0.0);
    } else if (phi == 0.0) {
      out.push_back(a > 1.0 ? 0.0 : a == 1.0 ? b : std::numeric_limits<double>::infinity());
    } else {
      out.push_back(std::exp(log_norm + (a - 1.0) * std::log(phi) - b * phi));
    }
  }
  return out;
}

}  // namespace threatnet
