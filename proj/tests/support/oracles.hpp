#pragma once
// Brute-force reference computations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "threatnet/state_filter.hpp"

namespace threatnet::oracle {

// ---------------------------------------------------------------------------
// Discounted Gamma-Poisson evidence by numerical integration.
//
// The prior at each tick is built from the previous posterior density as
//   p_t(phi) ∝ phi^(delta - 1) * post_{t-1}(phi)^delta
// and normalised numerically; nothing below uses the conjugate update rules.

using LogDensity = std::function<double(double)>;

/// log of the integral over (0, inf) of exp(g(phi)), via phi = e^u.
inline double log_integral(const LogDensity& g) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double u = -40.0; u <= 12.0; u += 0.01) {
    const double v = g(std::exp(u)) + u;
    if (std::isfinite(v)) shift = std::max(shift, v);
  }
  boost::math::quadrature::sinh_sinh<double> integrator(12);
  auto f = [&](double u) {
    const double phi = std::exp(u);
    if (!(phi > 0.0 && std::isfinite(phi))) return 0.0;
    const double v = g(phi) + u - shift;
    return std::isfinite(v) && v > -745.0 ? std::exp(v) : 0.0;
  };
  const double area = integrator.integrate(f, 1e-14);
  return shift + std::log(area);
}

struct ChannelCount {
  std::optional<double> count;  ///< integer-valued; missing channel when empty
  double xi;
};

/// Sum over ticks of log P(y_t | y_{1:t-1}) for one pair. An empty tick vector
/// means the pair was not monitored that tick.
inline double discounted_log_evidence(double alpha0, double beta0, double delta,
                                      const std::vector<std::vector<ChannelCount>>& ticks) {
  std::vector<LogDensity> posts;
  const LogDensity gamma0 = [=](double phi) {
    return alpha0 * std::log(beta0) - boost::math::lgamma(alpha0) + (alpha0 - 1.0) * std::log(phi) - beta0 * phi;
  };
  double total = 0.0;
  for (std::size_t t = 0; t < ticks.size(); ++t) {
    LogDensity prior;
    if (t == 0) {
      prior = gamma0;
    } else {
      const LogDensity prev = posts.back();
      const LogDensity kernel = [=](double phi) { return delta * prev(phi) + (delta - 1.0) * std::log(phi); };
      const double log_z = log_integral(kernel);
      prior = [=](double phi) { return kernel(phi) - log_z; };
    }
    if (ticks[t].empty()) {
      posts.push_back(prior);
      continue;
    }
    const auto obs = ticks[t];
    const LogDensity loglik = [=](double phi) {
      double out = 0.0;
      for (const auto& c : obs) {
        if (!c.count) continue;
        const double mu = c.xi * phi;
        out -= mu;
        if (*c.count > 0.0) out += *c.count * std::log(mu) - std::lgamma(*c.count + 1.0);
      }
      return out;
    };
    const LogDensity joint = [=](double phi) { return prior(phi) + loglik(phi); };
    const double log_ev = log_integral(joint);
    total += log_ev;
    posts.push_back([=](double phi) { return joint(phi) - log_ev; });
  }
  return total;
}

// ---------------------------------------------------------------------------
// Semi-Markov forward simulation with rejection on discretised signals.

struct SmallModel {
  std::vector<std::vector<double>> embedded;
  std::vector<std::vector<std::vector<double>>> holding;  ///< [i][j] pmf over d = 1..
  std::vector<std::vector<double>> p_active;              ///< [i][task]; 0.5 outside the index set
  std::vector<std::pair<double, double>> off, on;         ///< Beta params per task
  std::vector<double> edges;                              ///< interior bin cut points
  std::vector<double> prior;
};

struct McResult {
  std::vector<std::size_t> accepted;               ///< per tick 1..T
  std::vector<std::vector<double>> posterior;      ///< [t-1][state]
};

class SmallSimulator {
 public:
  SmallSimulator(const SmallModel& m, std::uint64_t seed) : m_(m), rng_(seed) {}

  std::size_t categorical(const std::vector<double>& w) {
    std::discrete_distribution<std::size_t> d(w.begin(), w.end());
    return d(rng_);
  }

  double beta(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng_);
    return x / (x + gb(rng_));
  }

  std::size_t bin_of(double z) const {
    return static_cast<std::size_t>(std::upper_bound(m_.edges.begin(), m_.edges.end(), z) - m_.edges.begin());
  }

  std::size_t emit(std::size_t state, std::size_t task) {
    std::bernoulli_distribution enact(m_.p_active[state][task]);
    const auto& ab = enact(rng_) ? m_.on[task] : m_.off[task];
    return bin_of(beta(ab.first, ab.second));
  }

  /// States at ticks 0..n; state at tick 0 was just entered.
  std::vector<std::size_t> path(std::size_t n) {
    std::vector<std::size_t> xs;
    std::size_t state = categorical(m_.prior);
    while (xs.size() <= n) {
      const std::size_t next = categorical(m_.embedded[state]);
      const std::size_t hold = categorical(m_.holding[state][next]) + 1;
      for (std::size_t k = 0; k < hold && xs.size() <= n; ++k) xs.push_back(state);
      state = next;
    }
    return xs;
  }

 private:
  const SmallModel& m_;
  std::mt19937_64 rng_;
};

/// `obs[t-1][task]` is the observed bin at tick t or empty.
inline McResult conditioned_mc(const SmallModel& m, const std::vector<std::vector<std::optional<std::size_t>>>& obs,
                               std::size_t n_paths, std::uint64_t seed) {
  const std::size_t n = obs.size();
  const std::size_t states = m.prior.size();
  McResult r;
  r.accepted.assign(n, 0);
  std::vector<std::vector<double>> counts(n, std::vector<double>(states, 0.0));
  SmallSimulator sim(m, seed);
  for (std::size_t p = 0; p < n_paths; ++p) {
    const auto xs = sim.path(n);
    for (std::size_t t = 1; t <= n; ++t) {
      bool ok = true;
      for (std::size_t j = 0; j < obs[t - 1].size(); ++j) {
        // Unobserved tasks are still drawn so the stream of variates stays aligned.
        const auto b = sim.emit(xs[t], j);
        if (obs[t - 1][j] && *obs[t - 1][j] != b) ok = false;
      }
      if (!ok) break;
      ++r.accepted[t - 1];
      counts[t - 1][xs[t]] += 1.0;
    }
  }
  r.posterior = counts;
  for (std::size_t t = 0; t < n; ++t)
    for (auto& c : r.posterior[t]) c = r.accepted[t] ? c / static_cast<double>(r.accepted[t]) : 0.0;
  return r;
}

/// The same model in library form.
struct LibraryModel {
  ThreatStateSpace space;
  TransitionModel transition;
  TaskModel tasks;
};

inline LibraryModel to_library(const SmallModel& m, std::size_t cap = 52) {
  LibraryModel out;
  const std::size_t s = m.prior.size();
  for (std::size_t i = 0; i < s; ++i) out.space.states.push_back("s" + std::to_string(i));
  out.transition.embedded = m.embedded;
  out.transition.duration_cap = cap;
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      if (m.embedded[i][j] > 0.0) out.transition.holding[{i, j}] = TabulatedHolding{m.holding[i][j]};
  const std::size_t r = m.on.size();
  for (std::size_t j = 0; j < r; ++j) {
    out.tasks.task_names.push_back("task" + std::to_string(j));
    out.tasks.emissions.push_back({{m.off[j].first, m.off[j].second}, {m.on[j].first, m.on[j].second}});
    out.tasks.extractors.push_back({});
  }
  out.tasks.relevant.resize(s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < r; ++j)
      if (m.p_active[i][j] != 0.5) out.tasks.relevant[i].push_back({j, m.p_active[i][j]});
  return out;
}

/// Three states, two tasks, tabulated holding times up to four ticks.
inline SmallModel three_state_model() {
  SmallModel m;
  m.embedded = {{0.0, 0.7, 0.3}, {0.4, 0.0, 0.6}, {0.5, 0.5, 0.0}};
  m.holding.assign(3, std::vector<std::vector<double>>(3));
  m.holding[0][1] = {0.1, 0.5, 0.3, 0.1};
  m.holding[0][2] = {0.6, 0.3, 0.1};
  m.holding[1][0] = {0.2, 0.2, 0.6};
  m.holding[1][2] = {0.0, 0.5, 0.5};
  m.holding[2][0] = {0.7, 0.2, 0.05, 0.05};
  m.holding[2][1] = {0.3, 0.3, 0.4};
  m.p_active = {{0.15, 0.5}, {0.45, 0.5}, {0.85, 0.8}};
  m.off = {{1.5, 6.0}, {2.0, 5.0}};
  m.on = {{6.0, 1.5}, {5.0, 2.0}};
  m.edges = {0.5};
  m.prior = {0.5, 0.3, 0.2};
  return m;
}

// ---------------------------------------------------------------------------
// Per-state signal likelihood by explicit enumeration of enactment patterns.

inline double enumerated_likelihood(const std::vector<double>& p_active,
                                    const std::vector<std::pair<double, double>>& off,
                                    const std::vector<std::pair<double, double>>& on,
                                    const std::vector<std::optional<double>>& z) {
  auto beta_pdf = [](std::pair<double, double> ab, double x) {
    const auto [a, b] = ab;
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) + std::lgamma(a + b) - std::lgamma(a) -
                    std::lgamma(b));
  };
  const std::size_t r = p_active.size();
  double total = 0.0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << r); ++mask) {
    double w = 1.0;
    for (std::size_t j = 0; j < r; ++j) {
      const bool enacted = (mask >> j) & 1u;
      w *= enacted ? p_active[j] : 1.0 - p_active[j];
      if (z[j]) w *= beta_pdf(enacted ? on[j] : off[j], *z[j]);
    }
    total += w;
  }
  return total;
}

}  // namespace threatnet::oracle
