// Copyright 2026 The qpdstrat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/errors.hpp"
#include "qpdstrat/numeric.hpp"
#include "qpdstrat/qpd.hpp"
#include "qpdstrat/random.hpp"

namespace qpdstrat {

/// Opaque stratum label; strata are always ordered lexicographically by key.
using StratumKey = std::vector<int>;

/// Occurrence count of each local index over a (prefix of a) configuration.
struct CountsVector {
  std::vector<int> counts;

  std::size_t size() const noexcept { return counts.size(); }
  int operator[](std::size_t k) const { return counts[k]; }
  int total() const noexcept {
    int s = 0;
    for (int c : counts) s += c;
    return s;
  }
  auto operator<=>(const CountsVector&) const = default;
  bool operator==(const CountsVector&) const = default;
};

inline CountsVector counts_of(const Configuration& l, std::size_t d) {
  CountsVector m{std::vector<int>(d, 0)};
  for (int k : l.indices) {
    if (k < 0 || static_cast<std::size_t>(k) >= d) {
      throw InvalidArgument("configuration index " + std::to_string(k) + " outside width " +
                            std::to_string(d));
    }
    ++m.counts[static_cast<std::size_t>(k)];
  }
  return m;
}

/// Number of counts vectors with sum nu over d categories: C(nu+d-1, d-1).
inline std::uint64_t stratum_count(std::uint64_t nu, std::uint64_t d) {
  if (d == 0) throw InvalidArgument("width must be at least 1");
  return binomial(checked_add(nu, d - 1), d - 1);
}

/// Size of the cached forward table, sum_{i=0..nu} C(i+d-1, d-1) = C(nu+d, d).
inline std::uint64_t cumulative_state_count(std::uint64_t nu, std::uint64_t d) {
  if (d == 0) throw InvalidArgument("width must be at least 1");
  return binomial(checked_add(nu, d), d);
}

/// Lexicographic ranking of compositions of a total into d ordered parts.
///
/// rank(m) is the position of m among all compositions with the same total,
/// sorted lexicographically ascending; (0,...,0,i) has rank 0.
class CompositionRanker {
 public:
  CompositionRanker() = default;
  CompositionRanker(std::size_t max_total, std::size_t d) : d_(d), stride_(d + 1) {
    table_.assign((max_total + d + 1) * stride_, 0);
    for (std::size_t n = 0; n <= max_total + d; ++n) {
      for (std::size_t k = 0; k <= d && k <= n; ++k) {
        table_[n * stride_ + k] = binomial(n, k);
      }
    }
  }

  std::uint64_t choose(std::size_t n, std::size_t k) const noexcept {
    return k > n ? 0 : table_[n * stride_ + k];
  }

  std::uint64_t count(std::size_t total) const noexcept { return choose(total + d_ - 1, d_ - 1); }

  std::uint64_t rank(std::span<const int> m, std::size_t total) const noexcept {
    std::uint64_t r = 0;
    std::size_t rem = total;
    for (std::size_t j = 0; j + 1 < d_; ++j) {
      const std::size_t t = d_ - 1 - j;
      const auto mj = static_cast<std::size_t>(m[j]);
      r += choose(rem + t, t) - choose(rem - mj + t, t);
      rem -= mj;
    }
    return r;
  }

  /// Advance m to its lexicographic successor; false once m was the last.
  static bool next(std::vector<int>& m) noexcept {
    const std::size_t d = m.size();
    if (d < 2) return false;
    int tail = m[d - 1];
    for (std::size_t j = d - 1; j-- > 0;) {
      if (tail > 0) {
        ++m[j];
        for (std::size_t k = j + 1; k + 1 < d; ++k) m[k] = 0;
        m[d - 1] = tail - 1;
        return true;
      }
      tail += m[j];
    }
    return false;
  }

 private:
  std::size_t d_ = 1;
  std::size_t stride_ = 2;
  std::vector<std::uint64_t> table_;
};

struct DpOptions {
  /// Preflight cap on the number of cached states.
  std::uint64_t state_cap = std::uint64_t{1} << 31;
  /// Force per-layer renormalisation; otherwise it switches on only when a
  /// layer maximum drops below kUnderflowGuard.
  bool renormalize = false;
};

inline constexpr double kUnderflowGuard = 1e-250;

/// Cached Poisson-multinomial forward table over counts vectors.
///
/// Layer i stores W(i)_m = Pr(M(i) = m) for every counts vector of sum i,
/// densely indexed by CompositionRanker. Immutable once built; concurrent
/// conditional sampling is safe.
class StratumTable {
 public:
  StratumTable() = default;

  /// Forward DP. Throws ResourceLimit when the cached table would exceed
  /// options.state_cap states.
  static StratumTable build(const ProductQpd& qpd, DpOptions options = {}) {
    const std::size_t nu = qpd.nu();
    const std::size_t d = qpd.width();
    const std::uint64_t states = cumulative_state_count(nu, d);
    if (states > options.state_cap) {
      throw ResourceLimit("forward DP needs " + std::to_string(states) +
                          " cached states, above the state cap of " +
                          std::to_string(options.state_cap));
    }
    StratumTable t;
    t.qpd_ = qpd;
    t.ranker_ = CompositionRanker(nu, d);
    t.layers_.resize(nu + 1);
    t.log_scale_.assign(nu + 1, 0.0);
    t.layers_[0].assign(1, 1.0);

    std::vector<int> m(d, 0);
    std::vector<int> prev(d, 0);
    for (std::size_t i = 1; i <= nu; ++i) {
      const auto probs = qpd.local(i - 1).probabilities();
      const auto& below = t.layers_[i - 1];
      auto& layer = t.layers_[i];
      layer.assign(t.ranker_.count(i), 0.0);
      std::fill(m.begin(), m.end(), 0);
      m[d - 1] = static_cast<int>(i);
      std::size_t idx = 0;
      double layer_max = 0.0;
      do {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          if (m[k] == 0 || probs[k] == 0.0) continue;
          prev = m;
          --prev[k];
          acc += probs[k] * below[t.ranker_.rank(prev, i - 1)];
        }
        layer[idx++] = acc;
        layer_max = std::max(layer_max, acc);
      } while (CompositionRanker::next(m));

      t.log_scale_[i] = t.log_scale_[i - 1];
      if ((options.renormalize || layer_max < kUnderflowGuard) && layer_max > 0.0) {
        for (double& w : layer) w /= layer_max;
        t.log_scale_[i] += std::log(layer_max);
        t.renormalized_ = true;
      }
    }

    // Final strata in lexicographic order coincide with dense rank order.
    const auto& last = t.layers_[nu];
    t.final_weights_.resize(last.size());
    const double scale = std::exp(t.log_scale_[nu]);
    for (std::size_t s = 0; s < last.size(); ++s) t.final_weights_[s] = last[s] * scale;
    return t;
  }

  std::size_t nu() const noexcept { return qpd_.nu(); }
  std::size_t width() const noexcept { return qpd_.width(); }
  const ProductQpd& qpd() const noexcept { return qpd_; }
  bool renormalized() const noexcept { return renormalized_; }

  std::size_t layer_size(std::size_t i) const { return layers_.at(i).size(); }

  /// Pr(M(i) = m); zero for vectors that are not of sum i.
  double layer_probability(std::size_t i, const CountsVector& m) const {
    if (m.size() != width() || m.total() != static_cast<int>(i)) return 0.0;
    for (int c : m.counts) {
      if (c < 0) return 0.0;
    }
    return layers_.at(i)[ranker_.rank(m.counts, i)] * std::exp(log_scale_[i]);
  }

  /// Number of final strata, C(nu+d-1, d-1).
  std::size_t size() const noexcept { return final_weights_.size(); }
  double weight(std::size_t s) const { return final_weights_.at(s); }
  std::span<const double> weights() const noexcept { return final_weights_; }

  CountsVector counts(std::size_t s) const {
    std::vector<int> m(width(), 0);
    m[width() - 1] = static_cast<int>(nu());
    // Walk the lexicographic order; strata counts are small enough that the
    // unrank cost is irrelevant next to circuit evaluation.
    for (std::size_t k = 0; k < s; ++k) CompositionRanker::next(m);
    return CountsVector{std::move(m)};
  }

  StratumKey key(std::size_t s) const { return keys().at(s); }

  /// All final counts vectors in lexicographic order.
  const std::vector<StratumKey>& keys() const {
    if (keys_.empty()) {
      std::vector<int> m(width(), 0);
      m[width() - 1] = static_cast<int>(nu());
      keys_.reserve(size());
      do {
        keys_.push_back(m);
      } while (CompositionRanker::next(m));
    }
    return keys_;
  }

  std::optional<std::size_t> index_of(const CountsVector& m) const {
    if (m.size() != width() || m.total() != static_cast<int>(nu())) return std::nullopt;
    for (int c : m.counts) {
      if (c < 0) return std::nullopt;
    }
    return static_cast<std::size_t>(ranker_.rank(m.counts, nu()));
  }

  /// Backward conditional draw l ~ p(l | M = m). Throws EmptyStratum if w_m = 0.
  Configuration conditional_sample(const CountsVector& m, Stream& rng) const {
    const auto s = index_of(m);
    if (!s) throw InvalidArgument("counts vector does not describe a final stratum");
    return sample(*s, rng);
  }

  Configuration sample(std::size_t s, Stream& rng) const {
    if (!(final_weights_.at(s) > 0.0)) throw EmptyStratum("stratum has zero probability");
    const std::size_t d = width();
    std::vector<int> m = keys()[s];
    std::vector<int> prev(d);
    std::vector<double> q(d);
    Configuration l;
    l.indices.assign(nu(), 0);
    for (std::size_t i = nu(); i >= 1; --i) {
      const auto probs = qpd_.local(i - 1).probabilities();
      const auto& below = layers_[i - 1];
      for (std::size_t k = 0; k < d; ++k) {
        q[k] = 0.0;
        if (m[k] == 0 || probs[k] == 0.0) continue;
        prev = m;
        --prev[k];
        q[k] = probs[k] * below[ranker_.rank(prev, i - 1)];
      }
      // Normalising by the row sum equals dividing by W(i)_m.
      const std::size_t k = rng.categorical(q);
      if (k >= d) throw InternalError("backward sampler reached an empty state");
      l[i - 1] = static_cast<int>(k);
      --m[k];
    }
    return l;
  }

  /// Backward probability q_i(k | m) = p_i(k) W(i-1)_{m-e_k} / W(i)_m.
  double backward_probability(std::size_t i, std::size_t k, const CountsVector& m) const {
    if (i == 0 || i > nu() || k >= width() || m[k] == 0) return 0.0;
    const double denom = layer_probability(i, m);
    if (!(denom > 0.0)) return 0.0;
    CountsVector prev = m;
    --prev.counts[k];
    return qpd_.local(i - 1).probability(k) * layer_probability(i - 1, prev) / denom;
  }

  /// Product of backward probabilities along l; the exact law the sampler
  /// assigns to l within its stratum.
  double conditional_probability(const Configuration& l) const {
    CountsVector m = counts_of(l, width());
    double p = 1.0;
    for (std::size_t i = nu(); i >= 1; --i) {
      const auto k = static_cast<std::size_t>(l[i - 1]);
      p *= backward_probability(i, k, m);
      if (p == 0.0) return 0.0;
      --m.counts[k];
    }
    return p;
  }

  std::map<CountsVector, double> final_weight_map() const {
    std::map<CountsVector, double> out;
    const auto& ks = keys();
    for (std::size_t s = 0; s < ks.size(); ++s) out.emplace(CountsVector{ks[s]}, final_weights_[s]);
    return out;
  }

  /// CSV rows "m_1,...,m_d,w_m" in lexicographic order.
  void write_csv(std::ostream& os) const {
    const auto& ks = keys();
    for (std::size_t k = 0; k < width(); ++k) os << "m_" << (k + 1) << ',';
    os << "w_m\n";
    char buf[40];
    for (std::size_t s = 0; s < ks.size(); ++s) {
      for (int c : ks[s]) os << c << ',';
      std::snprintf(buf, sizeof buf, "%.17g", final_weights_[s]);
      os << buf << '\n';
    }
  }

  nlohmann::json weights_json() const {
    nlohmann::json rows = nlohmann::json::array();
    const auto& ks = keys();
    for (std::size_t s = 0; s < ks.size(); ++s) {
      nlohmann::json row = ks[s];
      row.push_back(final_weights_[s]);
      rows.push_back(row);
    }
    return {{"nu", nu()}, {"d", width()}, {"weights", rows}};
  }

 private:
  ProductQpd qpd_;
  CompositionRanker ranker_;
  std::vector<std::vector<double>> layers_;
  std::vector<double> log_scale_;
  std::vector<double> final_weights_;
  mutable std::vector<StratumKey> keys_;
  bool renormalized_ = false;
};

inline StratumTable forward_dp(const ProductQpd& qpd, DpOptions options = {}) {
  return StratumTable::build(qpd, options);
}

inline Configuration conditional_sample(const StratumTable& table, const CountsVector& m,
                                        Stream& rng) {
  return table.conditional_sample(m, rng);
}

/// Sign-parity strata P = (P+, P-) via a Poisson-binomial DP.
class ParityTable {
 public:
  ParityTable() = default;

  static ParityTable build(const ProductQpd& qpd) {
    ParityTable t;
    t.qpd_ = qpd;
    const std::size_t nu = qpd.nu();
    t.positive_.resize(nu);
    for (std::size_t i = 0; i < nu; ++i) t.positive_[i] = qpd.local(i).positive_mass();
    t.layers_.resize(nu + 1);
    t.layers_[0] = {1.0};
    for (std::size_t i = 1; i <= nu; ++i) {
      const double pi = t.positive_[i - 1];
      const auto& below = t.layers_[i - 1];
      auto& layer = t.layers_[i];
      layer.assign(i + 1, 0.0);
      for (std::size_t r = 0; r <= i; ++r) {
        double acc = 0.0;
        if (r >= 1) acc += pi * below[r - 1];
        if (r < i) acc += (1.0 - pi) * below[r];
        layer[r] = acc;
      }
    }
    return t;
  }

  std::size_t nu() const noexcept { return qpd_.nu(); }
  const ProductQpd& qpd() const noexcept { return qpd_; }
  double positive_mass(std::size_t i) const { return positive_.at(i); }

  /// Strata ordered lexicographically by (P+, P-), so index s has P+ = s.
  std::size_t size() const noexcept { return nu() + 1; }
  double weight(std::size_t s) const { return layers_.back().at(s); }
  std::span<const double> weights() const noexcept { return layers_.back(); }
  StratumKey key(std::size_t s) const {
    return {static_cast<int>(s), static_cast<int>(nu() - s)};
  }
  const std::vector<StratumKey>& keys() const {
    if (keys_.empty()) {
      for (std::size_t s = 0; s < size(); ++s) keys_.push_back(key(s));
    }
    return keys_;
  }

  /// Resolves every sign backwards, then the label within the chosen sign class.
  Configuration sample(std::size_t s, Stream& rng) const {
    if (!(weight(s) > 0.0)) throw EmptyStratum("parity stratum has zero probability");
    std::size_t plus = s;
    Configuration l;
    l.indices.assign(nu(), 0);
    std::vector<double> restricted(qpd_.width());
    for (std::size_t i = nu(); i >= 1; --i) {
      const double pi = positive_[i - 1];
      const auto& below = layers_[i - 1];
      const double take_plus = plus >= 1 ? pi * below[plus - 1] : 0.0;
      const double take_minus = plus < i ? (1.0 - pi) * below[plus] : 0.0;
      const double both[2] = {take_plus, take_minus};
      const std::size_t branch = rng.categorical(both);
      if (branch > 1) throw InternalError("parity sampler reached an empty state");
      const bool positive = branch == 0;
      const auto& local = qpd_.local(i - 1);
      for (std::size_t k = 0; k < local.width(); ++k) {
        const double c = local.coefficient(k);
        restricted[k] = (positive ? c > 0.0 : c < 0.0) ? local.probability(k) : 0.0;
      }
      const std::size_t k = rng.categorical(restricted);
      if (k >= local.width()) throw InternalError("parity sampler found an empty sign class");
      l[i - 1] = static_cast<int>(k);
      if (positive) --plus;
    }
    return l;
  }

 private:
  ProductQpd qpd_;
  std::vector<double> positive_;
  std::vector<std::vector<double>> layers_;
  mutable std::vector<StratumKey> keys_;
};

inline ParityTable parity_dp(const ProductQpd& qpd) { return ParityTable::build(qpd); }

inline Configuration conditional_sample_parity(const ParityTable& table, int plus, int minus,
                                               Stream& rng) {
  if (plus < 0 || minus < 0 || static_cast<std::size_t>(plus + minus) != table.nu()) {
    throw InvalidArgument("parity stratum must satisfy P+ + P- = nu");
  }
  return table.sample(static_cast<std::size_t>(plus), rng);
}

/// Parity key of a configuration: (#positive coefficients, #negative coefficients).
inline StratumKey parity_of(const ProductQpd& qpd, const Configuration& l) {
  int plus = 0;
  int minus = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const int s = qpd.local(i).sign(static_cast<std::size_t>(l[i]));
    if (s > 0) ++plus;
    if (s < 0) ++minus;
  }
  return {plus, minus};
}

struct ConcentrationProfile {
  std::vector<std::size_t> order;  // stratum indices by decreasing mass
  std::vector<double> sorted_mass;
  std::vector<double> cumulative;
  std::size_t t_q = 0;  // 1-based count of strata needed to reach q
};

/// Sort strata by decreasing mass (ties: lexicographically smaller key first)
/// and report the smallest prefix whose mass reaches q.
inline ConcentrationProfile concentration_profile(std::span<const double> weights,
                                                  std::span<const StratumKey> keys, double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidArgument("threshold q must lie in (0, 1)");
  if (keys.size() != weights.size()) throw InvalidArgument("keys and weights differ in length");
  ConcentrationProfile prof;
  prof.order.resize(weights.size());
  for (std::size_t s = 0; s < weights.size(); ++s) prof.order[s] = s;
  std::stable_sort(prof.order.begin(), prof.order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return keys[a] < keys[b];
  });
  KahanSum cum;
  for (std::size_t s : prof.order) {
    cum.add(weights[s]);
    prof.sorted_mass.push_back(weights[s]);
    prof.cumulative.push_back(cum.value());
    // Relative slack keeps q = 1 - epsilon style thresholds reachable.
    if (prof.t_q == 0 && cum.value() >= q * (1.0 - 1e-12)) prof.t_q = prof.cumulative.size();
  }
  if (prof.t_q == 0) prof.t_q = prof.cumulative.size();
  return prof;
}

inline void write_profile_csv(std::ostream& os, const ConcentrationProfile& prof,
                              std::span<const StratumKey> keys) {
  os << "rank,stratum,mass,cumulative\n";
  char buf[64];
  for (std::size_t r = 0; r < prof.order.size(); ++r) {
    os << (r + 1) << ",\"";
    const auto& k = keys[prof.order[r]];
    for (std::size_t j = 0; j < k.size(); ++j) os << (j ? "," : "") << k[j];
    std::snprintf(buf, sizeof buf, "\",%.17g,", prof.sorted_mass[r]);
    os << buf;
    std::snprintf(buf, sizeof buf, "%.17g\n", prof.cumulative[r]);
    os << buf;
  }
}

}  // namespace qpdstrat
