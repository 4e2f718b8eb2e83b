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
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qpdstrat/allocation.hpp"
#include "qpdstrat/counts.hpp"
#include "qpdstrat/errors.hpp"
#include "qpdstrat/model.hpp"
#include "qpdstrat/numeric.hpp"
#include "qpdstrat/parallel.hpp"
#include "qpdstrat/qpd.hpp"

namespace qpdstrat {

inline constexpr std::uint64_t kEnumerationCap = std::uint64_t{1} << 24;

/// Every nonzero-coefficient configuration with its coefficient and exact mean.
struct EnumerationResult {
  struct Entry {
    std::uint64_t index;  // mixed-radix, position 0 most significant
    double g;
    double mu;
  };

  ProductQpd qpd;
  std::vector<Entry> entries;
  double mu = 0.0;
  bool pauli_valued = false;

  double g1() const noexcept { return qpd.one_norm(); }

  Configuration configuration(std::uint64_t index) const {
    Configuration l;
    l.indices.assign(qpd.nu(), 0);
    const std::uint64_t d = qpd.width();
    for (std::size_t i = qpd.nu(); i-- > 0;) {
      l.indices[i] = static_cast<int>(index % d);
      index /= d;
    }
    return l;
  }
};

/// Enumerates all d^nu configurations (skipping g(l) = 0) and accumulates
/// mu = sum g(l) mu_l. Means are evaluated over `workers` threads and reduced
/// in configuration order.
inline EnumerationResult enumerate_means(const ProductQpd& qpd,
                                         const std::function<double(const Configuration&)>& mean,
                                         bool pauli_valued = false, std::uint64_t cap = kEnumerationCap,
                                         std::size_t workers = 1) {
  const std::uint64_t d = qpd.width();
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < qpd.nu(); ++i) {
    if (total > cap / d) {
      throw ResourceLimit("enumeration of " + std::to_string(d) + "^" + std::to_string(qpd.nu()) +
                          " configurations exceeds the cap of " + std::to_string(cap));
    }
    total *= d;
  }
  EnumerationResult r;
  r.qpd = qpd;
  r.pauli_valued = pauli_valued;

  std::vector<int> l(qpd.nu(), 0);
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    double g = 1.0;
    for (std::size_t i = 0; i < l.size() && g != 0.0; ++i) {
      g *= qpd.local(i).coefficient(static_cast<std::size_t>(l[i]));
    }
    if (g != 0.0) r.entries.push_back({idx, g, 0.0});
    for (std::size_t i = l.size(); i-- > 0;) {
      if (++l[i] < static_cast<int>(d)) break;
      l[i] = 0;
    }
  }
  parallel_for(r.entries.size(), workers, [&](std::size_t e) {
    r.entries[e].mu = mean(r.configuration(r.entries[e].index));
  });
  KahanSum mu;
  for (const auto& e : r.entries) mu.add(e.g * e.mu);
  r.mu = mu.value();
  return r;
}

inline EnumerationResult enumerate_means(const ProductQpd& qpd, const OutcomeEvaluator& ev,
                                         std::uint64_t cap = kEnumerationCap, std::size_t workers = 1) {
  if (!ev.mean) throw InvalidArgument("evaluator does not expose exact configuration means");
  return enumerate_means(qpd, ev.mean, ev.pauli_valued, cap, workers);
}

namespace detail {

inline void require_shot_support(const EnumerationResult& r, const MeasurementModel& model) {
  if (!model.is_oracle() && !r.pauli_valued) {
    throw InvalidArgument("shot models need a Pauli-valued evaluator");
  }
}

}  // namespace detail

/// Exact variance of a single naive draw Y under the given model.
inline double exact_design_variance(const EnumerationResult& r, const MeasurementModel& model) {
  detail::require_shot_support(r, model);
  const double g1 = r.g1();
  KahanSum dev2;
  KahanSum shot;
  for (const auto& e : r.entries) {
    const double p = std::abs(e.g) / g1;
    const double dev = (e.g > 0.0 ? g1 : -g1) * e.mu - r.mu;
    dev2.add(p * dev * dev);
    shot.add(p * (1.0 - e.mu * e.mu));
  }
  double v = dev2.value();
  if (!model.is_oracle()) v += g1 * g1 * shot.value() / static_cast<double>(model.shots);
  return v;
}

/// ||g||_1^2 - mu^2, valid for single shots of a +-1 observable.
inline double single_shot_closed_form(const EnumerationResult& r) {
  if (!r.pauli_valued) throw InvalidArgument("closed form needs a Pauli-valued evaluator");
  return r.g1() * r.g1() - r.mu * r.mu;
}

using Statistic = std::function<StratumKey(const Configuration&)>;

inline Statistic counts_statistic(std::size_t d) {
  return [d](const Configuration& l) { return counts_of(l, d).counts; };
}

inline Statistic parity_statistic(const ProductQpd& qpd) {
  return [qpd](const Configuration& l) { return parity_of(qpd, l); };
}

inline Statistic full_statistic() {
  return [](const Configuration& l) { return l.indices; };
}

/// Exact per-stratum weights, means and variances for one statistic and
/// measurement model, with strata in lexicographic key order.
struct StratumMoments {
  std::vector<StratumKey> keys;
  std::vector<double> w;
  std::vector<double> mu;
  std::vector<double> sigma2;
  double mu_total = 0.0;
  double proportional_variance = 0.0;  // sum w_s sigma_s^2
  double between = 0.0;                // sum w_s (mu_s - mu)^2

  std::size_t size() const noexcept { return keys.size(); }

  std::ptrdiff_t find(const StratumKey& k) const {
    auto it = std::lower_bound(keys.begin(), keys.end(), k);
    if (it == keys.end() || *it != k) return -1;
    return it - keys.begin();
  }

  void write_csv(std::ostream& os) const {
    os << "stratum,w,mu,sigma2\n";
    char buf[128];
    for (std::size_t s = 0; s < keys.size(); ++s) {
      os << '"';
      for (std::size_t j = 0; j < keys[s].size(); ++j) os << (j ? "," : "") << keys[s][j];
      std::snprintf(buf, sizeof buf, "\",%.17g,%.17g,%.17g\n", w[s], mu[s], sigma2[s]);
      os << buf;
    }
  }
};

inline StratumMoments exact_stratum_moments(const EnumerationResult& r, const Statistic& statistic,
                                            const MeasurementModel& model = MeasurementModel::oracle()) {
  detail::require_shot_support(r, model);
  struct Acc {
    KahanSum w, gmu, dev2, shot;
    double mu = 0.0;
  };
  std::map<StratumKey, Acc> acc;
  std::vector<Acc*> slot(r.entries.size());
  const double g1 = r.g1();
  for (std::size_t e = 0; e < r.entries.size(); ++e) {
    const auto& en = r.entries[e];
    auto& a = acc[statistic(r.configuration(en.index))];
    slot[e] = &a;
    const double p = std::abs(en.g) / g1;
    a.w.add(p);
    a.gmu.add(en.g * en.mu);
    a.shot.add(p * (1.0 - en.mu * en.mu));
  }
  for (auto& [key, a] : acc) a.mu = a.gmu.value() / a.w.value();
  for (std::size_t e = 0; e < r.entries.size(); ++e) {
    const auto& en = r.entries[e];
    const double y = (en.g > 0.0 ? g1 : -g1) * en.mu;
    const double dev = y - slot[e]->mu;
    slot[e]->dev2.add(std::abs(en.g) / g1 * dev * dev);
  }
  StratumMoments m;
  m.mu_total = r.mu;
  KahanSum prop;
  KahanSum between;
  for (auto& [key, a] : acc) {
    const double w = a.w.value();
    double s2 = a.dev2.value() / w;
    if (!model.is_oracle()) s2 += g1 * g1 * (a.shot.value() / w) / static_cast<double>(model.shots);
    m.keys.push_back(key);
    m.w.push_back(w);
    m.mu.push_back(a.mu);
    m.sigma2.push_back(s2);
    prop.add(w * s2);
    between.add(w * (a.mu - r.mu) * (a.mu - r.mu));
  }
  m.proportional_variance = prop.value();
  m.between = between.value();
  return m;
}

struct ExplainedVariance {
  double r2 = 0.0;
  double rho = 0.0;
};

/// R^2_eff = Var(E[Y|S]) / Var(Y) and the ideal ratio rho = Var_prop / Var(Y).
inline ExplainedVariance explained_variance(const EnumerationResult& r, const Statistic& statistic,
                                            const MeasurementModel& model = MeasurementModel::oracle()) {
  const double total = exact_design_variance(r, model);
  if (!(total > 0.0)) throw InvalidArgument("total variance is zero");
  const auto m = exact_stratum_moments(r, statistic, model);
  return {m.between / total, m.proportional_variance / total};
}

struct Hierarchy {
  double full = 0.0;
  double counts = 0.0;
  double parity = 0.0;
  double naive = 0.0;

  bool ordered(double slack = 1e-12) const noexcept {
    return full <= counts + slack && counts <= parity + slack && parity <= naive + slack;
  }
};

inline Hierarchy hierarchy_check(const EnumerationResult& r,
                                 const MeasurementModel& model = MeasurementModel::oracle()) {
  Hierarchy h;
  h.full = exact_stratum_moments(r, full_statistic(), model).proportional_variance;
  h.counts = exact_stratum_moments(r, counts_statistic(r.qpd.width()), model).proportional_variance;
  h.parity = exact_stratum_moments(r, parity_statistic(r.qpd), model).proportional_variance;
  h.naive = exact_design_variance(r, model);
  return h;
}

/// Exact variances of the implemented estimator for a plan. Plan strata are
/// matched to moments by key.
struct AllocationVariance {
  double implemented = 0.0;
  double proportional = 0.0;  // (1/K) sum w_s sigma_s^2
  double residual_sigma2 = 0.0;
  double structural_mean = 0.0;  // sum_A w_s mu_s + w_* sum_D q mu_s
};

inline AllocationVariance exact_allocation_variance(const StratumMoments& m, const AllocationPlan& plan,
                                                    std::span<const StratumKey> plan_keys) {
  if (plan_keys.size() != plan.size()) throw InvalidArgument("plan and keys differ in length");
  auto lookup = [&](std::size_t s) -> std::ptrdiff_t {
    return plan.weights[s] > 0.0 ? m.find(plan_keys[s]) : -1;
  };
  AllocationVariance out;
  KahanSum impl;
  KahanSum mean;
  for (std::size_t s = 0; s < plan.size(); ++s) {
    if (plan.per_stratum[s] == 0) continue;
    const auto j = lookup(s);
    if (j < 0) continue;
    const double w = m.w[static_cast<std::size_t>(j)];
    impl.add(w * w * m.sigma2[static_cast<std::size_t>(j)] / static_cast<double>(plan.per_stratum[s]));
    mean.add(w * m.mu[static_cast<std::size_t>(j)]);
  }
  if (plan.residual_count > 0) {
    KahanSum within;
    KahanSum qmu;
    KahanSum qmu2;
    for (std::size_t r = 0; r < plan.dropped.size(); ++r) {
      const auto j = lookup(plan.dropped[r]);
      if (j < 0) continue;
      const double q = plan.residual_mixture[r];
      const auto ju = static_cast<std::size_t>(j);
      within.add(q * m.sigma2[ju]);
      qmu.add(q * m.mu[ju]);
      qmu2.add(q * m.mu[ju] * m.mu[ju]);
    }
    out.residual_sigma2 = within.value() + (qmu2.value() - qmu.value() * qmu.value());
    const double ws = plan.dropped_mass;
    impl.add(ws * ws * out.residual_sigma2 / static_cast<double>(plan.residual_count));
    mean.add(ws * qmu.value());
  }
  out.implemented = impl.value();
  out.proportional = m.proportional_variance / static_cast<double>(plan.K);
  out.structural_mean = mean.value();
  return out;
}

}  // namespace qpdstrat
