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
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/errors.hpp"
#include "qpdstrat/numeric.hpp"

namespace qpdstrat {

inline constexpr double kNormalisationTolerance = 1e-12;

namespace detail {

inline void check_probability_vector(std::span<const double> w) {
  if (w.empty()) throw InvalidArgument("weight vector is empty");
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("weights must be finite and non-negative");
  }
  const double total = compensated_sum(w);
  if (std::abs(total - 1.0) > kNormalisationTolerance) {
    throw InvalidArgument("weights must sum to 1 (got " + std::to_string(total) + ")");
  }
}

inline void check_budget(std::int64_t K) {
  if (K < 1) throw InvalidArgument("budget K must be at least 1");
}

}  // namespace detail

/// Largest-remainder apportionment of K units to quotas K*w_s.
/// Remainder ties go to the smaller stratum index.
inline std::vector<std::int64_t> hamilton_apportion(std::span<const double> w, std::int64_t K) {
  detail::check_probability_vector(w);
  detail::check_budget(K);
  const std::size_t n = w.size();
  std::vector<std::int64_t> alloc(n);
  std::vector<double> remainder(n);
  std::int64_t assigned = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double quota = static_cast<double>(K) * w[s];
    const double fl = std::floor(quota);
    alloc[s] = static_cast<std::int64_t>(fl);
    remainder[s] = quota - fl;
    assigned += alloc[s];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  // Rounding in K*w_s can leave the floor sum one unit off in either
  // direction; the loops below keep the budget exact regardless.
  std::int64_t left = K - assigned;
  for (std::size_t r = 0; left > 0; r = (r + 1) % n) {
    ++alloc[order[r]];
    --left;
  }
  for (std::size_t r = n; left < 0;) {
    r = (r == 0 ? n : r) - 1;
    if (alloc[order[r]] > 0) {
      --alloc[order[r]];
      ++left;
    }
  }
  return alloc;
}

/// Integer allocation with an explicit residual stratum.
///
/// Strata are identified by index into the weight vector; indices follow the
/// lexicographic stratum-key order of the table the weights came from.
struct AllocationPlan {
  std::int64_t K = 0;
  std::vector<std::int64_t> per_stratum;
  std::int64_t residual_count = 0;
  std::vector<std::size_t> dropped;  // ascending
  double dropped_mass = 0.0;
  std::vector<double> residual_mixture;  // aligned with dropped
  std::vector<double> weights;           // population weights the plan was built for
  double initial_dropped_mass = 0.0;     // w_drop before borrowing

  std::size_t size() const noexcept { return per_stratum.size(); }
  bool has_residual() const noexcept { return residual_count > 0; }

  std::int64_t total() const noexcept {
    return std::accumulate(per_stratum.begin(), per_stratum.end(), std::int64_t{0}) +
           residual_count;
  }

  /// Throws InternalError if any structural invariant is broken.
  void validate() const {
    if (total() != K) throw InternalError("allocation does not spend the budget exactly");
    if (dropped_mass > 0.0 && residual_count < 1) {
      throw InternalError("positive dropped mass without residual draws");
    }
    if (dropped_mass == 0.0 && (residual_count != 0 || !dropped.empty())) {
      throw InternalError("residual draws without dropped mass");
    }
    if (!dropped.empty()) {
      const double q = compensated_sum(residual_mixture);
      if (std::abs(q - 1.0) > kNormalisationTolerance) {
        throw InternalError("residual mixture is not normalised");
      }
    }
  }

  nlohmann::json to_json(const std::vector<std::vector<int>>& keys) const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t s = 0; s < per_stratum.size(); ++s) {
      nlohmann::json row = keys.at(s);
      row.push_back(per_stratum[s]);
      rows.push_back(row);
    }
    nlohmann::json dropped_keys = nlohmann::json::array();
    for (std::size_t s : dropped) dropped_keys.push_back(keys.at(s));
    return {{"K", K}, {"per_stratum", rows}, {"K_star", residual_count}, {"dropped", dropped_keys}};
  }
};

namespace detail {

inline void borrow(std::vector<std::int64_t>& alloc, std::int64_t& deficit, std::int64_t floor) {
  std::vector<std::size_t> donors(alloc.size());
  std::iota(donors.begin(), donors.end(), std::size_t{0});
  std::stable_sort(donors.begin(), donors.end(),
                   [&](std::size_t a, std::size_t b) { return alloc[a] > alloc[b]; });
  for (std::size_t s : donors) {
    if (deficit == 0) break;
    while (deficit > 0 && alloc[s] > floor) {
      --alloc[s];
      --deficit;
    }
  }
}

}  // namespace detail

/// Hamilton apportionment on quota weights, then borrowing for a residual
/// pool covering every stratum left at zero. Dropped strata and the residual
/// mixture are defined by the population weights.
inline AllocationPlan residual_hamilton_allocate(std::span<const double> quota_weights,
                                                 std::span<const double> population_weights,
                                                 std::int64_t K) {
  if (quota_weights.size() != population_weights.size()) {
    throw InvalidArgument("quota and population weights differ in length");
  }
  detail::check_probability_vector(population_weights);
  AllocationPlan plan;
  plan.K = K;
  plan.weights.assign(population_weights.begin(), population_weights.end());
  plan.per_stratum = hamilton_apportion(quota_weights, K);
  auto& alloc = plan.per_stratum;
  const std::size_t n = alloc.size();

  KahanSum drop;
  for (std::size_t s = 0; s < n; ++s) {
    if (alloc[s] == 0 && population_weights[s] > 0.0) drop.add(population_weights[s]);
  }
  plan.initial_dropped_mass = drop.value();

  std::int64_t k_star = 0;
  if (plan.initial_dropped_mass > 0.0) {
    k_star = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::round(static_cast<double>(K) * plan.initial_dropped_mass)));
    k_star = std::min(k_star, K);
    std::int64_t deficit = k_star;
    detail::borrow(alloc, deficit, 1);
    detail::borrow(alloc, deficit, 0);
    if (deficit != 0) throw InternalError("residual borrowing exhausted all donors");
  }

  KahanSum mass;
  for (std::size_t s = 0; s < n; ++s) {
    if (alloc[s] == 0 && population_weights[s] > 0.0) {
      plan.dropped.push_back(s);
      mass.add(population_weights[s]);
    }
  }
  plan.dropped_mass = mass.value();
  if (k_star > 0 && plan.dropped_mass > 0.0) {
    plan.residual_count = k_star;
    for (std::size_t s : plan.dropped) {
      plan.residual_mixture.push_back(population_weights[s] / plan.dropped_mass);
    }
  } else {
    plan.residual_count = 0;
    plan.dropped.clear();
    plan.dropped_mass = 0.0;
  }
  // Units borrowed for a residual pool that turned out empty go back to
  // the largest stratum so the budget stays exact.
  if (k_star > 0 && plan.residual_count == 0) {
    const auto it = std::max_element(alloc.begin(), alloc.end());
    *it += k_star;
  }
  plan.validate();
  return plan;
}

inline AllocationPlan residual_hamilton_allocate(std::span<const double> w, std::int64_t K) {
  return residual_hamilton_allocate(w, w, K);
}

/// Real-valued Neyman quotas K*w_s*sigma_s / sum_t w_t*sigma_t.
inline std::vector<double> neyman_quotas(std::span<const double> w, std::span<const double> sigma,
                                         std::int64_t K) {
  if (w.size() != sigma.size()) throw InvalidArgument("weights and sigmas differ in length");
  detail::check_budget(K);
  KahanSum total;
  for (std::size_t s = 0; s < w.size(); ++s) {
    if (!(sigma[s] >= 0.0)) throw InvalidArgument("standard deviations must be non-negative");
    total.add(w[s] * sigma[s]);
  }
  if (!(total.value() > 0.0)) throw InvalidArgument("all weighted standard deviations are zero");
  std::vector<double> q(w.size());
  for (std::size_t s = 0; s < w.size(); ++s) {
    q[s] = static_cast<double>(K) * w[s] * sigma[s] / total.value();
  }
  return q;
}

/// Neyman allocation integerised through the residual machinery.
inline AllocationPlan neyman_allocate(std::span<const double> w, std::span<const double> sigma,
                                      std::int64_t K) {
  auto quotas = neyman_quotas(w, sigma, K);
  for (double& q : quotas) q /= static_cast<double>(K);
  // Renormalise away the last-bit drift so the quota vector passes validation.
  const double total = compensated_sum(quotas);
  for (double& q : quotas) q /= total;
  return residual_hamilton_allocate(quotas, w, K);
}

inline double truncation_bias_bound(double dropped_mass, double B) {
  if (!(dropped_mass >= 0.0 && dropped_mass <= 1.0 + kNormalisationTolerance)) {
    throw InvalidArgument("dropped mass must lie in [0, 1]");
  }
  if (!(B >= 0.0)) throw InvalidArgument("bound B must be non-negative");
  return B * dropped_mass;
}

/// Worst-case perturbation of the implemented variance relative to ideal
/// proportional allocation, for outcomes bounded by B.
inline double variance_certificate(const AllocationPlan& plan, std::span<const double> w,
                                   std::int64_t K, double B) {
  if (w.size() != plan.size()) throw InvalidArgument("plan and weights differ in length");
  const double k = static_cast<double>(K);
  KahanSum t;
  for (std::size_t s = 0; s < w.size(); ++s) {
    if (plan.per_stratum[s] == 0 || !(w[s] > 0.0)) continue;
    const double ks = static_cast<double>(plan.per_stratum[s]);
    t.add(w[s] * w[s] * std::abs(1.0 / ks - 1.0 / (k * w[s])));
  }
  if (plan.residual_count > 0) {
    const double ws = plan.dropped_mass;
    const double kr = static_cast<double>(plan.residual_count);
    t.add(ws * std::abs(ws / kr - 1.0 / k));
    t.add(ws * ws / kr);
  }
  return B * B * t.value();
}

}  // namespace qpdstrat
