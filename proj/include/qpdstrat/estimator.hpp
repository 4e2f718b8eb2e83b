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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/allocation.hpp"
#include "qpdstrat/counts.hpp"
#include "qpdstrat/errors.hpp"
#include "qpdstrat/model.hpp"
#include "qpdstrat/numeric.hpp"
#include "qpdstrat/parallel.hpp"
#include "qpdstrat/qpd.hpp"
#include "qpdstrat/random.hpp"

namespace qpdstrat {

inline constexpr std::size_t kDefaultBootstrap = 1024;

struct RunOptions {
  std::size_t workers = 1;
  std::size_t bootstrap = kDefaultBootstrap;  // 0 disables the bootstrap
  double level = 0.95;
  std::string design = "naive";
  std::string instance;
};

/// Values drawn in one group. Its plug-in contribution is
/// coefficient * s^2 / n, with s^2 = 0 when n < 2.
struct SampleGroup {
  StratumKey key;
  double weight = 1.0;
  double coefficient = 1.0;
  bool residual = false;
  std::vector<double> values;
};

struct StratumDiagnostics {
  StratumKey key;
  double weight = 0.0;
  std::int64_t draws = 0;
  double mean = 0.0;
  double sample_variance = 0.0;
  bool residual = false;
  bool flagged = false;  // fewer than 2 draws, variance term taken as 0
};

struct EstimateReport {
  std::string instance;
  std::string design;
  std::string statistic = "none";
  MeasurementModel model;
  std::int64_t K = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;
  double var_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double level = 0.95;
  double g1norm = 0.0;
  std::size_t L = 0;
  std::size_t nu = 0;
  std::size_t d = 0;
  std::size_t flagged = 0;
  std::vector<StratumDiagnostics> strata;
  std::vector<double> bootstrap;  // resampled var_hat statistics, unsorted

  static std::string csv_header() {
    return "instance,design,model,K,R,seed,mean,var_hat,ci_lo,ci_hi,g1norm,L,nu,d,statistic";
  }

  std::string csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g", mean, var_hat, ci_lo, ci_hi, g1norm);
    return instance + "," + design + "," + (model.is_oracle() ? "oracle" : "shots") + "," +
           std::to_string(K) + "," + model.r_column() + "," + std::to_string(seed) + "," + buf + "," +
           std::to_string(L) + "," + std::to_string(nu) + "," + std::to_string(d) + "," + statistic;
  }

  nlohmann::json to_json() const {
    nlohmann::json strata_json = nlohmann::json::array();
    for (const auto& s : strata) {
      strata_json.push_back({{"key", s.key},
                             {"weight", s.weight},
                             {"draws", s.draws},
                             {"mean", s.mean},
                             {"sample_variance", s.sample_variance},
                             {"residual", s.residual},
                             {"flagged", s.flagged}});
    }
    return {{"instance", instance}, {"design", design},   {"statistic", statistic},
            {"model", model.name()}, {"K", K},            {"R", model.r_column()},
            {"seed", seed},          {"mean", mean},      {"var_hat", var_hat},
            {"ci", {ci_lo, ci_hi}},  {"level", level},    {"g1norm", g1norm},
            {"L", L},                {"nu", nu},          {"d", d},
            {"flagged", flagged},    {"strata", strata_json}};
  }
};

inline std::uint64_t key_hash(const StratumKey& key) noexcept {
  std::uint64_t h = mix64(key.size());
  for (int v : key) h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(v)));
  return h;
}

/// Plug-in variance of a grouped design: sum coefficient * s^2 / n.
inline double grouped_plugin_variance(std::span<const SampleGroup> groups) {
  KahanSum v;
  for (const auto& g : groups) {
    if (g.values.size() < 2) continue;
    v.add(g.coefficient * sample_variance(g.values) / static_cast<double>(g.values.size()));
  }
  return v.value();
}

namespace detail {

inline std::pair<std::size_t, std::size_t> percentile_indices(std::size_t B, double level) {
  const double alpha = (1.0 - level) / 2.0;
  auto lo = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(B)));
  auto hi_raw = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(B)));
  std::size_t hi = hi_raw == 0 ? 0 : hi_raw - 1;
  lo = std::min(lo, B - 1);
  hi = std::min(hi, B - 1);
  return {lo, hi};
}

}  // namespace detail

struct PercentileInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile interval of a list of resampled statistics.
inline PercentileInterval percentile_interval(std::vector<double> stats, double level) {
  if (stats.empty()) throw InvalidArgument("no bootstrap statistics");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("confidence level must lie in (0, 1)");
  std::sort(stats.begin(), stats.end());
  const auto [lo, hi] = detail::percentile_indices(stats.size(), level);
  return {stats[lo], stats[hi]};
}

/// B resamples of the grouped plug-in variance, each group resampled with
/// replacement at its own size. Groups with fewer than 2 entries stay at 0.
inline std::vector<double> bootstrap_variance_statistics(std::span<const SampleGroup> groups, std::size_t B,
                                                         Stream& rng) {
  std::vector<double> stats(B);
  std::vector<double> buf;
  for (std::size_t b = 0; b < B; ++b) {
    KahanSum v;
    for (const auto& g : groups) {
      const std::size_t n = g.values.size();
      if (n < 2) continue;
      buf.resize(n);
      for (std::size_t k = 0; k < n; ++k) buf[k] = g.values[rng.below(n)];
      v.add(g.coefficient * sample_variance(buf) / static_cast<double>(n));
    }
    stats[b] = v.value();
  }
  return stats;
}

inline PercentileInterval bootstrap_variance_ci(std::span<const SampleGroup> groups, std::size_t B,
                                                double level, Stream& rng) {
  if (B == 0) throw InvalidArgument("bootstrap needs at least one resample");
  return percentile_interval(bootstrap_variance_statistics(groups, B, rng), level);
}

/// Samples together with the report they produced.
struct DesignRun {
  EstimateReport report;
  std::vector<SampleGroup> groups;
};

namespace detail {

inline void check_bound(double y, const OutcomeEvaluator& ev) {
  if (!(std::abs(y) <= ev.bound)) {
    throw InternalError("outcome " + std::to_string(y) + " exceeds the evaluator bound " +
                        std::to_string(ev.bound));
  }
}

inline void finish_report(DesignRun& run, std::uint64_t seed, const RunOptions& opts) {
  auto& rep = run.report;
  rep.var_hat = grouped_plugin_variance(run.groups);
  rep.level = opts.level;
  for (const auto& g : run.groups) {
    StratumDiagnostics diag;
    diag.key = g.key;
    diag.weight = g.weight;
    diag.draws = static_cast<std::int64_t>(g.values.size());
    diag.mean = sample_mean(g.values);
    diag.sample_variance = sample_variance(g.values);
    diag.residual = g.residual;
    diag.flagged = g.values.size() < 2;
    if (diag.flagged) ++rep.flagged;
    rep.strata.push_back(std::move(diag));
  }
  if (opts.bootstrap > 0) {
    Stream rng = substream(seed, {tag(opts.design), tag("bootstrap"), tag(rep.model.name())});
    rep.bootstrap = bootstrap_variance_statistics(run.groups, opts.bootstrap, rng);
    const auto ci = percentile_interval(rep.bootstrap, opts.level);
    rep.ci_lo = ci.lo;
    rep.ci_hi = ci.hi;
  } else {
    rep.ci_lo = rep.ci_hi = rep.var_hat;
  }
}

}  // namespace detail

/// K i.i.d. draws from p(l); mean of Y and s^2/K.
///
/// Configuration draw k comes from substream (seed, design, 0, k) and its
/// shots from a further substream keyed by the model, so every model sees
/// the same configurations and results do not depend on the worker count.
inline DesignRun run_naive(const ProductQpd& qpd, const OutcomeEvaluator& ev, std::int64_t K,
                           const MeasurementModel& model, std::uint64_t seed, const RunOptions& opts = {}) {
  if (K < 2) throw InvalidArgument("naive design needs K >= 2");
  const std::uint64_t design = tag(opts.design);
  const std::uint64_t model_tag = tag(model.name());
  std::vector<double> ys(static_cast<std::size_t>(K));
  parallel_for(ys.size(), opts.workers, [&](std::size_t k) {
    Stream draw = substream(seed, {design, 0, k});
    const Configuration l = qpd.sample(draw);
    Stream shots = substream(seed, {design, 0, k, model_tag});
    ys[k] = ev(l, model, shots);
    detail::check_bound(ys[k], ev);
  });
  DesignRun run;
  run.report.instance = opts.instance;
  run.report.design = opts.design;
  run.report.model = model;
  run.report.K = K;
  run.report.seed = seed;
  run.report.g1norm = qpd.one_norm();
  run.report.nu = qpd.nu();
  run.report.d = qpd.width();
  run.report.mean = sample_mean(ys);
  run.groups.push_back({{}, 1.0, 1.0, false, std::move(ys)});
  detail::finish_report(run, seed, opts);
  return run;
}

/// Stratified estimator sum_A w_s mean_s + w_* mean_* for a plan over
/// `strata` (a StratumTable or ParityTable). Residual draws first pick a
/// dropped stratum from q, then sample within it.
template <class Strata>
DesignRun run_stratified(const Strata& strata, const AllocationPlan& plan, const OutcomeEvaluator& ev,
                         const MeasurementModel& model, std::uint64_t seed, const RunOptions& opts = {}) {
  if (plan.size() != strata.size()) throw InvalidArgument("allocation plan does not match the stratum table");
  if (plan.K < 1) throw InvalidArgument("stratified design needs K >= 1");
  plan.validate();
  const auto& keys = strata.keys();
  struct Task {
    std::size_t group;
    std::size_t stratum;
    std::uint64_t draw;
  };
  std::vector<SampleGroup> groups;
  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(plan.K));
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const auto ks = plan.per_stratum[s];
    if (ks == 0) continue;
    const double w = strata.weight(s);
    if (!(w > 0.0)) throw InvalidArgument("plan allocates draws to a zero-weight stratum");
    for (std::int64_t j = 0; j < ks; ++j) tasks.push_back({groups.size(), s, static_cast<std::uint64_t>(j)});
    groups.push_back({keys[s], w, w * w, false, std::vector<double>(static_cast<std::size_t>(ks))});
  }
  if (plan.residual_count > 0) {
    for (std::int64_t j = 0; j < plan.residual_count; ++j) {
      tasks.push_back({groups.size(), kNone, static_cast<std::uint64_t>(j)});
    }
    groups.push_back({{}, plan.dropped_mass, plan.dropped_mass * plan.dropped_mass, true,
                      std::vector<double>(static_cast<std::size_t>(plan.residual_count))});
  }

  const std::uint64_t design = tag(opts.design);
  const std::uint64_t model_tag = tag(model.name());
  const std::uint64_t residual_tag = tag("residual");
  parallel_for(tasks.size(), opts.workers, [&](std::size_t t) {
    const Task& task = tasks[t];
    std::size_t s = task.stratum;
    const std::uint64_t family = s == kNone ? residual_tag : key_hash(keys[s]);
    Stream draw = substream(seed, {design, family, task.draw});
    if (s == kNone) {
      const std::size_t r = draw.categorical(plan.residual_mixture);
      if (r >= plan.dropped.size()) throw InternalError("residual mixture is empty");
      s = plan.dropped[r];
    }
    const Configuration l = strata.sample(s, draw);
    Stream shots = substream(seed, {design, family, task.draw, model_tag});
    const double y = ev(l, model, shots);
    detail::check_bound(y, ev);
    const std::size_t offset = static_cast<std::size_t>(task.draw);
    groups[task.group].values[offset] = y;
  });

  DesignRun run;
  run.report.instance = opts.instance;
  run.report.design = opts.design;
  run.report.model = model;
  run.report.K = plan.K;
  run.report.seed = seed;
  run.report.g1norm = strata.qpd().one_norm();
  run.report.nu = strata.qpd().nu();
  run.report.d = strata.qpd().width();
  KahanSum mean;
  for (const auto& g : groups) mean.add(g.weight * sample_mean(g.values));
  run.report.mean = mean.value();
  run.groups = std::move(groups);
  detail::finish_report(run, seed, opts);
  return run;
}

struct RatioEstimate {
  double rho = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// rho = var_hat(strat) / var_hat(naive), with a percentile interval over the
/// paired ratios of the two runs' bootstrap statistics.
inline RatioEstimate variance_ratio(const EstimateReport& strat, const EstimateReport& naive, double level = 0.95) {
  if (!(naive.var_hat > 0.0)) throw InvalidArgument("naive variance estimate is zero");
  RatioEstimate r;
  r.rho = strat.var_hat / naive.var_hat;
  const std::size_t B = std::min(strat.bootstrap.size(), naive.bootstrap.size());
  if (B == 0) {
    r.ci_lo = r.ci_hi = r.rho;
    return r;
  }
  std::vector<double> ratios(B);
  for (std::size_t b = 0; b < B; ++b) {
    ratios[b] = naive.bootstrap[b] > 0.0 ? strat.bootstrap[b] / naive.bootstrap[b]
                                         : std::numeric_limits<double>::infinity();
  }
  const auto ci = percentile_interval(std::move(ratios), level);
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  return r;
}

/// var_hat / ||g||_1^2.
inline double normalized_absolute_variance(const EstimateReport& report, double g1norm) {
  if (!(g1norm > 0.0)) throw InvalidArgument("1-norm must be positive");
  return report.var_hat / (g1norm * g1norm);
}

}  // namespace qpdstrat
