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

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/allocation.hpp"
#include "qpdstrat/circuits.hpp"
#include "qpdstrat/counts.hpp"
#include "qpdstrat/estimator.hpp"
#include "qpdstrat/oracle.hpp"

namespace qpdstrat {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Built circuit plus its evaluator; the evaluator's mean cache is shared by
/// every design and model run against the instance.
struct PreparedInstance {
  InstanceSpec spec;
  std::shared_ptr<const QpdCircuit> circuit;
  OutcomeEvaluator evaluator;

  static PreparedInstance make(const InstanceSpec& spec) {
    PreparedInstance p;
    p.spec = spec;
    p.circuit = std::make_shared<const QpdCircuit>(build_instance(spec));
    p.evaluator = make_outcome_evaluator(p.circuit);
    return p;
  }

  const ProductQpd& qpd() const { return circuit->qpd; }
};

// ---------------------------------------------------------------- dp-weights

struct DpWeightsResult {
  std::uint64_t stratum_count = 0;
  std::uint64_t cached_states = 0;
  StratumTable table;
  ConcentrationProfile profile;
  double weight_sum = 0.0;
  double q = 0.99;

  nlohmann::json summary() const {
    return {{"nu", table.nu()},
            {"d", table.width()},
            {"strata", stratum_count},
            {"cached_states", cached_states},
            {"weight_sum", weight_sum},
            {"q", q},
            {"t_q", profile.t_q},
            {"renormalized", table.renormalized()}};
  }
};

/// Preflight stratum count (written to `log`), forward DP and concentration profile.
inline DpWeightsResult cmd_dp_weights(const ProductQpd& qpd, double q, std::ostream* log = nullptr,
                                      DpOptions options = {}) {
  DpWeightsResult r;
  r.q = q;
  r.stratum_count = stratum_count(qpd.nu(), qpd.width());
  r.cached_states = cumulative_state_count(qpd.nu(), qpd.width());
  if (log) {
    *log << "nu=" << qpd.nu() << " d=" << qpd.width() << " strata=" << r.stratum_count
         << " cached_states=" << r.cached_states << '\n';
  }
  r.table = StratumTable::build(qpd, options);
  r.weight_sum = compensated_sum(r.table.weights());
  const auto& keys = r.table.keys();
  r.profile = concentration_profile(r.table.weights(), keys, q);
  return r;
}

inline DpWeightsResult cmd_dp_weights(const InstanceSpec& spec, double q, std::ostream* log = nullptr) {
  const auto circuit = build_instance(spec);
  return cmd_dp_weights(circuit.qpd, q, log);
}

// ----------------------------------------------------------------- enumerate

struct EnumerateReport {
  std::size_t nu = 0;
  std::size_t d = 0;
  std::size_t configurations = 0;
  double mu = 0.0;
  double g1 = 0.0;
  double single_shot_closed_form = 0.0;
  struct PerModel {
    MeasurementModel model;
    Hierarchy variances;
    double rho_counts = 0.0;
    double rho_parity = 0.0;
    double r2_counts = 0.0;
    double r2_parity = 0.0;
    std::size_t counts_strata = 0;
    std::size_t parity_strata = 0;
  };
  std::vector<PerModel> models;

  const PerModel& oracle() const {
    for (const auto& m : models) {
      if (m.model.is_oracle()) return m;
    }
    throw InvalidArgument("report has no oracle entry");
  }

  nlohmann::json to_json() const {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& m : models) {
      per.push_back({{"model", m.model.name()},
                     {"var_naive", m.variances.naive},
                     {"var_prop_counts", m.variances.counts},
                     {"var_prop_parity", m.variances.parity},
                     {"var_prop_full", m.variances.full},
                     {"hierarchy_ok", m.variances.ordered()},
                     {"rho_counts", m.rho_counts},
                     {"rho_parity", m.rho_parity},
                     {"r2_counts", m.r2_counts},
                     {"r2_parity", m.r2_parity},
                     {"counts_strata", m.counts_strata},
                     {"parity_strata", m.parity_strata}});
    }
    return {{"nu", nu},
            {"d", d},
            {"configurations", configurations},
            {"mu", mu},
            {"g1norm", g1},
            {"single_shot_closed_form", single_shot_closed_form},
            {"models", per}};
  }
};

inline EnumerateReport cmd_enumerate(const ProductQpd& qpd, const OutcomeEvaluator& ev,
                                     const std::vector<MeasurementModel>& models, std::size_t workers = 1) {
  const auto r = enumerate_means(qpd, ev, kEnumerationCap, workers);
  EnumerateReport rep;
  rep.nu = qpd.nu();
  rep.d = qpd.width();
  rep.configurations = r.entries.size();
  rep.mu = r.mu;
  rep.g1 = r.g1();
  if (r.pauli_valued) rep.single_shot_closed_form = single_shot_closed_form(r);
  for (const auto& model : models) {
    EnumerateReport::PerModel pm;
    pm.model = model;
    pm.variances = hierarchy_check(r, model);
    const auto counts = exact_stratum_moments(r, counts_statistic(qpd.width()), model);
    const auto parity = exact_stratum_moments(r, parity_statistic(qpd), model);
    pm.counts_strata = counts.size();
    pm.parity_strata = parity.size();
    if (pm.variances.naive > 0.0) {
      pm.rho_counts = counts.proportional_variance / pm.variances.naive;
      pm.rho_parity = parity.proportional_variance / pm.variances.naive;
      pm.r2_counts = counts.between / pm.variances.naive;
      pm.r2_parity = parity.between / pm.variances.naive;
    }
    rep.models.push_back(pm);
  }
  return rep;
}

inline EnumerateReport cmd_enumerate(const InstanceSpec& spec, const std::vector<MeasurementModel>& models,
                                     std::size_t workers = 1) {
  const auto p = PreparedInstance::make(spec);
  return cmd_enumerate(p.qpd(), p.evaluator, models, workers);
}

// ------------------------------------------------------------------- certify

struct CertifyResult {
  AllocationPlan plan;
  std::vector<StratumKey> keys;
  double bound = 0.0;  // B = ||O||_inf ||g||_1
  double certificate = 0.0;
  double bias_bound = 0.0;

  nlohmann::json to_json() const {
    auto j = plan.to_json(keys);
    j["w_star"] = plan.dropped_mass;
    j["w_drop"] = plan.initial_dropped_mass;
    j["B"] = bound;
    j["cert_var"] = certificate;
    j["truncation_bias_bound"] = bias_bound;
    return j;
  }
};

inline CertifyResult cmd_certify(const ProductQpd& qpd, std::int64_t K, double observable_norm = 1.0) {
  const auto table = StratumTable::build(qpd);
  CertifyResult r;
  r.plan = residual_hamilton_allocate(table.weights(), K);
  r.keys = table.keys();
  r.bound = observable_norm * qpd.one_norm();
  r.certificate = variance_certificate(r.plan, table.weights(), K, r.bound);
  r.bias_bound = truncation_bias_bound(r.plan.initial_dropped_mass, r.bound);
  return r;
}

// ----------------------------------------------------------------------- run

struct ExperimentConfig {
  InstanceSpec instance;
  std::vector<std::size_t> depths;  // empty: just instance.L
  std::vector<std::string> designs = {"naive", "stratified-counts"};
  std::vector<MeasurementModel> models = {MeasurementModel::oracle()};
  std::int64_t K = 8192;
  std::vector<std::uint64_t> seeds = {1};
  std::size_t bootstrap = kDefaultBootstrap;
  double level = 0.95;
  std::size_t workers = 1;
  std::string out;

  void validate() const {
    if (K < 2) throw InvalidArgument("K must be at least 2");
    if (designs.empty()) throw InvalidArgument("at least one design is required");
    if (models.empty()) throw InvalidArgument("at least one measurement model is required");
    if (seeds.empty()) throw InvalidArgument("at least one seed is required");
    for (const auto& d : designs) {
      if (d != "naive" && d != "stratified-counts" && d != "stratified-parity" && d != "stratified-neyman") {
        throw InvalidArgument("unknown design '" + d + "'");
      }
    }
  }

  /// Reads {"instance": {...}, "L": [..], "designs": [..], "models": [..],
  /// "R": [..], "K": .., "seeds": [..], "B": .., "level": .., "workers": .., "out": ..}.
  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.instance = InstanceSpec::from_json(j.contains("instance") ? j["instance"] : j);
    const auto& src = j.contains("instance") ? j["instance"] : j;
    auto depth_list = [&](const nlohmann::json& v) {
      if (v.is_array()) {
        for (const auto& x : v) c.depths.push_back(x.get<std::size_t>());
      }
    };
    if (j.contains("L")) depth_list(j["L"]);
    if (c.depths.empty() && src.contains("L")) depth_list(src["L"]);
    if (j.contains("designs")) c.designs = j["designs"].get<std::vector<std::string>>();
    if (j.contains("models") || j.contains("R")) c.models.clear();
    if (j.contains("models")) {
      for (const auto& m : j["models"]) c.models.push_back(MeasurementModel::parse(m.get<std::string>()));
    }
    if (j.contains("R")) {
      for (const auto& r : j["R"]) {
        if (r.is_string()) {
          c.models.push_back(MeasurementModel::parse(r.get<std::string>()));
        } else {
          c.models.push_back(MeasurementModel::shots_of(r.get<std::int64_t>()));
        }
      }
    }
    c.K = j.value("K", c.K);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("seed")) c.seeds = {j["seed"].get<std::uint64_t>()};
    c.bootstrap = j.value("B", c.bootstrap);
    c.level = j.value("level", c.level);
    c.workers = j.value("workers", c.workers);
    c.out = j.value("out", c.out);
    return c;
  }
};

struct RatioRow {
  std::string instance;
  std::string design;
  MeasurementModel model;
  std::int64_t K = 0;
  std::uint64_t seed = 0;
  std::size_t L = 0;
  RatioEstimate ratio;

  static std::string csv_header() { return "instance,design,model,K,R,seed,L,rho,rho_lo,rho_hi"; }
  std::string csv_row() const {
    return instance + "," + design + "," + (model.is_oracle() ? "oracle" : "shots") + "," + std::to_string(K) +
           "," + model.r_column() + "," + std::to_string(seed) + "," + std::to_string(L) + "," +
           format_double(ratio.rho) + "," + format_double(ratio.ci_lo) + "," + format_double(ratio.ci_hi);
  }
};

struct ErrorRow {
  std::string instance;
  std::string design;
  MeasurementModel model;
  std::int64_t K = 0;
  std::uint64_t seed = 0;
  std::size_t L = 0;
  std::string message;

  static std::string csv_header() { return "instance,design,model,K,R,seed,L,error"; }
  std::string csv_row() const {
    std::string msg = message;
    for (char& c : msg) {
      if (c == '"') c = '\'';
      if (c == '\n') c = ' ';
    }
    return instance + "," + design + "," + (model.is_oracle() ? "oracle" : "shots") + "," + std::to_string(K) +
           "," + model.r_column() + "," + std::to_string(seed) + "," + std::to_string(L) + ",\"" + msg + "\"";
  }
};

struct RunResult {
  std::vector<EstimateReport> reports;
  std::vector<RatioRow> ratios;
  std::vector<ErrorRow> errors;

  bool ok() const noexcept { return errors.empty(); }

  void write_csv(std::ostream& os) const {
    os << EstimateReport::csv_header() << '\n';
    for (const auto& r : reports) os << r.csv_row() << '\n';
  }
  void write_ratio_csv(std::ostream& os) const {
    os << RatioRow::csv_header() << '\n';
    for (const auto& r : ratios) os << r.csv_row() << '\n';
  }
  void write_error_csv(std::ostream& os) const {
    os << ErrorRow::csv_header() << '\n';
    for (const auto& r : errors) os << r.csv_row() << '\n';
  }
  std::string csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }
  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) j.push_back(r.to_json());
    return j;
  }
};

namespace detail {

inline std::string statistic_of(const std::string& design) {
  if (design == "stratified-counts") return "counts";
  if (design == "stratified-parity") return "parity";
  if (design == "stratified-neyman") return "counts";
  return "none";
}

}  // namespace detail

/// Runs every (depth, design, model, seed) cell. Rows come out ordered by
/// depth, then design, model and seed in the order given by the config.
/// Failing cells become error rows; the remaining cells still run.
inline RunResult cmd_run(const ExperimentConfig& config) {
  config.validate();
  RunResult result;
  std::vector<std::size_t> depths = config.depths;
  if (depths.empty()) depths.push_back(config.instance.L);

  for (std::size_t L : depths) {
    InstanceSpec spec = config.instance;
    spec.L = L;
    const std::string name = spec.name();
    std::optional<PreparedInstance> prepared;
    std::optional<StratumTable> counts_table;
    std::optional<ParityTable> parity_table;
    std::optional<EnumerationResult> enumeration;

    auto fail = [&](const std::string& design, const MeasurementModel& model, std::uint64_t seed,
                    const std::string& msg) {
      result.errors.push_back({name, design, model, config.K, seed, L, msg});
    };
    try {
      prepared = PreparedInstance::make(spec);
    } catch (const std::exception& e) {
      for (const auto& design : config.designs) {
        for (const auto& model : config.models) {
          for (auto seed : config.seeds) fail(design, model, seed, e.what());
        }
      }
      continue;
    }
    const auto& qpd = prepared->qpd();

    std::vector<EstimateReport> naive_rows;
    for (const auto& design : config.designs) {
      for (const auto& model : config.models) {
        for (auto seed : config.seeds) {
          try {
            RunOptions opts;
            opts.workers = config.workers;
            opts.bootstrap = config.bootstrap;
            opts.level = config.level;
            opts.design = design;
            opts.instance = name;
            DesignRun run;
            if (design == "naive") {
              run = run_naive(qpd, prepared->evaluator, config.K, model, seed, opts);
            } else if (design == "stratified-parity") {
              if (!parity_table) parity_table = ParityTable::build(qpd);
              const auto plan = residual_hamilton_allocate(parity_table->weights(), config.K);
              run = run_stratified(*parity_table, plan, prepared->evaluator, model, seed, opts);
            } else {
              if (!counts_table) counts_table = StratumTable::build(qpd);
              AllocationPlan plan;
              if (design == "stratified-neyman") {
                if (!enumeration) enumeration = enumerate_means(qpd, prepared->evaluator, kEnumerationCap, config.workers);
                const auto moments = exact_stratum_moments(*enumeration, counts_statistic(qpd.width()), model);
                const auto& keys = counts_table->keys();
                std::vector<double> sigma(keys.size(), 0.0);
                for (std::size_t s = 0; s < keys.size(); ++s) {
                  const auto j = moments.find(keys[s]);
                  if (j >= 0) sigma[s] = std::sqrt(moments.sigma2[static_cast<std::size_t>(j)]);
                }
                plan = neyman_allocate(counts_table->weights(), sigma, config.K);
              } else {
                plan = residual_hamilton_allocate(counts_table->weights(), config.K);
              }
              run = run_stratified(*counts_table, plan, prepared->evaluator, model, seed, opts);
            }
            run.report.L = L;
            run.report.statistic = detail::statistic_of(design);
            if (design == "naive") naive_rows.push_back(run.report);
            result.reports.push_back(std::move(run.report));
          } catch (const std::exception& e) {
            fail(design, model, seed, e.what());
          }
        }
      }
    }

    for (const auto& rep : result.reports) {
      if (rep.L != L || rep.design == "naive" || rep.instance != name) continue;
      for (const auto& nv : naive_rows) {
        if (nv.model == rep.model && nv.seed == rep.seed) {
          try {
            result.ratios.push_back(
                {name, rep.design, rep.model, rep.K, rep.seed, L, variance_ratio(rep, nv, config.level)});
          } catch (const std::exception& e) {
            fail(rep.design, rep.model, rep.seed, std::string("ratio: ") + e.what());
          }
        }
      }
    }
  }
  return result;
}

}  // namespace qpdstrat
