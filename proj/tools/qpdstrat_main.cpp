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
// qpdstrat: exact stratum tables, enumeration, certificates and Monte Carlo
// sweeps for product-form quasi-probability decompositions.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qpdstrat/commands.hpp"

namespace {

using namespace qpdstrat;

nlohmann::json load_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  return nlohmann::json::parse(in);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct InstanceFlags {
  std::string config;
  std::optional<std::size_t> n, L, obs_qubit;
  std::optional<std::string> qpd, boundary;
  std::optional<double> p, h, J, t;
  std::optional<int> bits;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON instance or experiment file");
    app->add_option("--n", n, "qubits");
    app->add_option("--L", L, "Trotter steps");
    app->add_option("--qpd", qpd, "pai or pec");
    app->add_option("--boundary", boundary, "ring or open");
    app->add_option("--p", p, "depolarising strength for pec");
    app->add_option("--h", h, "transverse field");
    app->add_option("--J", J, "coupling");
    app->add_option("--t", t, "total evolution time");
    app->add_option("--B-bits", bits, "PAI angle grid bits");
    app->add_option("--obs-qubit", obs_qubit, "qubit carrying the X observable");
  }

  nlohmann::json merged() const {
    nlohmann::json j = load_json(config);
    nlohmann::json& inst = j.contains("instance") ? j["instance"] : j;
    if (n) inst["n"] = *n;
    if (L) inst["L"] = *L;
    if (qpd) inst["qpd"] = *qpd;
    if (boundary) inst["boundary"] = *boundary;
    if (p) inst["p"] = *p;
    if (h) inst["h"] = *h;
    if (J) inst["J"] = *J;
    if (t) inst["t"] = *t;
    if (bits) inst["B_bits"] = *bits;
    if (obs_qubit) inst["obs_qubit"] = *obs_qubit;
    return j;
  }

  InstanceSpec spec() const {
    const auto j = merged();
    return InstanceSpec::from_json(j.contains("instance") ? j["instance"] : j);
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << text;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos || path.find('/', dot) != std::string::npos) return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stratified sampling for quasi-probability decompositions"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "Print this help message and exit");

  InstanceFlags dp_flags;
  double dp_q = 0.99;
  std::string dp_out;
  std::string dp_profile;
  auto* dp = app.add_subcommand("dp-weights", "exact counts-stratum weights and concentration profile");
  dp_flags.add(dp);
  dp->add_option("--q", dp_q, "mass threshold for the concentration profile");
  dp->add_option("--out", dp_out, "weights CSV (default stdout)");
  dp->add_option("--profile", dp_profile, "concentration profile CSV");

  InstanceFlags en_flags;
  std::string en_models = "oracle,shots1";
  std::size_t en_workers = 1;
  std::string en_out;
  std::string en_strata;
  auto* en = app.add_subcommand("enumerate", "exact means, variances and hierarchy by enumeration");
  en_flags.add(en);
  en->add_option("--models", en_models, "comma-separated models: oracle, shots1, shots64, ...");
  en->add_option("--workers", en_workers, "threads");
  en->add_option("--out", en_out, "JSON report (default stdout)");
  en->add_option("--strata", en_strata, "CSV dump of exact counts-stratum moments (oracle)");

  InstanceFlags ru_flags;
  std::optional<std::uint64_t> ru_seed;
  std::optional<std::int64_t> ru_K;
  std::optional<std::string> ru_out, ru_designs, ru_models, ru_depths;
  std::optional<std::size_t> ru_workers, ru_B;
  std::string ru_json;
  auto* ru = app.add_subcommand("run", "Monte Carlo sweep over designs, models and seeds");
  ru_flags.add(ru);
  ru->add_option("--seed", ru_seed, "master seed (replaces the seed list)");
  ru->add_option("--K", ru_K, "configuration budget");
  ru->add_option("--out", ru_out, "results CSV; ratios and errors go to sibling files");
  ru->add_option("--designs", ru_designs,
                 "comma-separated: naive, stratified-counts, stratified-parity, stratified-neyman");
  ru->add_option("--models", ru_models, "comma-separated: oracle, shots1, shots64, ...");
  ru->add_option("--depths", ru_depths, "comma-separated Trotter depths");
  ru->add_option("--workers", ru_workers, "threads");
  ru->add_option("--B", ru_B, "bootstrap resamples");
  ru->add_option("--json", ru_json, "also write the reports as JSON");

  InstanceFlags ce_flags;
  std::int64_t ce_K = 8192;
  std::string ce_out;
  auto* ce = app.add_subcommand("certify", "allocation plan, variance certificate and bias bound");
  ce_flags.add(ce);
  ce->add_option("--K", ce_K, "configuration budget");
  ce->add_option("--out", ce_out, "JSON output (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dp) {
      const auto spec = dp_flags.spec();
      const auto r = cmd_dp_weights(spec, dp_q, &std::cerr);
      std::ostringstream csv;
      r.table.write_csv(csv);
      write_text(dp_out, csv.str());
      if (!dp_profile.empty()) {
        std::ostringstream prof;
        write_profile_csv(prof, r.profile, r.table.keys());
        write_text(dp_profile, prof.str());
      }
      std::cerr << r.summary().dump() << '\n';
      return 0;
    }
    if (*en) {
      const auto spec = en_flags.spec();
      std::vector<MeasurementModel> models;
      for (const auto& m : split(en_models)) models.push_back(MeasurementModel::parse(m));
      const auto p = PreparedInstance::make(spec);
      const auto rep = cmd_enumerate(p.qpd(), p.evaluator, models, en_workers);
      auto j = rep.to_json();
      j["instance"] = spec.to_json();
      write_text(en_out, j.dump(2) + "\n");
      if (!en_strata.empty()) {
        const auto r = enumerate_means(p.qpd(), p.evaluator, kEnumerationCap, en_workers);
        std::ostringstream csv;
        exact_stratum_moments(r, counts_statistic(p.qpd().width())).write_csv(csv);
        write_text(en_strata, csv.str());
      }
      return 0;
    }
    if (*ce) {
      const auto spec = ce_flags.spec();
      const auto circuit = build_instance(spec);
      auto j = cmd_certify(circuit.qpd, ce_K).to_json();
      j["instance"] = spec.to_json();
      write_text(ce_out, j.dump(2) + "\n");
      return 0;
    }
    if (*ru) {
      auto config = ExperimentConfig::from_json(ru_flags.merged());
      if (ru_flags.L) config.depths.clear();
      if (ru_seed) config.seeds = {*ru_seed};
      if (ru_K) config.K = *ru_K;
      if (ru_out) config.out = *ru_out;
      if (ru_designs) config.designs = split(*ru_designs);
      if (ru_models) {
        config.models.clear();
        for (const auto& m : split(*ru_models)) config.models.push_back(MeasurementModel::parse(m));
      }
      if (ru_depths) {
        config.depths.clear();
        for (const auto& d : split(*ru_depths)) config.depths.push_back(std::stoul(d));
      }
      if (ru_workers) config.workers = *ru_workers;
      if (ru_B) config.bootstrap = *ru_B;

      const auto result = cmd_run(config);
      std::ostringstream rows, ratios, errors;
      result.write_csv(rows);
      result.write_ratio_csv(ratios);
      result.write_error_csv(errors);
      write_text(config.out, rows.str());
      if (!config.out.empty() && config.out != "-") {
        write_text(sibling(config.out, "_ratios"), ratios.str());
        if (!result.ok()) write_text(sibling(config.out, "_errors"), errors.str());
      } else {
        std::cerr << ratios.str();
      }
      if (!ru_json.empty()) write_text(ru_json, result.to_json().dump(2) + "\n");
      for (const auto& e : result.errors) std::cerr << "error: " << e.csv_row() << '\n';
      return result.ok() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
