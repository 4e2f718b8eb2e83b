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
#include <functional>
#include <limits>
#include <string>
#include <utility>

#include "qpdstrat/errors.hpp"
#include "qpdstrat/qpd.hpp"
#include "qpdstrat/random.hpp"

namespace qpdstrat {

/// Oracle (exact per-configuration mean) or R projective shots per configuration.
struct MeasurementModel {
  enum class Kind { Oracle, Shots };
  Kind kind = Kind::Oracle;
  std::int64_t shots = 0;

  static MeasurementModel oracle() { return {Kind::Oracle, 0}; }
  static MeasurementModel shots_of(std::int64_t r) {
    if (r < 1) throw InvalidArgument("shot count R must be at least 1");
    return {Kind::Shots, r};
  }

  bool is_oracle() const noexcept { return kind == Kind::Oracle; }

  /// "oracle", "shots1", "shots64", ...
  std::string name() const { return is_oracle() ? "oracle" : "shots" + std::to_string(shots); }

  /// Accepts "oracle", "shots:R", "shotsR" and "R" (bare integer).
  static MeasurementModel parse(const std::string& s) {
    if (s == "oracle" || s == "inf") return oracle();
    std::string digits = s;
    if (digits.rfind("shots", 0) == 0) digits = digits.substr(5);
    if (!digits.empty() && (digits[0] == ':' || digits[0] == '=' || digits[0] == '(')) digits = digits.substr(1);
    if (!digits.empty() && digits.back() == ')') digits.pop_back();
    std::size_t used = 0;
    long long r = 0;
    try {
      r = std::stoll(digits, &used);
    } catch (const std::exception&) {
      throw InvalidArgument("unknown measurement model '" + s + "'");
    }
    if (used != digits.size()) throw InvalidArgument("unknown measurement model '" + s + "'");
    return shots_of(r);
  }

  /// Shot count for CSV output; "inf" stands for the oracle limit.
  std::string r_column() const { return is_oracle() ? "inf" : std::to_string(shots); }

  bool operator==(const MeasurementModel&) const = default;
};

/// Maps a configuration to one sampled value Y, already weighted by w(l).
///
/// `bound` is a hard bound on |Y|. When `mean` is set it returns the exact
/// conditional mean mu_l of the unweighted outcome, which the exact oracle
/// consumes; `pauli_valued` declares single-shot outcomes in {-1, +1}.
struct OutcomeEvaluator {
  std::function<double(const Configuration&, const MeasurementModel&, Stream&)> fn;
  std::function<double(const Configuration&)> mean;
  double bound = std::numeric_limits<double>::infinity();
  bool pauli_valued = false;

  double operator()(const Configuration& l, const MeasurementModel& model, Stream& rng) const {
    return fn(l, model, rng);
  }
};

/// Average of R outcomes in {-1, +1} with Pr(+1) = (1 + mu)/2.
inline double sample_pauli_shots(double mu, std::int64_t shots, Stream& rng) {
  const double p_plus = std::clamp((1.0 + mu) / 2.0, 0.0, 1.0);
  std::int64_t plus = 0;
  for (std::int64_t r = 0; r < shots; ++r) {
    if (rng.uniform() < p_plus) ++plus;
  }
  return static_cast<double>(2 * plus - shots) / static_cast<double>(shots);
}

/// Evaluator built from exact means of a Pauli (+-1) observable:
/// Y = w(l) mu_l under the oracle and w(l) times an R-shot average otherwise.
inline OutcomeEvaluator make_pauli_evaluator(const ProductQpd& qpd,
                                             std::function<double(const Configuration&)> mean) {
  OutcomeEvaluator ev;
  ev.mean = mean;
  ev.bound = qpd.one_norm() * (1.0 + 1e-12);
  ev.pauli_valued = true;
  ev.fn = [qpd, mean = std::move(mean)](const Configuration& l, const MeasurementModel& model,
                                        Stream& rng) {
    const double w = qpd.weight(l);
    const double mu = mean(l);
    if (model.is_oracle()) return w * mu;
    return w * sample_pauli_shots(mu, model.shots, rng);
  };
  return ev;
}

/// Evaluator returning w(l) * f(l) regardless of the measurement model.
inline OutcomeEvaluator make_deterministic_evaluator(const ProductQpd& qpd,
                                                     std::function<double(const Configuration&)> f,
                                                     double bound) {
  OutcomeEvaluator ev;
  ev.mean = f;
  ev.bound = bound;
  ev.fn = [qpd, f = std::move(f)](const Configuration& l, const MeasurementModel&, Stream&) {
    return qpd.weight(l) * f(l);
  };
  return ev;
}

}  // namespace qpdstrat
