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

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/errors.hpp"
#include "qpdstrat/numeric.hpp"
#include "qpdstrat/random.hpp"

namespace qpdstrat {

/// One primitive choice per QPD location, stored 0-based.
struct Configuration {
  std::vector<int> indices;

  std::size_t size() const noexcept { return indices.size(); }
  int operator[](std::size_t i) const { return indices[i]; }
  int& operator[](std::size_t i) { return indices[i]; }

  auto operator<=>(const Configuration&) const = default;
  bool operator==(const Configuration&) const = default;

  /// Compact byte key, usable as a hash-map key.
  std::string key() const {
    std::string s;
    s.reserve(indices.size());
    for (int k : indices) s.push_back(static_cast<char>(k));
    return s;
  }
};

/// Signed coefficient table of a single local decomposition.
class LocalQpd {
 public:
  LocalQpd() = default;

  /// Builds the table and caches the 1-norm, sampling law and signs.
  /// Throws InvalidCoefficients on empty, all-zero or non-finite input.
  static LocalQpd from_coefficients(std::vector<double> coeffs,
                                    std::vector<std::string> labels = {}) {
    if (coeffs.empty()) throw InvalidCoefficients("local QPD needs at least one coefficient");
    KahanSum norm;
    for (double c : coeffs) {
      if (!std::isfinite(c)) throw InvalidCoefficients("non-finite QPD coefficient");
      norm.add(std::fabs(c));
    }
    if (!(norm.value() > 0.0)) throw InvalidCoefficients("all QPD coefficients are zero");
    if (!labels.empty() && labels.size() != coeffs.size()) {
      throw InvalidArgument("label count does not match coefficient count");
    }
    LocalQpd q;
    q.norm_ = norm.value();
    q.probs_.reserve(coeffs.size());
    for (double c : coeffs) q.probs_.push_back(std::fabs(c) / q.norm_);
    q.coeffs_ = std::move(coeffs);
    q.labels_ = std::move(labels);
    return q;
  }

  std::size_t width() const noexcept { return coeffs_.size(); }
  double one_norm() const noexcept { return norm_; }
  double coefficient(std::size_t k) const { return coeffs_.at(k); }
  double probability(std::size_t k) const { return probs_.at(k); }
  int sign(std::size_t k) const {
    const double c = coeffs_.at(k);
    return (c > 0.0) - (c < 0.0);
  }
  std::span<const double> coefficients() const noexcept { return coeffs_; }
  std::span<const double> probabilities() const noexcept { return probs_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  /// Mass on strictly positive coefficients.
  double positive_mass() const noexcept {
    KahanSum s;
    for (std::size_t k = 0; k < coeffs_.size(); ++k) {
      if (coeffs_[k] > 0.0) s.add(probs_[k]);
    }
    return s.value();
  }

  /// Copy extended with zero-coefficient dummy primitives up to width d.
  LocalQpd padded(std::size_t d) const {
    LocalQpd q = *this;
    if (d <= width()) return q;
    q.coeffs_.resize(d, 0.0);
    q.probs_.resize(d, 0.0);
    if (!q.labels_.empty()) q.labels_.resize(d, "pad");
    return q;
  }

 private:
  std::vector<double> coeffs_;
  std::vector<double> probs_;
  std::vector<std::string> labels_;
  double norm_ = 0.0;
};

inline LocalQpd build_local_qpd(std::vector<double> coeffs) {
  return LocalQpd::from_coefficients(std::move(coeffs));
}

/// Product of nu local decompositions padded to a common width.
///
/// Immutable after construction; safe to share between threads.
class ProductQpd {
 public:
  ProductQpd() = default;

  static ProductQpd assemble(std::vector<LocalQpd> locals) {
    if (locals.empty()) throw InvalidArgument("product QPD needs at least one location");
    std::size_t d = 0;
    for (const auto& l : locals) d = std::max(d, l.width());
    ProductQpd q;
    q.width_ = d;
    q.locals_.reserve(locals.size());
    KahanSum log_norm;
    double linear = 1.0;
    for (auto& l : locals) {
      log_norm.add(std::log(l.one_norm()));
      linear *= l.one_norm();
      q.locals_.push_back(l.padded(d));
    }
    q.log_norm_ = log_norm.value();
    // The linear product is exact enough for moderate depth; beyond that the
    // norm is only trusted through its logarithm.
    q.norm_ = q.locals_.size() <= kLinearNormDepth ? linear : std::exp(q.log_norm_);
    return q;
  }

  static constexpr std::size_t kLinearNormDepth = 64;

  std::size_t nu() const noexcept { return locals_.size(); }
  std::size_t width() const noexcept { return width_; }
  const LocalQpd& local(std::size_t i) const { return locals_.at(i); }
  const std::vector<LocalQpd>& locals() const noexcept { return locals_; }

  double one_norm() const noexcept { return norm_; }
  double log_one_norm() const noexcept { return log_norm_; }

  /// Product coefficient g(l); zero if any entry hits a zero coefficient.
  double coefficient(const Configuration& l) const {
    check(l);
    double g = 1.0;
    for (std::size_t i = 0; i < nu(); ++i) g *= locals_[i].coefficient(l[i]);
    return g;
  }

  /// Product sampling probability p(l).
  double probability(const Configuration& l) const {
    check(l);
    double p = 1.0;
    for (std::size_t i = 0; i < nu(); ++i) p *= locals_[i].probability(l[i]);
    return p;
  }

  /// sign(g(l)); zero for unreachable configurations.
  int sign(const Configuration& l) const {
    check(l);
    int s = 1;
    for (std::size_t i = 0; i < nu(); ++i) s *= locals_[i].sign(l[i]);
    return s;
  }

  /// w(l) = ||g||_1 sign(g(l)). Throws ZeroMassConfiguration if g(l) = 0.
  double weight(const Configuration& l) const {
    const int s = sign(l);
    if (s == 0) throw ZeroMassConfiguration("configuration has zero QPD coefficient");
    return s > 0 ? norm_ : -norm_;
  }

  /// Independent draw of every local index from its own law.
  Configuration sample(Stream& rng) const {
    Configuration l;
    l.indices.resize(nu());
    for (std::size_t i = 0; i < nu(); ++i) {
      l[i] = static_cast<int>(rng.categorical(locals_[i].probabilities()));
    }
    return l;
  }

  nlohmann::json to_json() const {
    nlohmann::json locals = nlohmann::json::array();
    for (const auto& l : locals_) {
      std::vector<double> c(l.coefficients().begin(), l.coefficients().end());
      locals.push_back(c);
    }
    return {{"locals", locals}};
  }

  static ProductQpd from_json(const nlohmann::json& j) {
    if (!j.contains("locals") || !j["locals"].is_array()) {
      throw InvalidArgument("product QPD JSON needs a \"locals\" array");
    }
    std::vector<LocalQpd> locals;
    for (const auto& row : j["locals"]) {
      locals.push_back(LocalQpd::from_coefficients(row.get<std::vector<double>>()));
    }
    return assemble(std::move(locals));
  }

 private:
  void check(const Configuration& l) const {
    if (l.size() != nu()) throw InvalidArgument("configuration length does not match nu");
    for (int k : l.indices) {
      if (k < 0 || static_cast<std::size_t>(k) >= width_) {
        throw InvalidArgument("configuration index out of range");
      }
    }
  }

  std::vector<LocalQpd> locals_;
  std::size_t width_ = 0;
  double norm_ = 0.0;
  double log_norm_ = 0.0;
};

inline ProductQpd pad_and_assemble(std::vector<LocalQpd> locals) {
  return ProductQpd::assemble(std::move(locals));
}

inline double config_weight(const ProductQpd& qpd, const Configuration& l) {
  return qpd.weight(l);
}

inline Configuration sample_naive(const ProductQpd& qpd, Stream& rng) { return qpd.sample(rng); }

}  // namespace qpdstrat
