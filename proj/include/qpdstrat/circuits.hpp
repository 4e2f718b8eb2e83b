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

#include <array>
#include <cmath>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "qpdstrat/density_matrix.hpp"
#include "qpdstrat/errors.hpp"
#include "qpdstrat/model.hpp"
#include "qpdstrat/qpd.hpp"

namespace qpdstrat {

/// Rotation exp(-i theta G / 2) about a Pauli string G.
struct Rotation {
  PauliString generator;
  double angle = 0.0;
};

/// rho -> P rho P for a single-qubit Pauli (0=I, 1=X, 2=Y, 3=Z).
struct PauliConjugation {
  int pauli = 0;
  std::size_t qubit = 0;
};

struct Depolarising {
  double p = 0.0;
  std::size_t qubit = 0;
};

using ChannelPrimitive = std::variant<Rotation, PauliConjugation, Depolarising>;

/// Gate of a Trotter circuit: a Pauli rotation together with its support.
struct Gate {
  Rotation rotation;
  std::vector<std::size_t> support;
};

inline void apply(DensityMatrix& rho, const ChannelPrimitive& c) {
  std::visit(
      [&](const auto& op) {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, Rotation>) {
          rho.apply_rotation(op.generator, op.angle);
        } else if constexpr (std::is_same_v<T, PauliConjugation>) {
          rho.apply_pauli(PauliString::single(rho.qubits(), op.qubit, op.pauli));
        } else {
          rho.apply_depolarising(op.qubit, op.p);
        }
      },
      c);
}

enum class Boundary { Ring, Open };

inline Boundary parse_boundary(const std::string& s) {
  if (s == "ring" || s == "periodic") return Boundary::Ring;
  if (s == "open") return Boundary::Open;
  throw InvalidArgument("unknown boundary '" + s + "'");
}

inline std::string to_string(Boundary b) { return b == Boundary::Ring ? "ring" : "open"; }

/// First-order Trotterisation of H = h sum X_j + J sum Z_j Z_{j+1}.
/// Each step applies every R_X(2h dt), then every R_ZZ(2J dt) bond.
inline std::vector<Gate> build_tfim_trotter(std::size_t n, std::size_t L, double h, double J,
                                            double t, Boundary boundary) {
  if (n < 2) throw InvalidArgument("TFIM chain needs at least 2 qubits");
  if (L < 1) throw InvalidArgument("Trotter step count L must be at least 1");
  if (n > kMaxDensityQubits) throw ResourceLimit("TFIM chain exceeds the density-matrix qubit cap");
  const double dt = t / static_cast<double>(L);
  const std::size_t bonds = boundary == Boundary::Ring ? n : n - 1;
  std::vector<Gate> gates;
  gates.reserve(L * (n + bonds));
  for (std::size_t step = 0; step < L; ++step) {
    for (std::size_t j = 0; j < n; ++j) {
      gates.push_back({{PauliString::single(n, j, 1), 2.0 * h * dt}, {j}});
    }
    for (std::size_t j = 0; j < bonds; ++j) {
      const std::size_t k = (j + 1) % n;
      PauliString zz = PauliString::single(n, j, 3);
      zz.z |= PauliString::single(n, k, 3).z;
      gates.push_back({{zz, 2.0 * J * dt}, {j, k}});
    }
  }
  return gates;
}

/// One QPD location: option k is the channel sequence realised for l_i = k.
struct QpdLocation {
  std::vector<std::vector<ChannelPrimitive>> options;
};

/// Circuit whose program interleaves fixed channels with QPD locations.
struct QpdCircuit {
  struct Step {
    std::optional<ChannelPrimitive> fixed;
    std::size_t location = 0;  // used when fixed is empty
  };

  std::size_t n = 0;
  std::vector<Step> program;
  std::vector<QpdLocation> locations;
  ProductQpd qpd;
  PauliString observable;

  void check() const {
    if (locations.size() != qpd.nu()) throw InternalError("location count differs from QPD length");
    for (const auto& loc : locations) {
      if (loc.options.size() > qpd.width()) throw InternalError("location wider than the QPD");
    }
  }
};

/// Coefficients (g1, g2, g3) with g1 R(0) + g2 R(delta) + g3 R(pi) = R(target)
/// as linear maps, for 0 <= target < delta.
inline std::array<double, 3> pai_coefficients(double target, double delta) {
  if (!(delta > 0.0 && delta <= std::numbers::pi)) throw InvalidArgument("grid step must lie in (0, pi]");
  if (!(target >= 0.0 && target < delta)) throw InvalidArgument("target offset must lie in [0, delta)");
  // Rows: constant, cosine and sine components of the rotation channel.
  const double a[3][3] = {{1.0, 1.0, 1.0},
                          {1.0, std::cos(delta), -1.0},
                          {0.0, std::sin(delta), 0.0}};
  const double rhs[3] = {1.0, std::cos(target), std::sin(target)};
  auto det3 = [](const double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double det = det3(a);
  if (std::abs(det) < 1e-12) throw DegenerateGrid("angle grid makes the interpolation system singular");
  std::array<double, 3> out{};
  for (int col = 0; col < 3; ++col) {
    double m[3][3];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] = (c == col) ? rhs[r] : a[r][c];
    }
    out[static_cast<std::size_t>(col)] = det3(m) / det;
  }
  // Snap the on-grid case to an exact point mass.
  if (target == 0.0) out = {1.0, 0.0, 0.0};
  return out;
}

namespace detail {

inline void push_gate(QpdCircuit& c, const Gate& g) {
  c.program.push_back({ChannelPrimitive{g.rotation}, 0});
}

inline void push_location(QpdCircuit& c, QpdLocation loc) {
  c.program.push_back({std::nullopt, c.locations.size()});
  c.locations.push_back(std::move(loc));
}

}  // namespace detail

/// Replaces every rotation by a three-term interpolation over the grid
/// Theta_k = k * 2 pi / 2^bits.
inline QpdCircuit attach_pai(const std::vector<Gate>& gates, std::size_t n, int bits,
                             PauliString observable) {
  if (bits < 2 || bits > 30) throw DegenerateGrid("PAI grid needs 2..30 bits");
  const double delta = 2.0 * std::numbers::pi / std::ldexp(1.0, bits);
  QpdCircuit c;
  c.n = n;
  c.observable = observable;
  std::vector<LocalQpd> locals;
  for (const auto& g : gates) {
    const double theta = g.rotation.angle;
    double k = std::floor(theta / delta);
    double base = k * delta;
    double offset = theta - base;
    if (offset >= delta) {
      k += 1.0;
      base = k * delta;
      offset = theta - base;
    }
    if (offset < 0.0) offset = 0.0;
    const auto gamma = pai_coefficients(offset, delta);
    QpdLocation loc;
    const auto gen = g.rotation.generator;
    loc.options.push_back({Rotation{gen, base}});
    loc.options.push_back({Rotation{gen, base + delta}});
    loc.options.push_back({Rotation{gen, base + std::numbers::pi}});
    detail::push_location(c, std::move(loc));
    locals.push_back(LocalQpd::from_coefficients({gamma[0], gamma[1], gamma[2]}, {"lo", "hi", "flip"}));
  }
  c.qpd = ProductQpd::assemble(std::move(locals));
  c.check();
  return c;
}

/// Quasi-inverse of the single-qubit depolarising channel over Pauli
/// conjugations, ordered I, X, Y, Z.
inline std::array<double, 4> pec_coefficients(double p) {
  if (!(p >= 0.0 && p < 0.75)) throw InvalidArgument("depolarising strength must lie in [0, 3/4)");
  const double lambda = 1.0 - 4.0 * p / 3.0;
  const double id = (lambda + 3.0) / (4.0 * lambda);
  const double pauli = (lambda - 1.0) / (4.0 * lambda);
  return {id, pauli, pauli, pauli};
}

/// Each gate becomes a noisy gate (gate, then depolarising noise on every
/// support qubit); every noisy leg carries a four-term Pauli QPD.
inline QpdCircuit attach_pec(const std::vector<Gate>& gates, std::size_t n, double p,
                             PauliString observable) {
  const auto gamma = pec_coefficients(p);
  QpdCircuit c;
  c.n = n;
  c.observable = observable;
  std::vector<LocalQpd> locals;
  for (const auto& g : gates) {
    detail::push_gate(c, g);
    for (std::size_t q : g.support) {
      c.program.push_back({ChannelPrimitive{Depolarising{p, q}}, 0});
    }
    for (std::size_t q : g.support) {
      QpdLocation loc;
      for (int P = 0; P < 4; ++P) loc.options.push_back({PauliConjugation{P, q}});
      detail::push_location(c, std::move(loc));
      locals.push_back(LocalQpd::from_coefficients({gamma[0], gamma[1], gamma[2], gamma[3]},
                                                   {"I", "X", "Y", "Z"}));
    }
  }
  c.qpd = ProductQpd::assemble(std::move(locals));
  c.check();
  return c;
}

/// Circuit without any QPD: every gate runs as written.
inline QpdCircuit ideal_circuit(const std::vector<Gate>& gates, std::size_t n, PauliString observable) {
  QpdCircuit c;
  c.n = n;
  c.observable = observable;
  for (const auto& g : gates) detail::push_gate(c, g);
  return c;
}

inline DensityMatrix run_configuration(const QpdCircuit& circuit, const Configuration& l) {
  if (l.size() != circuit.locations.size()) throw InvalidArgument("configuration length differs from circuit");
  DensityMatrix rho = DensityMatrix::zero_state(circuit.n);
  for (const auto& step : circuit.program) {
    if (step.fixed) {
      apply(rho, *step.fixed);
      continue;
    }
    const auto& options = circuit.locations[step.location].options;
    const auto k = static_cast<std::size_t>(l[step.location]);
    if (k >= options.size()) throw InvalidArgument("configuration selects a padded primitive");
    for (const auto& prim : options[k]) apply(rho, prim);
  }
  return rho;
}

/// mu_l = Tr[O U(l)(rho_0)].
inline double evaluate_configuration(const QpdCircuit& circuit, const Configuration& l) {
  return run_configuration(circuit, l).expectation(circuit.observable).real();
}

/// Thread-safe LRU memo of mu_l keyed by configuration.
class MeanCache {
 public:
  explicit MeanCache(std::size_t capacity = std::size_t{1} << 20) : capacity_(capacity) {}

  template <class F>
  double get_or_compute(const Configuration& l, F&& compute) {
    std::string key = l.key();
    {
      std::lock_guard lock(mutex_);
      if (auto it = index_.find(key); it != index_.end()) {
        order_.splice(order_.begin(), order_, it->second);
        ++hits_;
        return it->second->second;
      }
    }
    const double value = compute(l);
    std::lock_guard lock(mutex_);
    ++misses_;
    if (index_.find(key) == index_.end() && capacity_ > 0) {
      order_.emplace_front(key, value);
      index_.emplace(std::move(key), order_.begin());
      if (index_.size() > capacity_) {
        index_.erase(order_.back().first);
        order_.pop_back();
      }
    }
    return value;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return index_.size();
  }
  std::size_t hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mutex_);
    return misses_;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<std::pair<std::string, double>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, double>>::iterator> index_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// Outcome evaluator backed by density-matrix simulation with memoised means.
inline OutcomeEvaluator make_outcome_evaluator(std::shared_ptr<const QpdCircuit> circuit,
                                               std::size_t cache_capacity = std::size_t{1} << 20) {
  auto cache = std::make_shared<MeanCache>(cache_capacity);
  auto mean = [circuit, cache](const Configuration& l) {
    return cache->get_or_compute(l, [&](const Configuration& c) { return evaluate_configuration(*circuit, c); });
  };
  return make_pauli_evaluator(circuit->qpd, std::move(mean));
}

/// Benchmark instance description.
struct InstanceSpec {
  std::string model = "tfim";
  std::size_t n = 6;
  std::size_t L = 2;
  double h = 0.6;
  double J = 0.7;
  double t = 1.0;
  Boundary boundary = Boundary::Ring;
  std::string qpd = "pai";
  int B_bits = 5;
  double p = 0.01;
  std::optional<std::size_t> obs_qubit;  // defaults to n-1
  std::string observable;                // full Pauli label; overrides obs_qubit

  std::size_t observable_qubit() const { return obs_qubit.value_or(n - 1); }

  PauliString observable_string() const {
    if (!observable.empty()) {
      if (observable.size() != n) throw InvalidArgument("observable label length differs from n");
      return PauliString::parse(observable);
    }
    if (observable_qubit() >= n) throw InvalidArgument("observable qubit out of range");
    return PauliString::single(n, observable_qubit(), 1);
  }

  std::string name() const {
    return model + "-" + qpd + "-n" + std::to_string(n) + "-L" + std::to_string(L) + "-" + to_string(boundary);
  }

  static InstanceSpec from_json(const nlohmann::json& j) {
    InstanceSpec s;
    s.model = j.value("model", s.model);
    if (s.model != "tfim") throw InvalidArgument("unknown instance model '" + s.model + "'");
    s.n = j.value("n", s.n);
    if (j.contains("L") && j["L"].is_number_integer()) s.L = j["L"].get<std::size_t>();
    s.h = j.value("h", s.h);
    s.J = j.value("J", s.J);
    s.t = j.value("t", s.t);
    s.boundary = parse_boundary(j.value("boundary", std::string("ring")));
    s.qpd = j.value("qpd", s.qpd);
    if (s.qpd != "pai" && s.qpd != "pec") throw InvalidArgument("unknown QPD kind '" + s.qpd + "'");
    s.B_bits = j.value("B_bits", s.B_bits);
    s.p = j.value("p", s.p);
    if (j.contains("obs_qubit")) s.obs_qubit = j["obs_qubit"].get<std::size_t>();
    s.observable = j.value("observable", std::string());
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"model", model}, {"n", n},   {"L", L},     {"h", h},
                        {"J", J},         {"t", t},   {"boundary", to_string(boundary)},
                        {"qpd", qpd}};
    if (qpd == "pai") j["B_bits"] = B_bits;
    if (qpd == "pec") j["p"] = p;
    j["obs_qubit"] = observable_qubit();
    if (!observable.empty()) j["observable"] = observable;
    return j;
  }
};

inline QpdCircuit build_instance(const InstanceSpec& spec) {
  const auto gates = build_tfim_trotter(spec.n, spec.L, spec.h, spec.J, spec.t, spec.boundary);
  const auto obs = spec.observable_string();
  if (spec.qpd == "pai") return attach_pai(gates, spec.n, spec.B_bits, obs);
  if (spec.qpd == "pec") return attach_pec(gates, spec.n, spec.p, obs);
  throw InvalidArgument("unknown QPD kind '" + spec.qpd + "'");
}

}  // namespace qpdstrat
