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

// Independent reference implementations used only by the tests: brute-force
// enumeration over all configurations and dense Kronecker-product channels.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "qpdstrat/qpdstrat.hpp"

namespace qpdstrat::testing {

using Mat = std::vector<std::vector<Complex>>;

inline Mat zeros(std::size_t n) { return Mat(n, std::vector<Complex>(n, 0.0)); }

inline Mat eye(std::size_t n) {
  Mat m = zeros(n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size();
  Mat c = zeros(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat dagger(const Mat& a) {
  const std::size_t n = a.size();
  Mat c = zeros(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i][j] = std::conj(a[j][i]);
  return c;
}

inline Mat add(const Mat& a, const Mat& b, Complex s = 1.0) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) c[i][j] += s * b[i][j];
  return c;
}

inline Mat kron(const Mat& a, const Mat& b) {
  const std::size_t na = a.size(), nb = b.size();
  Mat c = zeros(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j)
      for (std::size_t k = 0; k < nb; ++k)
        for (std::size_t l = 0; l < nb; ++l) c[i * nb + k][j * nb + l] = a[i][j] * b[k][l];
  return c;
}

inline Mat pauli2(char p) {
  const Complex i{0, 1};
  switch (p) {
    case 'X': return {{0, 1}, {1, 0}};
    case 'Y': return {{0, -i}, {i, 0}};
    case 'Z': return {{1, 0}, {0, -1}};
    default: return {{1, 0}, {0, 1}};
  }
}

/// Kronecker product of the labelled single-qubit Paulis, qubit 0 leftmost.
inline Mat pauli_matrix(const std::string& label) {
  Mat m = {{1.0}};
  for (char c : label) m = kron(m, pauli2(c));
  return m;
}

/// exp(-i theta G / 2) = cos(theta/2) I - i sin(theta/2) G.
inline Mat rotation_matrix(const std::string& label, double theta) {
  const Mat g = pauli_matrix(label);
  Mat u = eye(g.size());
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = 0; b < g.size(); ++b)
      u[a][b] = std::cos(theta / 2) * u[a][b] + Complex{0, -std::sin(theta / 2)} * g[a][b];
  return u;
}

inline Mat conj_by(const Mat& u, const Mat& rho) { return mul(mul(u, rho), dagger(u)); }

inline Mat to_mat(const DensityMatrix& r) {
  Mat m = zeros(r.dim());
  for (std::size_t a = 0; a < r.dim(); ++a)
    for (std::size_t b = 0; b < r.dim(); ++b) m[a][b] = r.at(a, b);
  return m;
}

inline DensityMatrix from_mat(const Mat& m, std::size_t n) {
  DensityMatrix r(n);
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = 0; b < m.size(); ++b) r.at(a, b) = m[a][b];
  return r;
}

inline double max_diff(const Mat& a, const Mat& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) e = std::max(e, std::abs(a[i][j] - b[i][j]));
  return e;
}

/// Label with `p` on `qubit` and identities elsewhere.
inline std::string single_label(std::size_t n, std::size_t qubit, char p) {
  std::string s(n, 'I');
  s[qubit] = p;
  return s;
}

/// Transfer matrix of a channel on n qubits: column (a,b) holds vec(C(|a><b|)).
inline Mat transfer_matrix(std::size_t n, const std::function<void(DensityMatrix&)>& channel) {
  const std::size_t dim = std::size_t{1} << n;
  Mat t = zeros(dim * dim);
  for (std::size_t a = 0; a < dim; ++a)
    for (std::size_t b = 0; b < dim; ++b) {
      DensityMatrix r = DensityMatrix::basis_operator(n, a, b);
      channel(r);
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) t[i * dim + j][a * dim + b] = r.at(i, j);
    }
  return t;
}

/// Visits every configuration of the QPD in mixed-radix order.
inline void for_each_configuration(const ProductQpd& qpd, const std::function<void(const Configuration&)>& fn) {
  Configuration l;
  l.indices.assign(qpd.nu(), 0);
  const int d = static_cast<int>(qpd.width());
  while (true) {
    fn(l);
    std::size_t i = qpd.nu();
    while (i > 0) {
      --i;
      if (++l.indices[i] < d) break;
      l.indices[i] = 0;
      if (i == 0) return;
    }
    if (qpd.nu() == 0) return;
  }
}

/// Pr(M = m) by summing p(l) over every configuration.
inline std::map<std::vector<int>, double> brute_counts_weights(const ProductQpd& qpd) {
  std::map<std::vector<int>, double> w;
  for_each_configuration(qpd, [&](const Configuration& l) {
    std::vector<int> m(qpd.width(), 0);
    for (int k : l.indices) ++m[static_cast<std::size_t>(k)];
    w[m] += qpd.probability(l);
  });
  return w;
}

/// Random product QPD; roughly one coefficient in five is negative and,
/// when `allow_zero`, one in ten is exactly zero.
inline ProductQpd random_qpd(Stream& rng, std::size_t nu, std::size_t d, bool allow_zero = true) {
  std::vector<LocalQpd> locals;
  for (std::size_t i = 0; i < nu; ++i) {
    std::vector<double> c(d);
    bool any = false;
    for (auto& x : c) {
      x = 0.05 + rng.uniform();
      if (rng.uniform() < 0.2) x = -x;
      if (allow_zero && rng.uniform() < 0.1) x = 0.0;
      any = any || x != 0.0;
    }
    if (!any) c[0] = 1.0;
    locals.push_back(LocalQpd::from_coefficients(c));
  }
  return ProductQpd::assemble(std::move(locals));
}

/// Quasi-probabilities (coefficients summing to 1) in which each primitive
/// index carries the same sign at every location, so the sign of g(l) is a
/// function of the counts vector.
inline ProductQpd random_sign_consistent_qpd(Stream& rng, std::size_t nu, std::size_t d) {
  std::vector<double> sign(d, 1.0);
  for (std::size_t k = 1; k < d; ++k) sign[k] = rng.uniform() < 0.4 ? -1.0 : 1.0;
  std::vector<LocalQpd> locals;
  for (std::size_t i = 0; i < nu; ++i) {
    std::vector<double> c(d);
    double total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      c[k] = sign[k] > 0.0 ? 0.5 + rng.uniform() : -(0.02 + 0.3 * rng.uniform());
      total += c[k];
    }
    for (auto& x : c) x /= total;
    locals.push_back(LocalQpd::from_coefficients(c));
  }
  return ProductQpd::assemble(std::move(locals));
}

/// Evaluator whose exact means are a fixed pseudo-random function of l in [-1, 1].
inline OutcomeEvaluator random_pauli_evaluator(const ProductQpd& qpd, std::uint64_t salt) {
  auto mean = [salt](const Configuration& l) {
    std::uint64_t h = mix64(salt);
    for (int k : l.indices) h = mix64(h ^ static_cast<std::uint64_t>(k + 1));
    return 2.0 * static_cast<double>(h >> 11) * 0x1.0p-53 - 1.0;
  };
  return make_pauli_evaluator(qpd, mean);
}

}  // namespace qpdstrat::testing
