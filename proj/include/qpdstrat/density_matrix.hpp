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
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qpdstrat/errors.hpp"

namespace qpdstrat {

using Complex = std::complex<double>;

inline constexpr std::size_t kMaxDensityQubits = 8;

/// Pauli string in symplectic form. Qubit q maps to bit (n-1-q) of a basis
/// index, so qubit 0 is the leftmost Kronecker factor.
struct PauliString {
  std::size_t n = 0;
  std::uint32_t x = 0;
  std::uint32_t z = 0;

  static PauliString identity(std::size_t n) { return {n, 0, 0}; }

  /// Parses e.g. "XIZ"; character j acts on qubit j.
  static PauliString parse(std::string_view s) {
    PauliString p{s.size(), 0, 0};
    for (std::size_t q = 0; q < s.size(); ++q) {
      const std::uint32_t bit = std::uint32_t{1} << (s.size() - 1 - q);
      switch (s[q]) {
        case 'I': break;
        case 'X': p.x |= bit; break;
        case 'Y': p.x |= bit; p.z |= bit; break;
        case 'Z': p.z |= bit; break;
        default: throw InvalidArgument("invalid Pauli label '" + std::string(s) + "'");
      }
    }
    return p;
  }

  /// Single-qubit Pauli 0=I, 1=X, 2=Y, 3=Z on qubit q of n.
  static PauliString single(std::size_t n, std::size_t q, int which) {
    if (q >= n) throw InvalidArgument("qubit index out of range");
    const std::uint32_t bit = std::uint32_t{1} << (n - 1 - q);
    PauliString p{n, 0, 0};
    if (which == 1 || which == 2) p.x = bit;
    if (which == 2 || which == 3) p.z = bit;
    return p;
  }

  bool is_identity() const noexcept { return x == 0 && z == 0; }
  int y_count() const noexcept { return std::popcount(x & z); }

  std::string label() const {
    std::string s(n, 'I');
    for (std::size_t q = 0; q < n; ++q) {
      const std::uint32_t bit = std::uint32_t{1} << (n - 1 - q);
      const bool bx = x & bit;
      const bool bz = z & bit;
      s[q] = bx ? (bz ? 'Y' : 'X') : (bz ? 'Z' : 'I');
    }
    return s;
  }

  /// Amplitude phase in P|b> = phase(b) |b xor x>.
  Complex phase(std::uint32_t b) const noexcept {
    static constexpr Complex kI[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const int k = (y_count() + 2 * std::popcount(b & z)) & 3;
    return kI[k];
  }

  bool operator==(const PauliString&) const = default;
};

/// Dense 2^n x 2^n density matrix, row-major.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  explicit DensityMatrix(std::size_t n) : n_(n), dim_(std::size_t{1} << n) {
    if (n == 0 || n > kMaxDensityQubits) {
      throw ResourceLimit("density-matrix backend supports 1.." + std::to_string(kMaxDensityQubits) +
                          " qubits");
    }
    data_.assign(dim_ * dim_, Complex{0, 0});
  }

  /// |0...0><0...0|.
  static DensityMatrix zero_state(std::size_t n) {
    DensityMatrix r(n);
    r.data_[0] = 1.0;
    return r;
  }

  /// |a><b|, used to probe channels as linear maps.
  static DensityMatrix basis_operator(std::size_t n, std::size_t a, std::size_t b) {
    DensityMatrix r(n);
    r.at(a, b) = 1.0;
    return r;
  }

  std::size_t qubits() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  Complex& at(std::size_t a, std::size_t b) { return data_[a * dim_ + b]; }
  const Complex& at(std::size_t a, std::size_t b) const { return data_[a * dim_ + b]; }
  const std::vector<Complex>& data() const noexcept { return data_; }

  /// rho -> U rho U^dagger with U = exp(-i theta G / 2), G a Pauli string.
  void apply_rotation(const PauliString& g, double theta) {
    if (g.is_identity()) return;
    if (g.x == 0) {
      apply_diagonal_rotation(g, theta);
      return;
    }
    if (std::popcount(g.x | g.z) == 1) {
      apply_single_qubit_rotation(g, theta);
      return;
    }
    const double c = std::cos(theta / 2);
    const double s = std::sin(theta / 2);
    const double cc = c * c;
    const double ss = s * s;
    const Complex ics{0.0, c * s};
    const auto phases = phase_table(g);
    std::vector<Complex> out(data_.size());
    for (std::size_t a = 0; a < dim_; ++a) {
      const std::size_t ax = a ^ g.x;
      const Complex pa = phases[ax];
      for (std::size_t b = 0; b < dim_; ++b) {
        const std::size_t bx = b ^ g.x;
        const Complex rho_ab = data_[a * dim_ + b];
        // G rho G has entries (-1)^{popcount((a^b)&z)} rho_{a^x,b^x}
        const double sign = (std::popcount(static_cast<std::uint32_t>((a ^ b) & g.z)) & 1) ? -1.0 : 1.0;
        const Complex g_rho_g = sign * data_[ax * dim_ + bx];
        const Complex rho_g = data_[a * dim_ + bx] * phases[b];
        const Complex g_rho = pa * data_[ax * dim_ + b];
        out[a * dim_ + b] = cc * rho_ab + ss * g_rho_g + ics * (rho_g - g_rho);
      }
    }
    data_.swap(out);
  }

  /// rho -> P rho P for a Pauli string P.
  void apply_pauli(const PauliString& p) {
    if (p.is_identity()) return;
    std::vector<Complex> out(data_.size());
    for (std::size_t a = 0; a < dim_; ++a) {
      const std::size_t ax = a ^ p.x;
      for (std::size_t b = 0; b < dim_; ++b) {
        const double sign = (std::popcount(static_cast<std::uint32_t>((a ^ b) & p.z)) & 1) ? -1.0 : 1.0;
        out[a * dim_ + b] = sign * data_[ax * dim_ + (b ^ p.x)];
      }
    }
    data_.swap(out);
  }

  /// Single-qubit depolarising channel (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z).
  void apply_depolarising(std::size_t qubit, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("depolarising strength must lie in [0, 1]");
    if (qubit >= n_) throw InvalidArgument("qubit index out of range");
    if (p == 0.0) return;
    const std::size_t m = std::size_t{1} << (n_ - 1 - qubit);
    const double keep = 1.0 - 2.0 * p / 3.0;
    const double flip = 2.0 * p / 3.0;
    const double off = 1.0 - 4.0 * p / 3.0;
    std::vector<Complex> out(data_.size());
    for (std::size_t a = 0; a < dim_; ++a) {
      for (std::size_t b = 0; b < dim_; ++b) {
        const Complex v = data_[a * dim_ + b];
        if (((a ^ b) & m) == 0) {
          out[a * dim_ + b] = keep * v + flip * data_[(a ^ m) * dim_ + (b ^ m)];
        } else {
          out[a * dim_ + b] = off * v;
        }
      }
    }
    data_.swap(out);
  }

  /// Tr[P rho].
  Complex expectation(const PauliString& p) const {
    Complex acc{0, 0};
    for (std::size_t b = 0; b < dim_; ++b) {
      const std::size_t bx = b ^ p.x;
      acc += p.phase(static_cast<std::uint32_t>(bx)) * data_[bx * dim_ + b];
    }
    return acc;
  }

  Complex trace() const {
    Complex t{0, 0};
    for (std::size_t a = 0; a < dim_; ++a) t += at(a, a);
    return t;
  }

  /// max |rho_ab - conj(rho_ba)|.
  double hermiticity_error() const {
    double e = 0.0;
    for (std::size_t a = 0; a < dim_; ++a) {
      for (std::size_t b = 0; b < dim_; ++b) e = std::max(e, std::abs(at(a, b) - std::conj(at(b, a))));
    }
    return e;
  }

 private:
  // Z-type generator: U is diagonal with entries exp(-i theta z_a / 2).
  void apply_diagonal_rotation(const PauliString& g, double theta) {
    const Complex plus = std::polar(1.0, -theta / 2);
    const Complex minus = std::conj(plus);
    std::vector<Complex> u(dim_);
    for (std::size_t a = 0; a < dim_; ++a) {
      u[a] = (std::popcount(static_cast<std::uint32_t>(a & g.z)) & 1) ? minus : plus;
    }
    for (std::size_t a = 0; a < dim_; ++a) {
      Complex* row = &data_[a * dim_];
      for (std::size_t b = 0; b < dim_; ++b) row[b] *= u[a] * std::conj(u[b]);
    }
  }

  // One non-identity factor: apply the 2x2 unitary to rows, then columns.
  void apply_single_qubit_rotation(const PauliString& g, double theta) {
    const std::uint32_t m = g.x | g.z;
    const double c = std::cos(theta / 2);
    const double s = std::sin(theta / 2);
    // U = c I - i s G restricted to the qubit, basis (bit 0, bit 1).
    Complex u00{c, 0}, u01{0, 0}, u10{0, 0}, u11{c, 0};
    if (g.x && g.z) {  // Y
      u01 = {-s, 0};
      u10 = {s, 0};
    } else if (g.x) {  // X
      u01 = {0, -s};
      u10 = {0, -s};
    } else {  // Z
      u00 = {c, -s};
      u11 = {c, s};
    }
    for (std::size_t a = 0; a < dim_; ++a) {
      if (a & m) continue;
      Complex* r0 = &data_[a * dim_];
      Complex* r1 = &data_[(a | m) * dim_];
      for (std::size_t b = 0; b < dim_; ++b) {
        const Complex x0 = r0[b];
        const Complex x1 = r1[b];
        r0[b] = u00 * x0 + u01 * x1;
        r1[b] = u10 * x0 + u11 * x1;
      }
    }
    const Complex v00 = std::conj(u00), v01 = std::conj(u10), v10 = std::conj(u01), v11 = std::conj(u11);
    for (std::size_t a = 0; a < dim_; ++a) {
      Complex* row = &data_[a * dim_];
      for (std::size_t b = 0; b < dim_; ++b) {
        if (b & m) continue;
        const Complex x0 = row[b];
        const Complex x1 = row[b | m];
        row[b] = x0 * v00 + x1 * v10;
        row[b | m] = x0 * v01 + x1 * v11;
      }
    }
  }

  static std::vector<Complex> phase_table(const PauliString& g) {
    std::vector<Complex> t(std::size_t{1} << g.n);
    for (std::size_t b = 0; b < t.size(); ++b) t[b] = g.phase(static_cast<std::uint32_t>(b));
    return t;
  }

  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<Complex> data_;
};

}  // namespace qpdstrat
