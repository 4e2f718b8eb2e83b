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
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

namespace qpdstrat {
namespace {

using namespace qpdstrat::testing;

Mat random_state(std::size_t n, Stream& rng) {
  // rho = A A^dagger / Tr for a random complex A.
  const std::size_t dim = std::size_t{1} << n;
  Mat a = zeros(dim);
  for (auto& row : a)
    for (auto& x : row) x = Complex{rng.uniform() - 0.5, rng.uniform() - 0.5};
  Mat r = mul(a, dagger(a));
  Complex tr = 0;
  for (std::size_t i = 0; i < dim; ++i) tr += r[i][i];
  for (auto& row : r)
    for (auto& x : row) x /= tr;
  return r;
}

TEST(PauliString, ParseAndLabel) {
  const auto p = PauliString::parse("XIYZ");
  EXPECT_EQ(p.label(), "XIYZ");
  EXPECT_EQ(p.y_count(), 1);
  EXPECT_EQ(PauliString::single(3, 1, 2).label(), "IYI");
  EXPECT_THROW(PauliString::parse("XQ"), InvalidArgument);
}

TEST(DensityMatrix, RotationsMatchDenseConjugation) {
  Stream rng(3);
  for (const std::string label : {"X", "Y", "Z", "XI", "IZ", "ZZ", "XY", "YZX", "ZIZ", "IYI", "XXX"}) {
    const std::size_t n = label.size();
    const Mat rho = random_state(n, rng);
    const double theta = 4 * rng.uniform() - 2;
    DensityMatrix r = from_mat(rho, n);
    r.apply_rotation(PauliString::parse(label), theta);
    EXPECT_LT(max_diff(to_mat(r), conj_by(rotation_matrix(label, theta), rho)), 1e-13) << label;
  }
}

TEST(DensityMatrix, PauliConjugationMatchesDense) {
  Stream rng(4);
  for (const std::string label : {"X", "Y", "Z", "XY", "ZYX", "IIY"}) {
    const std::size_t n = label.size();
    const Mat rho = random_state(n, rng);
    DensityMatrix r = from_mat(rho, n);
    r.apply_pauli(PauliString::parse(label));
    EXPECT_LT(max_diff(to_mat(r), conj_by(pauli_matrix(label), rho)), 1e-14) << label;
  }
}

TEST(DensityMatrix, DepolarisingMatchesKrausSum) {
  Stream rng(5);
  for (std::size_t n = 1; n <= 3; ++n)
    for (std::size_t q = 0; q < n; ++q) {
      const Mat rho = random_state(n, rng);
      const double p = 0.3 * rng.uniform();
      DensityMatrix r = from_mat(rho, n);
      r.apply_depolarising(q, p);
      Mat expected = zeros(rho.size());
      expected = add(expected, rho, 1 - p);
      for (char c : {'X', 'Y', 'Z'}) expected = add(expected, conj_by(pauli_matrix(single_label(n, q, c)), rho), p / 3);
      EXPECT_LT(max_diff(to_mat(r), expected), 1e-14);
    }
}

TEST(DensityMatrix, ExpectationMatchesTrace) {
  Stream rng(6);
  const Mat rho = random_state(3, rng);
  const DensityMatrix r = from_mat(rho, 3);
  for (const std::string label : {"XII", "IYZ", "ZZZ", "YXI"}) {
    const Mat prod = mul(pauli_matrix(label), rho);
    Complex tr = 0;
    for (std::size_t i = 0; i < prod.size(); ++i) tr += prod[i][i];
    EXPECT_LT(std::abs(r.expectation(PauliString::parse(label)) - tr), 1e-14);
  }
}

TEST(DensityMatrix, ChannelsPreserveTraceAndHermiticity) {
  Stream rng(7);
  DensityMatrix r = from_mat(random_state(3, rng), 3);
  for (int k = 0; k < 50; ++k) {
    r.apply_rotation(PauliString::parse(k % 2 ? "ZZI" : "IXI"), rng.uniform());
    r.apply_depolarising(static_cast<std::size_t>(k % 3), 0.1);
    r.apply_pauli(PauliString::single(3, static_cast<std::size_t>(k % 3), k % 4));
    EXPECT_NEAR(r.trace().real(), 1.0, 1e-10);
    EXPECT_LT(std::abs(r.trace().imag()), 1e-10);
    EXPECT_LT(r.hermiticity_error(), 1e-10);
  }
}

TEST(DensityMatrix, QubitCap) {
  EXPECT_THROW(DensityMatrix(9), ResourceLimit);
  EXPECT_NO_THROW(DensityMatrix(8));
}

TEST(DensityMatrix, DepolarisingContractsBlochVector) {
  const double p = 0.2;
  for (char axis : {'X', 'Y', 'Z'}) {
    const Mat rho = add(add(zeros(2), eye(2), 0.5), pauli_matrix(std::string(1, axis)), 0.3);
    DensityMatrix r = from_mat(rho, 1);
    const double before = r.expectation(PauliString::parse(std::string(1, axis))).real();
    r.apply_depolarising(0, p);
    EXPECT_NEAR(r.expectation(PauliString::parse(std::string(1, axis))).real(), (1 - 4 * p / 3) * before, 1e-15);
  }
}

TEST(Tfim, GateCounts) {
  EXPECT_EQ(build_tfim_trotter(3, 1, 0.6, 0.7, 1.0, Boundary::Open).size(), 5u);
  EXPECT_EQ(build_tfim_trotter(6, 2, 0.6, 0.7, 1.0, Boundary::Ring).size(), 24u);
  const auto gates = build_tfim_trotter(4, 2, 0.6, 0.7, 1.0, Boundary::Ring);
  EXPECT_EQ(gates[0].rotation.generator.label(), "XIII");
  EXPECT_NEAR(gates[0].rotation.angle, 2 * 0.6 * 0.5, 1e-15);
  EXPECT_EQ(gates[4].rotation.generator.label(), "ZZII");
  EXPECT_NEAR(gates[4].rotation.angle, 2 * 0.7 * 0.5, 1e-15);
  EXPECT_EQ(gates[7].rotation.generator.label(), "ZIIZ");
  EXPECT_THROW(build_tfim_trotter(1, 1, 0.6, 0.7, 1.0, Boundary::Ring), InvalidArgument);
  EXPECT_THROW(build_tfim_trotter(3, 0, 0.6, 0.7, 1.0, Boundary::Ring), InvalidArgument);
}

TEST(Tfim, LegCounts) {
  const auto obs = PauliString::single(6, 5, 1);
  for (std::size_t L = 1; L <= 4; ++L) {
    const auto gates = build_tfim_trotter(6, L, 0.6, 0.7, 1.0, Boundary::Ring);
    EXPECT_EQ(attach_pai(gates, 6, 5, obs).qpd.nu(), 12 * L);
    EXPECT_EQ(attach_pec(gates, 6, 0.01, obs).qpd.nu(), 18 * L);
  }
  const auto golden = attach_pec(build_tfim_trotter(3, 1, 0.6, 0.7, 1.0, Boundary::Open), 3, 0.01,
                                 PauliString::single(3, 2, 1));
  EXPECT_EQ(golden.qpd.nu(), 7u);
  EXPECT_EQ(golden.qpd.width(), 4u);
}

TEST(Pai, OnGridTargetIsAPointMass) {
  const double delta = 2 * std::numbers::pi / 32;
  const auto g = pai_coefficients(0.0, delta);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
  const auto top = pai_coefficients(std::nextafter(delta, 0.0), delta);
  EXPECT_NEAR(top[0], 0.0, 1e-12);
  EXPECT_NEAR(top[1], 1.0, 1e-12);
  EXPECT_NEAR(top[2], 0.0, 1e-12);
}

TEST(Pai, NormAboveOneOffGrid) {
  const double delta = 2 * std::numbers::pi / 32;
  for (int k = 1; k < 20; ++k) {
    const auto g = pai_coefficients(delta * k / 20.0, delta);
    EXPECT_NEAR(g[0] + g[1] + g[2], 1.0, 1e-14);
    EXPECT_GT(std::abs(g[0]) + std::abs(g[1]) + std::abs(g[2]), 1.0);
  }
}

TEST(Pai, DegenerateGrid) {
  EXPECT_THROW(pai_coefficients(0.5, std::numbers::pi), DegenerateGrid);
  EXPECT_THROW(pai_coefficients(0.5, 0.3), InvalidArgument);
}

TEST(Pai, ReconstructsTheTargetChannel) {
  Stream rng(10);
  for (const std::string label : {"X", "Z", "ZZ", "XI"}) {
    const std::size_t n = label.size();
    for (int bits : {3, 5}) {
      const double theta = 6 * rng.uniform() - 3;
      std::vector<Gate> gates = {{{PauliString::parse(label), theta}, {0}}};
      const auto c = attach_pai(gates, n, bits, PauliString::identity(n));
      ASSERT_EQ(c.locations.size(), 1u);
      const auto& local = c.qpd.local(0);
      Mat mixture = zeros(std::size_t{1} << (2 * n));
      for (std::size_t k = 0; k < 3; ++k) {
        const auto t = transfer_matrix(n, [&](DensityMatrix& r) {
          for (const auto& prim : c.locations[0].options[k]) apply(r, prim);
        });
        mixture = add(mixture, t, local.coefficient(k));
      }
      const auto ideal = transfer_matrix(n, [&](DensityMatrix& r) { r.apply_rotation(PauliString::parse(label), theta); });
      EXPECT_LT(max_diff(mixture, ideal), 1e-12) << label << " bits=" << bits;
    }
  }
}

TEST(Pec, Coefficients) {
  const auto g0 = pec_coefficients(0.0);
  EXPECT_EQ(g0[0], 1.0);
  EXPECT_EQ(g0[1], 0.0);
  const auto g = pec_coefficients(0.01);
  EXPECT_NEAR(g[0], 1.0101351, 5e-8);
  EXPECT_NEAR(g[1], -0.0033784, 5e-8);
  EXPECT_NEAR(std::abs(g[0]) + 3 * std::abs(g[1]), 1.0202703, 5e-8);
  EXPECT_THROW(pec_coefficients(0.75), InvalidArgument);
}

TEST(Pec, InverseUndoesDepolarising) {
  for (double p : {0.01, 0.1, 0.3}) {
    const auto g = pec_coefficients(p);
    Mat inverse = zeros(4);
    for (int P = 0; P < 4; ++P) {
      const auto t = transfer_matrix(1, [&](DensityMatrix& r) { r.apply_pauli(PauliString::single(1, 0, P)); });
      inverse = add(inverse, t, g[static_cast<std::size_t>(P)]);
    }
    const auto noise = transfer_matrix(1, [&](DensityMatrix& r) { r.apply_depolarising(0, p); });
    EXPECT_LT(max_diff(mul(inverse, noise), eye(4)), 1e-12);
  }
}

TEST(Pec, ZeroNoiseIsTheIdealCircuit) {
  const auto gates = build_tfim_trotter(3, 2, 0.6, 0.7, 1.0, Boundary::Ring);
  const auto obs = PauliString::single(3, 0, 3);
  const auto c = attach_pec(gates, 3, 0.0, obs);
  EXPECT_EQ(c.qpd.one_norm(), 1.0);
  const Configuration identity{std::vector<int>(c.qpd.nu(), 0)};
  EXPECT_NEAR(evaluate_configuration(c, identity), evaluate_configuration(ideal_circuit(gates, 3, obs), Configuration{}),
              1e-14);
}

TEST(Evaluate, TrivialCircuits) {
  QpdCircuit empty;
  empty.n = 1;
  empty.observable = PauliString::parse("Z");
  EXPECT_NEAR(evaluate_configuration(empty, Configuration{}), 1.0, 1e-15);
  const auto flip = ideal_circuit({{{PauliString::parse("X"), std::numbers::pi}, {0}}}, 1, PauliString::parse("Z"));
  EXPECT_NEAR(evaluate_configuration(flip, Configuration{}), -1.0, 1e-15);
}

TEST(Evaluate, AllIdentityPecMatchesDirectNoisySimulation) {
  InstanceSpec spec;
  spec.n = 3;
  spec.L = 1;
  spec.boundary = Boundary::Open;
  spec.qpd = "pec";
  const auto c = build_instance(spec);
  // Independent path: dense matrices, noisy gates only.
  Mat rho = zeros(8);
  rho[0][0] = 1.0;
  const auto gates = build_tfim_trotter(3, 1, 0.6, 0.7, 1.0, Boundary::Open);
  for (const auto& g : gates) {
    rho = conj_by(rotation_matrix(g.rotation.generator.label(), g.rotation.angle), rho);
    for (std::size_t q : g.support) {
      Mat out = add(zeros(8), rho, 1 - spec.p);
      for (char c2 : {'X', 'Y', 'Z'}) out = add(out, conj_by(pauli_matrix(single_label(3, q, c2)), rho), spec.p / 3);
      rho = out;
    }
  }
  const Mat prod = mul(pauli_matrix("IIX"), rho);
  const double expected = (prod[0][0] + prod[1][1] + prod[2][2] + prod[3][3] + prod[4][4] + prod[5][5] + prod[6][6] + prod[7][7]).real();
  EXPECT_NEAR(evaluate_configuration(c, Configuration{std::vector<int>(7, 0)}), expected, 1e-13);
}

TEST(Evaluate, PecMixtureRecoversTheIdealExpectation) {
  InstanceSpec spec;
  spec.n = 2;
  spec.L = 1;
  spec.boundary = Boundary::Open;
  spec.qpd = "pec";
  spec.p = 0.05;
  const auto c = build_instance(spec);
  KahanSum mu;
  for_each_configuration(c.qpd, [&](const Configuration& l) { mu.add(c.qpd.coefficient(l) * evaluate_configuration(c, l)); });
  const auto ideal = ideal_circuit(build_tfim_trotter(2, 1, 0.6, 0.7, 1.0, Boundary::Open), 2, spec.observable_string());
  EXPECT_NEAR(mu.value(), evaluate_configuration(ideal, Configuration{}), 1e-12);
}

TEST(Evaluate, PaiMixtureRecoversTheIdealExpectation) {
  InstanceSpec spec;
  spec.n = 2;
  spec.L = 1;
  spec.boundary = Boundary::Open;
  spec.qpd = "pai";
  spec.B_bits = 4;
  const auto c = build_instance(spec);
  KahanSum mu;
  for_each_configuration(c.qpd, [&](const Configuration& l) {
    if (c.qpd.coefficient(l) != 0.0) mu.add(c.qpd.coefficient(l) * evaluate_configuration(c, l));
  });
  const auto ideal = ideal_circuit(build_tfim_trotter(2, 1, 0.6, 0.7, 1.0, Boundary::Open), 2, spec.observable_string());
  EXPECT_NEAR(mu.value(), evaluate_configuration(ideal, Configuration{}), 1e-12);
}

TEST(OutcomeEvaluator, OracleAndShots) {
  const auto qpd = pad_and_assemble({build_local_qpd({1.5, -0.5})});
  auto ev = make_pauli_evaluator(qpd, [](const Configuration&) { return 0.5; });
  Stream rng(1);
  EXPECT_DOUBLE_EQ(ev(Configuration{{0}}, MeasurementModel::oracle(), rng), 1.0);
  EXPECT_DOUBLE_EQ(ev(Configuration{{1}}, MeasurementModel::oracle(), rng), -1.0);
  for (int k = 0; k < 100; ++k) {
    const double y = ev(Configuration{{0}}, MeasurementModel::shots_of(1), rng);
    EXPECT_TRUE(y == 2.0 || y == -2.0);
  }
  const int R = 10000;
  const double y = ev(Configuration{{0}}, MeasurementModel::shots_of(R), rng);
  const double se = 2.0 * std::sqrt((1 - 0.25) / R);
  EXPECT_NEAR(y, 1.0, 4 * se);
}

TEST(OutcomeEvaluator, CircuitEvaluatorIsBoundedAndCached) {
  InstanceSpec spec;
  spec.n = 3;
  spec.L = 1;
  spec.boundary = Boundary::Open;
  spec.qpd = "pec";
  auto circuit = std::make_shared<const QpdCircuit>(build_instance(spec));
  const auto ev = make_outcome_evaluator(circuit);
  Stream rng(2);
  for (int k = 0; k < 2000; ++k) {
    const auto l = circuit->qpd.sample(rng);
    EXPECT_LE(std::abs(ev(l, MeasurementModel::oracle(), rng)), circuit->qpd.one_norm());
    EXPECT_LE(std::abs(ev(l, MeasurementModel::shots_of(3), rng)), circuit->qpd.one_norm() * (1 + 1e-12));
  }
}

TEST(MeanCache, EvictsLeastRecentlyUsed) {
  MeanCache cache(2);
  int calls = 0;
  auto f = [&](const Configuration& l) {
    ++calls;
    return static_cast<double>(l[0]);
  };
  cache.get_or_compute(Configuration{{1}}, f);
  cache.get_or_compute(Configuration{{2}}, f);
  cache.get_or_compute(Configuration{{1}}, f);
  cache.get_or_compute(Configuration{{3}}, f);
  EXPECT_EQ(calls, 3);
  cache.get_or_compute(Configuration{{1}}, f);
  EXPECT_EQ(calls, 3);
  cache.get_or_compute(Configuration{{2}}, f);
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(cache.size(), 2u);
}

TEST(InstanceSpec, JsonRoundTrip) {
  const auto j = nlohmann::json::parse(
      R"({"model":"tfim","n":6,"L":2,"h":0.6,"J":0.7,"t":1.0,"boundary":"ring","qpd":"pai","B_bits":5})");
  const auto s = InstanceSpec::from_json(j);
  EXPECT_EQ(s.n, 6u);
  EXPECT_EQ(s.L, 2u);
  EXPECT_EQ(s.boundary, Boundary::Ring);
  EXPECT_EQ(s.observable_qubit(), 5u);
  EXPECT_EQ(InstanceSpec::from_json(s.to_json()).name(), s.name());
  EXPECT_THROW(InstanceSpec::from_json(nlohmann::json::parse(R"({"qpd":"zne"})")), InvalidArgument);
}

}  // namespace
}  // namespace qpdstrat
