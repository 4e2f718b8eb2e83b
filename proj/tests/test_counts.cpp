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
#include <map>
#include <sstream>

#include "support.hpp"

namespace qpdstrat {
namespace {

using testing::brute_counts_weights;
using testing::for_each_configuration;
using testing::random_qpd;

ProductQpd homogeneous(std::size_t nu, std::vector<double> c) {
  return pad_and_assemble(std::vector<LocalQpd>(nu, build_local_qpd(std::move(c))));
}

TEST(CountsOf, Examples) {
  EXPECT_EQ(counts_of(Configuration{{0, 0, 0}}, 2).counts, (std::vector<int>{3, 0}));
  EXPECT_EQ(counts_of(Configuration{{0, 2, 2, 1}}, 4).counts, (std::vector<int>{1, 1, 2, 0}));
  EXPECT_EQ(counts_of(Configuration{{2, 1, 2, 0}}, 4), counts_of(Configuration{{0, 2, 2, 1}}, 4));
  EXPECT_THROW(counts_of(Configuration{{0, 4}}, 4), InvalidArgument);
}

TEST(StratumCount, Examples) {
  EXPECT_EQ(stratum_count(7, 4), 120u);
  EXPECT_EQ(stratum_count(7, 1), 1u);
  for (std::uint64_t nu = 0; nu < 50; ++nu) EXPECT_EQ(stratum_count(nu, 2), nu + 1);
  EXPECT_EQ(stratum_count(24, 3), 325u);
  EXPECT_THROW(stratum_count(5, 0), InvalidArgument);
  EXPECT_THROW(stratum_count(100000, 40), Overflow);
}

TEST(StratumCount, CumulativeTableSize) {
  for (std::uint64_t nu = 0; nu < 12; ++nu)
    for (std::uint64_t d = 1; d < 5; ++d) {
      std::uint64_t sum = 0;
      for (std::uint64_t i = 0; i <= nu; ++i) sum += stratum_count(i, d);
      EXPECT_EQ(cumulative_state_count(nu, d), sum);
    }
}

TEST(CompositionRanker, RankIsTheLexicographicPosition) {
  for (std::size_t d = 1; d <= 4; ++d) {
    CompositionRanker ranker(6, d);
    for (std::size_t total = 0; total <= 6; ++total) {
      std::vector<int> m(d, 0);
      m[d - 1] = static_cast<int>(total);
      std::uint64_t expected = 0;
      std::vector<int> prev;
      do {
        EXPECT_EQ(ranker.rank(m, total), expected);
        if (!prev.empty()) EXPECT_LT(prev, m);
        prev = m;
        ++expected;
      } while (CompositionRanker::next(m));
      EXPECT_EQ(expected, ranker.count(total));
    }
  }
}

TEST(ForwardDp, Binomial) {
  const auto t = forward_dp(homogeneous(2, {0.5, 0.5}));
  const auto w = t.final_weight_map();
  EXPECT_DOUBLE_EQ(w.at(CountsVector{{2, 0}}), 0.25);
  EXPECT_DOUBLE_EQ(w.at(CountsVector{{1, 1}}), 0.5);
  EXPECT_DOUBLE_EQ(w.at(CountsVector{{0, 2}}), 0.25);
}

TEST(ForwardDp, HandComputedZeroStratum) {
  const auto qpd = pad_and_assemble({build_local_qpd({1.0, 0.0}), build_local_qpd({0.5, 0.5})});
  const auto w = forward_dp(qpd).final_weight_map();
  EXPECT_DOUBLE_EQ(w.at(CountsVector{{2, 0}}), 0.5);
  EXPECT_DOUBLE_EQ(w.at(CountsVector{{1, 1}}), 0.5);
  EXPECT_EQ(w.at(CountsVector{{0, 2}}), 0.0);
}

TEST(ForwardDp, PecLegCount) {
  const double lambda = 1.0 - 4.0 * 0.01 / 3.0;
  const double a = (lambda + 3) / (4 * lambda), b = (lambda - 1) / (4 * lambda);
  const auto t = forward_dp(homogeneous(7, {a, b, b, b}));
  EXPECT_EQ(t.size(), 120u);
  EXPECT_NEAR(compensated_sum(t.weights()), 1.0, 1e-12);
}

TEST(ForwardDp, MatchesBruteForce) {
  Stream rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t nu = 1 + rng.below(8);
    const std::size_t d = 1 + rng.below(3);
    const auto qpd = random_qpd(rng, nu, d);
    const auto t = forward_dp(qpd);
    const auto brute = brute_counts_weights(qpd);
    ASSERT_EQ(t.size(), stratum_count(nu, qpd.width()));
    for (std::size_t s = 0; s < t.size(); ++s) {
      const auto it = brute.find(t.key(s));
      const double expected = it == brute.end() ? 0.0 : it->second;
      EXPECT_NEAR(t.weight(s), expected, 1e-10);
    }
  }
}

TEST(ForwardDp, EveryLayerIsADistribution) {
  Stream rng(7);
  const auto qpd = random_qpd(rng, 9, 3);
  const auto t = forward_dp(qpd);
  for (std::size_t i = 0; i <= qpd.nu(); ++i) {
    EXPECT_LE(t.layer_size(i), stratum_count(i, qpd.width()));
    KahanSum sum;
    std::vector<int> m(qpd.width(), 0);
    m.back() = static_cast<int>(i);
    do {
      const double w = t.layer_probability(i, CountsVector{m});
      EXPECT_GE(w, 0.0);
      sum.add(w);
    } while (CompositionRanker::next(m));
    EXPECT_NEAR(sum.value(), 1.0, 1e-10);
  }
  EXPECT_EQ(t.layer_probability(0, CountsVector{std::vector<int>(qpd.width(), 0)}), 1.0);
}

TEST(ForwardDp, RenormalisationAgreesWithPlainLinearSpace) {
  Stream rng(31);
  const auto qpd = random_qpd(rng, 12, 3);
  const auto plain = forward_dp(qpd);
  DpOptions opts;
  opts.renormalize = true;
  const auto scaled = forward_dp(qpd, opts);
  EXPECT_TRUE(scaled.renormalized());
  for (std::size_t s = 0; s < plain.size(); ++s) EXPECT_NEAR(scaled.weight(s), plain.weight(s), 1e-14);
}

TEST(ForwardDp, StateCapIsEnforced) {
  Stream rng(2);
  const auto qpd = random_qpd(rng, 30, 3);
  DpOptions opts;
  opts.state_cap = 100;
  try {
    forward_dp(qpd, opts);
    FAIL() << "expected ResourceLimit";
  } catch (const ResourceLimit& e) {
    EXPECT_NE(std::string(e.what()).find("100"), std::string::npos);
  }
}

TEST(ConditionalSample, SymmetricStratum) {
  const auto t = forward_dp(homogeneous(2, {0.5, 0.5}));
  const CountsVector m{{1, 1}};
  EXPECT_NEAR(t.conditional_probability(Configuration{{0, 1}}), 0.5, 1e-15);
  EXPECT_NEAR(t.conditional_probability(Configuration{{1, 0}}), 0.5, 1e-15);
  Stream rng(4);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(counts_of(t.conditional_sample(m, rng), 2), m);
}

TEST(ConditionalSample, ForcedStratum) {
  Stream rng(1);
  const auto qpd = random_qpd(rng, 5, 3, false);
  const auto t = forward_dp(qpd);
  for (int k = 0; k < 50; ++k) {
    EXPECT_EQ(t.conditional_sample(CountsVector{{5, 0, 0}}, rng).indices, std::vector<int>(5, 0));
  }
}

TEST(ConditionalSample, BayesOnTwoOrderings) {
  const auto qpd = pad_and_assemble({build_local_qpd({0.9, 0.1}), build_local_qpd({0.5, 0.5})});
  const auto t = forward_dp(qpd);
  EXPECT_NEAR(t.conditional_probability(Configuration{{0, 1}}), 0.9, 1e-15);
  EXPECT_NEAR(t.conditional_probability(Configuration{{1, 0}}), 0.1, 1e-15);
}

TEST(ConditionalSample, EmptyStratumIsAnError) {
  const auto qpd = pad_and_assemble({build_local_qpd({1.0, 0.0}), build_local_qpd({0.5, 0.5})});
  const auto t = forward_dp(qpd);
  Stream rng(1);
  EXPECT_THROW(t.conditional_sample(CountsVector{{0, 2}}, rng), EmptyStratum);
  EXPECT_THROW(t.conditional_sample(CountsVector{{1, 2}}, rng), InvalidArgument);
}

TEST(ConditionalSample, AnalyticLawIsBayes) {
  Stream rng(77);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t nu = 1 + rng.below(6);
    const std::size_t d = 1 + rng.below(3);
    const auto qpd = random_qpd(rng, nu, d);
    const auto t = forward_dp(qpd);
    const auto brute = brute_counts_weights(qpd);
    for_each_configuration(qpd, [&](const Configuration& l) {
      const double p = qpd.probability(l);
      if (p == 0.0) {
        EXPECT_EQ(t.conditional_probability(l), 0.0);
        return;
      }
      const double wm = brute.at(counts_of(l, qpd.width()).counts);
      EXPECT_NEAR(t.conditional_probability(l), p / wm, 1e-10);
    });
  }
}

TEST(ConditionalSample, MixtureIdentity) {
  Stream rng(8);
  const auto qpd = random_qpd(rng, 6, 3);
  const auto t = forward_dp(qpd);
  for_each_configuration(qpd, [&](const Configuration& l) {
    const auto s = t.index_of(counts_of(l, qpd.width()));
    ASSERT_TRUE(s.has_value());
    EXPECT_NEAR(t.weight(*s) * t.conditional_probability(l), qpd.probability(l), 1e-10);
  });
}

TEST(ConditionalSample, EmpiricalFrequenciesMatchExactLaw) {
  Stream rng(12);
  const auto qpd = random_qpd(rng, 6, 3, false);
  const auto t = forward_dp(qpd);
  const CountsVector m{{2, 2, 2}};
  const int n = 1000000;
  std::map<std::vector<int>, int> freq;
  Stream draw(99);
  for (int k = 0; k < n; ++k) ++freq[t.conditional_sample(m, draw).indices];
  double tv = 0.0;
  double covered = 0.0;
  for (const auto& [l, c] : freq) {
    const double p = t.conditional_probability(Configuration{l});
    tv += std::abs(c / static_cast<double>(n) - p);
    covered += p;
  }
  tv += 1.0 - covered;
  EXPECT_LT(tv / 2, 5e-3);
}

TEST(ParityDp, AllPositiveLocals) {
  const auto t = parity_dp(homogeneous(4, {0.2, 0.8}));
  ASSERT_EQ(t.size(), 5u);
  EXPECT_DOUBLE_EQ(t.weight(4), 1.0);
  EXPECT_EQ(t.key(4), (StratumKey{4, 0}));
}

TEST(ParityDp, Binomial) {
  const auto t = parity_dp(homogeneous(2, {0.5, -0.5}));
  EXPECT_DOUBLE_EQ(t.weight(2), 0.25);
  EXPECT_DOUBLE_EQ(t.weight(1), 0.5);
  EXPECT_DOUBLE_EQ(t.weight(0), 0.25);
}

TEST(ParityDp, IsACoarseningOfCounts) {
  Stream rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t d = 2 + rng.below(2);
    // Sign pattern shared by every position so that counts determine parity.
    std::vector<double> signs(d);
    for (auto& s : signs) s = rng.uniform() < 0.5 ? 1.0 : -1.0;
    std::vector<LocalQpd> locals;
    const std::size_t nu = 1 + rng.below(8);
    for (std::size_t i = 0; i < nu; ++i) {
      std::vector<double> c(d);
      for (std::size_t k = 0; k < d; ++k) c[k] = signs[k] * (0.05 + rng.uniform());
      locals.push_back(build_local_qpd(c));
    }
    const auto qpd = pad_and_assemble(locals);
    const auto counts = forward_dp(qpd);
    const auto parity = parity_dp(qpd);
    std::vector<double> merged(nu + 1, 0.0);
    for (std::size_t s = 0; s < counts.size(); ++s) {
      int plus = 0;
      for (std::size_t k = 0; k < d; ++k)
        if (signs[k] > 0) plus += counts.key(s)[k];
      merged[static_cast<std::size_t>(plus)] += counts.weight(s);
    }
    for (std::size_t s = 0; s <= nu; ++s) EXPECT_NEAR(parity.weight(s), merged[s], 1e-12);
  }
}

TEST(ParityDp, ConditionalSamplerLawByEnumeration) {
  Stream rng(44);
  const auto qpd = random_qpd(rng, 5, 3, false);
  const auto t = parity_dp(qpd);
  std::map<std::vector<int>, double> exact;
  for_each_configuration(qpd, [&](const Configuration& l) {
    if (parity_of(qpd, l)[0] == 2) exact[l.indices] = qpd.probability(l) / t.weight(2);
  });
  const int n = 400000;
  std::map<std::vector<int>, int> freq;
  Stream draw(1);
  for (int k = 0; k < n; ++k) {
    const auto l = conditional_sample_parity(t, 2, 3, draw);
    ASSERT_EQ(parity_of(qpd, l), (StratumKey{2, 3}));
    ++freq[l.indices];
  }
  double tv = 0.0;
  for (const auto& [l, p] : exact) {
    const auto it = freq.find(l);
    tv += std::abs((it == freq.end() ? 0 : it->second) / static_cast<double>(n) - p);
  }
  EXPECT_LT(tv / 2, 1e-2);
}

TEST(ConcentrationProfile, Examples) {
  const std::vector<double> one = {1.0};
  const std::vector<StratumKey> one_key = {{3}};
  EXPECT_EQ(concentration_profile(one, one_key, 0.5).t_q, 1u);
  EXPECT_EQ(concentration_profile(one, one_key, 0.999).t_q, 1u);

  const std::vector<double> w = {0.05, 0.9, 0.05};
  const std::vector<StratumKey> keys = {{0, 2}, {1, 1}, {2, 0}};
  const auto prof = concentration_profile(w, keys, 0.99);
  EXPECT_EQ(prof.t_q, 3u);
  EXPECT_EQ(prof.order, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_NEAR(prof.cumulative[0], 0.9, 1e-15);
  EXPECT_NEAR(prof.cumulative[1], 0.95, 1e-15);
  EXPECT_NEAR(prof.cumulative[2], 1.0, 1e-15);
  EXPECT_THROW(concentration_profile(w, keys, 1.0), InvalidArgument);
}

TEST(WeightsDump, CsvRowsAreLexicographic) {
  const auto t = forward_dp(homogeneous(2, {0.5, 0.5}));
  std::ostringstream os;
  t.write_csv(os);
  EXPECT_EQ(os.str(), "m_1,m_2,w_m\n0,2,0.25\n1,1,0.5\n2,0,0.25\n");
  const auto j = t.weights_json();
  EXPECT_EQ(j["weights"].size(), 3u);
}

}  // namespace
}  // namespace qpdstrat
