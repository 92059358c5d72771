#include <vector>

#include <gtest/gtest.h>

#include "ntvml/random.hpp"
#include "ntvml/voting.hpp"

using namespace ntvml;
using namespace ntvml::voting;

namespace {

std::vector<std::uint8_t> votes_of(unsigned mask, std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (mask >> i) & 1u;
  return v;
}

}  // namespace

TEST(Majority, StrictHalf) {
  EXPECT_EQ(majority(std::vector<std::uint8_t>{1, 0}), 0);
  EXPECT_EQ(majority(std::vector<std::uint8_t>{1, 1, 0}), 1);
  EXPECT_EQ(majority(std::vector<std::uint8_t>{1}), 1);
  EXPECT_THROW(majority(std::vector<std::uint8_t>{}), InvalidArgument);
}

TEST(Voters, EqualWeightsReduceToMajorityExhaustively) {
  for (std::size_t n = 1; n <= 9; ++n) {
    const VoterWeights w(std::vector<double>(n, 0.7));
    for (unsigned m = 0; m < (1u << n); ++m) {
      const auto v = votes_of(m, n);
      EXPECT_EQ(weighted(v, w), majority(v)) << n << " " << m;
      EXPECT_EQ(combine(v, VoterKind::Weighted, w), majority(v));
    }
  }
}

TEST(Voters, ZeroErrorRatesReduceToOobWeightsExhaustively) {
  Rng rng(3);
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<double> acc(n);
    for (auto& a : acc) a = 0.5 + 0.5 * rng.uniform();
    const VoterWeights oob(acc);
    const auto ew = error_weights(acc, std::vector<double>(n, 0.0));
    EXPECT_EQ(ew.raw, oob.raw);
    for (unsigned m = 0; m < (1u << n); ++m) {
      const auto v = votes_of(m, n);
      EXPECT_EQ(combine(v, VoterKind::ErrorWeighted, ew), combine(v, VoterKind::Weighted, oob));
    }
  }
}

TEST(Voters, MapVoteOnBinaryLabelsMatchesWeighted) {
  Rng rng(4);
  const std::vector<int> labels{0, 1};
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<double> p(n);
    for (auto& x : p) x = static_cast<double>(1 + rng.index(4));  // small integers make exact ties
    const VoterWeights w(p);
    for (unsigned m = 0; m < (1u << n); ++m) {
      const auto v = votes_of(m, n);
      const std::vector<int> iv(v.begin(), v.end());
      EXPECT_EQ(map_vote(iv, w, labels), weighted(v, w));
    }
  }
}

TEST(Voters, MapVoteMulticlassSmallestLabelOnTie) {
  const VoterWeights w({1.0, 1.0, 2.0, 0.5});
  EXPECT_EQ(map_vote(std::vector<int>{3, 3, 1, 2}, w, std::vector<int>{1, 2, 3}), 1);
  EXPECT_EQ(map_vote(std::vector<int>{3, 3, 1, 3}, w, std::vector<int>{1, 2, 3}), 3);
  EXPECT_THROW(map_vote(std::vector<int>{4, 3, 1, 3}, w, std::vector<int>{1, 2, 3}), InvalidArgument);
}

TEST(ErrorWeights, SpotValues) {
  auto p = [](double acc, double pe) { return error_weights(std::vector<double>{acc}, std::vector<double>{pe}).raw[0]; };
  EXPECT_DOUBLE_EQ(p(0.9, 0.0), 0.9);
  EXPECT_DOUBLE_EQ(p(0.9, 0.1), 0.82);
  EXPECT_DOUBLE_EQ(p(0.9, 0.5), 0.5);
  EXPECT_NEAR(p(0.9, 1.0), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(p(0.6, 0.2), 0.56);
  EXPECT_DOUBLE_EQ(p(1.0, 0.25), 0.75);
  EXPECT_THROW(p(1.1, 0.0), InvalidArgument);
  EXPECT_THROW(p(0.5, -0.1), InvalidArgument);
}

TEST(ErrorWeights, SymmetryAndHalfRateProperties) {
  Rng rng(5);
  for (int k = 0; k < 10000; ++k) {
    const double acc = rng.uniform(), pe = rng.uniform();
    auto p = [](double a, double e) { return error_weights(std::vector<double>{a}, std::vector<double>{e}).raw[0]; };
    EXPECT_NEAR(p(acc, pe), p(1.0 - acc, 1.0 - pe), 1e-12);
    EXPECT_NEAR(p(acc, 0.5), 0.5, 1e-15);
    EXPECT_GE(p(acc, pe), std::min(acc, 1.0 - acc) - 1e-15);
    EXPECT_LE(p(acc, pe), std::max(acc, 1.0 - acc) + 1e-15);
  }
}

TEST(Combine, DegenerateWeightsFallBackToMajority) {
  const VoterWeights zero(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_TRUE(zero.degenerate());
  const std::vector<std::uint8_t> v{1, 1, 0};
  bool fell_back = false;
  EXPECT_EQ(combine(v, VoterKind::Weighted, zero, &fell_back), 1);
  EXPECT_TRUE(fell_back);
  EXPECT_THROW(weighted(v, zero), DegenerateWeights);
  const auto ew = error_weights(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0});
  EXPECT_TRUE(ew.degenerate());
  EXPECT_THROW(VoterWeights(std::vector<double>{-0.1}), InvalidArgument);
}

TEST(Weighted, WeightOutvotesHeadcount) {
  const VoterWeights w({0.9, 0.2, 0.2, 0.2});
  EXPECT_EQ(weighted(std::vector<std::uint8_t>{1, 0, 0, 0}, w), 1);
  EXPECT_EQ(majority(std::vector<std::uint8_t>{1, 0, 0, 0}), 0);
  EXPECT_THROW(weighted(std::vector<std::uint8_t>{1, 0}, w), InvalidArgument);
}
