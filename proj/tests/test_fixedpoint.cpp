#include <cfenv>
#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "ntvml/fixedpoint.hpp"
#include "ntvml/random.hpp"

using namespace ntvml;
using namespace ntvml::fixedpoint;

namespace {

// Oracle: all operands here have at most 16 bits, so products and sums are
// exact in double; std::nearbyint rounds ties to even in the default mode.
std::int64_t oracle_round(double value, const FixedFormat& out) {
  const double r = std::nearbyint(std::ldexp(value, out.frac_bits));
  if (r > static_cast<double>(out.max_code())) return out.max_code();
  if (r < static_cast<double>(out.min_code())) return out.min_code();
  return static_cast<std::int64_t>(r);
}

FixedFormat random_format(Rng& rng, int max_bits = 16) {
  const int b = 2 + static_cast<int>(rng.index(static_cast<std::uint64_t>(max_bits - 1)));
  const int f = static_cast<int>(rng.index(static_cast<std::uint64_t>(b)));
  return {b, f};
}

FixedWord random_word(Rng& rng, const FixedFormat& f) {
  const auto span = static_cast<std::uint64_t>(f.max_code() - f.min_code() + 1);
  return {f.min_code() + static_cast<std::int64_t>(rng.index(span)), f};
}

}  // namespace

TEST(FixedFormat, RejectsInvalidShapes) {
  EXPECT_THROW(FixedFormat(1, 0), InvalidArgument);
  EXPECT_THROW(FixedFormat(33, 0), InvalidArgument);
  EXPECT_THROW(FixedFormat(8, 8), InvalidArgument);
  EXPECT_THROW(FixedFormat(8, -1), InvalidArgument);
  EXPECT_NO_THROW(FixedFormat(32, 31));
}

TEST(FixedFormat, ParseRoundTrip) {
  for (int b = 2; b <= 32; ++b)
    for (int f = 0; f < b; ++f) EXPECT_EQ(parse_format(to_string(FixedFormat(b, f))), FixedFormat(b, f));
  for (const char* bad : {"", "Q", "Q8", "Q8.", "Q.7", "8.7", "Q8.7x", "Q8.8", "Q-1.0"})
    EXPECT_THROW(parse_format(bad), InvalidArgument) << bad;
}

TEST(Quantize, RoundsHalfToEven) {
  const FixedFormat q(8, 2);  // ulp 0.25
  EXPECT_EQ(quantize(0.125, q).code(), 0);   // 0.5 ulp -> 0 (even)
  EXPECT_EQ(quantize(0.375, q).code(), 2);   // 1.5 ulp -> 2
  EXPECT_EQ(quantize(0.625, q).code(), 2);   // 2.5 ulp -> 2
  EXPECT_EQ(quantize(-0.125, q).code(), 0);
  EXPECT_EQ(quantize(-0.375, q).code(), -2);
  EXPECT_EQ(quantize(0.13, q).code(), 1);
}

TEST(Quantize, Saturates) {
  const FixedFormat q(8, 7);
  EXPECT_EQ(quantize(1.0, q).code(), 127);
  EXPECT_EQ(quantize(1e9, q).code(), 127);
  EXPECT_EQ(quantize(-1.0, q).code(), -128);
  EXPECT_EQ(quantize(-1e9, q).code(), -128);
  EXPECT_EQ(quantize(INFINITY, q).code(), 127);
  EXPECT_THROW(quantize(NAN, q), InvalidArgument);
}

TEST(Quantize, MatchesOracleOnRandomReals) {
  Rng rng(11);
  for (int i = 0; i < 20000; ++i) {
    const auto f = random_format(rng);
    const double x = (rng.uniform() * 2.0 - 1.0) * std::ldexp(1.0, f.total_bits - f.frac_bits);
    EXPECT_EQ(quantize(x, f).code(), oracle_round(x, f)) << x << " " << to_string(f);
  }
}

TEST(FixedWord, FromBitsSignExtendsEveryCode) {
  for (int b : {2, 4, 8, 10}) {
    const FixedFormat f(b, b - 1);
    for (std::int64_t c = f.min_code(); c <= f.max_code(); ++c) {
      const FixedWord w(c, f);
      EXPECT_EQ(FixedWord::from_bits(w.bits(), f), w);
      EXPECT_EQ(w.sign_bit(), c < 0);
    }
  }
  EXPECT_THROW(FixedWord(128, FixedFormat(8, 7)), InvalidArgument);
}

TEST(Requantize, MatchesOracle) {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const auto a = random_format(rng), b = random_format(rng);
    const auto w = random_word(rng, a);
    EXPECT_EQ(requantize(w, b).code(), oracle_round(to_real(w), b));
  }
}

TEST(Mac, SingleRoundingMatchesExactOracle) {
  ASSERT_EQ(std::fegetround(), FE_TONEAREST);
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const auto fa = random_format(rng, 12), fb = random_format(rng, 12), fc = random_format(rng, 16),
               fo = random_format(rng, 16);
    const auto a = random_word(rng, fa), b = random_word(rng, fb), acc = random_word(rng, fc);
    const double exact = to_real(acc) + to_real(a) * to_real(b);
    ASSERT_EQ(mac(acc, a, b, fo).code(), oracle_round(exact, fo))
        << to_real(acc) << " + " << to_real(a) << " * " << to_real(b) << " -> " << to_string(fo);
  }
}

TEST(Mac, HalfwayCaseRoundsToEven) {
  const FixedFormat q(8, 1);
  // 0 + 0.5 * 0.5 = 0.25 = half an ulp of Q8.1 -> 0; 0.5 + 0.5*0.5 = 0.75 -> 1.0
  const FixedWord half(1, q), zero(0, q);
  EXPECT_EQ(mac(zero, half, half, q).code(), 0);
  EXPECT_EQ(mac(half, half, half, q).code(), 2);
}

TEST(Accumulator, RoundsOnceAtReadout) {
  Rng rng(8);
  for (int trial = 0; trial < 2000; ++trial) {
    const FixedFormat in(8, 6), coef(8, 7), out = random_format(rng, 16);
    Accumulator acc(13);
    double exact = 0.0;
    const int n = 1 + static_cast<int>(rng.index(31));
    for (int k = 0; k < n; ++k) {
      const auto a = random_word(rng, coef), b = random_word(rng, in);
      acc.mac(a, b);
      exact += to_real(a) * to_real(b);
    }
    EXPECT_EQ(acc.mac_count(), static_cast<std::size_t>(n));
    EXPECT_EQ(acc.result(out).code(), oracle_round(exact, out));
  }
}

TEST(Accumulator, RejectsFinerOperands) {
  Accumulator acc(4);
  EXPECT_THROW(acc.add(FixedWord(1, FixedFormat(8, 7))), InvalidArgument);
}

TEST(Compare, EqualityCountsAsOne) {
  const FixedFormat q(8, 7);
  EXPECT_EQ(compare(FixedWord(5, q), FixedWord(5, q)), 1);
  EXPECT_EQ(compare(FixedWord(4, q), FixedWord(5, q)), 0);
  EXPECT_EQ(compare(FixedWord(-128, q), FixedWord(127, q)), 0);
  EXPECT_THROW(compare(FixedWord(0, q), FixedWord(0, FixedFormat(8, 6))), InvalidArgument);
}
