#pragma once

// Two's-complement fixed-point words with saturating, round-to-nearest-even
// arithmetic. Datapath nonidealities are modelled outside this header (by
// XOR-ing error patterns onto stored words); the arithmetic here is ideal.

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

#include "ntvml/errors.hpp"

namespace ntvml::fixedpoint {

/// Q<B>.<F>: B total bits, F of them below the binary point. Always signed.
struct FixedFormat {
  int total_bits = 8;
  int frac_bits = 7;

  constexpr FixedFormat() = default;
  constexpr FixedFormat(int b, int f) : total_bits(b), frac_bits(f) {
    if (b < 2 || b > 32 || f < 0 || f >= b) throw InvalidArgument("invalid fixed-point format");
  }

  constexpr std::int64_t max_code() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  constexpr std::int64_t min_code() const { return -(std::int64_t{1} << (total_bits - 1)); }
  constexpr std::uint32_t mask() const {
    return total_bits == 32 ? 0xffffffffu : ((std::uint32_t{1} << total_bits) - 1u);
  }
  double ulp() const { return std::ldexp(1.0, -frac_bits); }

  /// Format whose range is [0, 1) at B bits: one sign bit, the rest fractional.
  static constexpr FixedFormat unit(int bits) { return FixedFormat(bits, bits - 1); }

  friend constexpr bool operator==(const FixedFormat&, const FixedFormat&) = default;
};

inline std::string to_string(const FixedFormat& f) {
  return "Q" + std::to_string(f.total_bits) + "." + std::to_string(f.frac_bits);
}

/// Parses "Q<B>.<F>".
inline FixedFormat parse_format(std::string_view s) {
  auto fail = [&] { return InvalidArgument("bad format descriptor '" + std::string(s) + "'"); };
  if (s.size() < 4 || s.front() != 'Q') throw fail();
  const auto dot = s.find('.');
  if (dot == std::string_view::npos || dot == 1 || dot + 1 == s.size()) throw fail();
  auto parse_int = [&](std::string_view d) {
    int v = 0;
    for (char c : d) {
      if (c < '0' || c > '9' || v > 1000) throw fail();
      v = v * 10 + (c - '0');
    }
    return v;
  };
  return FixedFormat(parse_int(s.substr(1, dot - 1)), parse_int(s.substr(dot + 1)));
}

class FixedWord {
 public:
  constexpr FixedWord() = default;

  /// Clamps nothing: the code must already be representable.
  constexpr FixedWord(std::int64_t code, FixedFormat fmt) : code_(code), fmt_(fmt) {
    if (code < fmt.min_code() || code > fmt.max_code()) throw InvalidArgument("code out of range for format");
  }

  /// Builds a word from its raw B-bit pattern (sign-extended).
  static constexpr FixedWord from_bits(std::uint32_t bits, FixedFormat fmt) {
    bits &= fmt.mask();
    std::int64_t v = bits;
    if (bits >> (fmt.total_bits - 1)) v -= std::int64_t{1} << fmt.total_bits;
    return FixedWord(v, fmt);
  }

  constexpr std::int64_t code() const { return code_; }
  constexpr const FixedFormat& format() const { return fmt_; }
  constexpr std::uint32_t bits() const { return static_cast<std::uint32_t>(code_) & fmt_.mask(); }
  constexpr bool sign_bit() const { return code_ < 0; }

  friend constexpr bool operator==(const FixedWord&, const FixedWord&) = default;

 private:
  std::int64_t code_ = 0;
  FixedFormat fmt_{};
};

namespace detail {

inline std::int64_t saturate(__int128 v, const FixedFormat& f) {
  if (v > f.max_code()) return f.max_code();
  if (v < f.min_code()) return f.min_code();
  return static_cast<std::int64_t>(v);
}

/// v / 2^shift rounded to nearest, ties to even. shift >= 0.
inline __int128 shift_round_even(__int128 v, int shift) {
  if (shift == 0) return v;
  const __int128 one = 1;
  const __int128 floor_q = v >> shift;  // arithmetic shift: floor division
  const __int128 rem = v - (floor_q << shift);
  const __int128 half = one << (shift - 1);
  if (rem > half || (rem == half && (floor_q & 1))) return floor_q + 1;
  return floor_q;
}

/// Moves a code with `from` fractional bits to `to` fractional bits.
inline __int128 rescale(__int128 v, int from, int to) {
  return to >= from ? v * (__int128{1} << (to - from)) : shift_round_even(v, from - to);
}

}  // namespace detail

/// Round-to-nearest-even of x * 2^F, saturated to the format's code range.
inline FixedWord quantize(double x, const FixedFormat& fmt) {
  if (std::isnan(x)) throw InvalidArgument("quantize: NaN input");
  const double scaled = std::ldexp(x, fmt.frac_bits);
  if (scaled >= static_cast<double>(fmt.max_code())) return FixedWord(fmt.max_code(), fmt);
  if (scaled <= static_cast<double>(fmt.min_code())) return FixedWord(fmt.min_code(), fmt);
  double r = std::floor(scaled);
  const double diff = scaled - r;
  if (diff > 0.5 || (diff == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
  return FixedWord(static_cast<std::int64_t>(r), fmt);
}

inline double to_real(const FixedWord& w) { return std::ldexp(static_cast<double>(w.code()), -w.format().frac_bits); }

/// Re-rounds a word into another format.
inline FixedWord requantize(const FixedWord& w, const FixedFormat& out) {
  const __int128 v = detail::rescale(w.code(), w.format().frac_bits, out.frac_bits);
  return FixedWord(detail::saturate(v, out), out);
}

/// acc + a*b, formed exactly and rounded once into out_fmt. The operand formats
/// may differ; the product carries Fa+Fb fractional bits before alignment.
inline FixedWord mac(const FixedWord& acc, const FixedWord& a, const FixedWord& b, const FixedFormat& out_fmt) {
  const int f_acc = acc.format().frac_bits;
  const int f_prod = a.format().frac_bits + b.format().frac_bits;
  const int f_common = f_acc > f_prod ? f_acc : f_prod;
  const __int128 product = static_cast<__int128>(a.code()) * b.code();
  const __int128 sum = detail::rescale(acc.code(), f_acc, f_common) + detail::rescale(product, f_prod, f_common);
  return FixedWord(detail::saturate(detail::rescale(sum, f_common, out_fmt.frac_bits), out_fmt), out_fmt);
}

/// Exact running sum of products, rounded once when read out. Models a MAC
/// unit whose internal register is wide enough never to lose precision.
class Accumulator {
 public:
  explicit Accumulator(int frac_bits) : frac_(frac_bits) {}

  void mac(const FixedWord& a, const FixedWord& b) {
    add_scaled(static_cast<__int128>(a.code()) * b.code(), a.format().frac_bits + b.format().frac_bits);
    ++macs_;
  }
  void add(const FixedWord& w) { add_scaled(w.code(), w.format().frac_bits); }

  FixedWord result(const FixedFormat& out) const {
    return FixedWord(detail::saturate(detail::rescale(sum_, frac_, out.frac_bits), out), out);
  }
  std::size_t mac_count() const { return macs_; }

 private:
  void add_scaled(__int128 v, int frac) {
    if (frac > frac_) throw InvalidArgument("accumulator: operand has more fractional bits than the register");
    sum_ += v * (__int128{1} << (frac_ - frac));
  }

  __int128 sum_ = 0;
  int frac_;
  std::size_t macs_ = 0;
};

/// Comparator: 1 iff x >= t (equality counts as 1).
inline std::uint8_t compare(const FixedWord& x, const FixedWord& t) {
  if (x.format() != t.format()) throw InvalidArgument("compare: format mismatch");
  return x.code() >= t.code() ? 1 : 0;
}

}  // namespace ntvml::fixedpoint
