#pragma once

// Timing-error profiles: per-block bit-error statistics indexed by gate-level
// delay variation (sigma/mu)_d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ntvml/errormodel.hpp"
#include "ntvml/errors.hpp"

namespace ntvml::harness {

/// Block ids used by the sweep.
inline constexpr const char* kSvmStage1 = "svm.stage1";
inline constexpr const char* kSvmStage2 = "svm.stage2";
inline constexpr const char* kTreeOutput = "rf.tree";

struct BlockSpec {
  std::string id;
  std::size_t width = 1;
  std::vector<double> bit_probabilities;  // index 0 = LSB
  double correlation = 0.0;               // equicorrelation of the latent bits

  /// P(eta != 0) for the declared correlation (exact when independent).
  double word_error_rate() const {
    if (correlation == 0.0) {
      double ok = 1.0;
      for (double p : bit_probabilities) ok *= 1.0 - p;
      return 1.0 - ok;
    }
    return errormodel::word_error_rate(model()).probability;
  }

  errormodel::ErrorPmfModel model() const { return errormodel::synthesize(bit_probabilities, correlation); }
};

struct ProfilePoint {
  double delay_variation = 0.0;  // fraction, e.g. 0.10 for 10%
  std::vector<BlockSpec> blocks;

  const BlockSpec* find(const std::string& id) const {
    for (const auto& b : blocks)
      if (b.id == id) return &b;
    return nullptr;
  }
  const BlockSpec& block(const std::string& id) const {
    if (const auto* b = find(id)) return *b;
    throw InvalidArgument("profile point has no block '" + id + "'");
  }
};

struct ErrorProfile {
  std::vector<ProfilePoint> points;
  std::string interpolation = "log-linear";
  std::string provenance = "synthetic";

  void validate() const {
    if (points.empty()) throw InvalidArgument("profile: no points");
    if (interpolation != "log-linear" && interpolation != "linear")
      throw InvalidArgument("profile: unknown interpolation '" + interpolation + "'");
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& pt = points[k];
      if (!(pt.delay_variation >= 0.0)) throw InvalidArgument("profile: delay variation must be non-negative");
      if (k > 0 && !(pt.delay_variation > points[k - 1].delay_variation))
        throw InvalidArgument("profile: delay variation must be strictly increasing");
      for (const auto& b : pt.blocks) {
        if (b.width == 0 || b.width > 64 || b.bit_probabilities.size() != b.width)
          throw InvalidArgument("profile: block '" + b.id + "' width does not match its probability vector");
        for (double p : b.bit_probabilities)
          if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("profile: probability outside [0, 1] in '" + b.id + "'");
        if (!(b.correlation > -1.0 && b.correlation < 1.0))
          throw InvalidArgument("profile: correlation outside (-1, 1) in '" + b.id + "'");
      }
    }
  }

  /// Statistics at an arbitrary delay variation inside the profile's range.
  /// Each per-bit probability is interpolated on a log scale (linear when
  /// either end is zero); correlations are interpolated linearly.
  ProfilePoint at(double delay) const {
    validate();
    if (delay < points.front().delay_variation || delay > points.back().delay_variation)
      throw InvalidArgument("profile: delay variation outside the profile range");
    std::size_t hi = 0;
    while (points[hi].delay_variation < delay) ++hi;
    if (points[hi].delay_variation == delay) return points[hi];
    const auto& a = points[hi - 1];
    const auto& b = points[hi];
    const double t = (delay - a.delay_variation) / (b.delay_variation - a.delay_variation);
    ProfilePoint out;
    out.delay_variation = delay;
    for (const auto& ba : a.blocks) {
      const auto& bb = b.block(ba.id);
      if (bb.width != ba.width) throw InvalidArgument("profile: block '" + ba.id + "' changes width");
      BlockSpec s = ba;
      for (std::size_t i = 0; i < s.width; ++i) {
        const double pa = ba.bit_probabilities[i], pb = bb.bit_probabilities[i];
        s.bit_probabilities[i] = (interpolation == "log-linear" && pa > 0.0 && pb > 0.0)
                                     ? std::exp(std::log(pa) + t * (std::log(pb) - std::log(pa)))
                                     : pa + t * (pb - pa);
      }
      s.correlation = ba.correlation + t * (bb.correlation - ba.correlation);
      out.blocks.push_back(std::move(s));
    }
    return out;
  }

  std::vector<double> delay_points() const {
    std::vector<double> d;
    for (const auto& p : points) d.push_back(p.delay_variation);
    return d;
  }
};

/// Per-bit probabilities p_i = q * 2^-(B-1-i), halving per bit toward the LSB,
/// with q chosen so that the independent-bit word error rate equals `rate`.
inline std::vector<double> msb_weighted(std::size_t width, double rate) {
  if (width == 0) throw InvalidArgument("msb_weighted: zero width");
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidArgument("msb_weighted: rate outside [0, 1]");
  auto probs = [&](double q) {
    std::vector<double> p(width);
    for (std::size_t i = 0; i < width; ++i) p[i] = std::min(1.0, std::ldexp(q, -static_cast<int>(width - 1 - i)));
    return p;
  };
  auto word_rate = [&](double q) {
    double ok = 1.0;
    for (double p : probs(q)) ok *= 1.0 - p;
    return 1.0 - ok;
  };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (word_rate(mid) < rate ? lo : hi) = mid;
  }
  return probs(0.5 * (lo + hi));
}

/// Word error-rate anchors of the default profile.
struct ProfileAnchors {
  double first_delay = 0.028, last_delay = 0.33;
  double svm_first = 2.1e-3, svm_last = 0.99;
  double rf_first = 1.1e-3, rf_last = 0.61;
  std::vector<double> delays{0.028, 0.06, 0.10, 0.15, 0.20, 0.25, 0.29, 0.33};
  std::size_t stage1_width = 10;
  std::size_t stage2_width = 16;
};

/// Rate at `delay` on the log-linear line through two anchors.
inline double log_linear(double d0, double r0, double d1, double r1, double delay) {
  const double t = (delay - d0) / (d1 - d0);
  return std::exp(std::log(r0) + t * (std::log(r1) - std::log(r0)));
}

/// Synthetic profile: SVM stage words and RF tree outputs follow the anchor
/// word error rates log-linearly; multi-bit words are MSB-weighted with
/// independent bits.
inline ErrorProfile default_profile(const ProfileAnchors& a = {}) {
  ErrorProfile prof;
  prof.provenance = "synthetic: log-linear word error rates between anchor endpoints, MSB-weighted bits";
  for (double d : a.delays) {
    const double svm = std::min(1.0, log_linear(a.first_delay, a.svm_first, a.last_delay, a.svm_last, d));
    const double rf = std::min(1.0, log_linear(a.first_delay, a.rf_first, a.last_delay, a.rf_last, d));
    ProfilePoint pt;
    pt.delay_variation = d;
    pt.blocks.push_back({kSvmStage1, a.stage1_width, msb_weighted(a.stage1_width, svm), 0.0});
    pt.blocks.push_back({kSvmStage2, a.stage2_width, msb_weighted(a.stage2_width, svm), 0.0});
    pt.blocks.push_back({kTreeOutput, 1, {rf}, 0.0});
    prof.points.push_back(std::move(pt));
  }
  prof.validate();
  return prof;
}

}  // namespace ntvml::harness
