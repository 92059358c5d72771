#pragma once

// Forest output variance and error decomposition under injected tree-output
// errors. The forest output here is the unthresholded vote average
// (1/L) sum_l y_a,l.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ntvml/analysis.hpp"
#include "ntvml/dataset.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/forest.hpp"
#include "ntvml/profile.hpp"
#include "ntvml/random.hpp"
#include "ntvml/sweep.hpp"

namespace ntvml::harness {

struct EnsembleStudyConfig {
  forest::ForestConfig forest{};
  bool diversity = false;  // per-tree precision uniform over 4..8 bits, else 8 bits
  JitterConfig rates{0.0, 2.0, 8};
  double label_flip = 0.0;  // probability the drawn label C differs from the recorded one
};

namespace detail {

inline forest::PrecisionPolicy precision_for(const EnsembleStudyConfig& cfg) {
  return cfg.diversity ? forest::PrecisionPolicy::uniform_bits(4, cfg.rates.reference_bits)
                       : forest::PrecisionPolicy::fixed_format(fixedpoint::FixedFormat::unit(cfg.rates.reference_bits));
}

/// Forest of `size` trees on a bootstrap resample of `train`.
inline forest::ForestModel resampled_forest(const Dataset& train, std::size_t size, const EnsembleStudyConfig& cfg,
                                            Rng& rng) {
  const forest::Bag resample = forest::bootstrap(train, rng);
  const Dataset s = train.subset(resample.bag);
  forest::ForestConfig fc = cfg.forest;
  fc.ensemble_size = size;
  fc.precision = precision_for(cfg);
  return forest::train_forest(s, fc, rng);
}

/// Per-tree width-1 error models at the point's tree-output rate.
inline std::vector<std::optional<errormodel::ErrorPmfModel>> tree_faults(const forest::ForestModel& f,
                                                                         const ProfilePoint& point,
                                                                         const JitterConfig& j) {
  std::vector<std::optional<errormodel::ErrorPmfModel>> out(f.size());
  const BlockSpec* block = point.find(kTreeOutput);
  if (!block) return out;
  for (std::size_t l = 0; l < f.size(); ++l) {
    const double r = tree_error_rate(block->bit_probabilities[0], f.trees[l].format().total_bits, j);
    if (r > 0.0) out[l] = errormodel::synthesize(std::vector<double>{r}, 0.0);
  }
  return out;
}

inline std::uint8_t faulty_vote(const forest::ForestModel& f, const std::vector<std::optional<errormodel::ErrorPmfModel>>& faults,
                                std::size_t l, std::span<const double> x, Rng& rng) {
  return forest::classify_tree(f.trees[l], x, forest::TreeFaults{faults[l] ? &*faults[l] : nullptr, nullptr}, &rng);
}

/// Leave-one-run-out jackknife of the mean across-run variance. `outputs` is
/// runs x points; `sign` weights allow the variance of a paired difference.
inline double jackknife_se(std::span<const double> a, std::span<const double> b, double sign, std::size_t runs,
                           std::size_t points) {
  if (runs < 3) return 0.0;
  std::vector<double> s1a(points, 0.0), s2a(points, 0.0), s1b(points, 0.0), s2b(points, 0.0);
  for (std::size_t r = 0; r < runs; ++r)
    for (std::size_t p = 0; p < points; ++p) {
      const double x = a[r * points + p];
      s1a[p] += x, s2a[p] += x * x;
      if (!b.empty()) {
        const double y = b[r * points + p];
        s1b[p] += y, s2b[p] += y * y;
      }
    }
  const double m = static_cast<double>(runs - 1);
  std::vector<double> loo(runs, 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    double total = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      const double x = a[r * points + p];
      const double sa = s1a[p] - x, qa = s2a[p] - x * x;
      double v = (qa - sa * sa / m) / (m - 1.0);
      if (!b.empty()) {
        const double y = b[r * points + p];
        const double sb = s1b[p] - y, qb = s2b[p] - y * y;
        v += sign * (qb - sb * sb / m) / (m - 1.0);
      }
      total += v;
    }
    loo[r] = total / static_cast<double>(points);
  }
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(runs);
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  return std::sqrt(ss * m / static_cast<double>(runs));
}

}  // namespace detail

struct VariancePoint {
  std::size_t ensemble_size = 1;
  double variance = 0.0;
  double se = 0.0;
  std::vector<double> outputs;  // runs x points ensemble averages
};

/// sigma^2_RF versus L. Each run trains one forest of max(L) trees on a fresh
/// bootstrap resample of `train`, draws one error pattern per (tree, point),
/// and reads the ensemble average for every L from the first L trees. Runs use
/// streams keyed on (rng seed, run) only, so curves computed with and without
/// precision diversity share resamples and tree structures.
inline std::vector<VariancePoint> variance_vs_L(const Dataset& train, const Dataset& test,
                                                const std::vector<std::size_t>& sizes, const ProfilePoint& point,
                                                const EnsembleStudyConfig& cfg, std::size_t runs, Rng& rng) {
  if (sizes.empty()) throw InvalidArgument("variance_vs_L: no ensemble sizes");
  if (runs < 2) throw InvalidArgument("variance_vs_L: need at least two runs");
  for (auto l : sizes)
    if (l == 0) throw InvalidArgument("variance_vs_L: ensemble size must be >= 1");
  const std::size_t max_l = *std::max_element(sizes.begin(), sizes.end());
  const std::size_t points = test.rows();
  const std::uint64_t base = rng.next_u64();

  std::vector<VariancePoint> curve(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    curve[k].ensemble_size = sizes[k];
    curve[k].outputs.assign(runs * points, 0.0);
  }
  std::vector<std::uint8_t> votes(max_l);
  for (std::size_t r = 0; r < runs; ++r) {
    Rng train_rng(derive_seed(base, {0, r}));
    const auto f = detail::resampled_forest(train, max_l, cfg, train_rng);
    const auto faults = detail::tree_faults(f, point, cfg.rates);
    Rng err_rng(derive_seed(base, {1, r}));
    for (std::size_t p = 0; p < points; ++p) {
      for (std::size_t l = 0; l < max_l; ++l) votes[l] = detail::faulty_vote(f, faults, l, test.row(p), err_rng);
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        double sum = 0.0;
        for (std::size_t l = 0; l < sizes[k]; ++l) sum += votes[l];
        curve[k].outputs[r * points + p] = sum / static_cast<double>(sizes[k]);
      }
    }
  }
  for (auto& c : curve) {
    c.variance = analysis::ensemble_variance(c.outputs, runs, points);
    c.se = detail::jackknife_se(c.outputs, {}, 0.0, runs, points);
  }
  return curve;
}

/// Jackknife standard error of variance(a) - variance(b) for paired curves.
inline double paired_difference_se(const VariancePoint& a, const VariancePoint& b, std::size_t runs, std::size_t points) {
  return detail::jackknife_se(a.outputs, b.outputs, -1.0, runs, points);
}

/// Squared-error decomposition of an L-tree forest's vote average over
/// training resamples and error draws, with labels optionally flipped.
inline analysis::DecompositionResult decompose_forest(const Dataset& train, const Dataset& test, std::size_t size,
                                                      const ProfilePoint& point, const EnsembleStudyConfig& cfg,
                                                      std::size_t n_resamples, std::size_t n_error_draws, Rng& rng) {
  if (!(cfg.label_flip >= 0.0 && cfg.label_flip <= 1.0)) throw InvalidArgument("decompose_forest: label flip outside [0, 1]");
  auto factory = [&](std::size_t, Rng& train_rng) {
    auto f = detail::resampled_forest(train, size, cfg, train_rng);
    auto faults = detail::tree_faults(f, point, cfg.rates);
    return [&test, f = std::move(f), faults = std::move(faults)](std::size_t p, Rng& err) {
      double sum = 0.0;
      for (std::size_t l = 0; l < f.size(); ++l) sum += detail::faulty_vote(f, faults, l, test.row(p), err);
      return sum / static_cast<double>(f.size());
    };
  };
  auto label = [&](std::size_t p, Rng& r) {
    const bool flip = cfg.label_flip > 0.0 && r.bernoulli(cfg.label_flip);
    return static_cast<double>(test.label(p) ^ (flip ? 1 : 0));
  };
  return analysis::decompose(factory, label, test.rows(), n_resamples, n_error_draws, rng);
}

}  // namespace ntvml::harness
