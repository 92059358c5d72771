#pragma once

// Empirical squared-error decomposition of a randomized classifier at fixed
// test inputs:
//   E[(C - Y)^2] = Var(C) + (E[C] - E[Y])^2 + Var(Y),
// where Y varies with the training resample and the timing-error draw, and C
// with label noise. Also the across-run variance of an ensemble average.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ntvml/errors.hpp"
#include "ntvml/random.hpp"

namespace ntvml::analysis {

struct DecompositionResult {
  double noise = 0.0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double generalized_error = 0.0;  // direct estimate of E[(C - Y)^2]

  double se_noise = 0.0;
  double se_bias_sq = 0.0;
  double se_variance = 0.0;
  double se_direct = 0.0;

  /// E[(C - E[C])(E[C] - Y)]; zero in expectation when C and Y are independent.
  double cross_term = 0.0;
  double se_cross_term = 0.0;

  /// direct - (noise + bias_sq + variance), equal to 2 * cross_term.
  double identity_gap() const { return generalized_error - (noise + bias_sq + variance); }
  /// Standard error of identity_gap.
  double identity_se() const { return 2.0 * se_cross_term; }
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

inline Moments moments(std::span<const double> v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size());
  return m;
}

/// Standard error of the mean of v.
inline double sem(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const auto m = moments(v);
  return std::sqrt(m.var / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Decomposes the generalized error over a (resample x error-draw) grid.
///
/// `factory(s, rng)` trains on resample s and returns a predictor callable as
/// `predictor(point, rng) -> double` (one timing-error draw per call).
/// `label(point, rng) -> double` draws the label C at that input.
/// Each grid cell pairs one prediction with one independent label draw; the
/// per-point terms are averaged over the `points` test inputs.
template <class Factory, class LabelSampler>
DecompositionResult decompose(Factory&& factory, LabelSampler&& label, std::size_t points, std::size_t n_resamples,
                              std::size_t n_error_draws, Rng& rng) {
  if (n_resamples < 2) throw InvalidArgument("decompose: need at least two training resamples");
  if (n_error_draws < 1) throw InvalidArgument("decompose: need at least one error draw");
  if (points == 0) throw InvalidArgument("decompose: no test points");
  const std::uint64_t base = rng.next_u64();
  const std::size_t cells = n_resamples * n_error_draws;
  std::vector<double> yhat(points * cells), c(points * cells);

  for (std::size_t s = 0; s < n_resamples; ++s) {
    Rng train_rng(derive_seed(base, {0, s}));
    auto predictor = factory(s, train_rng);
    for (std::size_t e = 0; e < n_error_draws; ++e) {
      Rng err_rng(derive_seed(base, {1, s, e}));
      Rng label_rng(derive_seed(base, {2, s, e}));
      const std::size_t cell = s * n_error_draws + e;
      for (std::size_t p = 0; p < points; ++p) {
        yhat[p * cells + cell] = static_cast<double>(predictor(p, err_rng));
        c[p * cells + cell] = static_cast<double>(label(p, label_rng));
      }
    }
  }

  DecompositionResult out;
  double v_noise = 0, v_bias = 0, v_var = 0, v_direct = 0, v_cross = 0;
  std::vector<double> tmp(cells);
  for (std::size_t p = 0; p < points; ++p) {
    std::span<const double> ys(yhat.data() + p * cells, cells), cs(c.data() + p * cells, cells);
    const auto my = detail::moments(ys), mc = detail::moments(cs);
    const double bias = mc.mean - my.mean;
    out.noise += mc.var;
    out.variance += my.var;
    out.bias_sq += bias * bias;

    for (std::size_t k = 0; k < cells; ++k) tmp[k] = (cs[k] - ys[k]) * (cs[k] - ys[k]);
    out.generalized_error += detail::moments(tmp).mean;
    v_direct += std::pow(detail::sem(tmp), 2);

    for (std::size_t k = 0; k < cells; ++k) tmp[k] = (cs[k] - mc.mean) * (cs[k] - mc.mean);
    v_noise += std::pow(detail::sem(tmp), 2);
    for (std::size_t k = 0; k < cells; ++k) tmp[k] = (ys[k] - my.mean) * (ys[k] - my.mean);
    v_var += std::pow(detail::sem(tmp), 2);
    // Delta method on (mean C - mean Y)^2.
    v_bias += 4.0 * bias * bias * (mc.var + my.var) / static_cast<double>(cells > 1 ? cells - 1 : 1);

    for (std::size_t k = 0; k < cells; ++k) tmp[k] = (cs[k] - mc.mean) * (mc.mean - ys[k]);
    out.cross_term += detail::moments(tmp).mean;
    v_cross += std::pow(detail::sem(tmp), 2);
  }
  const double np = static_cast<double>(points);
  out.noise /= np;
  out.variance /= np;
  out.bias_sq /= np;
  out.generalized_error /= np;
  out.cross_term /= np;
  out.se_noise = std::sqrt(v_noise) / np;
  out.se_variance = std::sqrt(v_var) / np;
  out.se_bias_sq = std::sqrt(v_bias) / np;
  out.se_direct = std::sqrt(v_direct) / np;
  out.se_cross_term = std::sqrt(v_cross) / np;
  return out;
}

/// Mean over points of the across-run (unbiased) variance of the ensemble
/// output. `outputs` is runs x points, row-major.
inline double ensemble_variance(std::span<const double> outputs, std::size_t runs, std::size_t points) {
  if (runs < 2) throw InvalidArgument("ensemble_variance: need at least two runs");
  if (outputs.size() != runs * points || points == 0) throw InvalidArgument("ensemble_variance: shape mismatch");
  double total = 0.0;
  for (std::size_t p = 0; p < points; ++p) {
    // Shifted by the first run so identical runs give exactly zero.
    const double shift = outputs[p];
    double mean = 0.0;
    for (std::size_t r = 0; r < runs; ++r) mean += outputs[r * points + p] - shift;
    mean /= static_cast<double>(runs);
    double ss = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      const double d = outputs[r * points + p] - shift - mean;
      ss += d * d;
    }
    total += ss / static_cast<double>(runs - 1);
  }
  return total / static_cast<double>(points);
}

inline double ensemble_variance(const std::vector<std::vector<double>>& runs) {
  if (runs.empty()) throw InvalidArgument("ensemble_variance: no runs");
  std::vector<double> flat;
  for (const auto& r : runs) {
    if (r.size() != runs.front().size()) throw InvalidArgument("ensemble_variance: ragged runs");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return ensemble_variance(flat, runs.size(), runs.front().size());
}

}  // namespace ntvml::analysis
