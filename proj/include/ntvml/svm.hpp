#pragma once

// Second-order polynomial-kernel SVM. The decision function
//   y(x) = sum_i a_i (beta s_i.x + gamma)^2 + b
// is rewritten as y(x) = xt' W xt + b with xt = [1; x] and
// W = sum_i a_i st_i st_i', st_i = [gamma; beta s_i], which needs (M+1)^2 MACs
// regardless of the support-vector count. The fixed-point pipeline evaluates
// W xt in Stage 1 and xt'(W xt) + b in Stage 2, with error injection on the
// words stored at each stage boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ntvml/dataset.hpp"
#include "ntvml/errormodel.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/fixedpoint.hpp"
#include "ntvml/random.hpp"

namespace ntvml::svm {

using fixedpoint::FixedFormat;
using fixedpoint::FixedWord;

struct SvmTrainConfig {
  double cost = 1.0;  // C
  double beta = 1.0;
  double gamma = 1.0;
  double tolerance = 1e-3;
  std::size_t max_iterations = 1'000'000;
};

/// Word widths of the pipeline. Fractional bits are fitted to the trained
/// model (see fit_formats); the widths are the hardware contract.
struct SvmPrecision {
  int input_bits = 8;        // xt entries, Stage 1 input and Stage 2 coefficient
  int coefficient_bits = 8;  // W entries
  int stage2_input_bits = 10;
  int output_bits = 16;  // Stage 2 result register
};

struct StageFormats {
  FixedFormat input{8, 6};  // holds xt = [1; x] with x scaled to [0, 1)
  FixedFormat coefficient{8, 7};
  FixedFormat stage2_input{10, 5};
  FixedFormat output{16, 8};
  int weight_shift = 0;  // W and b are scaled by 2^-weight_shift before quantization
};

struct SvmModel {
  std::size_t features = 0;
  std::vector<double> support_vectors;  // rows of length `features`
  std::vector<double> alphas;           // label-folded: alpha_i * c_i
  double bias = 0.0;
  double beta = 1.0;
  double gamma = 1.0;
  std::vector<double> weight_matrix;  // (M+1)x(M+1), row-major
  StageFormats formats{};
  std::vector<FixedWord> weight_words;  // quantized, scaled W
  FixedWord bias_word;                  // quantized, scaled b in the Stage 2 register format

  std::size_t support_count() const { return alphas.size(); }
  std::span<const double> support_vector(std::size_t i) const { return {support_vectors.data() + i * features, features}; }
  std::size_t dim() const { return features + 1; }
};

inline double kernel(std::span<const double> a, std::span<const double> b, double beta, double gamma) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  const double t = beta * dot + gamma;
  return t * t;
}

/// W = sum_i a_i st_i st_i'.
inline std::vector<double> precompute(const SvmModel& model) {
  const std::size_t d = model.dim();
  std::vector<double> w(d * d, 0.0);
  std::vector<double> st(d);
  for (std::size_t i = 0; i < model.support_count(); ++i) {
    const auto s = model.support_vector(i);
    st[0] = model.gamma;
    for (std::size_t k = 0; k < model.features; ++k) st[k + 1] = model.beta * s[k];
    const double a = model.alphas[i];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = r; c < d; ++c) w[r * d + c] += a * st[r] * st[c];
  }
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < r; ++c) w[r * d + c] = w[c * d + r];
  return w;
}

struct Decision {
  std::uint8_t label = 0;
  double margin = 0.0;
};

/// Floating-point kernel expansion; sgn(0) counts as label 1.
inline Decision classify_direct(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.features) throw InvalidArgument("classify_direct: feature count mismatch");
  double y = model.bias;
  for (std::size_t i = 0; i < model.support_count(); ++i)
    y += model.alphas[i] * kernel(model.support_vector(i), x, model.beta, model.gamma);
  return {static_cast<std::uint8_t>(y >= 0.0 ? 1 : 0), y};
}

/// Floating-point xt' W xt + b.
inline double margin_reformulated(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.features) throw InvalidArgument("margin_reformulated: feature count mismatch");
  const std::size_t d = model.dim();
  double y = model.bias;
  for (std::size_t r = 0; r < d; ++r) {
    const double xr = r == 0 ? 1.0 : x[r - 1];
    double row = 0.0;
    for (std::size_t c = 0; c < d; ++c) row += model.weight_matrix[r * d + c] * (c == 0 ? 1.0 : x[c - 1]);
    y += xr * row;
  }
  return y;
}

namespace detail {

/// Largest fractional bit count (within [0, bits-1]) whose range covers `bound`.
inline int frac_bits_for(double bound, int bits) {
  const double top = std::ldexp(1.0, bits - 1) - 1.0;  // max code
  int f = bits - 1;
  while (f > 0 && bound > top * std::ldexp(1.0, -f)) --f;
  return f;
}

inline std::vector<double> augmented(std::span<const double> x) {
  std::vector<double> xt(x.size() + 1);
  xt[0] = 1.0;
  std::copy(x.begin(), x.end(), xt.begin() + 1);
  return xt;
}

}  // namespace detail

/// Quantizes W and b with the model's current formats and weight shift.
inline void quantize_parameters(SvmModel& model) {
  const auto& f = model.formats;
  const double scale = std::ldexp(1.0, -f.weight_shift);
  model.weight_words.clear();
  for (double w : model.weight_matrix) model.weight_words.push_back(fixedpoint::quantize(w * scale, f.coefficient));
  model.bias_word = fixedpoint::quantize(model.bias * scale, f.output);
}

/// Chooses fractional bits for every pipeline word from the model and the
/// ranges it sees on `calibration` rows (normally the training set), then
/// quantizes W and b. W and b share a power-of-two scale, which leaves the
/// sign of the margin unchanged.
inline void fit_formats(SvmModel& model, const Dataset& calibration, const SvmPrecision& p = {}) {
  const std::size_t d = model.dim();
  StageFormats f;
  // xt holds the constant 1 and features scaled to [0, 1): two integer bits.
  f.input = FixedFormat(p.input_bits, p.input_bits - 2);
  f.coefficient = FixedFormat::unit(p.coefficient_bits);

  double wmax = 0.0;
  for (double w : model.weight_matrix) wmax = std::max(wmax, std::abs(w));
  const double cmax = std::ldexp(1.0, p.coefficient_bits - 1) - 1.0;
  int shift = 0;
  if (wmax > 0.0) {
    // Smallest shift with wmax * 2^-shift representable in Q<B>.<B-1>.
    shift = static_cast<int>(std::ceil(std::log2(wmax / (cmax * f.coefficient.ulp()))));
    while (wmax * std::ldexp(1.0, -shift) > cmax * f.coefficient.ulp()) ++shift;
    while (wmax * std::ldexp(1.0, -(shift - 1)) <= cmax * f.coefficient.ulp()) --shift;
  }
  f.weight_shift = shift;
  const double scale = std::ldexp(1.0, -shift);


  // Ranges of the scaled Stage 1 and Stage 2 values over the calibration rows.
  double s1 = 0.0, s2 = std::abs(model.bias * scale);
  for (std::size_t i = 0; i < calibration.rows(); ++i) {
    const auto xt = detail::augmented(calibration.row(i));
    double y = model.bias * scale;
    for (std::size_t r = 0; r < d; ++r) {
      double v = 0.0;
      for (std::size_t c = 0; c < d; ++c) v += model.weight_matrix[r * d + c] * scale * xt[c];
      s1 = std::max(s1, std::abs(v));
      y += xt[r] * v;
    }
    s2 = std::max(s2, std::abs(y));
  }
  // Headroom for test rows outside the calibration range.
  constexpr double kHeadroom = 1.25;
  f.stage2_input = FixedFormat(p.stage2_input_bits, detail::frac_bits_for(s1 * kHeadroom, p.stage2_input_bits));
  f.output = FixedFormat(p.output_bits, detail::frac_bits_for(s2 * kHeadroom, p.output_bits));
  model.formats = f;
  quantize_parameters(model);
}

/// Dual solver: SMO with second-order working-set selection. Labels 1 -> +1,
/// 0 -> -1.
inline SvmModel train(const Dataset& ds, const SvmTrainConfig& cfg = {}, const SvmPrecision& precision = {}) {
  if (!(cfg.cost > 0.0) || !(cfg.tolerance > 0.0)) throw InvalidArgument("svm train: C and tolerance must be positive");
  const std::size_t n = ds.rows();
  if (n < 2) throw InvalidArgument("svm train: need at least two rows");
  if (ds.count_label(1) == 0 || ds.count_label(0) == 0) throw InvalidArgument("svm train: both classes required");

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = ds.label(i) ? 1.0 : -1.0;
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) k[i * n + j] = k[j * n + i] = kernel(ds.row(i), ds.row(j), cfg.beta, cfg.gamma);

  const double c = cfg.cost;
  constexpr double kTau = 1e-12;
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  auto is_upper = [&](std::size_t t) { return alpha[t] >= c; };
  auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  auto in_up = [&](std::size_t t) { return y[t] > 0 ? !is_upper(t) : !is_lower(t); };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? !is_lower(t) : !is_upper(t); };

  std::size_t iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (in_up(t) && -y[t] * grad[t] >= gmax) gmax = -y[t] * grad[t], i = t;
    std::size_t j = n;
    double obj_min = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      gmax2 = std::max(gmax2, y[t] * grad[t]);
      if (i == n) continue;
      const double b = gmax + y[t] * grad[t];
      if (b > 0.0) {
        double a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
        if (a <= 0.0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj <= obj_min) obj_min = obj, j = t;
      }
    }
    gap = gmax + gmax2;
    if (gap < cfg.tolerance || i == n || j == n) break;
    if (iter >= cfg.max_iterations)
      throw TrainingFailed("svm train: no convergence after " + std::to_string(iter) + " iterations (gap " +
                           std::to_string(gap) + ", tolerance " + std::to_string(cfg.tolerance) + ")");

    const double ai = alpha[i], aj = alpha[j];
    const double kij = k[i * n + j];
    double quad = k[i * n + i] + k[j * n + j] - 2.0 * kij;
    if (quad <= 0.0) quad = kTau;
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) alpha[j] = 0, alpha[i] = diff;
      } else if (alpha[i] < 0) {
        alpha[i] = 0, alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = c - diff;
      } else if (alpha[j] > c) {
        alpha[j] = c, alpha[i] = c + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) alpha[i] = c, alpha[j] = sum - c;
      } else if (alpha[j] < 0) {
        alpha[j] = 0, alpha[i] = sum;
      }
      if (sum > c) {
        if (alpha[j] > c) alpha[j] = c, alpha[i] = sum - c;
      } else if (alpha[i] < 0) {
        alpha[i] = 0, alpha[j] = sum;
      }
    }
    const double dai = alpha[i] - ai, daj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * k[i * n + t] * dai + y[j] * k[j * n + t] * daj);
  }

  // Offset from the free multipliers, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (is_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      sum_free += yg;
    }
  }
  const double rho = free_count ? sum_free / static_cast<double>(free_count) : 0.5 * (ub + lb);

  SvmModel m;
  m.features = ds.features();
  m.beta = cfg.beta;
  m.gamma = cfg.gamma;
  m.bias = -rho;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    const auto r = ds.row(t);
    m.support_vectors.insert(m.support_vectors.end(), r.begin(), r.end());
    m.alphas.push_back(alpha[t] * y[t]);
  }
  m.weight_matrix = precompute(m);
  fit_formats(m, ds, precision);
  return m;
}

/// Optional fault models for the two stage boundaries.
struct SvmFaults {
  const errormodel::ErrorPmfModel* stage1 = nullptr;  // width = stage2_input bits, one draw per W xt word
  const errormodel::ErrorPmfModel* stage2 = nullptr;  // width = output bits, one draw on the result
};

struct PipelineTrace {
  std::size_t macs = 0;
  std::vector<FixedWord> stage1_words;
  FixedWord output;
};

/// Bit-accurate pipeline evaluation; returns the Stage 2 output word.
inline FixedWord fixed_margin(const SvmModel& model, std::span<const double> x, const SvmFaults& faults = {},
                              Rng* rng = nullptr, PipelineTrace* trace = nullptr) {
  if (x.size() != model.features) throw InvalidArgument("classify_fixed: feature count mismatch");
  const auto& f = model.formats;
  const std::size_t d = model.dim();
  if (faults.stage1 && faults.stage1->width() != static_cast<std::size_t>(f.stage2_input.total_bits))
    throw InvalidArgument("classify_fixed: stage 1 error width mismatch");
  if (faults.stage2 && faults.stage2->width() != static_cast<std::size_t>(f.output.total_bits))
    throw InvalidArgument("classify_fixed: stage 2 error width mismatch");
  auto draw = [rng](const errormodel::ErrorPmfModel& m) {
    if (!rng) throw InvalidArgument("classify_fixed: error injection needs a random stream");
    return errormodel::sample_mask(m, *rng);
  };

  std::vector<FixedWord> xt(d);
  xt[0] = fixedpoint::quantize(1.0, f.input);
  for (std::size_t k = 0; k < model.features; ++k) xt[k + 1] = fixedpoint::quantize(x[k], f.input);

  std::size_t macs = 0;
  std::vector<FixedWord> v(d);
  for (std::size_t r = 0; r < d; ++r) {
    fixedpoint::Accumulator acc(f.input.frac_bits + f.coefficient.frac_bits);
    for (std::size_t c = 0; c < d; ++c) acc.mac(model.weight_words[r * d + c], xt[c]);
    macs += acc.mac_count();
    v[r] = acc.result(f.stage2_input);
    if (faults.stage1) v[r] = errormodel::inject(v[r], draw(*faults.stage1));
  }

  fixedpoint::Accumulator acc(std::max(f.input.frac_bits + f.stage2_input.frac_bits, f.output.frac_bits));
  for (std::size_t r = 0; r < d; ++r) acc.mac(xt[r], v[r]);
  macs += acc.mac_count();
  acc.add(model.bias_word);
  FixedWord out = acc.result(f.output);
  if (faults.stage2) out = errormodel::inject(out, draw(*faults.stage2));

  if (trace) {
    trace->macs = macs;
    trace->stage1_words = v;
    trace->output = out;
  }
  return out;
}

/// Label from the sign bit of the Stage 2 word (non-negative -> 1).
inline std::uint8_t classify_fixed(const SvmModel& model, std::span<const double> x, const SvmFaults& faults = {},
                                   Rng* rng = nullptr, PipelineTrace* trace = nullptr) {
  return fixed_margin(model, x, faults, rng, trace).sign_bit() ? 0 : 1;
}

}  // namespace ntvml::svm
