#pragma once

// Joint-Bernoulli timing-error model built on a dichotomized Gaussian: a latent
// vector U ~ N(mu, C) with unit variances is thresholded at zero, bit i of the
// error pattern being 1 iff U_i >= 0. Patterns are applied to stored words by
// XOR (addition over GF(2)).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "ntvml/errors.hpp"
#include "ntvml/fixedpoint.hpp"
#include "ntvml/numeric.hpp"
#include "ntvml/random.hpp"

namespace ntvml::errormodel {

using BitVector = std::vector<std::uint8_t>;

inline constexpr double kMarginalClip = 1e-6;
inline constexpr double kEigenFloor = 1e-8;

/// Observed error realizations, stored row-major as 0/1 bytes.
class ErrorSampleSet {
 public:
  explicit ErrorSampleSet(std::size_t width) : width_(width) {
    if (width == 0) throw InvalidArgument("sample set width must be >= 1");
  }

  void add(std::span<const std::uint8_t> row) {
    if (row.size() != width_) throw InvalidArgument("sample row width mismatch");
    for (auto b : row) bits_.push_back(b ? 1 : 0);
  }
  void add_mask(std::uint64_t mask) {
    for (std::size_t i = 0; i < width_; ++i) bits_.push_back((mask >> i) & 1u);
  }

  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size() / width_; }
  std::span<const std::uint8_t> row(std::size_t i) const { return {bits_.data() + i * width_, width_}; }

 private:
  std::size_t width_;
  std::vector<std::uint8_t> bits_;
};

/// P(U1 >= 0, U2 >= 0) for a bivariate normal with means (g1, g2), unit
/// variances and correlation lam. Uses the derivative-in-correlation identity
/// with t = sin(theta), which leaves a smooth integrand on [0, asin(lam)].
inline double orthant2(double g1, double g2, double lam) {
  if (!(lam >= -1.0 && lam <= 1.0)) throw InvalidArgument("orthant2: correlation outside [-1, 1]");
  const double h = -g1;
  const double k = -g2;
  const double base = numeric::normal_cdf(g1) * numeric::normal_cdf(g2);
  if (lam == 0.0) return base;
  auto integrand = [&](double theta) {
    const double s = std::sin(theta);
    const double c2 = (1.0 - s) * (1.0 + s);
    if (c2 <= 0.0) return 0.0;
    return std::exp(-(h * h - 2.0 * h * k * s + k * k) / (2.0 * c2));
  };
  const double tail = numeric::integrate(integrand, 0.0, std::asin(lam), 1e-11) / (2.0 * std::numbers::pi);
  return std::clamp(base + tail, 0.0, 1.0);
}

namespace detail {

/// Orthant probability P(V >= 0) for V ~ N(mean, corr), dimension 1..3.
inline double orthant(std::span<const double> mean, std::span<const double> corr) {
  const std::size_t n = mean.size();
  auto r = [&](std::size_t i, std::size_t j) { return std::clamp(corr[i * n + j], -1.0, 1.0); };
  if (n == 1) return numeric::normal_cdf(mean[0]);
  if (n == 2) return orthant2(mean[0], mean[1], r(0, 1));
  if (n != 3) throw InvalidArgument("orthant: quadrature supports width <= 3");

  // Condition on the pivot least correlated with the rest, then integrate the
  // bivariate conditional orthant over the pivot's half-line.
  std::size_t pivot = 0;
  double best = 2.0;
  for (std::size_t p = 0; p < 3; ++p) {
    double worst = 0.0;
    for (std::size_t q = 0; q < 3; ++q)
      if (q != p) worst = std::max(worst, std::abs(r(p, q)));
    if (worst < best) best = worst, pivot = p;
  }
  const std::size_t i = (pivot + 1) % 3;
  const std::size_t j = (pivot + 2) % 3;
  const double ri = r(pivot, i), rj = r(pivot, j);
  const double si2 = 1.0 - ri * ri, sj2 = 1.0 - rj * rj;
  constexpr double kDegenerate = 1e-14;
  const bool det_i = si2 < kDegenerate, det_j = sj2 < kDegenerate;
  const double si = std::sqrt(std::max(si2, 0.0)), sj = std::sqrt(std::max(sj2, 0.0));
  double rho = 0.0;
  if (!det_i && !det_j) rho = std::clamp((r(i, j) - ri * rj) / (si * sj), -1.0, 1.0);

  auto conditional = [&](double z) {
    const double mi = mean[i] + ri * z;
    const double mj = mean[j] + rj * z;
    if (det_i && det_j) return (mi >= 0.0 && mj >= 0.0) ? 1.0 : 0.0;
    if (det_i) return mi >= 0.0 ? numeric::normal_cdf(mj / sj) : 0.0;
    if (det_j) return mj >= 0.0 ? numeric::normal_cdf(mi / si) : 0.0;
    return orthant2(mi / si, mj / sj, rho);
  };

  constexpr double kTail = 9.0;
  const double lo = std::max(-mean[pivot], -kTail);
  const double hi = kTail;
  if (lo >= hi) return 0.0;
  // Split at the discontinuities introduced by degenerate conditionals.
  std::vector<double> cuts{lo, hi};
  if (det_i && ri != 0.0) cuts.push_back(-mean[i] / ri);
  if (det_j && rj != 0.0) cuts.push_back(-mean[j] / rj);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = std::max(cuts[c], lo), b = std::min(cuts[c + 1], hi);
    if (b > a)
      total += numeric::integrate([&](double z) { return numeric::normal_pdf(z) * conditional(z); }, a, b, 1e-10);
  }
  return std::clamp(total, 0.0, 1.0);
}

/// Lower-triangular L with L L^T = C, tolerating semidefinite C (zero pivots
/// give zero columns).
inline std::vector<double> semidefinite_cholesky(const std::vector<double>& c, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = c[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (d <= 1e-12) continue;
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = c[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return l;
}

}  // namespace detail

/// Latent-Gaussian parameters of the joint bit-error PMF.
class ErrorPmfModel {
 public:
  /// `corr` is row-major width x width. It is symmetrized, given a unit
  /// diagonal, and repaired to PSD (eigenvalues clipped at 1e-8, then
  /// renormalized) when it has a materially negative eigenvalue.
  ErrorPmfModel(std::vector<double> mean, std::vector<double> corr) : mean_(std::move(mean)), corr_(std::move(corr)) {
    const std::size_t n = mean_.size();
    if (n == 0 || n > 64) throw InvalidArgument("error model width must be in [1, 64]");
    if (corr_.size() != n * n) throw InvalidArgument("correlation matrix size mismatch");
    for (double m : mean_)
      if (!std::isfinite(m)) throw InvalidArgument("latent mean must be finite");
    for (double c : corr_)
      if (!std::isfinite(c)) throw InvalidArgument("correlation must be finite");
    for (std::size_t i = 0; i < n; ++i) {
      corr_[i * n + i] = 1.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = std::clamp(0.5 * (corr_[i * n + j] + corr_[j * n + i]), -1.0, 1.0);
        corr_[i * n + j] = corr_[j * n + i] = s;
      }
    }
    repair();
    chol_ = detail::semidefinite_cholesky(corr_, n);
  }

  /// Independent bits with the given latent means.
  static ErrorPmfModel independent(std::vector<double> mean) {
    const std::size_t n = mean.size();
    std::vector<double> corr(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) corr[i * n + i] = 1.0;
    return ErrorPmfModel(std::move(mean), std::move(corr));
  }

  std::size_t width() const { return mean_.size(); }
  const std::vector<double>& latent_mean() const { return mean_; }
  const std::vector<double>& latent_corr() const { return corr_; }
  const std::vector<double>& chol() const { return chol_; }
  double corr(std::size_t i, std::size_t j) const { return corr_[i * width() + j]; }

  /// Marginal P(eta_i = 1).
  double bit_probability(std::size_t i) const { return numeric::normal_cdf(mean_[i]); }

 private:
  void repair() {
    const auto n = static_cast<Eigen::Index>(width());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(corr_.data(), n, n);
    const Eigen::MatrixXd dense = m;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    if (es.eigenvalues().minCoeff() >= -1e-10) return;
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(kEigenFloor);
    Eigen::MatrixXd fixed = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::VectorXd d = fixed.diagonal().cwiseSqrt().cwiseInverse();
    fixed = d.asDiagonal() * fixed * d.asDiagonal();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        corr_[static_cast<std::size_t>(i * n + j)] = i == j ? 1.0 : std::clamp(0.5 * (fixed(i, j) + fixed(j, i)), -1.0, 1.0);
  }

  std::vector<double> mean_;
  std::vector<double> corr_;
  std::vector<double> chol_;
};

/// Draws one error pattern as a bit mask (bit i = eta_i).
inline std::uint64_t sample_mask(const ErrorPmfModel& model, Rng& rng) {
  const std::size_t n = model.width();
  const auto& l = model.chol();
  const auto& mu = model.latent_mean();
  double z[64];
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.normal();
    double u = mu[i];
    for (std::size_t k = 0; k <= i; ++k) u += l[i * n + k] * z[k];
    if (u >= 0.0) mask |= std::uint64_t{1} << i;
  }
  return mask;
}

inline BitVector sample(const ErrorPmfModel& model, Rng& rng) {
  const auto mask = sample_mask(model, rng);
  BitVector eta(model.width());
  for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = (mask >> i) & 1u;
  return eta;
}

struct PmfEstimate {
  double probability = 0.0;
  double std_error = 0.0;  // zero when computed by quadrature
};

/// Probability of the exact pattern eta. Quadrature for width <= 3, Monte
/// Carlo over the latent Gaussian above that.
inline PmfEstimate pmf(const ErrorPmfModel& model, std::span<const std::uint8_t> eta, std::size_t mc_draws = 1'000'000,
                       std::uint64_t mc_seed = 0x5eed) {
  const std::size_t n = model.width();
  if (eta.size() != n) throw InvalidArgument("pmf: pattern width mismatch");
  if (n <= 3) {
    // Flip each latent coordinate whose bit is 0 so the event becomes an orthant.
    std::vector<double> mean(n), corr(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double si = eta[i] ? 1.0 : -1.0;
      mean[i] = si * model.latent_mean()[i];
      for (std::size_t j = 0; j < n; ++j) corr[i * n + j] = si * (eta[j] ? 1.0 : -1.0) * model.corr(i, j);
    }
    return {detail::orthant(mean, corr), 0.0};
  }
  std::uint64_t target = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (eta[i]) target |= std::uint64_t{1} << i;
  Rng rng(mc_seed);
  std::size_t hits = 0;
  for (std::size_t d = 0; d < mc_draws; ++d) hits += sample_mask(model, rng) == target;
  const double p = static_cast<double>(hits) / static_cast<double>(mc_draws);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(mc_draws))};
}

/// y_a = y_o XOR eta. Bit i of eta hits bit i (LSB = 0) of the word.
inline fixedpoint::FixedWord inject(const fixedpoint::FixedWord& w, std::uint64_t eta_mask) {
  return fixedpoint::FixedWord::from_bits(w.bits() ^ static_cast<std::uint32_t>(eta_mask), w.format());
}

inline fixedpoint::FixedWord inject(const fixedpoint::FixedWord& w, std::span<const std::uint8_t> eta) {
  if (eta.size() != static_cast<std::size_t>(w.format().total_bits)) throw InvalidArgument("inject: width mismatch");
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < eta.size(); ++i)
    if (eta[i]) mask |= std::uint64_t{1} << i;
  return inject(w, mask);
}

inline double clip_probability(double p) { return std::clamp(p, kMarginalClip, 1.0 - kMarginalClip); }

/// Model with requested marginals and equicorrelated latent bits.
inline ErrorPmfModel synthesize(std::span<const double> per_bit_probs, double corr) {
  const std::size_t n = per_bit_probs.size();
  if (n == 0) throw InvalidArgument("synthesize: empty probability vector");
  if (!(corr >= -1.0 && corr <= 1.0)) throw InvalidArgument("synthesize: correlation outside [-1, 1]");
  std::vector<double> mean(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = per_bit_probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("synthesize: probability outside [0, 1]");
    mean[i] = numeric::normal_quantile(clip_probability(p));
  }
  std::vector<double> c(n * n, corr);
  for (std::size_t i = 0; i < n; ++i) c[i * n + i] = 1.0;
  return ErrorPmfModel(std::move(mean), std::move(c));
}

/// Latent correlation reproducing a target joint P(eta_i = 1, eta_j = 1).
inline double fit_pair_correlation(double mu_i, double mu_j, double joint) {
  double lo = -1.0, hi = 1.0;
  if (joint <= orthant2(mu_i, mu_j, lo)) return lo;
  if (joint >= orthant2(mu_i, mu_j, hi)) return hi;
  for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    (orthant2(mu_i, mu_j, mid) < joint ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Moment-matching fit of the dichotomized Gaussian to observed patterns.
inline ErrorPmfModel fit(const ErrorSampleSet& samples) {
  const std::size_t n = samples.width();
  const std::size_t count = samples.size();
  if (count == 0) throw InvalidArgument("fit: no samples");
  std::vector<double> ones(n, 0.0), joint(n * n, 0.0);
  for (std::size_t s = 0; s < count; ++s) {
    const auto row = samples.row(s);
    for (std::size_t i = 0; i < n; ++i) {
      if (!row[i]) continue;
      ones[i] += 1.0;
      for (std::size_t j = i + 1; j < n; ++j) joint[i * n + j] += row[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<double> mean(n);
  std::vector<bool> degenerate(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = ones[i] * inv;
    degenerate[i] = p <= kMarginalClip || p >= 1.0 - kMarginalClip;
    mean[i] = numeric::normal_quantile(clip_probability(p));
  }
  std::vector<double> corr(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    corr[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      // A constant bit carries no information about its correlation.
      const double lam = (degenerate[i] || degenerate[j]) ? 0.0 : fit_pair_correlation(mean[i], mean[j], joint[i * n + j] * inv);
      corr[i * n + j] = corr[j * n + i] = lam;
    }
  }
  return ErrorPmfModel(std::move(mean), std::move(corr));
}

/// Word error rate P(eta != 0). Exact for width <= 3 (1 - pmf(0...0)),
/// Monte Carlo otherwise.
inline PmfEstimate word_error_rate(const ErrorPmfModel& model, std::size_t mc_draws = 200'000, std::uint64_t seed = 0x5eed) {
  const BitVector zero(model.width(), 0);
  const auto p0 = pmf(model, zero, mc_draws, seed);
  return {1.0 - p0.probability, p0.std_error};
}

}  // namespace ntvml::errormodel
