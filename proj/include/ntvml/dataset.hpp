#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ntvml/errors.hpp"

namespace ntvml {

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;
};

/// Training rows land in [0, kScaleTop]; keeping clear of 1.0 lets every
/// Q<B>.<B-1> format hold the scaled range without saturating the maximum.
inline constexpr double kScaleTop = 1.0 - 0x1.0p-8;

/// Binary-labelled feature matrix (row-major) plus the per-feature ranges that
/// map raw values into the unit interval.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t features, std::vector<double> x, std::vector<std::uint8_t> y)
      : m_(features), x_(std::move(x)), y_(std::move(y)) {
    if (m_ == 0 || x_.size() != y_.size() * m_) throw InvalidArgument("dataset: feature matrix shape mismatch");
    for (auto& label : y_)
      if (label > 1) throw InvalidArgument("dataset: labels must be binary");
  }

  std::size_t rows() const { return y_.size(); }
  std::size_t features() const { return m_; }
  std::span<const double> row(std::size_t i) const { return {x_.data() + i * m_, m_}; }
  double at(std::size_t i, std::size_t j) const { return x_[i * m_ + j]; }
  std::uint8_t label(std::size_t i) const { return y_[i]; }
  const std::vector<std::uint8_t>& labels() const { return y_; }
  const std::vector<double>& values() const { return x_; }

  /// Ranges recorded at load time or used to scale this dataset.
  const std::vector<FeatureRange>& scaling() const { return scaling_; }
  bool is_scaled() const { return scaled_; }

  std::size_t count_label(std::uint8_t c) const { return static_cast<std::size_t>(std::count(y_.begin(), y_.end(), c)); }

  /// Per-feature min/max over all rows.
  std::vector<FeatureRange> ranges() const {
    std::vector<FeatureRange> r(m_);
    for (std::size_t j = 0; j < m_; ++j) {
      r[j] = {at(0, j), at(0, j)};
      for (std::size_t i = 1; i < rows(); ++i) {
        r[j].min = std::min(r[j].min, at(i, j));
        r[j].max = std::max(r[j].max, at(i, j));
      }
    }
    return r;
  }

  void set_scaling(std::vector<FeatureRange> r) {
    if (r.size() != m_) throw InvalidArgument("dataset: scaling size mismatch");
    scaling_ = std::move(r);
  }

  /// Maps raw values with the given ranges; values outside the ranges (test
  /// rows) fall outside [0, 1) and are left for quantization to saturate.
  Dataset scaled_by(const std::vector<FeatureRange>& r) const {
    if (r.size() != m_) throw InvalidArgument("dataset: scaling size mismatch");
    std::vector<double> out(x_.size());
    for (std::size_t i = 0; i < rows(); ++i)
      for (std::size_t j = 0; j < m_; ++j) out[i * m_ + j] = scale_value(at(i, j), r[j]);
    Dataset d(m_, std::move(out), y_);
    d.scaling_ = r;
    d.scaled_ = true;
    return d;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    std::vector<double> x;
    std::vector<std::uint8_t> y;
    x.reserve(idx.size() * m_);
    y.reserve(idx.size());
    for (auto i : idx) {
      auto r = row(i);
      x.insert(x.end(), r.begin(), r.end());
      y.push_back(y_[i]);
    }
    Dataset d(m_, std::move(x), std::move(y));
    d.scaling_ = scaling_;
    d.scaled_ = scaled_;
    return d;
  }

  static double scale_value(double v, const FeatureRange& r) {
    const double span = r.max - r.min;
    return span > 0.0 ? (v - r.min) / span * kScaleTop : 0.0;
  }

 private:
  std::size_t m_ = 0;
  std::vector<double> x_;
  std::vector<std::uint8_t> y_;
  std::vector<FeatureRange> scaling_;
  bool scaled_ = false;
};

}  // namespace ntvml
