#pragma once

// Wisconsin Diagnostic Breast Cancer CSV: id, diagnosis (M/B), 30 features.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ntvml/dataset.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/random.hpp"

namespace ntvml::harness {

inline constexpr std::size_t kWdbcFeatures = 30;

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

/// Shortest round-tripping decimal form.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline Dataset parse_wdbc(std::istream& in) {
  std::vector<double> x;
  std::vector<std::uint8_t> y;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split_csv(line);
    if (cols.size() != kWdbcFeatures + 2)
      throw SchemaError("wdbc: expected " + std::to_string(kWdbcFeatures + 2) + " columns, found " +
                        std::to_string(cols.size()) + " on line " + std::to_string(line_no));
    const auto diag = detail::trim(cols[1]);
    if (diag == "M") y.push_back(1);
    else if (diag == "B") y.push_back(0);
    else throw ParseError("wdbc: diagnosis must be M or B", line_no);
    for (std::size_t j = 0; j < kWdbcFeatures; ++j) {
      double v;
      if (!detail::parse_double(cols[j + 2], v) || !std::isfinite(v))
        throw ParseError("wdbc: bad numeric value in column " + std::to_string(j + 3), line_no);
      x.push_back(v);
    }
  }
  if (y.empty()) throw SchemaError("wdbc: no data rows");
  Dataset ds(kWdbcFeatures, std::move(x), std::move(y));
  ds.set_scaling(ds.ranges());
  return ds;
}

/// Drops the id column, maps M -> 1 and B -> 0, records per-feature ranges.
inline Dataset load_wdbc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_wdbc(in);
}

/// Writes rows in the same layout with sequential ids.
inline void write_wdbc(const Dataset& ds, std::ostream& out) {
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    out << i << ',' << (ds.label(i) ? 'M' : 'B');
    for (double v : ds.row(i)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_index;
  std::vector<std::size_t> test_index;
};

/// Stratified random split. Scaling is fitted on the training rows and applied
/// to both halves.
inline Split split(const Dataset& ds, double ratio, Rng& rng) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("split: ratio must be in (0, 1)");
  Split s;
  for (std::uint8_t c : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.rows(); ++i)
      if (ds.label(i) == c) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(idx.size()) + 0.5));
    if (k == 0) throw SplitError("split: class " + std::to_string(c) + " absent from the training half");
    s.train_index.insert(s.train_index.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    s.test_index.insert(s.test_index.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(s.train_index.begin(), s.train_index.end());
  std::sort(s.test_index.begin(), s.test_index.end());
  const Dataset raw_train = ds.subset(s.train_index);
  const auto ranges = raw_train.ranges();
  s.train = raw_train.scaled_by(ranges);
  s.test = ds.subset(s.test_index).scaled_by(ranges);
  return s;
}

}  // namespace ntvml::harness
