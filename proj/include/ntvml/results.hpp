#pragma once

// CSV persistence for sweep results and decomposition tables. Files are
// written to a temporary sibling and renamed, so a failed run leaves no
// partial output.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ntvml/errors.hpp"
#include "ntvml/sweep.hpp"
#include "ntvml/wdbc.hpp"

namespace ntvml::harness {

inline constexpr const char* kResultsHeader = "arch,delay_variation,instance,p_det";
inline constexpr const char* kSummaryHeader = "arch,delay_variation,median_pdet,std_pdet";
inline constexpr const char* kDecompositionHeader = "L,diversity,noise,bias_sq,variance,direct,se";

inline void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::remove(tmp.c_str());
      throw IoError("write failed for " + path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::remove(tmp.c_str());
    throw IoError("cannot move output into place at " + path + ": " + ec.message());
  }
}

inline std::string results_csv(const std::vector<InstanceResult>& rows) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : rows)
    out << r.arch << ',' << detail::format_double(r.delay_variation) << ',' << r.instance << ','
        << detail::format_double(r.p_det) << '\n';
  return out.str();
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << kSummaryHeader << '\n';
  for (const auto& r : rows)
    out << r.arch << ',' << detail::format_double(r.delay_variation) << ',' << detail::format_double(r.median_pdet)
        << ',' << detail::format_double(r.std_pdet) << '\n';
  return out.str();
}

/// Writes the per-instance CSV and the summary CSV.
inline void write_results(const SweepResults& results, const std::string& raw_path, const std::string& summary_path) {
  write_atomic(raw_path, results_csv(results.rows));
  write_atomic(summary_path, summary_csv(results.summary));
}

namespace detail {

inline std::vector<std::vector<std::string_view>> read_table(std::istream& in, const char* header, std::string& storage,
                                                             std::vector<std::size_t>& line_numbers) {
  std::ostringstream buf;
  buf << in.rdbuf();
  storage = buf.str();
  std::vector<std::vector<std::string_view>> rows;
  std::string_view all(storage);
  std::size_t line_no = 0;
  bool seen_header = false;
  while (!all.empty()) {
    const auto nl = all.find('\n');
    std::string_view line = trim(all.substr(0, nl));
    all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) throw SchemaError("expected header '" + std::string(header) + "', found '" + std::string(line) + "'");
      seen_header = true;
      continue;
    }
    rows.push_back(split_csv(line));
    line_numbers.push_back(line_no);
  }
  if (!seen_header) throw SchemaError("missing header '" + std::string(header) + "'");
  return rows;
}

inline double field_double(std::string_view s, std::size_t line) {
  double v;
  if (!parse_double(s, v) || !std::isfinite(v)) throw ParseError("bad number '" + std::string(s) + "'", line);
  return v;
}

inline std::size_t field_index(std::string_view s, std::size_t line) {
  s = trim(s);
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError("bad integer '" + std::string(s) + "'", line);
  return v;
}

}  // namespace detail

inline std::vector<InstanceResult> parse_results(std::istream& in) {
  std::string storage;
  std::vector<std::size_t> lines;
  const auto table = detail::read_table(in, kResultsHeader, storage, lines);
  std::vector<InstanceResult> out;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& f = table[k];
    if (f.size() != 4) throw SchemaError("results: expected 4 columns on line " + std::to_string(lines[k]));
    InstanceResult r{std::string(detail::trim(f[0])), detail::field_double(f[1], lines[k]),
                     detail::field_index(f[2], lines[k]), detail::field_double(f[3], lines[k])};
    if (r.p_det < 0.0 || r.p_det > 1.0) throw ParseError("p_det outside [0, 1]", lines[k]);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<InstanceResult> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_results(in);
}

inline std::vector<SummaryRow> parse_summary(std::istream& in) {
  std::string storage;
  std::vector<std::size_t> lines;
  const auto table = detail::read_table(in, kSummaryHeader, storage, lines);
  std::vector<SummaryRow> out;
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& f = table[k];
    if (f.size() != 4) throw SchemaError("summary: expected 4 columns on line " + std::to_string(lines[k]));
    out.push_back({std::string(detail::trim(f[0])), detail::field_double(f[1], lines[k]),
                   detail::field_double(f[2], lines[k]), detail::field_double(f[3], lines[k]), 0});
  }
  return out;
}

inline std::vector<SummaryRow> read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_summary(in);
}

struct DecompositionRow {
  std::size_t ensemble_size = 1;
  bool diversity = false;
  double noise = 0.0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double direct = 0.0;
  double se = 0.0;  // standard error of the identity gap
};

inline std::string decomposition_csv(const std::vector<DecompositionRow>& rows) {
  std::ostringstream out;
  out << kDecompositionHeader << '\n';
  for (const auto& r : rows)
    out << r.ensemble_size << ',' << (r.diversity ? 1 : 0) << ',' << detail::format_double(r.noise) << ','
        << detail::format_double(r.bias_sq) << ',' << detail::format_double(r.variance) << ','
        << detail::format_double(r.direct) << ',' << detail::format_double(r.se) << '\n';
  return out.str();
}

}  // namespace ntvml::harness
