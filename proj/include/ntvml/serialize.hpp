#pragma once

// JSON documents for error models, profiles, trained models and run
// configuration, plus the error-sample CSV format (header `width=B`, then one
// comma-separated 0/1 row per observed pattern, bit 0 first).

#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ntvml/errormodel.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/fixedpoint.hpp"
#include "ntvml/forest.hpp"
#include "ntvml/profile.hpp"
#include "ntvml/sweep.hpp"
#include "ntvml/svm.hpp"
#include "ntvml/wdbc.hpp"

namespace ntvml::serialize {

using json = nlohmann::ordered_json;

namespace detail {

template <class T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
void get_optional(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = get<T>(j, key);
}

}  // namespace detail

// ---- error models -------------------------------------------------------

inline json to_json(const errormodel::ErrorPmfModel& m) {
  const std::size_t n = m.width();
  json corr = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < n; ++k) row.push_back(m.corr(i, k));
    corr.push_back(row);
  }
  std::vector<double> marginals(n);
  for (std::size_t i = 0; i < n; ++i) marginals[i] = m.bit_probability(i);
  return json{{"width", n}, {"mean", m.latent_mean()}, {"correlation", corr}, {"marginals", marginals}};
}

inline errormodel::ErrorPmfModel error_model_from_json(const json& j) {
  const auto n = detail::get<std::size_t>(j, "width");
  const auto mean = detail::get<std::vector<double>>(j, "mean");
  const auto rows = detail::get<std::vector<std::vector<double>>>(j, "correlation");
  if (mean.size() != n || rows.size() != n) throw SchemaError("error model: width does not match mean/correlation");
  std::vector<double> corr;
  for (const auto& r : rows) {
    if (r.size() != n) throw SchemaError("error model: correlation matrix is not square");
    corr.insert(corr.end(), r.begin(), r.end());
  }
  try {
    return errormodel::ErrorPmfModel(mean, corr);
  } catch (const InvalidArgument& e) {
    throw SchemaError(std::string("error model: ") + e.what());
  }
}

inline errormodel::ErrorSampleSet parse_error_samples(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = harness::detail::trim(line);
    if (t.empty()) continue;
    if (t.substr(0, 6) != "width=") throw SchemaError("error samples: first line must be 'width=B'");
    double w;
    if (!harness::detail::parse_double(t.substr(6), w) || w < 1 || w > 64 || w != static_cast<double>(static_cast<std::size_t>(w)))
      throw ParseError("error samples: width must be an integer in [1, 64]", line_no);
    width = static_cast<std::size_t>(w);
    break;
  }
  if (width == 0) throw SchemaError("error samples: empty file");
  errormodel::ErrorSampleSet set(width);
  std::vector<std::uint8_t> row(width);
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = harness::detail::trim(line);
    if (t.empty()) continue;
    const auto cols = harness::detail::split_csv(t);
    if (cols.size() != width)
      throw SchemaError("error samples: expected " + std::to_string(width) + " bits on line " + std::to_string(line_no));
    for (std::size_t i = 0; i < width; ++i) {
      const auto c = harness::detail::trim(cols[i]);
      if (c != "0" && c != "1") throw ParseError("error samples: bits must be 0 or 1", line_no);
      row[i] = c == "1";
    }
    set.add(row);
  }
  if (set.size() == 0) throw SchemaError("error samples: no sample rows");
  return set;
}

inline errormodel::ErrorSampleSet read_error_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_error_samples(in);
}

inline std::string error_samples_csv(const errormodel::ErrorSampleSet& s) {
  std::ostringstream out;
  out << "width=" << s.width() << '\n';
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto r = s.row(k);
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << int(r[i]);
    out << '\n';
  }
  return out.str();
}

// ---- profiles -----------------------------------------------------------

inline json to_json(const harness::ErrorProfile& p) {
  json points = json::array();
  for (const auto& pt : p.points) {
    json blocks = json::array();
    for (const auto& b : pt.blocks)
      blocks.push_back({{"id", b.id}, {"width", b.width}, {"bit_probabilities", b.bit_probabilities}, {"correlation", b.correlation}});
    points.push_back({{"delay_variation", pt.delay_variation}, {"blocks", blocks}});
  }
  return json{{"provenance", p.provenance}, {"interpolation", p.interpolation}, {"points", points}};
}

inline harness::ErrorProfile profile_from_json(const json& j) {
  harness::ErrorProfile p;
  detail::get_optional(j, "provenance", p.provenance);
  detail::get_optional(j, "interpolation", p.interpolation);
  if (!j.contains("points") || !j["points"].is_array()) throw SchemaError("profile: missing 'points' array");
  for (const auto& jp : j["points"]) {
    harness::ProfilePoint pt;
    pt.delay_variation = detail::get<double>(jp, "delay_variation");
    if (!jp.contains("blocks") || !jp["blocks"].is_array()) throw SchemaError("profile: point without 'blocks' array");
    for (const auto& jb : jp["blocks"]) {
      harness::BlockSpec b;
      b.id = detail::get<std::string>(jb, "id");
      b.width = detail::get<std::size_t>(jb, "width");
      b.bit_probabilities = detail::get<std::vector<double>>(jb, "bit_probabilities");
      detail::get_optional(jb, "correlation", b.correlation);
      pt.blocks.push_back(std::move(b));
    }
    p.points.push_back(std::move(pt));
  }
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError(e.what());
  }
  return p;
}

// ---- trained models -----------------------------------------------------

inline json to_json(const fixedpoint::FixedFormat& f) { return fixedpoint::to_string(f); }

inline fixedpoint::FixedFormat format_from_json(const json& j) {
  if (!j.is_string()) throw SchemaError("format must be a 'Q<B>.<F>' string");
  try {
    return fixedpoint::parse_format(j.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw SchemaError(e.what());
  }
}

inline json to_json(const forest::DecisionTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) {
    if (n.leaf) nodes.push_back({{"label", n.label}});
    else
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}, {"label", n.label}});
  }
  return nodes;
}

inline forest::DecisionTree tree_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw SchemaError("tree: nodes must be a non-empty array");
  forest::DecisionTree t;
  for (const auto& jn : j) {
    forest::TreeNode n;
    n.label = detail::get<std::uint8_t>(jn, "label");
    if (jn.contains("feature")) {
      n.leaf = false;
      n.feature = detail::get<std::size_t>(jn, "feature");
      n.threshold = detail::get<double>(jn, "threshold");
      n.left = detail::get<std::size_t>(jn, "left");
      n.right = detail::get<std::size_t>(jn, "right");
    }
    t.nodes.push_back(n);
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    if (!n.leaf && (n.left <= i || n.right <= i || n.left >= t.nodes.size() || n.right >= t.nodes.size()))
      throw SchemaError("tree: child index out of order or range");
  }
  return t;
}

inline json to_json(const forest::ForestModel& f) {
  json trees = json::array();
  for (std::size_t l = 0; l < f.size(); ++l)
    trees.push_back({{"format", to_json(f.trees[l].format())}, {"nodes", to_json(f.trees[l].tree())}});
  return json{{"kind", "rf"}, {"oob_accuracy", f.oob_accuracy}, {"trees", trees}};
}

inline forest::ForestModel forest_from_json(const json& j, std::size_t lut_cap = forest::kDefaultLutCap) {
  forest::ForestModel f;
  if (!j.contains("trees") || !j["trees"].is_array()) throw SchemaError("forest: missing 'trees' array");
  for (const auto& jt : j["trees"]) {
    if (!jt.contains("format") || !jt.contains("nodes")) throw SchemaError("forest: tree needs 'format' and 'nodes'");
    f.trees.push_back(forest::compile(tree_from_json(jt["nodes"]), format_from_json(jt["format"]), lut_cap, true));
  }
  f.oob_accuracy = detail::get<std::vector<double>>(j, "oob_accuracy");
  if (f.oob_accuracy.size() != f.size()) throw SchemaError("forest: one OOB accuracy per tree required");
  f.bags.resize(f.size());
  f.oob.resize(f.size());
  f.oob_fallback.assign(f.size(), false);
  f.error_rate.assign(f.size(), 0.0);
  return f;
}

inline json to_json(const svm::SvmModel& m) {
  const auto& f = m.formats;
  return json{{"kind", "svm"},
              {"features", m.features},
              {"beta", m.beta},
              {"gamma", m.gamma},
              {"bias", m.bias},
              {"alphas", m.alphas},
              {"support_vectors", m.support_vectors},
              {"formats",
               {{"input", to_json(f.input)},
                {"coefficient", to_json(f.coefficient)},
                {"stage2_input", to_json(f.stage2_input)},
                {"output", to_json(f.output)},
                {"weight_shift", f.weight_shift}}}};
}

inline svm::SvmModel svm_from_json(const json& j) {
  svm::SvmModel m;
  m.features = detail::get<std::size_t>(j, "features");
  m.beta = detail::get<double>(j, "beta");
  m.gamma = detail::get<double>(j, "gamma");
  m.bias = detail::get<double>(j, "bias");
  m.alphas = detail::get<std::vector<double>>(j, "alphas");
  m.support_vectors = detail::get<std::vector<double>>(j, "support_vectors");
  if (m.features == 0 || m.support_vectors.size() != m.alphas.size() * m.features)
    throw SchemaError("svm: support vector matrix does not match alphas and feature count");
  if (!j.contains("formats")) throw SchemaError("svm: missing 'formats'");
  const auto& jf = j["formats"];
  for (const char* k : {"input", "coefficient", "stage2_input", "output", "weight_shift"})
    if (!jf.contains(k)) throw SchemaError(std::string("svm: missing format '") + k + "'");
  m.formats.input = format_from_json(jf["input"]);
  m.formats.coefficient = format_from_json(jf["coefficient"]);
  m.formats.stage2_input = format_from_json(jf["stage2_input"]);
  m.formats.output = format_from_json(jf["output"]);
  m.formats.weight_shift = detail::get<int>(jf, "weight_shift");
  m.weight_matrix = svm::precompute(m);
  svm::quantize_parameters(m);
  return m;
}

// ---- run configuration --------------------------------------------------

/// Applies the recognised keys of a config document onto `cfg`. Unknown keys
/// are rejected so that typos do not silently fall back to defaults.
inline void apply_config(const json& j, harness::SweepConfig& cfg) {
  if (!j.is_object()) throw SchemaError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "instances") cfg.n_instances = detail::get<std::size_t>(j, "instances");
    else if (key == "ensemble_size") cfg.ensemble_size = detail::get<std::size_t>(j, "ensemble_size");
    else if (key == "split_ratio") cfg.split_ratio = detail::get<double>(j, "split_ratio");
    else if (key == "jitter_sigma") cfg.jitter_sigma = detail::get<double>(j, "jitter_sigma");
    else if (key == "precision_rate_base") cfg.precision_rate_base = detail::get<double>(j, "precision_rate_base");
    else if (key == "include_baseline") cfg.include_baseline = detail::get<bool>(j, "include_baseline");
    else if (key == "architectures") {
      cfg.architectures.clear();
      try {
        for (const auto& a : detail::get<std::vector<std::string>>(j, "architectures"))
          cfg.architectures.push_back(harness::parse_arch(a));
      } catch (const InvalidArgument& e) {
        throw SchemaError(std::string("config: ") + e.what());
      }
    } else if (key == "forest") {
      if (!value.is_object()) throw SchemaError("config: 'forest' must be an object");
      for (const auto& [k, v] : value.items()) {
        if (k == "features_per_node") cfg.forest.features_per_node = detail::get<std::size_t>(value, "features_per_node");
        else if (k == "min_samples") cfg.forest.min_samples = detail::get<std::size_t>(value, "min_samples");
        else if (k == "lut_cap") cfg.forest.lut_cap = detail::get<std::size_t>(value, "lut_cap");
        else throw SchemaError("config: unknown forest key '" + k + "'");
      }
    } else if (key == "svm") {
      if (!value.is_object()) throw SchemaError("config: 'svm' must be an object");
      for (const auto& [k, v] : value.items()) {
        if (k == "cost") cfg.svm.cost = detail::get<double>(value, "cost");
        else if (k == "beta") cfg.svm.beta = detail::get<double>(value, "beta");
        else if (k == "gamma") cfg.svm.gamma = detail::get<double>(value, "gamma");
        else if (k == "tolerance") cfg.svm.tolerance = detail::get<double>(value, "tolerance");
        else throw SchemaError("config: unknown svm key '" + k + "'");
      }
    } else {
      throw SchemaError("config: unknown key '" + key + "'");
    }
  }
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace ntvml::serialize
