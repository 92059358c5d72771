#pragma once

// Random forest of CART trees (Gini criterion, bagging, random per-node feature
// subsets), each compiled into the two-stage hardware form: a comparator array
// followed by a lookup table keyed on the comparator output bits.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "ntvml/dataset.hpp"
#include "ntvml/errormodel.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/fixedpoint.hpp"
#include "ntvml/random.hpp"
#include "ntvml/voting.hpp"

namespace ntvml::forest {

using fixedpoint::FixedFormat;
using fixedpoint::FixedWord;

inline constexpr std::size_t kDefaultLutCap = 24;
inline constexpr std::size_t kMaxComparators = 64;

struct PrecisionPolicy {
  enum class Kind { Fixed, UniformBits };
  Kind kind = Kind::Fixed;
  FixedFormat fixed = FixedFormat::unit(8);
  int min_bits = 4;
  int max_bits = 8;

  static PrecisionPolicy fixed_format(FixedFormat f) { return {Kind::Fixed, f, 4, 8}; }
  static PrecisionPolicy uniform_bits(int lo = 4, int hi = 8) { return {Kind::UniformBits, FixedFormat::unit(8), lo, hi}; }

  /// Per-tree datapath format. Uniform draws are over total bit widths, each
  /// used as Q<B>.<B-1> so the unit interval stays covered.
  FixedFormat draw(Rng& rng) const {
    if (kind == Kind::Fixed) return fixed;
    const auto span = static_cast<std::uint64_t>(max_bits - min_bits + 1);
    return FixedFormat::unit(min_bits + static_cast<int>(rng.index(span)));
  }
};

struct ForestConfig {
  std::size_t ensemble_size = 10;
  std::size_t features_per_node = 3;
  std::size_t min_samples = 2;
  PrecisionPolicy precision{};
  std::size_t lut_cap = kDefaultLutCap;
  std::uint64_t seed = 1;
};

struct Bag {
  std::vector<std::size_t> bag;  // N draws with replacement
  std::vector<std::size_t> oob;  // indices never drawn, ascending
};

inline Bag bootstrap(std::size_t n, Rng& rng) {
  Bag b;
  b.bag.reserve(n);
  std::vector<bool> drawn(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(rng.index(n));
    b.bag.push_back(k);
    drawn[k] = true;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!drawn[i]) b.oob.push_back(i);
  return b;
}

inline Bag bootstrap(const Dataset& ds, Rng& rng) { return bootstrap(ds.rows(), rng); }

inline double gini_impurity(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw InvalidArgument("gini_impurity: empty node");
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
};

namespace detail {

/// Sum over children of (sum_c n_c^2) / n_child as an exact fraction. Larger
/// means purer children; comparing these exactly keeps split selection free of
/// rounding ties.
struct PurityScore {
  __int128 num = 0;
  __int128 den = 1;

  static PurityScore of(std::size_t l0, std::size_t l1, std::size_t r0, std::size_t r1) {
    const auto nl = static_cast<__int128>(l0 + l1), nr = static_cast<__int128>(r0 + r1);
    const __int128 a = static_cast<__int128>(l0) * l0 + static_cast<__int128>(l1) * l1;
    const __int128 b = static_cast<__int128>(r0) * r0 + static_cast<__int128>(r1) * r1;
    if (nl == 0) return {b, nr};
    if (nr == 0) return {a, nl};
    return {a * nr + b * nl, nl * nr};
  }
  friend bool operator>(const PurityScore& x, const PurityScore& y) { return x.num * y.den > y.num * x.den; }
};

inline double weighted_gini(std::size_t l0, std::size_t l1, std::size_t r0, std::size_t r1) {
  const double n = static_cast<double>(l0 + l1 + r0 + r1);
  double g = 0.0;
  if (l0 + l1) g += static_cast<double>(l0 + l1) / n * gini_impurity(std::array{l0, l1});
  if (r0 + r1) g += static_cast<double>(r0 + r1) / n * gini_impurity(std::array{r0, r1});
  return g;
}

inline double midpoint(double lo, double hi) {
  const double m = 0.5 * (lo + hi);
  return m > lo ? m : hi;
}

}  // namespace detail

/// Best Gini split of `rows` over the candidate features. Candidates are the
/// midpoints between consecutive distinct sorted values; rows with value >=
/// threshold go right. Ties go to the lowest feature index, then the lowest
/// threshold. Returns nullopt when no candidate lowers the impurity.
inline std::optional<Split> best_split(std::span<const std::size_t> rows, const Dataset& ds,
                                       std::span<const std::size_t> feature_subset) {
  if (feature_subset.empty()) throw InvalidArgument("best_split: empty feature subset");
  if (rows.size() < 2) return std::nullopt;
  std::size_t c0 = 0, c1 = 0;
  for (auto r : rows) (ds.label(r) ? c1 : c0)++;
  const auto parent = detail::PurityScore::of(c0, c1, 0, 0);

  std::vector<std::size_t> features(feature_subset.begin(), feature_subset.end());
  std::sort(features.begin(), features.end());

  std::optional<Split> best;
  detail::PurityScore best_score = parent;
  std::vector<std::pair<double, std::uint8_t>> column(rows.size());
  for (auto f : features) {
    if (f >= ds.features()) throw InvalidArgument("best_split: feature index out of range");
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {ds.at(rows[i], f), ds.label(rows[i])};
    std::sort(column.begin(), column.end());
    std::size_t l0 = 0, l1 = 0;
    for (std::size_t k = 1; k < column.size(); ++k) {
      (column[k - 1].second ? l1 : l0)++;
      if (!(column[k - 1].first < column[k].first)) continue;
      const auto score = detail::PurityScore::of(l0, l1, c0 - l0, c1 - l1);
      if (score > best_score) {
        best_score = score;
        best = Split{f, detail::midpoint(column[k - 1].first, column[k].first), 0.0};
        best->impurity_decrease = gini_impurity(std::array{c0, c1}) - detail::weighted_gini(l0, l1, c0 - l0, c1 - l1);
      }
    }
  }
  return best;
}

struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;   // comparator output 0 (x < threshold)
  std::size_t right = 0;  // comparator output 1 (x >= threshold)
  std::uint8_t label = 0;
};

/// Flattened binary tree; node 0 is the root.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  std::size_t internal_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.leaf; }));
  }
  std::size_t depth(std::size_t at = 0) const {
    const auto& n = nodes[at];
    return n.leaf ? 0 : 1 + std::max(depth(n.left), depth(n.right));
  }
  /// Floating-point traversal.
  std::uint8_t predict(std::span<const double> x) const {
    std::size_t at = 0;
    while (!nodes[at].leaf) at = x[nodes[at].feature] >= nodes[at].threshold ? nodes[at].right : nodes[at].left;
    return nodes[at].label;
  }
};

namespace detail {

inline std::uint8_t majority_label(std::span<const std::size_t> rows, const Dataset& ds) {
  std::size_t ones = 0;
  for (auto r : rows) ones += ds.label(r);
  return 2 * ones > rows.size() ? 1 : 0;
}

inline std::size_t grow(DecisionTree& tree, std::vector<std::size_t> rows, const Dataset& ds, const ForestConfig& cfg,
                        Rng& rng, std::vector<std::size_t>& feature_pool) {
  const std::size_t id = tree.nodes.size();
  tree.nodes.push_back(TreeNode{});
  const std::uint8_t label = majority_label(rows, ds);
  const bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return ds.label(r) == ds.label(rows[0]); });
  if (pure || rows.size() <= cfg.min_samples) {
    tree.nodes[id].label = label;
    return id;
  }
  // Partial Fisher-Yates: the first k entries of the pool become the subset.
  const std::size_t k = cfg.features_per_node;
  for (std::size_t i = 0; i < k; ++i) std::swap(feature_pool[i], feature_pool[i + rng.index(feature_pool.size() - i)]);
  const auto split = best_split(rows, ds, std::span(feature_pool.data(), k));
  if (!split) {
    tree.nodes[id].label = label;
    return id;
  }
  std::vector<std::size_t> left, right;
  for (auto r : rows) (ds.at(r, split->feature) >= split->threshold ? right : left).push_back(r);
  rows.clear();
  rows.shrink_to_fit();
  const std::size_t l = grow(tree, std::move(left), ds, cfg, rng, feature_pool);
  const std::size_t r = grow(tree, std::move(right), ds, cfg, rng, feature_pool);
  auto& node = tree.nodes[id];
  node.leaf = false;
  node.feature = split->feature;
  node.threshold = split->threshold;
  node.left = l;
  node.right = r;
  node.label = label;
  return id;
}

}  // namespace detail

/// Unpruned CART on the bag. Leaves form when a node is pure, holds at most
/// min_samples rows, or has no improving split among its random features.
inline DecisionTree train_tree(std::span<const std::size_t> bag, const Dataset& ds, const ForestConfig& cfg, Rng& rng) {
  if (bag.empty()) throw InvalidArgument("train_tree: empty bag");
  if (cfg.features_per_node == 0 || cfg.features_per_node > ds.features())
    throw InvalidArgument("train_tree: features_per_node must be in [1, M]");
  DecisionTree tree;
  std::vector<std::size_t> pool(ds.features());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  detail::grow(tree, std::vector<std::size_t>(bag.begin(), bag.end()), ds, cfg, rng, pool);
  return tree;
}

struct Comparator {
  std::size_t feature = 0;
  FixedWord threshold;
};

/// Tree in comparator-array + LUT form. Comparators are numbered in pre-order;
/// bit k of the comparator vector is comparator k's output.
class CompiledTree {
 public:
  CompiledTree() = default;

  const FixedFormat& format() const { return format_; }
  const std::vector<Comparator>& comparators() const { return comparators_; }
  std::size_t comparator_count() const { return comparators_.size(); }
  const DecisionTree& tree() const { return tree_; }
  /// Comparator index for each internal node (npos for leaves).
  const std::vector<std::size_t>& node_map() const { return node_map_; }
  bool materialized() const { return materialized_; }

  /// Stage 1: comparator outputs on quantized features.
  std::uint64_t comparator_bits(std::span<const double> x) const {
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < comparators_.size(); ++k) {
      const auto& c = comparators_[k];
      if (fixedpoint::compare(fixedpoint::quantize(x[c.feature], format_), c.threshold)) bits |= std::uint64_t{1} << k;
    }
    return bits;
  }

  /// Stage 2: LUT lookup. Bits of comparators off the active path are ignored.
  std::uint8_t lut(std::uint64_t bits) const {
    if (materialized_) return (table_[bits >> 6] >> (bits & 63)) & 1u;
    return path_lookup(bits);
  }

 private:
  friend CompiledTree compile(const DecisionTree&, const FixedFormat&, std::size_t, bool);

  std::uint8_t path_lookup(std::uint64_t bits) const {
    std::size_t at = 0;
    while (!tree_.nodes[at].leaf) at = ((bits >> node_map_[at]) & 1u) ? tree_.nodes[at].right : tree_.nodes[at].left;
    return tree_.nodes[at].label;
  }

  void fill_table(std::size_t at, std::uint64_t fixed_mask, std::uint64_t fixed_value, std::uint64_t all) {
    const auto& n = tree_.nodes[at];
    if (n.leaf) {
      if (!n.label) return;
      // Every completion of the free (off-path) bits maps to this leaf.
      const std::uint64_t free = all & ~fixed_mask;
      std::uint64_t sub = 0;
      do {
        const std::uint64_t idx = fixed_value | sub;
        table_[idx >> 6] |= std::uint64_t{1} << (idx & 63);
        sub = (sub - free) & free;
      } while (sub != 0);
      return;
    }
    const std::uint64_t bit = std::uint64_t{1} << node_map_[at];
    fill_table(n.left, fixed_mask | bit, fixed_value, all);
    fill_table(n.right, fixed_mask | bit, fixed_value | bit, all);
  }

  FixedFormat format_{};
  std::vector<Comparator> comparators_;
  DecisionTree tree_;
  std::vector<std::size_t> node_map_;
  std::vector<std::uint64_t> table_;
  bool materialized_ = false;
};

inline constexpr std::size_t kNotComparator = static_cast<std::size_t>(-1);

/// Quantizes thresholds into `fmt` and builds the LUT. Trees with more than
/// `lut_cap` comparators either keep the path form (same function, no table)
/// when `path_fallback` is set, or are rejected.
inline CompiledTree compile(const DecisionTree& tree, const FixedFormat& fmt, std::size_t lut_cap = kDefaultLutCap,
                            bool path_fallback = false) {
  if (tree.nodes.empty()) throw InvalidArgument("compile: empty tree");
  CompiledTree ct;
  ct.format_ = fmt;
  ct.tree_ = tree;
  ct.node_map_.assign(tree.nodes.size(), kNotComparator);
  // Pre-order numbering.
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const auto at = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[at];
    if (n.leaf) continue;
    ct.node_map_[at] = ct.comparators_.size();
    ct.comparators_.push_back({n.feature, fixedpoint::quantize(n.threshold, fmt)});
    stack.push_back(n.right);
    stack.push_back(n.left);
  }
  const std::size_t k = ct.comparators_.size();
  if (k > kMaxComparators || (k > lut_cap && !path_fallback))
    throw UnsupportedTree("compile: " + std::to_string(k) + " comparators exceed the LUT cap of " + std::to_string(lut_cap));
  if (k <= lut_cap && k <= 32) {
    const std::uint64_t entries = std::uint64_t{1} << k;
    ct.table_.assign(static_cast<std::size_t>((entries + 63) / 64), 0);
    ct.fill_table(0, 0, 0, entries - 1);
    ct.materialized_ = true;
  }
  return ct;
}

/// Optional fault models for one tree evaluation.
struct TreeFaults {
  const errormodel::ErrorPmfModel* output = nullptr;       // width 1, flips y_o
  const errormodel::ErrorPmfModel* comparators = nullptr;  // width = comparator count
};

/// y_a = y_o XOR eta for one compiled tree.
inline std::uint8_t classify_tree(const CompiledTree& ct, std::span<const double> x, const TreeFaults& faults = {},
                                  Rng* rng = nullptr) {
  std::uint64_t bits = ct.comparator_bits(x);
  if (!faults.comparators && !faults.output) return ct.lut(bits);
  if (!rng) throw InvalidArgument("classify_tree: error injection needs a random stream");
  if (faults.comparators) {
    if (faults.comparators->width() != ct.comparator_count())
      throw InvalidArgument("classify_tree: comparator error width mismatch");
    bits ^= errormodel::sample_mask(*faults.comparators, *rng);
  }
  std::uint8_t y = ct.lut(bits);
  if (faults.output) {
    if (faults.output->width() != 1) throw InvalidArgument("classify_tree: tree output error must have width 1");
    y ^= static_cast<std::uint8_t>(errormodel::sample_mask(*faults.output, *rng) & 1u);
  }
  return y;
}

/// Reference semantics for the compiled form: recursive traversal comparing
/// quantized features against quantized thresholds.
inline std::uint8_t traverse_quantized(const DecisionTree& tree, const FixedFormat& fmt, std::span<const double> x) {
  std::size_t at = 0;
  while (!tree.nodes[at].leaf) {
    const auto& n = tree.nodes[at];
    const bool right = fixedpoint::compare(fixedpoint::quantize(x[n.feature], fmt), fixedpoint::quantize(n.threshold, fmt));
    at = right ? n.right : n.left;
  }
  return tree.nodes[at].label;
}

struct ForestModel {
  std::vector<CompiledTree> trees;
  std::vector<std::vector<std::size_t>> bags;
  std::vector<std::vector<std::size_t>> oob;
  std::vector<double> oob_accuracy;   // P(R_l | eta_l = 0)
  std::vector<bool> oob_fallback;     // tree had no OOB rows; in-bag accuracy used
  std::vector<double> error_rate;     // p_eta_l
  voting::VoterKind voter_kind = voting::VoterKind::Majority;

  std::size_t size() const { return trees.size(); }

  voting::VoterWeights weights() const {
    if (voter_kind == voting::VoterKind::ErrorWeighted) return voting::error_weights(oob_accuracy, error_rate);
    return voting::VoterWeights(oob_accuracy);
  }
};

/// Fraction of each tree's OOB rows classified correctly without errors.
inline std::vector<double> estimate_oob(ForestModel& forest, const Dataset& ds) {
  std::vector<double> acc(forest.size());
  forest.oob_fallback.assign(forest.size(), false);
  for (std::size_t l = 0; l < forest.size(); ++l) {
    std::span<const std::size_t> rows = forest.oob[l];
    if (rows.empty()) {
      forest.oob_fallback[l] = true;
      rows = forest.bags[l];
    }
    std::size_t correct = 0;
    for (auto r : rows) correct += classify_tree(forest.trees[l], ds.row(r)) == ds.label(r);
    acc[l] = rows.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(rows.size());
  }
  forest.oob_accuracy = acc;
  return acc;
}

/// Trains L trees, each from its own bootstrap bag and seeded sub-stream, and
/// compiles each at a precision drawn from the policy.
inline ForestModel train_forest(const Dataset& ds, const ForestConfig& cfg, Rng& rng) {
  if (cfg.ensemble_size == 0) throw InvalidArgument("train_forest: ensemble size must be >= 1");
  if (ds.rows() == 0) throw InvalidArgument("train_forest: empty dataset");
  const std::uint64_t base = rng.next_u64();
  ForestModel forest;
  for (std::size_t l = 0; l < cfg.ensemble_size; ++l) {
    Rng tree_rng(derive_seed(base, {l}));
    // Precision has its own stream so the tree structures do not depend on the policy.
    Rng precision_rng(derive_seed(base, {l, 1}));
    const auto fmt = cfg.precision.draw(precision_rng);
    auto bag = bootstrap(ds, tree_rng);
    auto tree = train_tree(bag.bag, ds, cfg, tree_rng);
    forest.trees.push_back(compile(tree, fmt, cfg.lut_cap, true));
    forest.bags.push_back(std::move(bag.bag));
    forest.oob.push_back(std::move(bag.oob));
  }
  forest.error_rate.assign(cfg.ensemble_size, 0.0);
  estimate_oob(forest, ds);
  return forest;
}

/// Error-free votes of every tree.
inline std::vector<std::uint8_t> votes(const ForestModel& forest, std::span<const double> x) {
  std::vector<std::uint8_t> v(forest.size());
  for (std::size_t l = 0; l < forest.size(); ++l) v[l] = classify_tree(forest.trees[l], x);
  return v;
}

inline std::uint8_t classify_forest(const ForestModel& forest, std::span<const double> x) {
  return voting::combine(votes(forest, x), forest.voter_kind, forest.weights());
}

}  // namespace ntvml::forest
