#pragma once

// Decision combiners for the tree ensemble: plain majority, weighted voting on
// per-tree reliabilities p_l, and the error-weighted variant whose p_l folds in
// each tree's timing-error rate.

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ntvml/errors.hpp"

namespace ntvml::voting {

enum class VoterKind { Majority, Weighted, ErrorWeighted };

struct VoterWeights {
  std::vector<double> raw;         // p_l
  std::vector<double> normalized;  // p_l / sum p_l, empty when the sum is zero

  VoterWeights() = default;
  explicit VoterWeights(std::vector<double> p) : raw(std::move(p)) {
    for (double v : raw)
      if (!(v >= 0.0)) throw InvalidArgument("voter weight must be non-negative");
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (total > 0.0)
      for (double v : raw) normalized.push_back(v / total);
  }

  std::size_t size() const { return raw.size(); }
  bool degenerate() const { return normalized.empty(); }
};

/// 1 iff strictly more than half the votes are 1.
inline std::uint8_t majority(std::span<const std::uint8_t> votes) {
  if (votes.empty()) throw InvalidArgument("majority: no votes");
  std::size_t ones = 0;
  for (auto v : votes) ones += v ? 1 : 0;
  return 2 * ones > votes.size() ? 1 : 0;
}

/// 1 iff the normalized weight behind label 1 exceeds one half. Evaluated as
/// mass(1) > mass(0) on the raw weights, which is the same rule without the
/// division.
inline std::uint8_t weighted(std::span<const std::uint8_t> votes, const VoterWeights& w) {
  if (votes.size() != w.size()) throw InvalidArgument("weighted: vote/weight length mismatch");
  if (votes.empty()) throw InvalidArgument("weighted: no votes");
  if (w.degenerate()) throw DegenerateWeights("weighted: all voter weights are zero");
  double mass[2] = {0.0, 0.0};
  for (std::size_t l = 0; l < votes.size(); ++l) mass[votes[l] ? 1 : 0] += w.raw[l];
  return mass[1] > mass[0] ? 1 : 0;
}

/// Per-tree reliability under timing errors:
///   p_l = P(R_l | eta_l = 0) (1 - p_eta_l) + (1 - P(R_l | eta_l = 0)) p_eta_l.
/// With p_eta_l = 0 this is the conventional OOB-accuracy weight.
inline VoterWeights error_weights(std::span<const double> oob_accuracy, std::span<const double> error_rate) {
  if (oob_accuracy.size() != error_rate.size()) throw InvalidArgument("error_weights: length mismatch");
  std::vector<double> p(oob_accuracy.size());
  for (std::size_t l = 0; l < p.size(); ++l) {
    const double acc = oob_accuracy[l], pe = error_rate[l];
    if (!(acc >= 0.0 && acc <= 1.0) || !(pe >= 0.0 && pe <= 1.0))
      throw InvalidArgument("error_weights: probabilities must lie in [0, 1]");
    p[l] = acc * (1.0 - pe) + (1.0 - acc) * pe;
  }
  return VoterWeights(std::move(p));
}

/// MAP decision: argmax_c sum_l 1{votes_l = c} p_l over `labels` (ascending
/// order gives the smallest-label tie break).
inline int map_vote(std::span<const int> votes, const VoterWeights& w, std::span<const int> labels) {
  if (votes.size() != w.size()) throw InvalidArgument("map_vote: vote/weight length mismatch");
  if (labels.empty()) throw InvalidArgument("map_vote: empty label set");
  std::vector<double> mass(labels.size(), 0.0);
  for (std::size_t l = 0; l < votes.size(); ++l) {
    std::size_t k = 0;
    while (k < labels.size() && labels[k] != votes[l]) ++k;
    if (k == labels.size()) throw InvalidArgument("map_vote: vote outside label set");
    mass[k] += w.raw[l];
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < labels.size(); ++k)
    if (mass[k] > mass[best] || (mass[k] == mass[best] && labels[k] < labels[best])) best = k;
  return labels[best];
}

/// Ensemble combiner used by the forest. Zero total weight falls back to the
/// majority rule and raises `degenerate_fallback` when provided.
inline std::uint8_t combine(std::span<const std::uint8_t> votes, VoterKind kind, const VoterWeights& w,
                            bool* degenerate_fallback = nullptr) {
  if (kind == VoterKind::Majority) return majority(votes);
  if (w.degenerate()) {
    if (degenerate_fallback) *degenerate_fallback = true;
    return majority(votes);
  }
  return weighted(votes, w);
}

}  // namespace ntvml::voting
