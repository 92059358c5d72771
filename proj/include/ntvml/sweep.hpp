#pragma once

// Multi-instance robustness sweep: every architecture is evaluated on the test
// half at every profile point for n_instances emulated process instances.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ntvml/dataset.hpp"
#include "ntvml/errormodel.hpp"
#include "ntvml/errors.hpp"
#include "ntvml/forest.hpp"
#include "ntvml/profile.hpp"
#include "ntvml/random.hpp"
#include "ntvml/svm.hpp"
#include "ntvml/voting.hpp"
#include "ntvml/wdbc.hpp"

namespace ntvml::harness {

enum class Arch { Svm, RfMajoritySingle, RfMajority, RfWeighted, RfErrorWeighted };

inline constexpr Arch kAllArchs[] = {Arch::Svm, Arch::RfMajoritySingle, Arch::RfMajority, Arch::RfWeighted,
                                     Arch::RfErrorWeighted};

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::Svm: return "SVM";
    case Arch::RfMajoritySingle: return "RF-M-L1";
    case Arch::RfMajority: return "RF-M";
    case Arch::RfWeighted: return "RF-W";
    case Arch::RfErrorWeighted: return "RF-EW";
  }
  return "?";
}

inline Arch parse_arch(std::string_view s) {
  for (Arch a : kAllArchs)
    if (arch_name(a) == s) return a;
  throw InvalidArgument("unknown architecture '" + std::string(s) + "'");
}

inline bool is_forest(Arch a) { return a != Arch::Svm; }

struct SweepConfig {
  std::size_t n_instances = 30;
  ErrorProfile profile = default_profile();
  std::vector<Arch> architectures{std::begin(kAllArchs), std::end(kAllArchs)};
  std::size_t ensemble_size = 10;
  double split_ratio = 0.5;
  std::uint64_t seed = 1;
  double jitter_sigma = 0.5;          // lognormal sigma of instance error parameters
  double precision_rate_base = 2.0;   // per-tree rate scales as base^(B - reference_bits)
  int precision_reference_bits = 8;
  bool include_baseline = true;       // error-free row at delay 0
  std::size_t workers = 1;
  forest::ForestConfig forest{};      // ensemble_size and precision are set per architecture
  svm::SvmTrainConfig svm{};
  svm::SvmPrecision svm_precision{};

  void validate() const {
    if (n_instances == 0) throw InvalidArgument("sweep: n_instances must be >= 1");
    if (ensemble_size == 0) throw InvalidArgument("sweep: ensemble size must be >= 1");
    if (architectures.empty()) throw InvalidArgument("sweep: no architectures");
    if (!(jitter_sigma >= 0.0)) throw InvalidArgument("sweep: jitter sigma must be non-negative");
    if (!(precision_rate_base > 0.0)) throw InvalidArgument("sweep: precision rate base must be positive");
    profile.validate();
    if (include_baseline && profile.points.front().delay_variation <= 0.0)
      throw InvalidArgument("sweep: baseline row needs profile points above zero delay variation");
  }
};

/// Models shared by all instances: trained once, error free.
struct BaseModels {
  std::optional<svm::SvmModel> svm;
  std::optional<forest::ForestModel> single;   // L = 1, uniform precision
  std::optional<forest::ForestModel> uniform;  // L trees, uniform precision
  std::optional<forest::ForestModel> diverse;  // L trees, precision drawn per tree

  const forest::ForestModel& forest_for(Arch a) const {
    const std::optional<forest::ForestModel>* f = nullptr;
    switch (a) {
      case Arch::RfMajoritySingle: f = &single; break;
      case Arch::RfMajority:
      case Arch::RfWeighted: f = &uniform; break;
      case Arch::RfErrorWeighted: f = &diverse; break;
      case Arch::Svm: break;
    }
    if (!f || !f->has_value()) throw InvalidArgument("no forest trained for " + arch_name(a));
    return **f;
  }
};

namespace detail {

enum SeedStream : std::uint64_t { kSplitStream = 1, kTrainStream, kJitterStream, kErrorStream };

inline std::uint64_t name_key(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace detail

/// Trains the models needed by the configured architectures. Forests share a
/// seed, so the L = 1 forest is the first tree of the uniform forest and the
/// precision-diverse forest has the same tree structures.
inline BaseModels train_models(const Dataset& train, const SweepConfig& cfg) {
  BaseModels m;
  const auto needs = [&](Arch a) {
    return std::find(cfg.architectures.begin(), cfg.architectures.end(), a) != cfg.architectures.end();
  };
  const std::uint64_t forest_seed = derive_seed(cfg.seed, {detail::kTrainStream});
  auto grow = [&](std::size_t l, forest::PrecisionPolicy policy) {
    forest::ForestConfig fc = cfg.forest;
    fc.ensemble_size = l;
    fc.precision = policy;
    Rng rng(forest_seed);
    auto f = forest::train_forest(train, fc, rng);
    return f;
  };
  const auto uniform = forest::PrecisionPolicy::fixed_format(fixedpoint::FixedFormat::unit(cfg.precision_reference_bits));
  if (needs(Arch::Svm)) m.svm = svm::train(train, cfg.svm, cfg.svm_precision);
  if (needs(Arch::RfMajoritySingle)) {
    m.single = grow(1, uniform);
    m.single->voter_kind = voting::VoterKind::Majority;
  }
  if (needs(Arch::RfMajority) || needs(Arch::RfWeighted)) m.uniform = grow(cfg.ensemble_size, uniform);
  if (needs(Arch::RfErrorWeighted)) {
    m.diverse = grow(cfg.ensemble_size, forest::PrecisionPolicy::uniform_bits(4, cfg.precision_reference_bits));
    m.diverse->voter_kind = voting::VoterKind::ErrorWeighted;
  }
  return m;
}

/// Error models of one emulated process instance at one profile point.
struct InstanceErrors {
  std::optional<errormodel::ErrorPmfModel> stage1;
  std::optional<errormodel::ErrorPmfModel> stage2;
  std::vector<std::optional<errormodel::ErrorPmfModel>> trees;
  std::vector<double> tree_rates;  // p_eta_l actually injected
};

struct JitterConfig {
  double sigma = 0.5;
  double precision_rate_base = 2.0;
  int reference_bits = 8;
};

namespace detail {

inline std::optional<errormodel::ErrorPmfModel> jittered(const BlockSpec* block, double factor) {
  if (!block) return std::nullopt;
  std::vector<double> p(block->bit_probabilities);
  bool any = false;
  for (auto& v : p) {
    v = std::clamp(v * factor, 0.0, 1.0);
    any = any || v > 0.0;
  }
  if (!any) return std::nullopt;
  return errormodel::synthesize(p, block->correlation);
}

}  // namespace detail

/// Output error rate of a tree at `bits` precision given the block's 8-bit
/// reference rate: rate * base^(bits - reference_bits), clamped to [0, 1].
inline double tree_error_rate(double rate, int bits, const JitterConfig& j) {
  return std::clamp(rate * std::pow(j.precision_rate_base, bits - j.reference_bits), 0.0, 1.0);
}

/// Draws instance-specific error parameters. One lognormal factor scales each
/// SVM stage block, and one scales each tree's output error rate, which is
/// further multiplied by base^(B - reference_bits) for the tree's precision.
/// A point without a block (the baseline) yields no fault for it.
inline InstanceErrors instantiate(Arch arch, const ProfilePoint& point, const BaseModels& models, const JitterConfig& j,
                                  Rng& rng) {
  InstanceErrors e;
  auto factor = [&] { return j.sigma > 0.0 ? std::exp(j.sigma * rng.normal()) : 1.0; };
  if (arch == Arch::Svm) {
    const double f1 = factor(), f2 = factor();
    e.stage1 = detail::jittered(point.find(kSvmStage1), f1);
    e.stage2 = detail::jittered(point.find(kSvmStage2), f2);
    return e;
  }
  const auto& forest = models.forest_for(arch);
  const BlockSpec* block = point.find(kTreeOutput);
  if (block && block->width != 1) throw InvalidArgument("instantiate: tree output block must have width 1");
  for (std::size_t l = 0; l < forest.size(); ++l) {
    const double f = factor();
    const int bits = forest.trees[l].format().total_bits;
    const double rate = block ? tree_error_rate(block->bit_probabilities[0] * f, bits, j) : 0.0;
    e.tree_rates.push_back(rate);
    e.trees.push_back(rate > 0.0 ? std::optional(errormodel::synthesize(std::vector<double>{rate}, 0.0)) : std::nullopt);
  }
  return e;
}

/// Fraction of test rows classified correctly with errors drawn from `rng`.
inline double evaluate(Arch arch, const BaseModels& models, const InstanceErrors& e, const Dataset& test, Rng& rng) {
  if (test.rows() == 0) throw InvalidArgument("evaluate: empty test set");
  std::size_t correct = 0;
  if (arch == Arch::Svm) {
    if (!models.svm) throw InvalidArgument("evaluate: no SVM trained");
    svm::SvmFaults faults{e.stage1 ? &*e.stage1 : nullptr, e.stage2 ? &*e.stage2 : nullptr};
    for (std::size_t i = 0; i < test.rows(); ++i)
      correct += svm::classify_fixed(*models.svm, test.row(i), faults, &rng) == test.label(i);
    return static_cast<double>(correct) / static_cast<double>(test.rows());
  }
  const auto& forest = models.forest_for(arch);
  voting::VoterKind kind = voting::VoterKind::Majority;
  voting::VoterWeights weights;
  if (arch == Arch::RfWeighted) {
    kind = voting::VoterKind::Weighted;
    weights = voting::VoterWeights(forest.oob_accuracy);
  } else if (arch == Arch::RfErrorWeighted) {
    kind = voting::VoterKind::ErrorWeighted;
    std::vector<double> rates = e.tree_rates;
    rates.resize(forest.size(), 0.0);
    weights = voting::error_weights(forest.oob_accuracy, rates);
  }
  std::vector<std::uint8_t> votes(forest.size());
  for (std::size_t i = 0; i < test.rows(); ++i) {
    for (std::size_t l = 0; l < forest.size(); ++l) {
      const errormodel::ErrorPmfModel* out = (l < e.trees.size() && e.trees[l]) ? &*e.trees[l] : nullptr;
      votes[l] = forest::classify_tree(forest.trees[l], test.row(i), forest::TreeFaults{out, nullptr}, &rng);
    }
    correct += voting::combine(votes, kind, weights) == test.label(i);
  }
  return static_cast<double>(correct) / static_cast<double>(test.rows());
}

struct InstanceResult {
  std::string arch;
  double delay_variation = 0.0;
  std::size_t instance = 0;
  double p_det = 0.0;
};

struct SummaryRow {
  std::string arch;
  double delay_variation = 0.0;
  double median_pdet = 0.0;
  double std_pdet = 0.0;  // sample standard deviation (n - 1)
  std::size_t count = 0;
};

struct SweepResults {
  std::vector<InstanceResult> rows;  // arch order, then delay, then instance
  std::vector<SummaryRow> summary;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Groups rows by (arch, delay) in first-appearance order.
inline std::vector<SummaryRow> summarize(const std::vector<InstanceResult>& rows) {
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::vector<double>> groups;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.arch, r.delay_variation);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) keys.push_back(key);
    it->second.push_back(r.p_det);
  }
  std::vector<SummaryRow> out;
  for (const auto& k : keys) {
    const auto& v = groups[k];
    out.push_back({k.first, k.second, median(v), sample_std(v), v.size()});
  }
  return out;
}

/// Runs `job(i)` for i in [0, n) on `workers` threads. The first exception is
/// rethrown after all threads join.
template <class Job>
void parallel_for(std::size_t n, std::size_t workers, Job&& job) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Splits `ds`, trains the base models, and evaluates every
/// (architecture, delay point, instance) cell. Instance parameters are drawn
/// from a stream keyed on (seed, instance) only, so an instance keeps its
/// process draw across delay points; error injection streams are keyed on
/// (seed, architecture, instance). Output is independent of `workers`.
inline SweepResults run_sweep(const SweepConfig& cfg, const Dataset& ds) {
  cfg.validate();
  Rng split_rng(derive_seed(cfg.seed, {detail::kSplitStream}));
  const auto parts = split(ds, cfg.split_ratio, split_rng);
  const BaseModels models = train_models(parts.train, cfg);

  std::vector<ProfilePoint> points;
  if (cfg.include_baseline) points.push_back(ProfilePoint{0.0, {}});
  points.insert(points.end(), cfg.profile.points.begin(), cfg.profile.points.end());

  const std::size_t n_arch = cfg.architectures.size(), n_pts = points.size(), n_inst = cfg.n_instances;
  std::vector<InstanceResult> rows(n_arch * n_pts * n_inst);
  const JitterConfig jitter{cfg.jitter_sigma, cfg.precision_rate_base, cfg.precision_reference_bits};

  parallel_for(rows.size(), cfg.workers, [&](std::size_t cell) {
    const std::size_t a = cell / (n_pts * n_inst), p = (cell / n_inst) % n_pts, k = cell % n_inst;
    const Arch arch = cfg.architectures[a];
    Rng jitter_rng(derive_seed(cfg.seed, {detail::kJitterStream, k, is_forest(arch) ? 1u : 0u}));
    const auto errors = instantiate(arch, points[p], models, jitter, jitter_rng);
    Rng error_rng(derive_seed(cfg.seed, {detail::kErrorStream, detail::name_key(arch_name(arch)), k}));
    rows[cell] = {arch_name(arch), points[p].delay_variation, k, evaluate(arch, models, errors, parts.test, error_rng)};
  });

  SweepResults out;
  out.rows = std::move(rows);
  out.summary = summarize(out.rows);
  return out;
}

}  // namespace ntvml::harness
