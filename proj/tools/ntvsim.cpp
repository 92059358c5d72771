// ntvsim: command-line driver for error-model fitting, training, robustness
// sweeps, ensemble decomposition and result reports.

#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ntvml/analysis.hpp"
#include "ntvml/ensemble.hpp"
#include "ntvml/errormodel.hpp"
#include "ntvml/forest.hpp"
#include "ntvml/profile.hpp"
#include "ntvml/results.hpp"
#include "ntvml/serialize.hpp"
#include "ntvml/svm.hpp"
#include "ntvml/sweep.hpp"
#include "ntvml/wdbc.hpp"

namespace {

using namespace ntvml;
using serialize::json;

constexpr int kUsageError = 2;

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty() || out_path == "-") std::cout << content;
  else harness::write_atomic(out_path, content);
}

harness::SweepConfig load_config(const std::string& config_path) {
  harness::SweepConfig cfg;
  if (!config_path.empty()) serialize::apply_config(serialize::read_json(config_path), cfg);
  return cfg;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

int fit_error_model(const std::string& samples, const std::string& out) {
  const auto set = serialize::read_error_samples(samples);
  const auto model = errormodel::fit(set);
  emit(out, serialize::dump(serialize::to_json(model)));
  return 0;
}

int train(const std::string& kind, const std::string& data, const std::string& config, std::uint64_t seed,
          const std::string& out) {
  auto cfg = load_config(config);
  cfg.seed = seed;
  const auto ds = harness::load_wdbc(data);
  Rng split_rng(derive_seed(seed, {harness::detail::kSplitStream}));
  const auto parts = harness::split(ds, cfg.split_ratio, split_rng);

  auto accuracy = [&](auto&& predict, const Dataset& d) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < d.rows(); ++i) ok += predict(d.row(i)) == d.label(i);
    return static_cast<double>(ok) / static_cast<double>(d.rows());
  };

  json doc;
  if (kind == "svm") {
    const auto m = svm::train(parts.train, cfg.svm, cfg.svm_precision);
    const auto fixed = [&](std::span<const double> x) { return svm::classify_fixed(m, x); };
    const auto real = [&](std::span<const double> x) { return svm::classify_direct(m, x).label; };
    std::cerr << "svm: " << m.support_count() << " support vectors; test accuracy " << percent(accuracy(fixed, parts.test))
              << " fixed-point, " << percent(accuracy(real, parts.test)) << " floating-point\n";
    doc = serialize::to_json(m);
  } else {
    harness::SweepConfig only = cfg;
    only.architectures = {harness::Arch::RfMajority};
    const auto models = harness::train_models(parts.train, only);
    const auto& f = *models.uniform;
    const auto fixed = [&](std::span<const double> x) { return forest::classify_forest(f, x); };
    const auto real = [&](std::span<const double> x) {
      std::vector<std::uint8_t> v;
      for (const auto& t : f.trees) v.push_back(t.tree().predict(x));
      return voting::majority(v);
    };
    std::cerr << "rf: " << f.size() << " trees; test accuracy " << percent(accuracy(fixed, parts.test)) << " fixed-point, "
              << percent(accuracy(real, parts.test)) << " floating-point\n";
    doc = serialize::to_json(f);
  }
  emit(out, serialize::dump(doc));
  return 0;
}

int sweep(const std::string& data, const std::string& profile, const std::string& config, std::size_t instances,
          bool instances_set, std::uint64_t seed, std::size_t workers, const std::string& out, const std::string& summary) {
  auto cfg = load_config(config);
  if (!profile.empty()) cfg.profile = serialize::profile_from_json(serialize::read_json(profile));
  if (instances_set) cfg.n_instances = instances;
  cfg.seed = seed;
  cfg.workers = workers;
  const auto ds = harness::load_wdbc(data);
  const auto results = harness::run_sweep(cfg, ds);
  harness::write_results(results, out, summary);
  std::cerr << "wrote " << results.rows.size() << " rows to " << out << " and " << results.summary.size()
            << " summary rows to " << summary << "\n";
  return 0;
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw InvalidArgument("--L-list: '" + item + "' is not a positive integer");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("--L-list: empty list");
  return out;
}

int decompose(const std::string& data, const std::string& l_list, bool diversity, double delay, const std::string& profile,
              std::size_t resamples, std::size_t draws, double label_flip, std::uint64_t seed, const std::string& out) {
  const auto sizes = parse_sizes(l_list);
  const auto prof = profile.empty() ? harness::default_profile() : serialize::profile_from_json(serialize::read_json(profile));
  const auto point = prof.at(delay);
  const auto ds = harness::load_wdbc(data);
  Rng split_rng(derive_seed(seed, {harness::detail::kSplitStream}));
  const auto parts = harness::split(ds, 0.5, split_rng);

  std::vector<harness::DecompositionRow> rows;
  for (bool div : {false, true}) {
    if (div && !diversity) continue;
    harness::EnsembleStudyConfig cfg;
    cfg.diversity = div;
    cfg.label_flip = label_flip;
    for (std::size_t l : sizes) {
      Rng rng(derive_seed(seed, {7, l}));
      const auto r = harness::decompose_forest(parts.train, parts.test, l, point, cfg, resamples, draws, rng);
      rows.push_back({l, div, r.noise, r.bias_sq, r.variance, r.generalized_error, r.identity_se()});
    }
  }
  emit(out, harness::decomposition_csv(rows));
  return 0;
}

int report(const std::string& results_path, const std::string& out) {
  const auto rows = harness::read_results(results_path);
  const auto summary = harness::summarize(rows);
  if (!out.empty()) harness::write_atomic(out, harness::summary_csv(summary));
  std::printf("%-8s %8s %6s %12s %12s\n", "arch", "delay", "n", "median_pdet", "std_pdet");
  for (const auto& s : summary)
    std::printf("%-8s %7.1f%% %6zu %12.4f %12.4g\n", s.arch.c_str(), 100.0 * s.delay_variation, s.count, s.median_pdet,
                s.std_pdet);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timing-error robustness simulator for SVM and random-forest classifiers"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;

  auto* fit = app.add_subcommand("fit-error-model", "Fit a dichotomized-Gaussian error model to observed bit patterns");
  std::string samples, fit_out;
  fit->add_option("samples", samples, "Error-sample CSV (header width=B)")->required();
  fit->add_option("--out", fit_out, "Output JSON path (default: stdout)");

  auto* tr = app.add_subcommand("train", "Train an error-free classifier and report test accuracy");
  std::string kind, train_data, train_config, train_out;
  tr->add_option("kind", kind, "rf or svm")->required()->check(CLI::IsMember({"rf", "svm"}));
  tr->add_option("data", train_data, "WDBC CSV")->required();
  tr->add_option("--config", train_config, "JSON run configuration");
  tr->add_option("--seed", seed, "Master seed");
  tr->add_option("--out", train_out, "Model JSON path (default: stdout)");

  auto* sw = app.add_subcommand("sweep", "Multi-instance robustness sweep over the error profile");
  std::string sweep_data, sweep_profile, sweep_config, sweep_out = "results.csv", sweep_summary = "summary.csv";
  std::size_t instances = 30, workers = 1;
  sw->add_option("data", sweep_data, "WDBC CSV")->required();
  sw->add_option("--profile", sweep_profile, "Error profile JSON (default: built-in synthetic profile)");
  sw->add_option("--config", sweep_config, "JSON run configuration");
  auto* inst_opt = sw->add_option("--instances", instances, "Process instances per point")->check(CLI::PositiveNumber);
  sw->add_option("--seed", seed, "Master seed");
  sw->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sw->add_option("--out", sweep_out, "Per-instance results CSV")->capture_default_str();
  sw->add_option("--summary", sweep_summary, "Summary CSV")->capture_default_str();

  auto* dc = app.add_subcommand("decompose", "Noise/bias/variance decomposition of forest outputs versus L");
  std::string dc_data, l_list = "1,5,10,25", dc_profile, dc_out;
  bool diversity = false;
  double delay = 0.29, label_flip = 0.0;
  std::size_t resamples = 20, draws = 10;
  dc->add_option("data", dc_data, "WDBC CSV")->required();
  dc->add_option("--L-list", l_list, "Comma-separated ensemble sizes")->capture_default_str();
  dc->add_flag("--diversity", diversity, "Also evaluate precision-diverse forests");
  dc->add_option("--delay", delay, "Delay variation of the profile point")->capture_default_str();
  dc->add_option("--profile", dc_profile, "Error profile JSON");
  dc->add_option("--resamples", resamples, "Training resamples")->capture_default_str()->check(CLI::Range(2, 100000));
  dc->add_option("--error-draws", draws, "Error draws per resample")->capture_default_str()->check(CLI::PositiveNumber);
  dc->add_option("--label-flip", label_flip, "Label flip probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  dc->add_option("--seed", seed, "Master seed");
  dc->add_option("--out", dc_out, "Output CSV (default: stdout)");

  auto* rp = app.add_subcommand("report", "Summarize a per-instance results CSV");
  std::string rp_in, rp_out;
  rp->add_option("results", rp_in, "Per-instance results CSV")->required();
  rp->add_option("--out", rp_out, "Also write the summary CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (fit->parsed()) return fit_error_model(samples, fit_out);
    if (tr->parsed()) return train(kind, train_data, train_config, seed, train_out);
    if (sw->parsed())
      return sweep(sweep_data, sweep_profile, sweep_config, instances, inst_opt->count() > 0, seed, workers, sweep_out,
                   sweep_summary);
    if (dc->parsed())
      return decompose(dc_data, l_list, diversity, delay, dc_profile, resamples, draws, label_flip, seed, dc_out);
    if (rp->parsed()) return report(rp_in, rp_out);
  } catch (const std::exception& e) {
    std::cerr << "ntvsim: " << e.what() << "\n";
    return 1;
  }
  return kUsageError;
}
