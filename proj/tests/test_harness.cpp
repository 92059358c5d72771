#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ntvml/profile.hpp"
#include "ntvml/results.hpp"
#include "ntvml/serialize.hpp"
#include "ntvml/sweep.hpp"
#include "ntvml/wdbc.hpp"

using namespace ntvml;
using namespace ntvml::harness;

namespace {

const std::string kData = std::string(NTVML_DATA_DIR) + "/wdbc.data";

const Dataset& wdbc() {
  static const Dataset ds = load_wdbc(kData);
  return ds;
}

std::string row_text(std::size_t cols, const std::string& diag = "M") {
  std::string s = "1," + diag;
  for (std::size_t j = 0; j < cols; ++j) s += ",0.5";
  return s + "\n";
}

SweepConfig small_config() {
  SweepConfig cfg;
  cfg.n_instances = 3;
  cfg.ensemble_size = 5;
  return cfg;
}

}  // namespace

TEST(Wdbc, LoadsTheBundledSet) {
  const auto& ds = wdbc();
  EXPECT_EQ(ds.rows(), 569u);
  EXPECT_EQ(ds.features(), kWdbcFeatures);
  EXPECT_EQ(ds.count_label(1), 212u);
  EXPECT_EQ(ds.count_label(0), 357u);
  EXPECT_DOUBLE_EQ(ds.at(0, 0), 17.99);
}

TEST(Wdbc, RejectsMalformedInput) {
  std::istringstream short_row(row_text(29));
  EXPECT_THROW(parse_wdbc(short_row), SchemaError);
  std::istringstream bad_diag(row_text(30) + row_text(30, "X"));
  try {
    parse_wdbc(bad_diag);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
  }
  std::string bad_num = row_text(30);
  bad_num.replace(bad_num.find("0.5"), 3, "abc");
  std::istringstream bn(bad_num);
  EXPECT_THROW(parse_wdbc(bn), ParseError);
  std::istringstream empty("\n\n");
  EXPECT_THROW(parse_wdbc(empty), SchemaError);
  EXPECT_THROW(load_wdbc("/nonexistent/wdbc.data"), IoError);
}

TEST(Wdbc, WriteParseRoundTrip) {
  std::ostringstream out;
  write_wdbc(wdbc(), out);
  std::istringstream in(out.str());
  const auto back = parse_wdbc(in);
  EXPECT_EQ(back.values(), wdbc().values());
  EXPECT_EQ(back.labels(), wdbc().labels());
}

TEST(Split, StratifiedHalvesAndTrainOnlyScaling) {
  std::vector<double> x(568);
  std::vector<std::uint8_t> y(568);
  for (std::size_t i = 0; i < 568; ++i) x[i] = static_cast<double>(i), y[i] = i < 200;
  const Dataset ds(1, x, y);
  Rng rng(3);
  const auto s = split(ds, 0.5, rng);
  EXPECT_EQ(s.train.rows(), 284u);
  EXPECT_EQ(s.test.rows(), 284u);
  EXPECT_EQ(s.train.count_label(1), 100u);
  std::set<std::size_t> all(s.train_index.begin(), s.train_index.end());
  all.insert(s.test_index.begin(), s.test_index.end());
  EXPECT_EQ(all.size(), 568u);
  for (std::size_t i = 0; i < s.train.rows(); ++i) {
    EXPECT_GE(s.train.at(i, 0), 0.0);
    EXPECT_LE(s.train.at(i, 0), kScaleTop);
  }
  // The training range maps onto [0, kScaleTop] exactly.
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 0; i < s.train.rows(); ++i) lo = std::min(lo, s.train.at(i, 0)), hi = std::max(hi, s.train.at(i, 0));
  EXPECT_DOUBLE_EQ(lo, 0.0);
  EXPECT_DOUBLE_EQ(hi, kScaleTop);

  Rng again(3);
  EXPECT_EQ(split(ds, 0.5, again).train_index, s.train_index);
  const Dataset lonely(1, {0.0, 1.0, 2.0}, {0, 0, 1});
  Rng r(1);
  EXPECT_THROW(split(lonely, 0.2, r), SplitError);
  EXPECT_THROW(split(lonely, 1.0, r), InvalidArgument);
}

TEST(Profile, DefaultAnchorsAndMonotoneRates) {
  const auto prof = default_profile();
  ASSERT_EQ(prof.points.size(), 8u);
  EXPECT_DOUBLE_EQ(prof.points.front().delay_variation, 0.028);
  EXPECT_DOUBLE_EQ(prof.points.back().delay_variation, 0.33);
  EXPECT_NEAR(prof.points.front().block(kSvmStage2).word_error_rate(), 2.1e-3, 1e-9);
  EXPECT_NEAR(prof.points.back().block(kSvmStage1).word_error_rate(), 0.99, 1e-9);
  EXPECT_NEAR(prof.points.front().block(kTreeOutput).bit_probabilities[0], 1.1e-3, 1e-15);
  EXPECT_NEAR(prof.points.back().block(kTreeOutput).bit_probabilities[0], 0.61, 1e-12);
  for (std::size_t k = 1; k < prof.points.size(); ++k)
    for (const char* id : {kSvmStage1, kSvmStage2, kTreeOutput})
      EXPECT_GT(prof.points[k].block(id).word_error_rate(), prof.points[k - 1].block(id).word_error_rate());
}

TEST(Profile, MsbWeightedTaper) {
  for (double rate : {1e-3, 0.1, 0.5, 0.9}) {
    const auto p = msb_weighted(10, rate);
    double ok = 1.0;
    for (double v : p) ok *= 1.0 - v;
    EXPECT_NEAR(1.0 - ok, rate, 1e-12);
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (p[i] < 1.0) {
        EXPECT_NEAR(p[i], 2.0 * p[i - 1], 1e-15);
      }
    }
  }
  EXPECT_THROW(msb_weighted(0, 0.1), InvalidArgument);
}

TEST(Profile, LogLinearInterpolation) {
  const auto prof = default_profile();
  const auto mid = prof.at(0.08);
  const auto& a = prof.points[1].block(kTreeOutput).bit_probabilities[0];
  const auto& b = prof.points[2].block(kTreeOutput).bit_probabilities[0];
  EXPECT_NEAR(mid.block(kTreeOutput).bit_probabilities[0], std::sqrt(a * b), 1e-15);
  EXPECT_EQ(prof.at(0.10).block(kTreeOutput).bit_probabilities, prof.points[2].block(kTreeOutput).bit_probabilities);
  EXPECT_THROW(prof.at(0.01), InvalidArgument);
  EXPECT_THROW(prof.at(0.5), InvalidArgument);
}

TEST(Profile, JsonRoundTripAndValidation) {
  const auto prof = default_profile();
  const auto back = serialize::profile_from_json(serialize::to_json(prof));
  ASSERT_EQ(back.points.size(), prof.points.size());
  for (std::size_t k = 0; k < prof.points.size(); ++k)
    for (const char* id : {kSvmStage1, kSvmStage2, kTreeOutput})
      EXPECT_EQ(back.points[k].block(id).bit_probabilities, prof.points[k].block(id).bit_probabilities);
  auto j = serialize::to_json(prof);
  j["points"][0]["delay_variation"] = 0.5;
  EXPECT_ANY_THROW(serialize::profile_from_json(j));
}

TEST(Instantiate, ZeroJitterGivesProfileRates) {
  SweepConfig cfg = small_config();
  cfg.architectures = {Arch::RfErrorWeighted};
  Rng srng(1);
  const auto parts = split(wdbc(), 0.5, srng);
  const auto models = train_models(parts.train, cfg);
  const auto point = cfg.profile.points[4];
  const double base = point.block(kTreeOutput).bit_probabilities[0];
  Rng rng(2);
  const auto e = instantiate(Arch::RfErrorWeighted, point, models, {0.0, 2.0, 8}, rng);
  ASSERT_EQ(e.tree_rates.size(), 5u);
  for (std::size_t l = 0; l < 5; ++l) {
    const int bits = models.diverse->trees[l].format().total_bits;
    EXPECT_DOUBLE_EQ(e.tree_rates[l], std::min(1.0, base * std::ldexp(1.0, bits - 8)));
  }
  const auto none = instantiate(Arch::RfErrorWeighted, ProfilePoint{0.0, {}}, models, {0.5, 2.0, 8}, rng);
  for (double r : none.tree_rates) EXPECT_EQ(r, 0.0);
}

TEST(Instantiate, JitterSpreadsRatesLognormally) {
  SweepConfig cfg = small_config();
  cfg.architectures = {Arch::RfMajority};
  cfg.ensemble_size = 200;
  Rng srng(1);
  const auto parts = split(wdbc(), 0.5, srng);
  const auto models = train_models(parts.train, cfg);
  const auto point = cfg.profile.points[1];
  const double base = point.block(kTreeOutput).bit_probabilities[0];
  Rng rng(4);
  const auto e = instantiate(Arch::RfMajority, point, models, {0.5, 2.0, 8}, rng);
  std::vector<double> logs;
  for (double r : e.tree_rates) logs.push_back(std::log(r / base));
  double mean = 0.0, var = 0.0;
  for (double v : logs) mean += v;
  mean /= static_cast<double>(logs.size());
  for (double v : logs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(logs.size() - 1);
  EXPECT_NEAR(mean, 0.0, 0.15);
  EXPECT_NEAR(std::sqrt(var), 0.5, 0.08);
}

TEST(Evaluate, ErrorWeightedWithZeroRatesMatchesWeighted) {
  SweepConfig cfg = small_config();
  cfg.architectures = {Arch::RfWeighted};
  Rng srng(5);
  const auto parts = split(wdbc(), 0.5, srng);
  auto models = train_models(parts.train, cfg);
  models.diverse = models.uniform;
  InstanceErrors zero;
  zero.tree_rates.assign(cfg.ensemble_size, 0.0);
  zero.trees.resize(cfg.ensemble_size);
  Rng a(9), b(9);
  EXPECT_EQ(evaluate(Arch::RfErrorWeighted, models, zero, parts.test, a), evaluate(Arch::RfWeighted, models, zero, parts.test, b));
}

TEST(Sweep, DeterministicAcrossWorkerCounts) {
  auto cfg = small_config();
  cfg.seed = 11;
  const auto one = run_sweep(cfg, wdbc());
  cfg.workers = 4;
  const auto four = run_sweep(cfg, wdbc());
  EXPECT_EQ(results_csv(one.rows), results_csv(four.rows));
  EXPECT_EQ(summary_csv(one.summary), summary_csv(four.summary));
  const std::size_t points = cfg.profile.points.size() + 1;
  EXPECT_EQ(one.rows.size(), 5 * points * cfg.n_instances);
  EXPECT_EQ(one.summary.size(), 5 * points);
  for (const auto& r : one.rows) {
    EXPECT_GE(r.p_det, 0.0);
    EXPECT_LE(r.p_det, 1.0);
  }
}

TEST(Sweep, InstancesKeepTheirDrawAcrossPoints) {
  auto cfg = small_config();
  cfg.architectures = {Arch::RfMajority, Arch::Svm};
  cfg.include_baseline = true;
  const auto res = run_sweep(cfg, wdbc());
  // Baseline rows are error free, so every instance scores the same.
  std::set<double> baseline;
  for (const auto& r : res.rows)
    if (r.arch == "RF-M" && r.delay_variation == 0.0) baseline.insert(r.p_det);
  EXPECT_EQ(baseline.size(), 1u);
  cfg.n_instances = 0;
  EXPECT_THROW(run_sweep(cfg, wdbc()), InvalidArgument);
}

TEST(Summary, MedianAndSampleStd) {
  std::vector<InstanceResult> rows{{"A", 0.1, 0, 0.9}, {"A", 0.1, 1, 0.7}, {"A", 0.1, 2, 0.8}, {"B", 0.1, 0, 0.5}};
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].arch, "A");
  EXPECT_DOUBLE_EQ(s[0].median_pdet, 0.8);
  EXPECT_NEAR(s[0].std_pdet, 0.1, 1e-15);
  EXPECT_EQ(s[0].count, 3u);
  EXPECT_EQ(s[1].std_pdet, 0.0);
  EXPECT_DOUBLE_EQ(median({0.1, 0.4, 0.2, 0.3}), 0.25);
}

TEST(Results, CsvRoundTripAndSchemaChecks) {
  std::vector<InstanceResult> rows{{"RF-M", 0.29, 3, 0.9473684210526315}, {"SVM", 0.028, 0, 1.0}};
  std::istringstream in(results_csv(rows));
  const auto back = parse_results(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].arch, "RF-M");
  EXPECT_EQ(back[0].p_det, 0.9473684210526315);
  EXPECT_EQ(back[1].instance, 0u);

  EXPECT_EQ(results_csv({}), std::string(kResultsHeader) + "\n");
  std::istringstream header_only(results_csv({}));
  EXPECT_TRUE(parse_results(header_only).empty());

  std::istringstream wrong_header("arch,delay,instance,p\n");
  EXPECT_THROW(parse_results(wrong_header), SchemaError);
  std::istringstream bad_p(std::string(kResultsHeader) + "\nSVM,0.1,0,1.5\n");
  EXPECT_THROW(parse_results(bad_p), ParseError);
  std::istringstream bad_idx(std::string(kResultsHeader) + "\nSVM,0.1,x,0.5\n");
  EXPECT_THROW(parse_results(bad_idx), ParseError);
  std::istringstream short_row(std::string(kResultsHeader) + "\nSVM,0.1,0\n");
  EXPECT_THROW(parse_results(short_row), SchemaError);
}

TEST(Results, AtomicWriteLeavesNoTemporary) {
  const auto dir = std::filesystem::temp_directory_path() / "ntvml_results_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "out.csv").string();
  write_atomic(path, "hello\n");
  std::ifstream in(path);
  std::string s;
  std::getline(in, s);
  EXPECT_EQ(s, "hello");
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  EXPECT_THROW(write_atomic((dir / "missing" / "x.csv").string(), "x"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(Serialize, ModelsRoundTrip) {
  Rng srng(6);
  const auto parts = split(wdbc(), 0.5, srng);
  SweepConfig cfg = small_config();
  cfg.architectures = {Arch::Svm, Arch::RfErrorWeighted};
  const auto models = train_models(parts.train, cfg);

  const auto f = serialize::forest_from_json(serialize::to_json(*models.diverse));
  const auto s = serialize::svm_from_json(serialize::to_json(*models.svm));
  EXPECT_EQ(s.formats.output, models.svm->formats.output);
  EXPECT_EQ(s.weight_words, models.svm->weight_words);
  for (std::size_t i = 0; i < parts.test.rows(); ++i) {
    EXPECT_EQ(forest::votes(f, parts.test.row(i)), forest::votes(*models.diverse, parts.test.row(i)));
    EXPECT_EQ(svm::fixed_margin(s, parts.test.row(i)), svm::fixed_margin(*models.svm, parts.test.row(i)));
  }

  const auto em = errormodel::ErrorPmfModel({-1.0, 0.5}, {1.0, 0.3, 0.3, 1.0});
  const auto em2 = serialize::error_model_from_json(serialize::to_json(em));
  EXPECT_EQ(em2.latent_mean(), em.latent_mean());
  EXPECT_EQ(em2.latent_corr(), em.latent_corr());
}

TEST(Serialize, ConfigKeys) {
  SweepConfig cfg;
  serialize::apply_config(serialize::json::parse(R"({"instances": 4, "architectures": ["SVM", "RF-W"],
                                                     "forest": {"features_per_node": 5}, "svm": {"cost": 2.5}})"),
                          cfg);
  EXPECT_EQ(cfg.n_instances, 4u);
  EXPECT_EQ(cfg.architectures, (std::vector<Arch>{Arch::Svm, Arch::RfWeighted}));
  EXPECT_EQ(cfg.forest.features_per_node, 5u);
  EXPECT_EQ(cfg.svm.cost, 2.5);
  EXPECT_THROW(serialize::apply_config(serialize::json::parse(R"({"instanses": 4})"), cfg), SchemaError);
  EXPECT_THROW(serialize::apply_config(serialize::json::parse(R"({"architectures": ["RF-X"]})"), cfg), SchemaError);
  EXPECT_THROW(serialize::apply_config(serialize::json::parse(R"({"instances": "many"})"), cfg), SchemaError);
}

TEST(Serialize, ErrorSamplesCsv) {
  std::istringstream in("width=3\n0,1,0\n1,1,1\n");
  const auto s = serialize::parse_error_samples(in);
  EXPECT_EQ(s.width(), 3u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(serialize::error_samples_csv(s), "width=3\n0,1,0\n1,1,1\n");
  std::istringstream bad("width=2\n0,2\n");
  EXPECT_THROW(serialize::parse_error_samples(bad), ParseError);
  std::istringstream no_header("0,1\n");
  EXPECT_THROW(serialize::parse_error_samples(no_header), SchemaError);
}
