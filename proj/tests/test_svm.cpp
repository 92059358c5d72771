#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ntvml/dataset.hpp"
#include "ntvml/errormodel.hpp"
#include "ntvml/random.hpp"
#include "ntvml/svm.hpp"

using namespace ntvml;
using namespace ntvml::svm;

namespace {

Dataset blobs(Rng& rng, std::size_t rows, std::size_t features, double noise) {
  std::vector<double> x(rows * features);
  std::vector<std::uint8_t> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    y[i] = static_cast<std::uint8_t>(i % 2);
    for (std::size_t j = 0; j < features; ++j) {
      const double centre = y[i] ? 0.65 : 0.35;
      x[i * features + j] = std::clamp(centre + noise * rng.normal(), 0.0, kScaleTop);
    }
  }
  return {features, std::move(x), std::move(y)};
}

// A model whose bits never fire: the latent mean sits 40 sigma below zero.
errormodel::ErrorPmfModel silent(int width) {
  return errormodel::ErrorPmfModel::independent(std::vector<double>(static_cast<std::size_t>(width), -40.0));
}

}  // namespace

TEST(Svm, ReformulationMatchesKernelExpansion) {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const auto ds = blobs(rng, 80, 1 + trial * 2, 0.2);
    const auto m = train(ds);
    for (int k = 0; k < 200; ++k) {
      std::vector<double> x(ds.features());
      for (auto& v : x) v = rng.uniform();
      const double direct = classify_direct(m, x).margin;
      const double reform = margin_reformulated(m, x);
      EXPECT_NEAR(reform, direct, 1e-9 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST(Svm, WeightMatrixIsSymmetricOuterProductSum) {
  SvmModel m;
  m.features = 2;
  m.beta = 0.5;
  m.gamma = 2.0;
  m.support_vectors = {0.2, 0.4, 0.6, 0.1};
  m.alphas = {0.3, -0.7};
  const auto w = precompute(m);
  // Hand expansion: st_i = [gamma, beta s_i1, beta s_i2].
  const double s[2][3] = {{2.0, 0.1, 0.2}, {2.0, 0.3, 0.05}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(w[r * 3 + c], 0.3 * s[0][r] * s[0][c] - 0.7 * s[1][r] * s[1][c], 1e-15);
}

TEST(Svm, SolutionSatisfiesKkt) {
  Rng rng(2);
  const auto ds = blobs(rng, 120, 4, 0.25);
  SvmTrainConfig cfg;
  cfg.cost = 2.0;
  const auto m = train(ds, cfg);
  double balance = 0.0;
  for (double a : m.alphas) {
    balance += a;
    EXPECT_GT(std::abs(a), 0.0);
    EXPECT_LE(std::abs(a), cfg.cost + 1e-12);
  }
  EXPECT_NEAR(balance, 0.0, 1e-9);

  // Match each training row to its multiplier (support vectors are stored in row order).
  std::size_t sv = 0;
  const double slack = 2.0 * cfg.tolerance;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto row = ds.row(i);
    double a = 0.0;
    if (sv < m.support_count() && std::equal(row.begin(), row.end(), m.support_vector(sv).begin())) a = std::abs(m.alphas[sv++]);
    const double yf = (ds.label(i) ? 1.0 : -1.0) * classify_direct(m, row).margin;
    if (a == 0.0) EXPECT_GE(yf, 1.0 - slack) << i;
    else if (a >= cfg.cost) EXPECT_LE(yf, 1.0 + slack) << i;
    else EXPECT_NEAR(yf, 1.0, slack) << i;
  }
  EXPECT_EQ(sv, m.support_count());
}

TEST(Svm, RejectsDegenerateTrainingSets) {
  const Dataset one_class(1, {0.1, 0.2, 0.3}, {1, 1, 1});
  EXPECT_THROW(train(one_class), InvalidArgument);
  SvmTrainConfig bad;
  bad.cost = 0.0;
  EXPECT_THROW(train(Dataset(1, {0.1, 0.9}, {0, 1}), bad), InvalidArgument);
}

TEST(SvmPipeline, MacCountAndStageFormats) {
  Rng rng(3);
  for (std::size_t m_features : {1u, 5u, 30u}) {
    const auto ds = blobs(rng, 60, m_features, 0.2);
    const auto m = train(ds);
    PipelineTrace trace;
    fixed_margin(m, ds.row(0), {}, nullptr, &trace);
    const std::size_t d = m_features + 1;
    EXPECT_EQ(trace.macs, d * d + d);
    EXPECT_EQ(trace.stage1_words.size(), d);
    for (const auto& w : trace.stage1_words) EXPECT_EQ(w.format(), m.formats.stage2_input);
    EXPECT_EQ(trace.output.format(), m.formats.output);
    EXPECT_EQ(m.formats.input, FixedFormat(8, 6));
    EXPECT_EQ(m.formats.coefficient, FixedFormat(8, 7));
    EXPECT_EQ(m.formats.stage2_input.total_bits, 10);
    EXPECT_EQ(m.formats.output.total_bits, 16);
  }
}

TEST(SvmPipeline, FixedPointAgreesWithFloatingPoint) {
  Rng rng(4);
  const auto ds = blobs(rng, 200, 6, 0.15);
  const auto m = train(ds);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) agree += classify_fixed(m, ds.row(i)) == classify_direct(m, ds.row(i)).label;
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(ds.rows()), 0.98);
}

TEST(SvmPipeline, ScaledParametersKeepTheShift) {
  Rng rng(5);
  const auto m = train(blobs(rng, 60, 3, 0.2));
  const double scale = std::ldexp(1.0, -m.formats.weight_shift);
  double wmax = 0.0;
  for (double w : m.weight_matrix) wmax = std::max(wmax, std::abs(w) * scale);
  EXPECT_LE(wmax, 127.0 / 128.0);
  EXPECT_GT(wmax, 127.0 / 256.0);
  for (std::size_t i = 0; i < m.weight_words.size(); ++i)
    EXPECT_EQ(m.weight_words[i], fixedpoint::quantize(m.weight_matrix[i] * scale, m.formats.coefficient));
}

TEST(SvmPipeline, ZeroErrorPatternIsNoOp) {
  Rng rng(6);
  const auto ds = blobs(rng, 60, 4, 0.25);
  const auto m = train(ds);
  const auto s1 = silent(m.formats.stage2_input.total_bits), s2 = silent(m.formats.output.total_bits);
  Rng err(7);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    EXPECT_EQ(fixed_margin(m, ds.row(i), {&s1, &s2}, &err), fixed_margin(m, ds.row(i)));
}

TEST(SvmPipeline, OutputFaultFlipsTheSignBit) {
  Rng rng(8);
  const auto ds = blobs(rng, 40, 2, 0.2);
  const auto m = train(ds);
  // Only the MSB of the output word fires.
  std::vector<double> mean(static_cast<std::size_t>(m.formats.output.total_bits), -40.0);
  mean.back() = 40.0;
  const auto msb = errormodel::ErrorPmfModel::independent(mean);
  Rng err(9);
  for (std::size_t i = 0; i < ds.rows(); ++i)
    EXPECT_NE(classify_fixed(m, ds.row(i), {nullptr, &msb}, &err), classify_fixed(m, ds.row(i)));
}

TEST(SvmPipeline, RejectsMismatchedFaultWidthsAndMissingStream) {
  Rng rng(10);
  const auto ds = blobs(rng, 40, 2, 0.2);
  const auto m = train(ds);
  const auto wrong = silent(m.formats.stage2_input.total_bits + 1);
  const auto ok = silent(m.formats.stage2_input.total_bits);
  Rng err(11);
  EXPECT_THROW(fixed_margin(m, ds.row(0), {&wrong, nullptr}, &err), InvalidArgument);
  EXPECT_THROW(fixed_margin(m, ds.row(0), {nullptr, &ok}, &err), InvalidArgument);
  EXPECT_THROW(fixed_margin(m, ds.row(0), {&ok, nullptr}, nullptr), InvalidArgument);
  EXPECT_THROW(fixed_margin(m, std::vector<double>{0.1}), InvalidArgument);
}
