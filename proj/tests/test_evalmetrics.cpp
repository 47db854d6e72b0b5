#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "optithreat/evalmetrics.hpp"
#include "support.hpp"

using namespace optithreat;

namespace {

// One-hot-ish probabilities: `conf` on `predicted`, the rest spread evenly.
std::vector<float> probs_for(const std::vector<int>& predicted, int classes, float conf) {
  std::vector<float> p;
  for (int k : predicted) {
    for (int c = 0; c < classes; ++c) {
      p.push_back(c == k ? conf : (1.0f - conf) / static_cast<float>(classes - 1));
    }
  }
  return p;
}

PredictionRecord calibration_toy() {
  // ten pixels at confidence 0.9 for class 0, six of them correct
  std::vector<int> gt{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  return oracle::make_record(2, 5, 2, gt, probs_for(std::vector<int>(10, 0), 2, 0.9f));
}

}  // namespace

TEST(Validate, RejectsBadRecords) {
  auto r = oracle::make_record(1, 2, 2, {0, 1}, {0.5f, 0.5f, 0.2f, 0.8f});
  EXPECT_NO_THROW(r.validate());
  auto bad_sum = r;
  bad_sum.probabilities[0] = 0.6f;
  EXPECT_THROW(bad_sum.validate(), DataError);
  auto bad_label = r;
  bad_label.ground_truth[1] = 7;
  EXPECT_THROW(bad_label.validate(), DataError);
  auto ignored = r;
  ignored.ground_truth[1] = 255;
  EXPECT_NO_THROW(ignored.validate());
  auto nan = r;
  nan.probabilities[2] = std::nanf("");
  EXPECT_THROW(nan.validate(), DataError);
  auto negative = r;
  negative.probabilities[2] = -0.2f;
  negative.probabilities[3] = 1.2f;
  EXPECT_THROW(negative.validate(), DataError);
  auto shape = r;
  shape.probabilities.pop_back();
  EXPECT_THROW(shape.validate(), DimensionError);
}

TEST(Miou, HandComputedToy) {
  // class 0: TP 1, union 2; class 1: TP 2, union 3
  const auto r = oracle::make_record(2, 2, 2, {0, 0, 1, 1}, probs_for({0, 1, 1, 1}, 2, 0.8f));
  const std::vector<PredictionRecord> v{r};
  const auto res = miou(v);
  EXPECT_DOUBLE_EQ(res.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(res.per_class[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(res.miou, 7.0 / 12.0);
}

TEST(Miou, PerfectPredictionAndAbsentClass) {
  const auto r = oracle::make_record(1, 4, 3, {0, 1, 0, 1}, probs_for({0, 1, 0, 1}, 3, 0.7f));
  const std::vector<PredictionRecord> v{r};
  const auto res = miou(v);
  EXPECT_DOUBLE_EQ(res.miou, 1.0);
  EXPECT_TRUE(std::isnan(res.per_class[2]));
  EXPECT_FALSE(res.in_mean[2]);

  // a class that is only predicted counts as a false positive but is not averaged
  const auto fp = oracle::make_record(1, 4, 3, {0, 0, 1, 1}, probs_for({0, 2, 1, 1}, 3, 0.7f));
  const std::vector<PredictionRecord> w{fp};
  const auto res2 = miou(w);
  EXPECT_DOUBLE_EQ(res2.per_class[2], 0.0);
  EXPECT_FALSE(res2.in_mean[2]);
  EXPECT_DOUBLE_EQ(res2.miou, (0.5 + 1.0) / 2.0);
}

TEST(Miou, IgnoreLabelAndEmptyInput) {
  const auto r = oracle::make_record(1, 3, 2, {0, 255, 1}, probs_for({0, 0, 1}, 2, 0.9f));
  const std::vector<PredictionRecord> v{r};
  EXPECT_DOUBLE_EQ(miou(v).miou, 1.0);
  const auto all_ignored = oracle::make_record(1, 2, 2, {255, 255}, probs_for({0, 1}, 2, 0.9f));
  const std::vector<PredictionRecord> w{all_ignored};
  EXPECT_THROW(miou(w), DataError);
  EXPECT_THROW(miou(std::vector<PredictionRecord>{}), DataError);
}

TEST(Miou, MatchesBruteForce) {
  std::mt19937_64 rng(21);
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 4; ++i) recs.push_back(oracle::random_record(rng, 8, 8, 5, 0.1));
  EXPECT_NEAR(miou(recs).miou, oracle::brute_force_miou(recs), 1e-12);
}

TEST(Ece, ConstantConfidenceToy) {
  const std::vector<PredictionRecord> v{calibration_toy()};
  const auto c = ece(v, 10);
  EXPECT_NEAR(c.ece, 0.3, 1e-6);
  EXPECT_NEAR(c.per_class_ece[0], 0.3, 1e-6);
  EXPECT_TRUE(std::isnan(c.per_class_ece[1]));
  EXPECT_NEAR(c.mece, 0.3, 1e-6);
  ASSERT_EQ(c.bins.size(), 10u);
  // 0.9f is just below 0.9
  EXPECT_EQ(c.bins[8].count, 10u);
  EXPECT_NEAR(c.bins[8].mean_confidence, 0.9, 1e-6);
  EXPECT_NEAR(c.bins[8].mean_accuracy, 0.6, 1e-12);
  EXPECT_DOUBLE_EQ(c.bins[3].lower, 0.3);
  EXPECT_DOUBLE_EQ(c.bins[3].upper, 0.4);
}

TEST(Ece, SingleBinIsGlobalGap) {
  std::mt19937_64 rng(3);
  std::vector<PredictionRecord> recs{oracle::random_record(rng, 8, 8, 4)};
  double conf = 0.0, acc = 0.0;
  int n = 0;
  for (const auto& r : recs) {
    for (std::size_t p = 0; p < r.ground_truth.size(); ++p) {
      const auto px = r.pixel(p);
      const auto it = std::max_element(px.begin(), px.end());
      conf += *it;
      acc += (it - px.begin()) == r.ground_truth[p];
      ++n;
    }
  }
  EXPECT_NEAR(ece(recs, 1).ece, std::abs(acc / n - conf / n), 1e-9);
}

TEST(Ece, MatchesBruteForce) {
  std::mt19937_64 rng(17);
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(oracle::random_record(rng, 8, 8, 4, 0.05));
  for (int bins : {1, 2, 5, 10}) {
    EXPECT_NEAR(ece(recs, bins).ece, oracle::brute_force_ece(recs, bins), 1e-9) << bins;
  }
}

TEST(Ece, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(5);
  auto r = oracle::random_record(rng, 8, 8, 3);
  const std::vector<PredictionRecord> a{r};
  // reverse pixel order
  auto rev = r;
  const int k = r.num_classes;
  const std::size_t n = r.ground_truth.size();
  for (std::size_t p = 0; p < n; ++p) {
    rev.ground_truth[p] = r.ground_truth[n - 1 - p];
    for (int c = 0; c < k; ++c) rev.probabilities[p * k + c] = r.probabilities[(n - 1 - p) * k + c];
  }
  const std::vector<PredictionRecord> b{rev};
  const auto ca = ece(a, 10), cb = ece(b, 10);
  EXPECT_NEAR(ca.ece, cb.ece, 1e-12);
  EXPECT_NEAR(ca.mece, cb.mece, 1e-12);
  EXPECT_GE(ca.ece, 0.0);
  EXPECT_LE(ca.ece, 1.0);
}

TEST(Ece, BinAssignmentAndErrors) {
  CalibrationAccumulator acc(2, 10);
  EXPECT_EQ(acc.bin_of(0.0), 0);
  EXPECT_EQ(acc.bin_of(0.1), 1);
  EXPECT_EQ(acc.bin_of(0.999), 9);
  EXPECT_EQ(acc.bin_of(1.0), 9);
  EXPECT_THROW(CalibrationAccumulator(2, 0), DomainError);
  EXPECT_THROW(ece(std::vector<PredictionRecord>{calibration_toy()}, 0), DomainError);
}

TEST(Accumulators, MergeEqualsSinglePass) {
  std::mt19937_64 rng(8);
  const auto a = oracle::random_record(rng, 6, 6, 3, 0.1);
  const auto b = oracle::random_record(rng, 6, 6, 3, 0.1);
  ConfusionAccumulator ca(3), cb(3), cab(3);
  CalibrationAccumulator ka(3, 7), kb(3, 7), kab(3, 7);
  ca.add(a);
  cb.add(b);
  cab.add(a);
  cab.add(b);
  ka.add(a);
  kb.add(b);
  kab.add(a);
  kab.add(b);
  ca.merge(cb);
  ka.merge(kb);
  EXPECT_EQ(ca.valid_pixels(), cab.valid_pixels());
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) EXPECT_EQ(ca.at(t, p), cab.at(t, p));
  }
  EXPECT_NEAR(ka.result().ece, kab.result().ece, 1e-12);
  EXPECT_NEAR(ka.result().mece, kab.result().mece, 1e-12);
}

TEST(Accumulators, TieGoesToFirstClass) {
  ConfusionAccumulator acc(2);
  acc.add(oracle::make_record(1, 1, 2, {1}, {0.5f, 0.5f}));
  EXPECT_EQ(acc.at(1, 0), 1u);
}

TEST(EvaluateRecords, WeightedSummaries) {
  const std::vector<PredictionRecord> v{calibration_toy()};
  const auto rep = evaluate_records(v, 10);
  EXPECT_EQ(rep.pixel_count, 10u);
  EXPECT_NEAR(rep.weighted_confidence(), 0.9, 1e-6);
  EXPECT_NEAR(rep.weighted_accuracy(), 0.6, 1e-12);
  EXPECT_NEAR(rep.calibration.ece, 0.3, 1e-6);
}

TEST(Pearson, HandCases) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 5, 4, 5};
  EXPECT_NEAR(pearson(x, y), 6.0 / std::sqrt(60.0), 1e-12);
  const std::vector<double> up{3, 5, 7, 9, 11}, down{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(pearson(x, up), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, down), -1.0);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), DimensionError);
  EXPECT_THROW(pearson(x, std::vector<double>(5, 2.0)), NumericError);
}

TEST(Pearson, ConfidenceAccuracyAcrossSweep) {
  // confidence and accuracy fall together in equal steps
  std::vector<EvalReport> sweep;
  for (int i = 0; i < 4; ++i) {
    std::vector<int> gt(10, 1);
    for (int p = 0; p < 9 - i; ++p) gt[p] = 0;
    const float conf = 0.95f - 0.1f * static_cast<float>(i);
    const std::vector<PredictionRecord> v{
        oracle::make_record(2, 5, 2, gt, probs_for(std::vector<int>(10, 0), 2, conf))};
    sweep.push_back(evaluate_records(v, 10));
  }
  EXPECT_NEAR(pearson_conf_acc(sweep), 1.0, 1e-9);
  EXPECT_THROW(pearson_conf_acc(std::span<const EvalReport>(sweep).first(2)), DomainError);
}
