#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "featprior/error.hpp"
#include "featprior/metrics.hpp"
#include "oracles.hpp"

using namespace featprior;

namespace {

void expect_code(ErrorCode code, auto&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << error_code_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

const std::size_t kTop123[] = {1, 2, 3};

}  // namespace

TEST(Metrics, PerfectPredictions) {
  const Matrix logits{{5, 0, 0}, {0, 5, 0}, {0, 0, 5}, {5, 1, 0}};
  const std::vector<std::size_t> y{0, 1, 2, 0};
  const auto m = metrics_from_logits(logits, y, 3, kTop123);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1_micro, 1.0);
  EXPECT_EQ(m.f1_macro, 1.0);
  for (const auto& [k, v] : m.top_k) EXPECT_EQ(v, 1.0) << k;
}

TEST(Metrics, ConstantPredictionOnBalancedPair) {
  const Matrix logits{{1, 0}, {1, 0}, {1, 0}, {1, 0}};
  const std::vector<std::size_t> y{0, 1, 0, 1};
  const auto m = metrics_from_logits(logits, y, 2, {});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_NEAR(m.f1_macro, 1.0 / 3.0, 1e-15);
}

TEST(Metrics, TopCIsAlwaysOne) {
  std::mt19937_64 rng(1);
  const Matrix logits = oracle::random_matrix(20, 5, rng);
  std::vector<std::size_t> y(20);
  for (auto& v : y) v = rng() % 5;
  const std::size_t ks[] = {5, 7};
  const auto m = metrics_from_logits(logits, y, 5, ks);
  EXPECT_EQ(m.top_k.at(5), 1.0);
  EXPECT_EQ(m.top_k.at(7), 1.0);
}

TEST(Metrics, TopKIsMonotone) {
  std::mt19937_64 rng(2);
  const Matrix logits = oracle::random_matrix(50, 6, rng);
  std::vector<std::size_t> y(50);
  for (auto& v : y) v = rng() % 6;
  const std::size_t ks[] = {1, 2, 3, 4, 5, 6};
  const auto m = metrics_from_logits(logits, y, 6, ks);
  EXPECT_EQ(m.top_k.at(1), m.accuracy);
  for (std::size_t k = 2; k <= 6; ++k) EXPECT_GE(m.top_k.at(k), m.top_k.at(k - 1));
}

TEST(Metrics, TiesRankLowerClassFirst) {
  const Matrix logits{{1, 1, 1}, {0, 2, 2}};
  const std::vector<std::size_t> y{0, 2};
  const std::size_t ks[] = {1, 2};
  const auto m = metrics_from_logits(logits, y, 3, ks);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.top_k.at(2), 1.0);
}

TEST(Metrics, MicroF1EqualsAccuracy) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 2 + trial % 5;
    const Matrix logits = oracle::random_matrix(31, c, rng);
    std::vector<std::size_t> y(31);
    for (auto& v : y) v = rng() % c;
    const auto m = metrics_from_logits(logits, y, c, {});
    EXPECT_NEAR(m.f1_micro, m.accuracy, 1e-12);
    EXPECT_GE(m.f1_macro, 0.0);
    EXPECT_LE(m.f1_macro, 1.0);
  }
}

TEST(Metrics, AbsentClassesZeroFillMacro) {
  const Matrix logits{{1, 0, 0, 0}, {0, 1, 0, 0}};
  const std::vector<std::size_t> y{0, 1};
  const auto m = metrics_from_logits(logits, y, 4, {});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.f1_macro, 0.5);
}

TEST(Metrics, HandComputedMacroF1) {
  // Class 0: tp 2, fp 1, fn 0 -> F1 0.8. Class 1: tp 1, fp 0, fn 1 -> F1 2/3.
  const Matrix logits{{1, 0}, {1, 0}, {1, 0}, {0, 1}};
  const std::vector<std::size_t> y{0, 0, 1, 1};
  const auto m = metrics_from_logits(logits, y, 2, {});
  EXPECT_NEAR(m.f1_macro, (0.8 + 2.0 / 3.0) / 2, 1e-15);
}

TEST(Metrics, NamedOrder) {
  const Matrix logits{{1, 0}};
  const std::vector<std::size_t> y{0};
  const std::size_t ks[] = {2, 1};
  const auto names = metrics_from_logits(logits, y, 2, ks).named();
  std::vector<std::string> got;
  for (const auto& [n, v] : names) got.push_back(n);
  EXPECT_EQ(got, (std::vector<std::string>{"accuracy", "top1", "top2", "f1_micro", "f1_macro"}));
}

TEST(Metrics, Errors) {
  const std::vector<std::size_t> y{0};
  expect_code(ErrorCode::DimensionMismatch, [&] { metrics_from_logits(Matrix(2, 2), y, 2, {}); });
  expect_code(ErrorCode::DimensionMismatch, [&] { metrics_from_logits(Matrix(1, 3), y, 2, {}); });
  const std::vector<std::size_t> bad{4};
  expect_code(ErrorCode::LabelOutOfRange, [&] { metrics_from_logits(Matrix(1, 2), bad, 2, {}); });
  const std::size_t zero[] = {0};
  expect_code(ErrorCode::InvalidArgument, [&] { metrics_from_logits(Matrix(1, 2), y, 2, zero); });
}

TEST(Evaluate, MatchesLogitMetrics) {
  const auto spec = NetworkSpec::dense(2, std::vector<std::size_t>{4}, Activation::Relu, 3);
  const Model model = init_params(spec, 1);
  Dataset ds;
  std::mt19937_64 rng(4);
  ds.inputs = oracle::random_matrix(12, 2, rng);
  ds.labels.resize(12);
  for (auto& v : ds.labels) v = rng() % 3;
  ds.class_count = 3;
  const auto a = evaluate(model, ds, kTop123);
  const auto b = metrics_from_logits(forward(model, ds.inputs).logits, ds.labels, 3, kTop123);
  EXPECT_EQ(a.named(), b.named());
  ds.class_count = 4;
  expect_code(ErrorCode::DimensionMismatch, [&] { evaluate(model, ds); });
}

TEST(Aggregate, TwoSeedsByHand) {
  const double v[] = {0.8, 0.9};
  const auto a = aggregate(v);
  EXPECT_DOUBLE_EQ(a.mean, 0.85);
  // Sample std √(2·0.05²/1) = 0.05·√2, divided by √2.
  EXPECT_NEAR(a.std_error, 0.05, 1e-15);
  EXPECT_EQ(a.n, 2u);
}

TEST(Aggregate, DegenerateInputs) {
  const double one[] = {0.7};
  EXPECT_EQ(aggregate(one).std_error, 0.0);
  EXPECT_EQ(aggregate(one).mean, 0.7);
  const double same[] = {0.5, 0.5, 0.5};
  EXPECT_EQ(aggregate(same).std_error, 0.0);
  EXPECT_EQ(aggregate({}).n, 0u);
}
