#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hayama/error.hpp"
#include "hayama/metrics.hpp"
#include "hayama/scanner.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hayama;
using namespace hayama::metrics;
using hayama::testing::uniform01;

namespace {

scan::OccurrenceMatrix labeled_matrix(const std::vector<std::vector<std::uint32_t>>& rows, std::size_t n_cols,
                                      const std::vector<std::uint8_t>& labels) {
  scan::OccurrenceMatrix m;
  m.n_cols = n_cols;
  for (const auto& r : rows) m.append_row(r);
  m.labels = labels;
  for (std::size_t c = 0; c < n_cols; ++c) m.col_ids.push_back("f" + std::to_string(c));
  return m;
}

std::vector<double> random_scores(std::mt19937_64& rng, std::size_t n, bool ties) {
  std::vector<double> s(n);
  for (auto& v : s) v = ties ? static_cast<double>(rng() % 7) / 6.0 : uniform01(rng);
  return s;
}

}  // namespace

TEST_CASE("per-feature statistics") {
  // 4 malware then 2 benign. f0 fires on every malware file only; f1 never
  // fires; f2 fires on rows 0, 1, 4.
  auto m = labeled_matrix({{0, 2}, {0, 2}, {0}, {0}, {2}, {}}, 3, {1, 1, 1, 1, 0, 0});
  auto s = per_feature_stats(m);
  CHECK(s.n == 6);
  CHECK(s.n_malware == 4);
  CHECK(s.features[0].accuracy == 1.0);
  CHECK(s.features[0].precision == 1.0);
  CHECK(s.features[0].recall == 1.0);
  CHECK(s.features[1].accuracy == doctest::Approx(2.0 / 6));
  CHECK(s.features[1].recall == 0.0);
  CHECK(s.features[1].precision == 0.0);
  CHECK(s.features[1].precision_undefined);
  // f2: TP 2, FP 1, TN 1, FN 2.
  CHECK(s.features[2].accuracy == doctest::Approx(3.0 / 6));
  CHECK(s.features[2].precision == doctest::Approx(2.0 / 3));
  CHECK(s.features[2].recall == doctest::Approx(0.5));

  auto balanced = labeled_matrix({{}, {}, {}, {}}, 1, {1, 0, 1, 0});
  CHECK(per_feature_stats(balanced).features[0].accuracy == 0.5);

  std::vector<std::size_t> train{0, 4, 5};
  auto sub = per_feature_stats(m, train);
  CHECK(sub.n == 3);
  CHECK(sub.features[2].fires_total == 2);

  m.labels.reset();
  CHECK_THROWS_AS(per_feature_stats(m), Error);
}

TEST_CASE("top-k by metric") {
  auto m = labeled_matrix({{0, 2}, {0, 2}, {0}, {0}, {2}, {}}, 3, {1, 1, 1, 1, 0, 0});
  auto s = per_feature_stats(m);
  CHECK(topk_by_metric(s, Metric::Accuracy, 1) == std::vector<std::uint32_t>{0});
  CHECK(topk_by_metric(s, Metric::Accuracy, 10) == std::vector<std::uint32_t>{0, 2, 1});
  auto tie = labeled_matrix({{0, 1}, {}}, 2, {1, 0});
  CHECK(topk_by_metric(per_feature_stats(tie), Metric::Recall, 1) == std::vector<std::uint32_t>{0});
  CHECK(metric_from_string("precision") == Metric::Precision);
  CHECK_THROWS_AS(metric_from_string("f1"), Error);
}

TEST_CASE("ROC and partial AUC examples") {
  std::vector<std::uint8_t> y{1, 1, 0, 0};
  auto perfect = roc_and_partial_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.partial_auc == 1.0);

  auto flat = roc_and_partial_auc(std::vector<double>(4, 0.3), y);
  CHECK(flat.auc == 0.5);
  CHECK(flat.partial_auc == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(flat.curve.size() == 2);

  std::vector<double> s8{0.9, 0.8, 0.8, 0.7, 0.6, 0.4, 0.4, 0.1};
  std::vector<std::uint8_t> y8{1, 1, 0, 1, 0, 1, 0, 0};
  auto r8 = roc_and_partial_auc(s8, y8, 0.5);
  CHECK(r8.auc == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r8.partial_auc == doctest::Approx(0.5625).epsilon(1e-15));
  auto pts = oracle::roc_by_enumeration(s8, y8);
  for (double cap : {0.01, 0.25, 0.5, 1.0}) {
    auto r = roc_and_partial_auc(s8, y8, cap);
    CHECK(std::abs(r.partial_auc - oracle::trapezoid_auc(pts, cap) / cap) <= 1e-12);
  }
  CHECK(r8.curve.front().fpr == 0.0);
  CHECK(r8.curve.back().fpr == 1.0);
  CHECK(r8.curve.back().tpr == 1.0);

  CHECK_THROWS_AS(roc_and_partial_auc(std::vector<double>{0.1, 0.2}, std::vector<std::uint8_t>{1, 1}), Error);
}

TEST_CASE("ROC matches exhaustive-threshold oracle on random score sets") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + rng() % 63;
    auto s = random_scores(rng, n, trial % 2 == 0);
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = rng() % 2;
    y[0] = 1;
    y[1] = 0;
    auto pts = oracle::roc_by_enumeration(s, y);
    auto r = roc_and_partial_auc(s, y, 0.01);
    CHECK(std::abs(r.auc - oracle::trapezoid_auc(pts, 1.0)) <= 1e-12);
    CHECK(std::abs(r.partial_auc - oracle::trapezoid_auc(pts, 0.01) / 0.01) <= 1e-12);
    for (std::size_t i = 1; i < r.curve.size(); ++i) {
      CHECK(r.curve[i].fpr >= r.curve[i - 1].fpr);
      CHECK(r.curve[i].tpr >= r.curve[i - 1].tpr);
    }
    // The normalized partial area is an average of a non-decreasing TPR.
    double prev = 0;
    for (double cap : {0.01, 0.05, 0.1, 0.3, 1.0}) {
      double p = normalized_partial_auc(r.curve, cap);
      CHECK(p <= tpr_at(r.curve, cap) + 1e-12);
      CHECK(p >= prev - 1e-12);
      prev = p;
    }
  }
}

TEST_CASE("occurrence ECDF") {
  auto m = labeled_matrix({{2}, {2}, {2}, {2}, {2}, {}}, 3, {1, 1, 1, 1, 1, 0});
  auto e = occurrence_ecdf(m, 1);
  REQUIRE(e.size() == 2);
  CHECK(e[0].count == 0);
  CHECK(e[0].proportion == doctest::Approx(2.0 / 3));
  CHECK(e[1].count == 5);
  CHECK(e[1].proportion == 1.0);

  auto full = labeled_matrix({{0, 1}, {0, 1}, {0, 1}}, 2, {0, 0, 0});
  auto f = occurrence_ecdf(full, 0);
  REQUIRE(f.size() == 1);
  CHECK(f[0].count == 3);
  CHECK(f[0].proportion == 1.0);

  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 1 + rng() % 60, d = 1 + rng() % 20;
    std::vector<std::vector<std::uint32_t>> rows(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng() % 2;
      for (std::uint32_t c = 0; c < d; ++c)
        if (rng() % 3 == 0) rows[i].push_back(c);
    }
    auto mm = labeled_matrix(rows, d, labels);
    for (std::uint8_t cls : {0, 1}) {
      std::vector<std::uint64_t> counts(d, 0);
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == cls)
          for (auto c : rows[i]) ++counts[c];
      auto want = oracle::ecdf_by_counting(counts);
      auto got = occurrence_ecdf(mm, cls);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].count == want[i].first);
        CHECK(std::abs(got[i].proportion - want[i].second) <= 1e-12);
      }
    }
  }
}

TEST_CASE("correlation matrix") {
  std::vector<double> x{1, 0, 1, 1, 0, 0, 1};
  std::vector<double> nx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) nx[i] = 1 - x[i];
  std::vector<double> constant(x.size(), 4.0);
  auto c = correlation_matrix({x, nx}, {x, constant});
  CHECK(c.size == 4);
  CHECK(c.at(0, 0) == 1.0);
  CHECK(c.at(0, 1) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(c.at(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.constant[3] == 1);
  for (std::size_t j = 0; j < 4; ++j) CHECK(c.at(3, j) == 0.0);

  std::mt19937_64 rng(47);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> cols(5, std::vector<double>(40));
    for (auto& col : cols)
      for (auto& v : col) v = trial % 2 ? gauss(rng) : static_cast<double>(rng() % 2);
    for (std::size_t i = 0; i < 40; ++i) cols[4][i] += cols[0][i];
    auto r = correlation_matrix({cols[0], cols[1]}, {cols[2], cols[3], cols[4]});
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(r.at(i, j) - oracle::pearson(cols[i], cols[j])) <= 1e-12);
  }
}

TEST_CASE("first-component PLS correlation") {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> gauss;

  SUBCASE("copy blocks") {
    std::vector<std::vector<double>> yara(4, std::vector<double>(300));
    for (auto& col : yara)
      for (auto& v : col) v = rng() % 3 == 0;
    CHECK(std::abs(pls_max_correlation(yara, yara) - 1.0) <= 1e-9);
    std::vector<std::vector<double>> one{yara[1]};
    CHECK(std::abs(pls_max_correlation(one, one) - 1.0) <= 1e-9);
  }
  SUBCASE("analytic 0.7 construction") {
    // side = sum of 5 fair coin columns + N(0, s2); var(sum) = 1.25, so
    // corr = sqrt(1.25 / (1.25 + s2)) = 0.7.
    const double s2 = 1.25 / 0.49 - 1.25;
    for (int seed = 0; seed < 5; ++seed) {
      std::vector<std::vector<double>> yara(5, std::vector<double>(2000));
      std::vector<double> side(2000, 0.0);
      for (std::size_t i = 0; i < 2000; ++i) {
        for (auto& col : yara) {
          col[i] = rng() % 2;
          side[i] += col[i];
        }
        side[i] += std::sqrt(s2) * gauss(rng);
      }
      CHECK(std::abs(pls_max_correlation(yara, {side}) - 0.7) <= 0.05);
    }
  }
  SUBCASE("independent blocks") {
    int small = 0;
    for (int seed = 0; seed < 5; ++seed) {
      std::vector<std::vector<double>> a(3, std::vector<double>(2000)), b(3, std::vector<double>(2000));
      for (auto& col : a)
        for (auto& v : col) v = rng() % 2;
      for (auto& col : b)
        for (auto& v : col) v = gauss(rng);
      small += pls_max_correlation(a, b) < 0.1;
    }
    CHECK(small >= 4);
  }
  SUBCASE("degenerate blocks") {
    std::vector<std::vector<double>> flat{std::vector<double>(10, 1.0)};
    std::vector<std::vector<double>> ok{{0, 1, 0, 1, 0, 1, 0, 1, 0, 1}};
    CHECK_THROWS_AS(pls_max_correlation(flat, ok), Error);
    CHECK_THROWS_AS(pls_max_correlation(ok, flat), Error);
    CHECK_THROWS_AS(pls_max_correlation({{1.0}}, {{2.0}}), Error);
  }
}

TEST_CASE("evaluation reports") {
  std::vector<std::uint8_t> y{1, 0, 1, 0};
  auto perfect = evaluate_scores("test", std::vector<double>{0.9, 0.1, 0.8, 0.3}, y);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.partial_auc == 1.0);

  auto half = evaluate_scores("test", std::vector<double>(4, 0.5), y);
  CHECK(half.accuracy == 0.5);
  CHECK(half.confusion.tp == 2);
  CHECK(half.confusion.fp == 2);

  // Hand fixture: threshold 0.5 gives TP 2, FN 1, FP 1, TN 2.
  std::vector<double> p{0.7, 0.6, 0.2, 0.55, 0.1, 0.4};
  std::vector<std::uint8_t> yy{1, 1, 1, 0, 0, 0};
  auto r = evaluate_scores("valid", p, yy);
  CHECK(r.accuracy == doctest::Approx(4.0 / 6));
  CHECK(r.confusion.tp == 2);
  CHECK(r.confusion.fn == 1);
  CHECK(r.confusion.fp == 1);
  CHECK(r.confusion.tn == 2);
  // Pairs ranked correctly: 0.7 beats 3, 0.6 beats 3, 0.2 beats 1 -> 7/9.
  CHECK(r.auc == doctest::Approx(7.0 / 9).epsilon(1e-15));
  CHECK(r.to_json().find("\"accuracy\"") != std::string::npos);
  CHECK(r.curve_csv().rfind("fpr,tpr\n0,0\n", 0) == 0);
}
