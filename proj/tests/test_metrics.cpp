#include <cmath>
#include <sstream>

#include "cssl/metrics.hpp"
#include "doctest.h"
#include "support/metric_oracles.hpp"

using namespace cssl;
using namespace cssl::testing;

TEST_CASE("auroc examples") {
  CHECK(auroc({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}) == 1.0);
  CHECK(auroc({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}) == 0.5);
  CHECK(auroc({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}}) == 0.75);
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({{0.1}, {0, 1}}), std::invalid_argument);
}

TEST_CASE("auroc agrees with pair counting") {
  Rng rng(1);
  for (int i = 0; i < 400; ++i) {
    const auto s = random_scored_set(rng, 50, i % 2 == 0);
    CHECK(std::abs(auroc(s) - brute_force_auroc(s)) < 1e-12);
  }
}

TEST_CASE("auroc invariances") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    auto s = random_scored_set(rng, 50, false);
    const double a = auroc(s);
    ScoredSet t = s;
    for (auto& x : t.scores) x = std::exp(3.0 * x) - 7.0;
    CHECK(auroc(t) == a);
    ScoredSet f = s;
    for (auto& l : f.labels) l = 1 - l;
    CHECK(std::abs(auroc(f) - (1.0 - a)) < 1e-15);
  }
}

TEST_CASE("confusion metrics") {
  auto c = confusion_metrics({{0.6, 0.4}, {1, 0}});
  CHECK(c.accuracy == 1.0);
  CHECK(*c.sensitivity == 1.0);
  CHECK(*c.specificity == 1.0);

  c = confusion_metrics({{0.9, 0.8, 0.7, 0.6}, {0, 1, 0, 1}});
  CHECK(*c.specificity == 0.0);

  // table: TP (0.9), FP (0.6), FN (0.3), TN (0.2)
  c = confusion_metrics({{0.9, 0.6, 0.3, 0.2}, {1, 0, 1, 0}}, 0.5);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK(c.accuracy == 0.5);
  CHECK(*c.sensitivity == 0.5);
  CHECK(*c.specificity == 0.5);

  c = confusion_metrics({{0.9, 0.4, 0.3, 0.2}, {1, 0, 1, 0}}, 0.5);
  CHECK(c.accuracy == 0.75);
  CHECK(*c.sensitivity == 0.5);
  CHECK(*c.specificity == 1.0);

  // boundary: score equal to the threshold is positive
  c = confusion_metrics({{0.5}, {1}});
  CHECK(c.tp == 1);
  CHECK_FALSE(c.specificity.has_value());
  CHECK(format_rate(c.specificity) == "undefined");
  CHECK(format_rate(0.25) == "0.25");
}

TEST_CASE("accuracy is the class-weighted mean of sensitivity and specificity") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_scored_set(rng, 50, i % 3 == 0);
    const auto c = confusion_metrics(s, rng.uniform());
    const double p = static_cast<double>(s.positives()), n = static_cast<double>(s.negatives());
    CHECK(std::abs(c.accuracy - (*c.sensitivity * p + *c.specificity * n) / (p + n)) < 1e-15);
  }
}

TEST_CASE("roc curve") {
  const auto perfect = roc_points({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}});
  bool corner = false;
  for (const auto& pt : perfect) corner = corner || (pt.fpr == 0.0 && pt.tpr == 1.0);
  CHECK(corner);

  const auto flat = roc_points({{0.3, 0.3, 0.3}, {0, 1, 1}});
  REQUIRE(flat.size() == 2);
  CHECK(flat[0].fpr == 0.0);
  CHECK(flat[0].tpr == 0.0);
  CHECK(flat[1].fpr == 1.0);
  CHECK(flat[1].tpr == 1.0);
  CHECK(trapezoid_area(flat) == 0.5);

  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto s = random_scored_set(rng, 50, i % 2 == 0);
    const auto curve = roc_points(s);
    CHECK(curve.front().fpr == 0.0);
    CHECK(curve.front().tpr == 0.0);
    CHECK(curve.back().fpr == 1.0);
    CHECK(curve.back().tpr == 1.0);
    for (std::size_t k = 1; k < curve.size(); ++k) {
      CHECK(curve[k].fpr >= curve[k - 1].fpr);
      CHECK(curve[k].tpr >= curve[k - 1].tpr);
      CHECK(curve[k].threshold < curve[k - 1].threshold);
    }
    CHECK(std::abs(trapezoid_area(curve) - auroc(s)) < 1e-12);
  }
}

TEST_CASE("roc output formats") {
  const auto curve = roc_points({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}});
  std::ostringstream csv;
  write_roc_csv(csv, curve);
  CHECK(csv.str().rfind("threshold,fpr,tpr\ninf,0,0\n0.80000000000000004,0,0.5\n", 0) == 0);

  std::vector<RocSeries> runs{{"run 0", curve}, {"run <1>", curve}};
  const std::string svg = roc_svg(runs);
  std::size_t polylines = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++polylines;
  CHECK(polylines == 2);
  CHECK(svg.find("False positive rate") != std::string::npos);
  CHECK(svg.find("run &lt;1&gt;") != std::string::npos);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(confusion_metrics({{}, {}}), std::invalid_argument);
  CHECK_THROWS_AS(confusion_metrics({{0.1, 0.2}, {0}}), std::invalid_argument);
  CHECK_THROWS_AS(confusion_metrics({{0.1}, {2}}), std::invalid_argument);
  CHECK_THROWS_AS(confusion_metrics({{NAN}, {1}}), std::invalid_argument);
  CHECK_THROWS_AS(confusion_metrics({{0.1}, {1}}, 1.5), std::invalid_argument);
}
