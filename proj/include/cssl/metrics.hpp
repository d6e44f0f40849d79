#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace cssl {

/// Scores (probability of class 1) paired with {0,1} labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  /// Throws std::invalid_argument on empty or mismatched input, a label
  /// outside {0,1} or a non-finite score.
  void validate() const;
  std::size_t positives() const;
  std::size_t negatives() const;

  friend bool operator==(const ScoredSet&, const ScoredSet&) = default;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Throws std::invalid_argument when a class is absent.
double auroc(const ScoredSet& s);

/// Confusion table at a threshold; a sample is predicted positive iff its
/// score >= thr. Rates over an absent class are std::nullopt.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

Confusion confusion_metrics(const ScoredSet& s, double thr = 0.5);

/// Text form of an optional rate; absent values print as "undefined".
std::string format_rate(const std::optional<double>& v);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Curve from the +infinity sentinel (0,0) through every distinct score in
/// decreasing order, ending at (1,1). Throws when a class is absent.
std::vector<RocPoint> roc_points(const ScoredSet& s);

double trapezoid_area(std::span<const RocPoint> curve);

/// CSV with header threshold,fpr,tpr.
void write_roc_csv(std::ostream& os, std::span<const RocPoint> curve);

struct RocSeries {
  std::string label;
  std::vector<RocPoint> curve;
};

/// Standalone SVG: unit axes with ticks and labels, chance diagonal, one
/// polyline per series and a legend.
std::string roc_svg(std::span<const RocSeries> series, const std::string& title = "ROC");

}  // namespace cssl
