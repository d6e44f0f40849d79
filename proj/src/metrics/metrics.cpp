#include "cssl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cssl {

namespace {

void require_both_classes(const ScoredSet& s, const char* what) {
  s.validate();
  if (s.positives() == 0 || s.negatives() == 0) {
    throw std::invalid_argument(std::string(what) + ": both classes must be present");
  }
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void ScoredSet::validate() const {
  if (scores.empty()) throw std::invalid_argument("scored set is empty");
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("label outside {0,1}");
    if (!std::isfinite(scores[i])) throw std::invalid_argument("non-finite score");
  }
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const { return labels.size() - positives(); }

double auroc(const ScoredSet& s) {
  require_both_classes(s, "auroc");
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] < s.scores[b]; });
  // Doubled midranks keep every quantity an exact integer.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.scores[order[j]] == s.scores[order[i]]) ++j;
    const double twice_mid = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (s.labels[order[t]] == 1) twice_rank_sum += twice_mid;
    i = j;
  }
  const double p = static_cast<double>(s.positives()), q = static_cast<double>(s.negatives());
  const double twice_u = twice_rank_sum - p * (p + 1.0);
  return twice_u / (2.0 * p * q);
}

Confusion confusion_metrics(const ScoredSet& s, double thr) {
  s.validate();
  if (!(thr >= 0.0 && thr <= 1.0)) throw std::invalid_argument("threshold must lie in [0, 1]");
  Confusion c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const bool predicted = s.scores[i] >= thr;
    if (s.labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  const double n = static_cast<double>(s.scores.size());
  c.accuracy = static_cast<double>(c.tp + c.tn) / n;
  if (c.tp + c.fn > 0) c.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) c.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return c;
}

std::string format_rate(const std::optional<double>& v) { return v ? num(*v) : "undefined"; }

std::vector<RocPoint> roc_points(const ScoredSet& s) {
  require_both_classes(s, "roc_points");
  const std::size_t n = s.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });
  const double p = static_cast<double>(s.positives()), q = static_cast<double>(s.negatives());
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    const double thr = s.scores[order[i]];
    for (; i < n && s.scores[order[i]] == thr; ++i) (s.labels[order[i]] == 1 ? tp : fp)++;
    curve.push_back({thr, static_cast<double>(fp) / q, static_cast<double>(tp) / p});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

void write_roc_csv(std::ostream& os, std::span<const RocPoint> curve) {
  os << "threshold,fpr,tpr\n";
  for (const auto& pt : curve) {
    os << (std::isinf(pt.threshold) ? std::string("inf") : num(pt.threshold)) << ',' << num(pt.fpr) << ','
       << num(pt.tpr) << '\n';
  }
}

std::string roc_svg(std::span<const RocSeries> series, const std::string& title) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double left = 60, top = 40, size = 400;
  auto x = [&](double f) { return left + f * size; };
  auto y = [&](double t) { return top + (1.0 - t) * size; };
  char buf[256];
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + size + 200 << "\" height=\""
     << top + size + 60 << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"14\">", left + size / 2,
                top - 15);
  os << buf << svg_escape(title) << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                left, top, size, size);
  os << buf;
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.1f</text>\n"
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.1f</text>\n",
                  x(v), top + size + 16, v, left - 6, y(v) + 4, v);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">False positive rate</text>\n"
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" transform=\"rotate(-90 %g %g)\">True positive rate</text>\n",
                left + size / 2, top + size + 40, left - 40, top + size / 2, left - 40, top + size / 2);
  os << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n", x(0),
                y(0), x(1), y(1));
  os << buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % (sizeof colors / sizeof *colors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& pt : series[k].curve) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(pt.fpr), y(pt.tpr));
      os << buf;
    }
    os << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%g\" y=\"%g\">",
                  left + size + 15, ly, left + size + 35, ly, color, left + size + 40, ly + 4);
    os << buf << svg_escape(series[k].label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cssl
