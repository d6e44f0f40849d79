#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "cssl/config.hpp"
#include "cssl/pipeline.hpp"
#include "cssl/rng.hpp"

namespace cssl {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : "undefined"; }

std::vector<std::string> ids(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(ds[i].subject_id);
  return out;
}

void require_disjoint(const RepeatResult& r) {
  std::set<std::string> seen;
  for (const auto* part : {&r.train_ids, &r.val_ids, &r.test_ids})
    for (const auto& id : *part)
      if (!seen.insert(id).second) {
        throw DataError("repeat " + std::to_string(r.repeat) + ": subject " + id + " is in more than one fold");
      }
}

}  // namespace

MeanStd mean_std(const std::vector<std::optional<double>>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) return out;
    sum += *v;
  }
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& v : values) ss += (*v - mean) * (*v - mean);
  out.mean = mean;
  out.std = std::sqrt(ss / n);
  return out;
}

ExperimentReport run_experiment(const Dataset& ds, const ExperimentConfig& cfg, const LogFn& log,
                                const std::optional<ParamSet>& init_params) {
  cfg.finetune.validate();
  ExperimentReport report;
  report.base_seed = cfg.seed;
  report.fingerprint = fingerprint(format_experiment_config(cfg));

  std::optional<ParamSet> shared = cfg.use_pretraining ? std::nullopt : init_params;
  if (cfg.use_pretraining && !cfg.strict) {
    PretrainConfig pc = cfg.pretrain;
    pc.seed = cfg.seed;
    if (log) log("pretraining on all " + std::to_string(ds.size()) + " instances");
    shared = pretrain(ds, cfg.model, pc).params;
  }

  for (std::size_t i = 0; i < cfg.finetune.repeats; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    FinetuneConfig fc = cfg.finetune;
    fc.seed = seed;
    std::optional<ParamSet> init = shared;
    if (cfg.use_pretraining && cfg.strict) {
      SplitSpec spec = fc.split;
      spec.seed = seed;
      const Split split = stratified_split(ds, spec);
      PretrainConfig pc = cfg.pretrain;
      pc.seed = seed;
      if (log) log("repeat " + std::to_string(i) + ": pretraining on " + std::to_string(split.train.size()) + " training instances");
      init = pretrain(ds.subset(split.train), cfg.model, pc).params;
    }
    const FinetuneResult ft = finetune(ds, cfg.model, fc, init);
    RepeatResult r{i, seed, ft.test, ft.best_epoch, ids(ds, ft.split.train), ids(ds, ft.split.val),
                   ids(ds, ft.split.test), ft.test_scores, ft.val_auroc, ft.params};
    require_disjoint(r);
    if (log) {
      log("repeat " + std::to_string(i) + " (seed " + std::to_string(seed) + "): best epoch " +
          std::to_string(ft.best_epoch) + ", test auroc " + num(ft.test.auroc) + ", accuracy " + num(ft.test.accuracy));
    }
    report.repeats.push_back(std::move(r));
  }
  return report;
}

void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  os << "repeat,accuracy,auroc,sensitivity,specificity\n";
  std::vector<std::optional<double>> acc, au, sens, spec;
  for (const auto& r : report.repeats) {
    os << r.repeat << ',' << num(r.test.accuracy) << ',' << num(r.test.auroc) << ',' << opt_num(r.test.sensitivity)
       << ',' << opt_num(r.test.specificity) << '\n';
    acc.push_back(r.test.accuracy);
    au.push_back(r.test.auroc);
    sens.push_back(r.test.sensitivity);
    spec.push_back(r.test.specificity);
  }
  const MeanStd m[4] = {mean_std(acc), mean_std(au), mean_std(sens), mean_std(spec)};
  os << "mean";
  for (const auto& x : m) os << ',' << opt_num(x.mean);
  os << "\nstd";
  for (const auto& x : m) os << ',' << opt_num(x.std);
  os << '\n';
}

void write_summary_json(std::ostream& os, const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["fingerprint"] = report.fingerprint;
  j["base_seed"] = report.base_seed;
  j["rng"] = std::string(Rng::algorithm);
  std::vector<std::optional<double>> acc, au, sens, spec;
  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (const auto& r : report.repeats) {
    nlohmann::ordered_json e;
    e["repeat"] = r.repeat;
    e["seed"] = r.seed;
    e["best_epoch"] = r.best_epoch;
    e["best_val_auroc"] = r.val_auroc.empty() ? 0.0 : r.val_auroc[r.best_epoch - 1];
    e["train"] = r.train_ids.size();
    e["val"] = r.val_ids.size();
    e["test"] = r.test_ids.size();
    reps.push_back(e);
    acc.push_back(r.test.accuracy);
    au.push_back(r.test.auroc);
    sens.push_back(r.test.sensitivity);
    spec.push_back(r.test.specificity);
  }
  j["repeats"] = reps;
  auto put = [&](const char* name, const MeanStd& m) {
    nlohmann::ordered_json e;
    e["mean"] = m.mean ? nlohmann::ordered_json(*m.mean) : nlohmann::ordered_json("undefined");
    e["std"] = m.std ? nlohmann::ordered_json(*m.std) : nlohmann::ordered_json("undefined");
    j["metrics"][name] = e;
  };
  put("accuracy", mean_std(acc));
  put("auroc", mean_std(au));
  put("sensitivity", mean_std(sens));
  put("specificity", mean_std(spec));
  j["reference_full_scale_percent"] = {{"auroc_mean", kReferenceAurocMean},
                                       {"auroc_std", kReferenceAurocStd},
                                       {"accuracy_mean", kReferenceAccuracyMean},
                                       {"accuracy_std", kReferenceAccuracyStd}};
  os << j.dump(2) << '\n';
}

void write_scores_csv(std::ostream& os, const std::vector<std::string>& ids, const ScoredSet& s) {
  if (ids.size() != s.scores.size()) throw std::invalid_argument("write_scores_csv: id count mismatch");
  os << "subject_id,label,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i) os << ids[i] << ',' << s.labels[i] << ',' << num(s.scores[i]) << '\n';
}

ScoredSet read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "subject_id,label,score") {
    throw DataError("scores file must start with 'subject_id,label,score'");
  }
  ScoredSet s;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw DataError("scores file: malformed row " + std::to_string(row));
    try {
      std::size_t used = 0;
      const std::string label = line.substr(a + 1, b - a - 1), score = line.substr(b + 1);
      s.labels.push_back(std::stoi(label, &used));
      if (used != label.size()) throw std::invalid_argument(label);
      s.scores.push_back(std::stod(score, &used));
      if (used != score.size()) throw std::invalid_argument(score);
    } catch (const std::logic_error&) {
      throw DataError("scores file: malformed row " + std::to_string(row));
    }
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------- ablation

std::vector<AblationCell> ablation_grid(std::size_t nodes) {
  struct Range {
    const char* label;
    std::size_t lo, hi;
  };
  const Range ranges[] = {{"0", 0, 0}, {"5-20", 5, 20}, {"5-200", 5, 200}};
  const NoiseSpec noises[] = {NoiseSpec::none(), NoiseSpec::uniform(-0.1, 0.1), NoiseSpec::gaussian(0.1),
                              NoiseSpec::gaussian(0.01)};
  std::vector<AblationCell> grid;
  for (const auto& r : ranges) {
    for (const auto& n : noises) {
      const std::size_t hi = std::min(r.hi, nodes);
      grid.push_back({r.label, n.to_string(), std::min(r.lo, hi), r.hi, hi, n});
    }
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const Dataset& ds, const ExperimentConfig& cfg, const LogFn& log) {
  std::vector<AblationRow> rows;
  for (const auto& cell : ablation_grid(ds.nodes())) {
    ExperimentConfig c = cfg;
    c.use_pretraining = true;
    c.pretrain.augment.k_min = cell.k_min;
    c.pretrain.augment.k_max = cell.k_max_effective;
    c.pretrain.augment.noise = cell.noise_spec;
    if (log) log("ablation cell nodes=" + cell.node_range + " noise=" + cell.noise);
    const auto report = run_experiment(ds, c, log);
    std::vector<std::optional<double>> acc, au, sens, spec;
    for (const auto& r : report.repeats) {
      acc.push_back(r.test.accuracy);
      au.push_back(r.test.auroc);
      sens.push_back(r.test.sensitivity);
      spec.push_back(r.test.specificity);
    }
    rows.push_back({cell, mean_std(acc), mean_std(au), mean_std(sens), mean_std(spec)});
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "node_range,k_min,k_max,noise,accuracy_mean,accuracy_std,auroc_mean,auroc_std,"
        "sensitivity_mean,sensitivity_std,specificity_mean,specificity_std\n";
  for (const auto& r : rows) {
    os << r.cell.node_range << ',' << r.cell.k_min << ',' << r.cell.k_max_effective << ",\"" << r.cell.noise << '"';
    for (const auto* m : {&r.accuracy, &r.auroc, &r.sensitivity, &r.specificity})
      os << ',' << opt_num(m->mean) << ',' << opt_num(m->std);
    os << '\n';
  }
}

}  // namespace cssl
