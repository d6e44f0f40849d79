// Command-line front end: one subcommand per pipeline stage. Every verb
// writes config.resolved and log.txt into --out-dir next to its artifacts.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cssl/checkpoint.hpp"
#include "cssl/config.hpp"
#include "cssl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cssl;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "cssl_out";
  std::string data_dir;
};

class Run {
 public:
  Run(const Common& opts, bool seed_is_data_seed = false) : out_(opts.out_dir) {
    if (!opts.config.empty()) cfg_ = load_config(opts.config);
    if (opts.seed) (seed_is_data_seed ? cfg_.data.seed : cfg_.experiment.seed) = *opts.seed;
    if (!opts.data_dir.empty()) {
      cfg_.data.source = "dir";
      cfg_.data.path = opts.data_dir;
    }
    fs::create_directories(out_);
    log_.open(out_ / "log.txt");
    if (!log_) throw std::runtime_error("cannot write " + (out_ / "log.txt").string());
  }

  RunConfig& config() { return cfg_; }
  const fs::path& out() const { return out_; }

  void log(const std::string& line) {
    log_ << line << '\n';
    log_.flush();
    std::cerr << line << '\n';
  }
  LogFn logger() {
    return [this](const std::string& s) { log(s); };
  }

  /// Loads the configured dataset and fills in the model's node count.
  Dataset data() {
    Dataset ds = load_data(cfg_.data);
    auto& nodes = cfg_.experiment.model.nodes;
    if (nodes == 0) nodes = ds.nodes();
    if (nodes != ds.nodes()) {
      throw std::invalid_argument("model.nodes = " + std::to_string(nodes) + " but the dataset has " +
                                  std::to_string(ds.nodes()) + " nodes");
    }
    log("dataset: " + std::to_string(ds.size()) + " samples, " + std::to_string(ds.nodes()) + " nodes");
    return ds;
  }

  void write_resolved() {
    std::ofstream(out_ / "config.resolved") << format_config(cfg_);
  }

  template <class Fn>
  void write(const std::string& name, Fn&& fn) {
    std::ofstream f(out_ / name);
    if (!f) throw std::runtime_error("cannot write " + (out_ / name).string());
    fn(f);
    log("wrote " + (out_ / name).string());
  }

 private:
  RunConfig cfg_;
  fs::path out_;
  std::ofstream log_;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void add_common(CLI::App* app, Common& c, bool with_data = true) {
  app->add_option("--config", c.config, "configuration file (key = value sections)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "overrides the seed from the configuration");
  app->add_option("--out-dir", c.out_dir, "output directory")->capture_default_str();
  if (with_data) app->add_option("--data", c.data_dir, "dataset directory (sets data.source = dir)");
}

// ---------------------------------------------------------------- verbs

void cmd_synth(const Common& opts, bool with_ts) {
  Run run(opts, true);
  const auto& d = run.config().data;
  const Dataset ds = synth_dataset(d.n, d.nodes, d.length, d.classes, d.seed);
  write_dataset(run.out(), ds, with_ts);
  run.write_resolved();
  run.log("synthesized " + std::to_string(ds.size()) + " subjects into " + run.out().string());
}

void cmd_ingest(const Common& opts, const std::string& input) {
  Run run(opts);
  const Dataset ds = load_dataset(input);
  write_dataset(run.out(), ds, false);
  run.config().data.source = "dir";
  run.config().data.path = input;
  run.write_resolved();
  run.log("ingested " + std::to_string(ds.size()) + " subjects (" + std::to_string(ds.nodes()) + " nodes) from " +
          input);
}

void cmd_augment(const Common& opts, const std::string& input) {
  Run run(opts);
  const Connectome c = read_connectome_csv(input);
  const auto& acfg = run.config().experiment.pretrain.augment;
  Rng rng(run.config().experiment.seed);
  const ViewPair pair = make_view_pair(c, acfg, rng, fs::path(input).stem().string());
  write_connectome_csv(run.out() / "view1.conn.csv", pair.first);
  write_connectome_csv(run.out() / "view2.conn.csv", pair.second);
  run.write("diff.csv", [&](std::ostream& os) {
    os << "view,entries_changed,mean_abs_delta\n";
    int k = 1;
    for (const Connectome* v : {&pair.first, &pair.second}) {
      // Off-diagonal pairs u < w.
      std::size_t changed = 0, pairs = 0;
      double total = 0.0;
      for (std::size_t u = 0; u < c.nodes(); ++u)
        for (std::size_t w = u + 1; w < c.nodes(); ++w, ++pairs) {
          const double d = std::fabs((*v)(u, w) - c(u, w));
          changed += d != 0.0;
          total += d;
        }
      os << k++ << ',' << changed << ',' << num(pairs ? total / static_cast<double>(pairs) : 0.0) << '\n';
    }
  });
  run.write_resolved();
}

void cmd_pretrain(const Common& opts) {
  Run run(opts);
  const Dataset ds = run.data();
  auto& exp = run.config().experiment;
  PretrainConfig pc = exp.pretrain;
  pc.seed = exp.seed;
  run.write_resolved();
  const auto result = pretrain(ds, exp.model, pc, std::nullopt, [&](const PretrainEpoch& e) {
    run.log("epoch " + std::to_string(e.epoch) + ": loss " + num(e.loss_mean) + ", queue " +
            std::to_string(e.queue_len));
  });
  save_checkpoint(run.out() / "pretrain.ckpt", result.params);
  run.log("wrote " + (run.out() / "pretrain.ckpt").string());
  run.write("pretrain_log.csv", [&](std::ostream& os) { write_pretrain_log(os, result.log); });
}

void write_experiment(Run& run, const ExperimentReport& report) {
  for (const auto& r : report.repeats) {
    const std::string tag = "repeat" + std::to_string(r.repeat);
    save_checkpoint(run.out() / (tag + ".ckpt"), r.params);
    run.write("scores_" + tag + ".csv", [&](std::ostream& os) { write_scores_csv(os, r.test_ids, r.test_scores); });
  }
  run.write("finetune_log.csv", [&](std::ostream& os) {
    os << "repeat,epoch,val_auroc\n";
    for (const auto& r : report.repeats)
      for (std::size_t e = 0; e < r.val_auroc.size(); ++e)
        os << r.repeat << ',' << e + 1 << ',' << num(r.val_auroc[e]) << '\n';
  });
  run.write("splits.csv", [&](std::ostream& os) {
    os << "repeat,subject_id,fold\n";
    for (const auto& r : report.repeats) {
      for (const auto& id : r.train_ids) os << r.repeat << ',' << id << ",train\n";
      for (const auto& id : r.val_ids) os << r.repeat << ',' << id << ",val\n";
      for (const auto& id : r.test_ids) os << r.repeat << ',' << id << ",test\n";
    }
  });
  run.write("report.csv", [&](std::ostream& os) { write_report_csv(os, report); });
  run.write("summary.json", [&](std::ostream& os) { write_summary_json(os, report); });
}

void cmd_finetune(const Common& opts, const std::string& checkpoint) {
  Run run(opts);
  const Dataset ds = run.data();
  auto& exp = run.config().experiment;
  exp.use_pretraining = false;
  std::optional<ParamSet> init;
  if (!checkpoint.empty()) {
    init = load_checkpoint(checkpoint);
    run.log("encoder initialized from " + checkpoint);
  } else {
    run.log("no checkpoint: encoder starts from random initialization");
  }
  run.write_resolved();
  write_experiment(run, run_experiment(ds, exp, run.logger(), init));
}

void cmd_evaluate(const Common& opts) {
  Run run(opts);
  const Dataset ds = run.data();
  run.write_resolved();
  write_experiment(run, run_experiment(ds, run.config().experiment, run.logger()));
}

void cmd_roc(const Common& opts, const std::vector<std::string>& score_files, const std::string& title) {
  Run run(opts);
  std::vector<RocSeries> series;
  for (std::size_t i = 0; i < score_files.size(); ++i) {
    std::ifstream in(score_files[i]);
    if (!in) throw std::runtime_error("cannot open " + score_files[i]);
    const ScoredSet s = read_scores_csv(in);
    RocSeries rs{fs::path(score_files[i]).stem().string(), roc_points(s)};
    run.log(rs.label + ": auroc " + num(auroc(s)));
    run.write("roc_" + std::to_string(i) + ".csv", [&](std::ostream& os) { write_roc_csv(os, rs.curve); });
    series.push_back(std::move(rs));
  }
  run.write("roc.svg", [&](std::ostream& os) { os << roc_svg(series, title); });
  run.write_resolved();
}

void cmd_describe(const Common& opts, std::size_t nodes) {
  Run run(opts);
  auto& model = run.config().experiment.model;
  if (nodes != 0) model.nodes = nodes;
  if (model.nodes == 0) model.nodes = run.config().data.source == "synth" ? run.config().data.nodes : run.data().nodes();
  model.validate();
  Rng rng(run.config().experiment.seed);
  const ParamSet params = init_params(model, rng);
  std::size_t total = 0;
  std::ostringstream table;
  table << "component,parameters\n";
  for (const auto& [component, count] : param_counts(params)) {
    table << component << ',' << count << '\n';
    total += count;
  }
  table << "total," << total << '\n';
  std::cout << table.str();
  run.write("describe.csv", [&](std::ostream& os) { os << table.str(); });
  run.write_resolved();
}

void cmd_ablate(const Common& opts) {
  Run run(opts);
  const Dataset ds = run.data();
  run.write_resolved();
  const auto rows = run_ablation(ds, run.config().experiment, run.logger());
  run.write("ablation.csv", [&](std::ostream& os) { write_ablation_csv(os, rows); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive pretraining and evaluation of brain-network transformers"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "write a synthetic labeled dataset directory ([data] section)");
  bool with_ts = false;
  add_common(synth, common, false);
  synth->add_flag("--time-series", with_ts, "also write the generating time series");

  auto* ingest = app.add_subcommand("ingest", "convert a directory of time series and/or matrices into connectomes");
  std::string ingest_in;
  add_common(ingest, common, false);
  ingest->add_option("input", ingest_in, "dataset directory")->required()->check(CLI::ExistingDirectory);

  auto* augment = app.add_subcommand("augment", "write two augmented views of one connectome and a diff summary");
  std::string augment_in;
  add_common(augment, common, false);
  augment->add_option("input", augment_in, "connectome CSV")->required()->check(CLI::ExistingFile);

  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining; writes pretrain.ckpt and pretrain_log.csv");
  add_common(pre, common);

  auto* fine = app.add_subcommand("finetune", "repeated supervised finetuning from a checkpoint");
  std::string fine_ckpt;
  add_common(fine, common);
  fine->add_option("--checkpoint", fine_ckpt, "pretrained checkpoint (omit for random init)")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("evaluate", "full protocol: pretraining (if enabled) then repeated finetuning");
  add_common(eval, common);

  auto* roc = app.add_subcommand("roc", "ROC CSV per scores file and one SVG with a curve per file");
  std::vector<std::string> roc_files;
  std::string roc_title = "ROC";
  add_common(roc, common, false);
  roc->add_option("scores", roc_files, "scores CSV files (subject_id,label,score)")->required()->check(CLI::ExistingFile);
  roc->add_option("--title", roc_title, "plot title");

  auto* describe = app.add_subcommand("describe", "parameter counts per component");
  std::size_t describe_nodes = 0;
  add_common(describe, common);
  describe->add_option("--nodes", describe_nodes, "node count (default: model.nodes or the data)");

  auto* ablate = app.add_subcommand("ablate", "augmentation grid: node range x noise, one row per cell");
  add_common(ablate, common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) cmd_synth(common, with_ts);
    else if (ingest->parsed()) cmd_ingest(common, ingest_in);
    else if (augment->parsed()) cmd_augment(common, augment_in);
    else if (pre->parsed()) cmd_pretrain(common);
    else if (fine->parsed()) cmd_finetune(common, fine_ckpt);
    else if (eval->parsed()) cmd_evaluate(common);
    else if (roc->parsed()) cmd_roc(common, roc_files, roc_title);
    else if (describe->parsed()) cmd_describe(common, describe_nodes);
    else if (ablate->parsed()) cmd_ablate(common);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
