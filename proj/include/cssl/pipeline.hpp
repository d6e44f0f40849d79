#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cssl/augment.hpp"
#include "cssl/autodiff.hpp"
#include "cssl/contrastive.hpp"
#include "cssl/dataset.hpp"
#include "cssl/metrics.hpp"
#include "cssl/model.hpp"

namespace cssl {

/// Raised when a loss or gradient becomes NaN/Inf during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainConfig {
  std::size_t epochs = 900;
  double lr = 1e-5;
  double weight_decay = 0.0;
  std::size_t batch = 64;
  AugmentConfig augment{};
  MoCoConfig moco{};
  std::uint64_t seed = 0;

  void validate() const;
};

struct FinetuneConfig {
  std::size_t epochs = 200;
  double lr = 5e-5;
  double weight_decay = 5e-5;
  std::size_t batch = 64;
  SplitSpec split{};
  std::size_t repeats = 5;
  bool linear_probe = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainEpoch {
  std::size_t epoch;  // 1-based
  double loss_mean;
  std::size_t queue_len;
  double lr;
};

struct PretrainResult {
  ParamSet params;  // query side
  std::vector<PretrainEpoch> log;
};

using EpochCallback = std::function<void(const PretrainEpoch&)>;

/// Contrastive pretraining on the connectomes of `ds` (labels ignored).
/// The encoder, readout and projection head are trained; classifier weights
/// are carried through unchanged. `init` defaults to init_params(model, seed).
PretrainResult pretrain(const Dataset& ds, const EncoderConfig& model, const PretrainConfig& cfg,
                        const std::optional<ParamSet>& init = std::nullopt,
                        const EpochCallback& on_epoch = {});

void write_pretrain_log(std::ostream& os, const std::vector<PretrainEpoch>& log);

struct TestMetrics {
  double accuracy = 0.0;
  double auroc = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

TestMetrics evaluate_scores(const ScoredSet& s);

struct FinetuneResult {
  ParamSet params;  // snapshot with the best validation AUROC
  std::size_t best_epoch = 0;  // 1-based
  std::vector<double> val_auroc;   // per epoch
  std::vector<double> train_loss;  // per epoch
  Split split;
  ScoredSet test_scores;
  TestMetrics test;
};

/// Supervised training with a stratified split derived from cfg.seed.
/// Encoder and readout start from `pretrained` when given (checked for
/// compatibility); the classifier head is always fresh.
FinetuneResult finetune(const Dataset& ds, const EncoderConfig& model, const FinetuneConfig& cfg,
                        const std::optional<ParamSet>& pretrained = std::nullopt);

/// Scores every sample of ds (probability of class 1).
ScoredSet score_dataset(const Dataset& ds, const EncoderConfig& model, const ParamSet& params);

struct ExperimentConfig {
  EncoderConfig model{};
  PretrainConfig pretrain{};
  FinetuneConfig finetune{};
  bool use_pretraining = true;
  /// Pretrain on each repeat's training fold only instead of all instances.
  bool strict = false;
  std::uint64_t seed = 0;
};

struct RepeatResult {
  std::size_t repeat;
  std::uint64_t seed;
  TestMetrics test;
  std::size_t best_epoch;
  std::vector<std::string> train_ids, val_ids, test_ids;
  ScoredSet test_scores;
  std::vector<double> val_auroc;
  ParamSet params;  // selected snapshot
};

struct ExperimentReport {
  std::vector<RepeatResult> repeats;
  std::uint64_t base_seed = 0;
  std::string fingerprint;
};

/// Summary statistics over repeats; std is the population form (divides by
/// the number of repeats), so a single repeat has std 0.
struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;
};
MeanStd mean_std(const std::vector<std::optional<double>>& values);

/// Progress messages (one line each); may be empty.
using LogFn = std::function<void(const std::string&)>;

/// Repeats finetuning with seeds base_seed + i. Pretraining runs once on all
/// instances, or per repeat on the training fold in strict mode. With
/// pretraining disabled, `init` (when given) seeds the encoder of every repeat.
ExperimentReport run_experiment(const Dataset& ds, const ExperimentConfig& cfg, const LogFn& log = {},
                                const std::optional<ParamSet>& init = std::nullopt);

/// report.csv: repeat,accuracy,auroc,sensitivity,specificity then mean and std rows.
void write_report_csv(std::ostream& os, const ExperimentReport& report);

/// JSON summary: fingerprint, seeds, rng algorithm, per-repeat selection,
/// mean/std per metric and the reference values.
void write_summary_json(std::ostream& os, const ExperimentReport& report);

/// subject_id,label,score
void write_scores_csv(std::ostream& os, const std::vector<std::string>& ids, const ScoredSet& s);
/// Reads the format written by write_scores_csv.
ScoredSet read_scores_csv(std::istream& in);

/// Reference values reported for the full-scale benchmark; not asserted.
inline constexpr double kReferenceAurocMean = 82.6, kReferenceAurocStd = 1.8;
inline constexpr double kReferenceAccuracyMean = 74.4, kReferenceAccuracyStd = 2.4;

/// One cell of the augmentation ablation grid.
struct AblationCell {
  std::string node_range;  // "0", "5-20", "5-200"
  std::string noise;       // NoiseSpec text
  std::size_t k_min, k_max;
  std::size_t k_max_effective;
  NoiseSpec noise_spec;
};

std::vector<AblationCell> ablation_grid(std::size_t nodes);

struct AblationRow {
  AblationCell cell;
  MeanStd accuracy, auroc, sensitivity, specificity;
};

std::vector<AblationRow> run_ablation(const Dataset& ds, const ExperimentConfig& cfg, const LogFn& log = {});
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace cssl
