#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "cssl/checkpoint.hpp"
#include "cssl/optim.hpp"
#include "cssl/pipeline.hpp"

namespace cssl {

namespace {

bool has_prefix(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

std::vector<bool> mask_by_prefix(const ParamSet& ps, std::initializer_list<const char*> prefixes) {
  std::vector<bool> mask(ps.size(), false);
  for (ParamId id = 0; id < ps.size(); ++id)
    for (const char* p : prefixes) mask[id] = mask[id] || has_prefix(ps.name(id), p);
  return mask;
}

std::vector<ParamId> ids_of(const std::vector<bool>& mask) {
  std::vector<ParamId> ids;
  for (ParamId id = 0; id < mask.size(); ++id)
    if (mask[id]) ids.push_back(id);
  return ids;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Flattened readouts of a batch of connectomes, stacked as rows.
Var batch_features(Tape& tape, const Network& net, const std::vector<const Tensor*>& inputs) {
  std::vector<Var> rows;
  rows.reserve(inputs.size());
  for (const Tensor* c : inputs) rows.push_back(net.features(tape.constant(*c)));
  return ad::concat_rows(rows);
}

void require_finite_grads(const Gradients& grads) {
  for (const auto& [id, g] : grads)
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter " + std::to_string(id));
}

}  // namespace

void PretrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("pretrain: batch must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("pretrain: lr must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("pretrain: weight_decay must be >= 0");
  if (moco.queue_size == 0) throw std::invalid_argument("pretrain: queue size must be positive");
  if (!(moco.momentum >= 0.0 && moco.momentum <= 1.0)) throw std::invalid_argument("pretrain: momentum must lie in [0, 1]");
  if (!(moco.tau > 0.0)) throw std::invalid_argument("pretrain: tau must be positive");
}

void FinetuneConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("finetune: epochs must be positive");
  if (batch == 0) throw std::invalid_argument("finetune: batch must be positive");
  if (repeats == 0) throw std::invalid_argument("finetune: repeats must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("finetune: lr must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("finetune: weight_decay must be >= 0");
}

// ---------------------------------------------------------------- pretraining

PretrainResult pretrain(const Dataset& ds, const EncoderConfig& model, const PretrainConfig& cfg,
                        const std::optional<ParamSet>& init, const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (ds.empty()) throw DataError("pretrain: dataset is empty");
  if (ds.nodes() != model.nodes) {
    throw ShapeError("pretrain: dataset has " + std::to_string(ds.nodes()) + " nodes, model expects " +
                     std::to_string(model.nodes));
  }
  cfg.augment.validate(ds.nodes());

  Rng rng(cfg.seed);
  ParamSet params = init ? *init : init_params(model, rng);
  check_params(model, params);
  MoCoState moco(params, model.proj_dim, cfg.moco);
  const auto trainable = mask_by_prefix(params, {"encoder.", "readout.", "project."});
  const auto trainable_ids = ids_of(trainable);
  const std::vector<bool> frozen(params.size(), false);
  OptimState opt = OptimState::sgd(cfg.lr, cfg.weight_decay);

  Rng data_rng = rng.fork(0x70726574);  // shuffling and augmentation
  std::vector<std::size_t> order(ds.size());
  PretrainResult result;
  std::size_t batch_id = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    data_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<Tensor> first, second;
      for (std::size_t i = start; i < end; ++i) {
        auto pair = make_view_pair(ds[order[i]].connectome, cfg.augment, data_rng, ds[order[i]].subject_id);
        first.push_back(pair.first.matrix());
        second.push_back(pair.second.matrix());
      }
      std::vector<const Tensor*> q_in, k_in;
      for (std::size_t i = 0; i < first.size(); ++i) {
        q_in.push_back(&first[i]);
        k_in.push_back(&second[i]);
      }
      try {
        Tape ktape;
        const Network key_net(ktape, model, moco.key, frozen);
        const Tensor keys = key_net.project(batch_features(ktape, key_net, k_in)).value();

        Tape tape;
        const Network query_net(tape, model, moco.query, trainable);
        const Var queries = query_net.project(batch_features(tape, query_net, q_in));
        const Var loss = info_nce(queries, keys, moco.queue.entries(), cfg.moco.tau);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        const Gradients grads = tape.backward(loss);
        require_finite_grads(grads);
        opt_step(opt, moco.query, grads, trainable_ids);
        momentum_update(moco.key, moco.query, cfg.moco.momentum);
        moco.queue.push(keys);
        loss_sum += value * static_cast<double>(end - start);
      } catch (const NumericError& e) {
        throw TrainingError("pretrain: aborted at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_id) + " (first subject " + ds[order[start]].subject_id +
                            "): " + e.what());
      }
    }
    PretrainEpoch entry{epoch, loss_sum / static_cast<double>(ds.size()), moco.queue.size(), cfg.lr};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.params = std::move(moco.query);
  return result;
}

void write_pretrain_log(std::ostream& os, const std::vector<PretrainEpoch>& log) {
  os << "epoch,loss_mean,queue_len,lr\n";
  for (const auto& e : log) os << e.epoch << ',' << num(e.loss_mean) << ',' << e.queue_len << ',' << num(e.lr) << '\n';
}

// ---------------------------------------------------------------- finetuning

TestMetrics evaluate_scores(const ScoredSet& s) {
  const auto c = confusion_metrics(s, 0.5);
  return TestMetrics{c.accuracy, auroc(s), c.sensitivity, c.specificity};
}

ScoredSet score_dataset(const Dataset& ds, const EncoderConfig& model, const ParamSet& params) {
  std::vector<Tensor> inputs;
  ScoredSet s;
  for (const auto& sample : ds) {
    inputs.push_back(sample.connectome.matrix());
    if (!sample.label) throw DataError("score_dataset: sample " + sample.subject_id + " has no label");
    s.labels.push_back(*sample.label);
  }
  s.scores = predict(model, params, inputs);
  return s;
}

FinetuneResult finetune(const Dataset& ds, const EncoderConfig& model, const FinetuneConfig& cfg,
                        const std::optional<ParamSet>& pretrained) {
  cfg.validate();
  model.validate();
  if (ds.nodes() != model.nodes) {
    throw ShapeError("finetune: dataset has " + std::to_string(ds.nodes()) + " nodes, model expects " +
                     std::to_string(model.nodes));
  }
  if (!ds.fully_labeled()) throw DataError("finetune: every sample needs a label");

  FinetuneResult out;
  SplitSpec spec = cfg.split;
  spec.seed = cfg.seed;
  out.split = stratified_split(ds, spec);
  {
    std::set<std::string> seen;
    for (const auto* part : {&out.split.train, &out.split.val, &out.split.test})
      for (auto i : *part)
        if (!seen.insert(ds[i].subject_id).second) {
          throw DataError("finetune: subject " + ds[i].subject_id + " appears in more than one fold");
        }
  }
  const Dataset train = ds.subset(out.split.train);
  const Dataset val = ds.subset(out.split.val);
  const Dataset test = ds.subset(out.split.test);
  for (const auto* part : {&train, &val, &test}) {
    if (part->count_label(0) == 0 || part->count_label(1) == 0) {
      throw DataError("finetune: single-class split (train " + std::to_string(train.size()) + ", val " +
                      std::to_string(val.size()) + ", test " + std::to_string(test.size()) + ")");
    }
  }

  Rng rng(cfg.seed);
  ParamSet params = init_params(model, rng);
  if (pretrained) {
    const std::vector<std::string> parts{"encoder.", "readout."};
    try {
      check_params(model, *pretrained, parts);
    } catch (const ShapeError& e) {
      throw CheckpointError(std::string("incompatible checkpoint: ") + e.what());
    }
    copy_params(*pretrained, params, "encoder.");
    copy_params(*pretrained, params, "readout.");
  }
  const auto trainable = cfg.linear_probe ? mask_by_prefix(params, {"classifier."})
                                          : mask_by_prefix(params, {"encoder.", "readout.", "classifier."});
  const auto trainable_ids = ids_of(trainable);
  OptimState opt = OptimState::adamw(cfg.lr, cfg.weight_decay);

  Rng order_rng = rng.fork(0x66696e65);
  std::vector<std::size_t> order(train.size());
  double best = -1.0;
  std::size_t batch_id = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++batch_id) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<const Tensor*> inputs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(&train[order[i]].connectome.matrix());
        labels.push_back(*train[order[i]].label);
      }
      try {
        Tape tape;
        const Network net(tape, model, params, trainable);
        const Var loss = cross_entropy(net.classify(batch_features(tape, net, inputs)), labels);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("loss is not finite");
        const Gradients grads = tape.backward(loss);
        require_finite_grads(grads);
        opt_step(opt, params, grads, trainable_ids);
        loss_sum += value * static_cast<double>(end - start);
      } catch (const NumericError& e) {
        throw TrainingError("finetune: aborted at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_id) + " (first subject " + train[order[start]].subject_id +
                            "): " + e.what());
      }
    }
    out.train_loss.push_back(loss_sum / static_cast<double>(train.size()));
    const double v = auroc(score_dataset(val, model, params));
    out.val_auroc.push_back(v);
    if (v > best) {
      best = v;
      out.best_epoch = epoch;
      out.params = params;
    }
  }
  out.test_scores = score_dataset(test, model, out.params);
  out.test = evaluate_scores(out.test_scores);
  return out;
}

}  // namespace cssl
