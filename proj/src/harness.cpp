#include "cprel/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "cprel/error.hpp"
#include "cprel/rng.hpp"

namespace cprel {

Vocabs build_vocabs(const std::vector<Instance>& train, const LabelVocab* labels) {
  Vocabs v;
  for (const Instance& inst : train) {
    for (const std::string& tok : inst.tokens) v.words.encode_or_add(tok);
  }
  grow_dep_types(v.types, train);
  if (labels) {
    v.labels = *labels;
  } else {
    for (const Instance& inst : train) v.labels.add(inst.relation);
  }
  return v;
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ull;

TrainStats train_loop(Model& model, const std::vector<Instance>& train,
                      const RunConfig& cfg) {
  if (train.empty()) throw ConfigError("training set is empty");
  DetRng shuffler(cfg.seed ^ kShuffleSalt);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Instance& inst = train[static_cast<std::size_t>(order[k])];
        const PredictionOutput out = model.forward(inst);
        backward(out.loss_tensor);
        batch_loss += *out.loss;
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
            ", batch starting at " + std::to_string(start));
      }
      model.params().sgd_step(cfg.lr, static_cast<double>(end - start), cfg.clip_norm);
      epoch_loss += batch_loss;
    }
    stats.epoch_losses.push_back(epoch_loss / static_cast<double>(train.size()));
  }
  return stats;
}

}  // namespace

TrainedModel pretrain_base(const RunConfig& cfg, const std::vector<Instance>& train,
                           const LabelVocab* global_labels) {
  RunConfig stage = cfg;
  stage.model.disable_pruning = true;
  stage.validate();
  Vocabs v = build_vocabs(train, global_labels);
  auto model = std::make_unique<Model>(stage.model, std::move(v.words),
                                       std::move(v.types), std::move(v.labels),
                                       stage.seed);
  TrainStats stats = train_loop(*model, train, stage);
  return {std::move(model), std::move(stats)};
}

std::vector<Instance> explanation_subset(const std::vector<Instance>& train,
                                         double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw ConfigError("explain_fraction must be in (0,1]");
  }
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  DetRng rng(seed ^ 0xa076bcf7f56a7e65ull);
  rng.shuffle(order);
  const std::size_t keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(train.size())));
  std::vector<Instance> subset;
  subset.reserve(keep);
  for (std::size_t k = 0; k < keep && k < order.size(); ++k) {
    subset.push_back(train[static_cast<std::size_t>(order[k])]);
  }
  return subset;
}

ExplainerTrainResult train_explainer_for(const RunConfig& cfg, const Model& pretrained,
                                         const std::vector<Instance>& train) {
  const std::vector<Instance> subset =
      explanation_subset(train, cfg.explain_fraction, cfg.seed);
  const std::vector<ExplanationRecord> records =
      build_explanation_dataset(pretrained, subset, cfg.kappa);
  ExplainerTrainOptions opts;
  opts.hidden = cfg.explainer_hidden;
  opts.epochs = cfg.explainer_epochs;
  opts.lr = cfg.explainer_lr;
  opts.seed = cfg.seed ^ 0x6a09e667f3bcc909ull;
  opts.clip_norm = cfg.clip_norm;
  opts.loss = explainer_loss_from_string(cfg.explainer_loss);
  return train_explainer(records, opts);
}

TrainedModel train_full(const RunConfig& cfg, const std::vector<Instance>& train,
                        std::shared_ptr<Explainer> explainer,
                        std::uint64_t explainer_source_hash, bool allow_mismatch,
                        const LabelVocab* global_labels) {
  cfg.validate();
  if (!cfg.model.disable_pruning) {
    if (!explainer) throw ConfigError("train_full: an explainer is required");
    if (explainer_source_hash != cfg.protocol_hash() && !allow_mismatch) {
      throw ConfigError(
          "explainer was trained under a different pretraining config/seed; "
          "pass the mismatch override to proceed");
    }
  }
  Vocabs v = build_vocabs(train, global_labels);
  auto model = std::make_unique<Model>(cfg.model, std::move(v.words), std::move(v.types),
                                       std::move(v.labels), cfg.seed);
  if (explainer) {
    explainer->params().set_requires_grad(false);
    model->set_explainer(explainer);
  }
  TrainStats stats = train_loop(*model, train, cfg);
  return {std::move(model), std::move(stats)};
}

Metrics evaluate(const Model& model, const std::vector<Instance>& test,
                 const std::string& negative_label) {
  if (test.empty()) throw ConfigError("evaluate: empty test set");
  NoGradGuard ng;
  std::vector<int> gold, predicted, lengths;
  gold.reserve(test.size());
  for (const Instance& inst : test) {
    const int g = model.labels().index_of(inst.relation);
    if (g < 0) {
      throw ConfigError("evaluate: label not in checkpoint vocabulary: " +
                        inst.relation);
    }
    const PredictionOutput out = model.forward(inst, false);
    gold.push_back(g);
    predicted.push_back(out.predicted);
    lengths.push_back(inst.n());
  }
  return compute_metrics(gold, predicted, lengths, model.labels(), negative_label);
}

namespace {

// One complete two-stage run: pretrain, explain, train explainer, train full.
TrainedModel two_stage(const RunConfig& cfg, const std::vector<Instance>& train,
                       const LabelVocab* global_labels) {
  TrainedModel pre = pretrain_base(cfg, train, global_labels);
  ExplainerTrainResult expl = train_explainer_for(cfg, *pre.model, train);
  return train_full(cfg, train, expl.explainer, cfg.protocol_hash(), false,
                    global_labels);
}

}  // namespace

CrossvalResult crossval(const RunConfig& cfg, const std::vector<Instance>& data,
                        int k) {
  cfg.validate();
  LabelVocab global;
  for (const Instance& inst : data) global.add(inst.relation);
  const std::vector<FoldSplit> folds = split_folds(data, k, cfg.seed);

  CrossvalResult result;
  double sum = 0.0;
  for (const FoldSplit& fold : folds) {
    TrainedModel full = two_stage(cfg, fold.train, &global);
    Metrics m = evaluate(*full.model, fold.test, cfg.negative_label);
    sum += m.accuracy;
    result.fold_metrics.push_back(std::move(m));
  }
  result.mean_accuracy = sum / static_cast<double>(folds.size());
  return result;
}

std::vector<SweepCell> sweep(const RunConfig& cfg, const std::vector<Instance>& train,
                             const std::vector<Instance>& test,
                             const std::vector<int>& n_grid,
                             const std::vector<double>& alpha_grid,
                             const std::vector<double>& beta_grid) {
  if (n_grid.empty() || alpha_grid.empty() || beta_grid.empty()) {
    throw ConfigError("sweep: empty grid");
  }
  LabelVocab global;
  for (const Instance& inst : train) global.add(inst.relation);
  for (const Instance& inst : test) global.add(inst.relation);

  std::vector<SweepCell> cells;
  for (int n : n_grid) {
    for (double alpha : alpha_grid) {
      for (double beta : beta_grid) {
        SweepCell cell;
        cell.n_heads = n;
        cell.alpha = alpha;
        cell.beta = beta;
        const auto start = std::chrono::steady_clock::now();
        try {
          RunConfig cell_cfg = cfg;
          cell_cfg.model.n_heads = n;
          cell_cfg.model.alpha = alpha;
          cell_cfg.model.beta = beta;
          cell_cfg.validate();
          TrainedModel full = two_stage(cell_cfg, train, &global);
          const Metrics m = evaluate(*full.model, test, cell_cfg.negative_label);
          cell.f1 = m.micro_f1;
          cell.accuracy = m.accuracy;
        } catch (const std::exception& e) {
          cell.failed = true;
          std::fprintf(stderr, "sweep cell N=%d alpha=%g beta=%g failed: %s\n", n,
                       alpha, beta, e.what());
        }
        cell.seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::string sweep_to_csv(const std::vector<SweepCell>& cells, bool fixed_timing) {
  std::string out = "N,alpha,beta,f1,accuracy,seconds\n";
  char buf[160];
  for (const SweepCell& c : cells) {
    const double secs = fixed_timing ? 0.0 : c.seconds;
    if (c.failed) {
      std::snprintf(buf, sizeof(buf), "%d,%g,%g,nan,nan,%.3f\n", c.n_heads, c.alpha,
                    c.beta, secs);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%g,%g,%.6f,%.6f,%.3f\n", c.n_heads, c.alpha,
                    c.beta, c.f1, c.accuracy, secs);
    }
    out += buf;
  }
  return out;
}

}  // namespace cprel
