#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cprel/checkpoint.hpp"
#include "cprel/corpus.hpp"
#include "cprel/explain.hpp"
#include "cprel/metrics.hpp"
#include "cprel/model.hpp"
#include "cprel/runconfig.hpp"

namespace cprel {

struct TrainStats {
  std::vector<double> epoch_losses;
};

struct TrainedModel {
  std::unique_ptr<Model> model;
  TrainStats stats;
};

struct Vocabs {
  WordVocab words;
  DepTypeVocab types;
  LabelVocab labels;
};

// Vocabularies are a deterministic function of the training set; a global
// label vocabulary (e.g. for cross-validation) can be supplied instead.
Vocabs build_vocabs(const std::vector<Instance>& train, const LabelVocab* labels);

// Stage one: gradient-descent training of the pipeline with the pruning
// module replaced by row_softmax(F). Aborts on a non-finite loss.
TrainedModel pretrain_base(const RunConfig& cfg, const std::vector<Instance>& train,
                           const LabelVocab* global_labels = nullptr);

// Deterministic prefix of a seeded shuffle, ceil(fraction * size) instances.
std::vector<Instance> explanation_subset(const std::vector<Instance>& train,
                                         double fraction, std::uint64_t seed);

// Stage two result helper: explanation dataset + trained explainer for a
// pre-trained model.
ExplainerTrainResult train_explainer_for(const RunConfig& cfg, const Model& pretrained,
                                         const std::vector<Instance>& train);

// Final stage: trains the full pipeline with causal pruning active and the
// explainer frozen. Rejects an explainer whose source hash does not match
// this config unless allow_mismatch is set.
TrainedModel train_full(const RunConfig& cfg, const std::vector<Instance>& train,
                        std::shared_ptr<Explainer> explainer,
                        std::uint64_t explainer_source_hash,
                        bool allow_mismatch = false,
                        const LabelVocab* global_labels = nullptr);

Metrics evaluate(const Model& model, const std::vector<Instance>& test,
                 const std::string& negative_label);

struct CrossvalResult {
  double mean_accuracy = 0.0;
  std::vector<Metrics> fold_metrics;
};

// Full two-stage protocol per fold, accuracy averaged over folds.
CrossvalResult crossval(const RunConfig& cfg, const std::vector<Instance>& data, int k);

struct SweepCell {
  int n_heads = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
  bool failed = false;
};

// Full two-stage protocol per grid cell; a failed cell is recorded, not fatal.
std::vector<SweepCell> sweep(const RunConfig& cfg, const std::vector<Instance>& train,
                             const std::vector<Instance>& test,
                             const std::vector<int>& n_grid,
                             const std::vector<double>& alpha_grid,
                             const std::vector<double>& beta_grid);

// Columns: N, alpha, beta, f1, accuracy, seconds. With fixed_timing the
// seconds column reads 0.000, keeping the bytes reproducible.
std::string sweep_to_csv(const std::vector<SweepCell>& cells, bool fixed_timing);

}  // namespace cprel
