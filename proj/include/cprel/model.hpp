#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cprel/corpus.hpp"
#include "cprel/encoder.hpp"
#include "cprel/explain.hpp"
#include "cprel/params.hpp"
#include "cprel/relation.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

struct ModelConfig {
  std::string task = "sentence";  // "sentence" or "nary"
  int q = 2;                      // entities per instance
  int n_heads = 2;                // N
  int m_blocks = 2;               // M
  int l_layers = 2;               // L
  int d = 24;                     // block feature width
  int embed_dim = 32;
  int hidden_dim = 16;            // per LSTM direction
  double alpha = 0.9;
  double beta = 1.0;
  bool disable_semantic = false;  // ablation: alpha forced to 1
  bool disable_pruning = false;   // ablation: skip the prune, encode F directly
  // With disable_pruning, apply row_softmax(F) in place of the prune instead
  // of F itself; this variant coincides bitwise with a beta=0 pruned model.
  bool prune_softmax_substitute = false;

  void validate() const;
  double effective_alpha() const { return disable_semantic ? 1.0 : alpha; }
};

// Intermediates of one forward pass, for attribution and inspection.
struct ForwardTrace {
  Tensor h0;                             // n x 2*hidden_dim node features
  std::vector<Tensor> raw_forests;       // gate outputs F^p, blocks x heads
  std::vector<Tensor> operative_forests; // matrices the encoder consumed
  std::vector<Tensor> explanations;      // X per forest when pruning is active
  Tensor logits;
};

// Per-instance snapshot for attribution: the forests the pruning-free model
// consumed plus the cached feature matrices needed to replay the encoder.
struct ForestSnapshot {
  int n = 0;
  std::vector<std::vector<double>> forests;  // blocks x heads, row-major n x n
  std::vector<double> node_features;         // h0, row-major n x (2*hidden)
  int feature_dim = 0;
  std::vector<double> block_input;           // projected features, n x d
  std::vector<EntityMention> entities;
  int gold = -1;
};

// The full pipeline: encoder, forest generation, optional causal pruning,
// dense graph convolution blocks, and the relation head.
class Model {
 public:
  Model(ModelConfig cfg, WordVocab words, DepTypeVocab types, LabelVocab labels,
        std::uint64_t seed);

  PredictionOutput forward(const Instance& inst, bool with_gold = true,
                           ForwardTrace* trace = nullptr) const;

  // f_MRE over externally provided forests: the encoder consumes the given
  // matrices as-is (snapshot semantics, no pruning, no renormalization).
  ForestSnapshot snapshot_forests(const Instance& inst) const;
  double loss_given_forests(const ForestSnapshot& snap,
                            std::span<const std::vector<double>> forests) const;

  void set_explainer(std::shared_ptr<const Explainer> e) { explainer_ = std::move(e); }
  const Explainer* explainer() const { return explainer_.get(); }

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const WordVocab& words() const { return words_; }
  const DepTypeVocab& types() const { return types_; }
  const LabelVocab& labels() const { return labels_; }

  std::vector<int> encode_tokens(const Instance& inst) const;

 private:
  Tensor node_features(const Instance& inst) const;  // H_0
  PredictionOutput head_from_features(const Tensor& h, const Instance& inst,
                                      std::optional<int> gold) const;

  ModelConfig cfg_;
  WordVocab words_;
  DepTypeVocab types_;
  LabelVocab labels_;
  ParameterStore params_;
  std::shared_ptr<const Explainer> explainer_;
};

}  // namespace cprel
