#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cprel/corpus.hpp"
#include "cprel/params.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

class Model;

// Contribution of one unordered edge {i, j}: the cross-entropy increase when
// the edge is zeroed out of every forest, no renormalization.
struct EdgeContribution {
  int i = 0;
  int j = 0;
  double delta = 0.0;
};

// One explainer training example: the forest snapshots a pre-trained model
// consumed, its node features, all edge deltas, and the top-K edge set.
struct ExplanationRecord {
  std::string instance_id;
  int n = 0;
  int feature_dim = 0;
  std::vector<std::vector<double>> forests;  // N*M row-major n x n matrices
  std::vector<double> node_features;         // row-major n x feature_dim
  std::vector<EdgeContribution> contributions;
  std::vector<std::pair<int, int>> topk_edges;  // delta-descending, ties lex
};

enum class ExplainerLoss { MaskBce, DeltaRegression };

ExplainerLoss explainer_loss_from_string(const std::string& s);
std::string to_string(ExplainerLoss loss);

// Encoder-decoder edge explainer: two graph-convolution layers followed by an
// inner-product decoder squashed through a sigmoid.
class Explainer {
 public:
  Explainer(int in_dim, int hidden, std::uint64_t seed);

  Tensor forward(const Tensor& forest, const Tensor& h0) const;      // X in (0,1)
  Tensor gram_logits(const Tensor& forest, const Tensor& h0) const;  // pre-sigmoid

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  int in_dim() const { return in_dim_; }
  int hidden() const { return hidden_; }

 private:
  int in_dim_;
  int hidden_;
  ParameterStore params_;
};

// F_hat = row_softmax(F (1 + beta X)).
Tensor causal_prune(const Tensor& forest, const Tensor& explanation, double beta);

// --- attribution over a frozen, pruning-free model ---------------------------

EdgeContribution edge_contribution(const Model& model, const Instance& inst, int i,
                                   int j);

// All unordered non-diagonal pairs, i < j, in lexicographic order.
std::vector<EdgeContribution> edge_contributions(const Model& model,
                                                 const Instance& inst);

ExplanationRecord make_explanation_record(const Model& model, const Instance& inst,
                                          int kappa);

std::vector<ExplanationRecord> build_explanation_dataset(
    const Model& model, std::span<const Instance> instances, int kappa);

// --- explainer training -------------------------------------------------------

struct ExplainerTrainOptions {
  int hidden = 16;
  int epochs = 50;
  double lr = 0.5;
  std::uint64_t seed = 7;
  double clip_norm = 5.0;
  ExplainerLoss loss = ExplainerLoss::MaskBce;
};

struct ExplainerTrainResult {
  std::shared_ptr<Explainer> explainer;
  std::vector<double> epoch_losses;
};

ExplainerTrainResult train_explainer(std::span<const ExplanationRecord> records,
                                     const ExplainerTrainOptions& opts);

// --- explanation dataset file (JSON lines) ------------------------------------

void write_explanations(std::ostream& out, std::span<const ExplanationRecord> records);
std::vector<ExplanationRecord> read_explanations(std::istream& in);

// --- case-study ranking --------------------------------------------------------

struct RankedEdge {
  int i = 0;
  int j = 0;
  double weight = 0.0;
};

// Averages the explanation matrices over every head and block of a forward
// pass and ranks unordered pairs by averaged weight.
std::vector<RankedEdge> rank_edges_by_explanation(const Model& model,
                                                  const Explainer& explainer,
                                                  const Instance& inst, int top);

}  // namespace cprel
