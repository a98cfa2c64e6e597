#pragma once

#include <optional>
#include <span>

#include "cprel/corpus.hpp"
#include "cprel/params.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

struct PredictionOutput {
  Tensor logits;  // 1 x m
  int predicted = -1;
  std::optional<double> loss;
  Tensor loss_tensor;  // defined iff gold was supplied
};

// Elementwise max over all rows.
Tensor pool_sentence(const Tensor& h);

// Elementwise max over the mention's rows only.
Tensor pool_entity(const Tensor& h, const EntityMention& mention);

// Registers "ffnn.w1/b1/w2/b2": one ReLU hidden layer of width d, then a
// linear map to the m relation logits.
void register_relation_head(ParameterStore& ps, int d, int q, int num_labels);

PredictionOutput predict(const ParameterStore& ps, const Tensor& h_sentence,
                         std::span<const Tensor> entity_vecs, int q_expected,
                         std::optional<int> gold);

}  // namespace cprel
