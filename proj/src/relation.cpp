#include "cprel/relation.hpp"

#include "cprel/error.hpp"

namespace cprel {

Tensor pool_sentence(const Tensor& h) { return max_pool_rows(h); }

Tensor pool_entity(const Tensor& h, const EntityMention& mention) {
  return max_pool_rows_subset(h, mention.token_indices);
}

void register_relation_head(ParameterStore& ps, int d, int q, int num_labels) {
  if (q != 2 && q != 3) throw ConfigError("relation head: q must be 2 or 3");
  if (num_labels < 2) throw ConfigError("relation head: need at least 2 labels");
  ps.add("ffnn.w1", (1 + q) * d, d, Init::Glorot);
  ps.add("ffnn.b1", 1, d, Init::Zero);
  ps.add("ffnn.w2", d, num_labels, Init::Glorot);
  ps.add("ffnn.b2", 1, num_labels, Init::Zero);
}

PredictionOutput predict(const ParameterStore& ps, const Tensor& h_sentence,
                         std::span<const Tensor> entity_vecs, int q_expected,
                         std::optional<int> gold) {
  if (static_cast<int>(entity_vecs.size()) != q_expected) {
    throw ConfigError("predict: entity count does not match the configured q");
  }
  std::vector<Tensor> parts;
  parts.push_back(h_sentence);
  for (const Tensor& e : entity_vecs) parts.push_back(e);
  const Tensor z = concat_cols(parts);
  const Tensor hidden =
      relu(add_rowvec(matmul(z, ps.get("ffnn.w1")), ps.get("ffnn.b1")));
  const Tensor logits =
      add_rowvec(matmul(hidden, ps.get("ffnn.w2")), ps.get("ffnn.b2"));

  PredictionOutput out;
  out.logits = logits;
  out.predicted = 0;
  for (int j = 1; j < logits.cols(); ++j) {
    if (logits(0, j) > logits(0, out.predicted)) out.predicted = j;
  }
  if (gold) {
    out.loss_tensor = cross_entropy(logits, *gold);
    out.loss = out.loss_tensor.value();
  }
  return out;
}

}  // namespace cprel
