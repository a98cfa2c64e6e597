#include "cprel/model.hpp"

#include <algorithm>

#include "cprel/dcgcn.hpp"
#include "cprel/error.hpp"
#include "cprel/forest.hpp"

namespace cprel {

void ModelConfig::validate() const {
  if (task != "sentence" && task != "nary") {
    throw ConfigError("task must be 'sentence' or 'nary'");
  }
  if (q != 2 && q != 3) throw ConfigError("q must be 2 or 3");
  DcgcnConfig{l_layers, n_heads, m_blocks, d}.validate();
  if (embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("embedding and hidden dimensions must be positive");
  }
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha outside [0,1]");
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta outside [0,1]");
  if (prune_softmax_substitute && !disable_pruning) {
    throw ConfigError("prune_softmax_substitute requires disable_pruning");
  }
}

namespace {

std::string head_prefix(int block, int head) {
  return "block" + std::to_string(block) + ".head" + std::to_string(head);
}

std::string fuse_prefix(int block) {
  return "block" + std::to_string(block) + ".fuse";
}

}  // namespace

Model::Model(ModelConfig cfg, WordVocab words, DepTypeVocab types, LabelVocab labels,
             std::uint64_t seed)
    : cfg_(std::move(cfg)),
      words_(std::move(words)),
      types_(std::move(types)),
      labels_(std::move(labels)),
      params_(seed) {
  cfg_.validate();
  if (labels_.size() < 2) throw ConfigError("need at least two relation labels");

  EncoderConfig ec{words_.size(), cfg_.embed_dim, cfg_.hidden_dim};
  register_encoder_params(params_, ec);
  params_.add("proj.w", ec.out_dim(), cfg_.d, Init::Glorot);
  params_.add("proj.b", 1, cfg_.d, Init::Zero);
  register_type_scores(params_, types_.size());
  for (int b = 0; b < cfg_.m_blocks; ++b) {
    for (int p = 0; p < cfg_.n_heads; ++p) {
      register_attention_head(params_, head_prefix(b, p), cfg_.d);
      register_dcgcn_head(params_, head_prefix(b, p), cfg_.d, cfg_.l_layers);
    }
    register_head_fusion(params_, fuse_prefix(b), cfg_.n_heads, cfg_.d);
  }
  register_relation_head(params_, cfg_.d, cfg_.q, labels_.size());
}

std::vector<int> Model::encode_tokens(const Instance& inst) const {
  std::vector<int> ids;
  ids.reserve(inst.tokens.size());
  for (const std::string& tok : inst.tokens) ids.push_back(words_.encode(tok));
  return ids;
}

Tensor Model::node_features(const Instance& inst) const {
  const Tensor x = embed(params_, encode_tokens(inst));
  return bilstm_encode(params_, x, cfg_.hidden_dim);
}

PredictionOutput Model::head_from_features(const Tensor& h, const Instance& inst,
                                           std::optional<int> gold) const {
  const Tensor h_s = pool_sentence(h);
  std::vector<Tensor> pools;
  for (int role = 1; role <= cfg_.q; ++role) {
    const EntityMention* mention = nullptr;
    for (const EntityMention& e : inst.entities) {
      if (e.role == role) mention = &e;
    }
    if (!mention) throw ConfigError("instance is missing entity role " + std::to_string(role));
    pools.push_back(pool_entity(h, *mention));
  }
  return predict(params_, h_s, pools, cfg_.q, gold);
}

PredictionOutput Model::forward(const Instance& inst, bool with_gold,
                                ForwardTrace* trace) const {
  if (static_cast<int>(inst.entities.size()) != cfg_.q) {
    throw ConfigError("instance entity count does not match the configured q");
  }
  if (!cfg_.disable_pruning) {
    if (!explainer_) throw ConfigError("causal pruning requires an explainer");
    if (explainer_->in_dim() != 2 * cfg_.hidden_dim) {
      throw ConfigError("explainer input width does not match the encoder");
    }
  }

  const Tensor h0 = node_features(inst);
  Tensor hb = add_rowvec(matmul(h0, params_.get("proj.w")), params_.get("proj.b"));
  const TypedAdjacency adj = build_typed_adjacency(inst, types_);
  const Tensor c = type_scores(params_, adj);

  if (trace) {
    trace->h0 = h0;
    trace->raw_forests.clear();
    trace->operative_forests.clear();
    trace->explanations.clear();
  }

  for (int b = 0; b < cfg_.m_blocks; ++b) {
    std::vector<Tensor> head_outputs;
    for (int p = 0; p < cfg_.n_heads; ++p) {
      const Tensor a = semantic_matrix(params_, head_prefix(b, p), hb);
      const Tensor f = fuse_gate(a, c, cfg_.effective_alpha());
      Tensor f_op;
      if (cfg_.disable_pruning) {
        f_op = cfg_.prune_softmax_substitute ? row_softmax(f) : f;
      } else {
        const Tensor x = explainer_->forward(f, h0);
        if (trace) trace->explanations.push_back(x);
        f_op = causal_prune(f, x, cfg_.beta);
      }
      if (trace) {
        trace->raw_forests.push_back(f);
        trace->operative_forests.push_back(f_op);
      }
      head_outputs.push_back(
          encode_forest(params_, head_prefix(b, p), f_op, hb, cfg_.l_layers));
    }
    hb = fuse_heads(params_, fuse_prefix(b), head_outputs);
  }

  std::optional<int> gold;
  if (with_gold) {
    const int idx = labels_.index_of(inst.relation);
    if (idx < 0) throw ConfigError("label not in vocabulary: " + inst.relation);
    gold = idx;
  }
  PredictionOutput out = head_from_features(hb, inst, gold);
  if (trace) trace->logits = out.logits;
  return out;
}

ForestSnapshot Model::snapshot_forests(const Instance& inst) const {
  if (!cfg_.disable_pruning) {
    throw ConfigError("forest snapshots require the pruning-free model");
  }
  if (static_cast<int>(inst.entities.size()) != cfg_.q) {
    throw ConfigError("instance entity count does not match the configured q");
  }
  NoGradGuard ng;

  ForestSnapshot snap;
  snap.n = inst.n();
  snap.entities = inst.entities;
  const int gold = labels_.index_of(inst.relation);
  if (gold < 0) throw ConfigError("label not in vocabulary: " + inst.relation);
  snap.gold = gold;

  const Tensor h0 = node_features(inst);
  snap.node_features = h0.values();
  snap.feature_dim = h0.cols();
  Tensor hb = add_rowvec(matmul(h0, params_.get("proj.w")), params_.get("proj.b"));
  snap.block_input = hb.values();

  const TypedAdjacency adj = build_typed_adjacency(inst, types_);
  const Tensor c = type_scores(params_, adj);
  for (int b = 0; b < cfg_.m_blocks; ++b) {
    std::vector<Tensor> head_outputs;
    for (int p = 0; p < cfg_.n_heads; ++p) {
      const Tensor a = semantic_matrix(params_, head_prefix(b, p), hb);
      Tensor f_op = fuse_gate(a, c, cfg_.effective_alpha());
      if (cfg_.prune_softmax_substitute) f_op = row_softmax(f_op);
      snap.forests.push_back(f_op.values());
      head_outputs.push_back(
          encode_forest(params_, head_prefix(b, p), f_op, hb, cfg_.l_layers));
    }
    hb = fuse_heads(params_, fuse_prefix(b), head_outputs);
  }
  return snap;
}

double Model::loss_given_forests(const ForestSnapshot& snap,
                                 std::span<const std::vector<double>> forests) const {
  const int expected = cfg_.m_blocks * cfg_.n_heads;
  if (static_cast<int>(forests.size()) != expected) {
    throw ShapeError("loss_given_forests: expected one forest per block and head");
  }
  const std::size_t cells = static_cast<std::size_t>(snap.n) * snap.n;
  for (const auto& f : forests) {
    if (f.size() != cells) throw ShapeError("loss_given_forests: forest size mismatch");
  }
  NoGradGuard ng;

  Tensor hb = Tensor::from({snap.n, cfg_.d}, snap.block_input);
  for (int b = 0; b < cfg_.m_blocks; ++b) {
    std::vector<Tensor> head_outputs;
    for (int p = 0; p < cfg_.n_heads; ++p) {
      const Tensor f = Tensor::from({snap.n, snap.n},
                                    forests[static_cast<std::size_t>(b * cfg_.n_heads + p)]);
      head_outputs.push_back(
          encode_forest(params_, head_prefix(b, p), f, hb, cfg_.l_layers));
    }
    hb = fuse_heads(params_, fuse_prefix(b), head_outputs);
  }

  const Tensor h_s = pool_sentence(hb);
  std::vector<Tensor> pools;
  for (int role = 1; role <= cfg_.q; ++role) {
    const EntityMention* mention = nullptr;
    for (const EntityMention& e : snap.entities) {
      if (e.role == role) mention = &e;
    }
    if (!mention) throw ConfigError("snapshot is missing entity role " + std::to_string(role));
    pools.push_back(pool_entity(hb, *mention));
  }
  const PredictionOutput out = predict(params_, h_s, pools, cfg_.q, snap.gold);
  return *out.loss;
}

}  // namespace cprel
