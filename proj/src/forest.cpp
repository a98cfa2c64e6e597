#include "cprel/forest.hpp"

#include <cmath>

#include "cprel/error.hpp"

namespace cprel {

void register_type_scores(ParameterStore& ps, int num_types) {
  if (num_types < 2) throw ConfigError("type score table needs at least the self type");
  ps.add("types.scores", num_types - 1, 1, Init::Glorot);
}

Tensor type_scores(const ParameterStore& ps, const TypedAdjacency& adj) {
  return type_score_cells(ps.get("types.scores"), adj.type_ids, adj.n, kNoEdgeScore);
}

void register_attention_head(ParameterStore& ps, const std::string& prefix, int d) {
  ps.add(prefix + ".wq", d, d, Init::Glorot);
  ps.add(prefix + ".wk", d, d, Init::Glorot);
}

Tensor semantic_matrix(const ParameterStore& ps, const std::string& prefix,
                       const Tensor& h) {
  const Tensor wq = ps.get(prefix + ".wq");
  const Tensor wk = ps.get(prefix + ".wk");
  if (h.cols() != wq.rows()) throw ShapeError("semantic_matrix: feature width mismatch");
  const Tensor q = matmul(h, wq);
  const Tensor k = matmul(h, wk);
  return scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(k.cols())));
}

Tensor fuse_gate(const Tensor& semantic, const Tensor& syntactic, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("fuse_gate: alpha outside [0,1]");
  if (semantic.shape() != syntactic.shape()) {
    throw ShapeError("fuse_gate: matrix shapes differ");
  }
  return row_softmax(add(scale(semantic, 1.0 - alpha), scale(syntactic, alpha)));
}

}  // namespace cprel
