#pragma once

#include <string>

#include "cprel/corpus.hpp"
#include "cprel/params.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

// Fixed score for absent edges; dominated away by any softmax row that also
// contains a real edge or self loop.
inline constexpr double kNoEdgeScore = -1e4;

// Registers the per-type score table "types.scores" ((|types|-1) x 1; the
// "none" type is the fixed mask, not learnable).
void register_type_scores(ParameterStore& ps, int num_types);

// Syntactic matrix C: learnable scalar per dependency type, mask elsewhere.
Tensor type_scores(const ParameterStore& ps, const TypedAdjacency& adj);

// Registers "<prefix>.wq" and "<prefix>.wk" (d x d).
void register_attention_head(ParameterStore& ps, const std::string& prefix, int d);

// A = (H Wq)(H Wk)^T / sqrt(d) for one head.
Tensor semantic_matrix(const ParameterStore& ps, const std::string& prefix,
                       const Tensor& h);

// F = row_softmax((1-alpha) A + alpha C).
Tensor fuse_gate(const Tensor& semantic, const Tensor& syntactic, double alpha);

}  // namespace cprel
