#include "cprel/dcgcn.hpp"

#include "cprel/error.hpp"

namespace cprel {

void DcgcnConfig::validate() const {
  if (layers < 1 || heads < 1 || blocks < 1 || dim < 1) {
    throw ConfigError("dcgcn: layers, heads, blocks, dim must be positive");
  }
  if (dim % layers != 0) {
    throw ConfigError("dcgcn: dim must be divisible by the layer count");
  }
}

void register_dcgcn_head(ParameterStore& ps, const std::string& prefix, int d,
                         int layers) {
  if (d % layers != 0) throw ConfigError("dcgcn: dim must be divisible by the layer count");
  const int sub = d / layers;
  for (int l = 0; l < layers; ++l) {
    const int in_dim = d + l * sub;
    ps.add(prefix + ".layer" + std::to_string(l) + ".w", in_dim, sub, Init::Glorot);
    ps.add(prefix + ".layer" + std::to_string(l) + ".b", 1, sub, Init::Zero);
  }
}

Tensor encode_forest(const ParameterStore& ps, const std::string& prefix,
                     const Tensor& f_hat, const Tensor& h_in, int layers) {
  const int d = h_in.cols();
  if (d % layers != 0) throw ConfigError("dcgcn: dim must be divisible by the layer count");
  if (f_hat.rows() != h_in.rows() || f_hat.cols() != h_in.rows()) {
    throw ShapeError("encode_forest: adjacency and feature shapes differ");
  }
  Tensor g = h_in;
  std::vector<Tensor> outs;
  for (int l = 0; l < layers; ++l) {
    const Tensor w = ps.get(prefix + ".layer" + std::to_string(l) + ".w");
    const Tensor b = ps.get(prefix + ".layer" + std::to_string(l) + ".b");
    const Tensor affine = add_rowvec(matmul(g, w), b);
    const Tensor h_l = relu(matmul(f_hat, affine));
    outs.push_back(h_l);
    if (l + 1 < layers) {
      const Tensor parts[] = {g, h_l};
      g = concat_cols(parts);
    }
  }
  return outs.size() == 1 ? outs[0] : concat_cols(outs);
}

void register_head_fusion(ParameterStore& ps, const std::string& prefix, int heads,
                          int d) {
  ps.add(prefix + ".w", heads * d, d, Init::Glorot);
  ps.add(prefix + ".b", 1, d, Init::Zero);
}

Tensor fuse_heads(const ParameterStore& ps, const std::string& prefix,
                  std::span<const Tensor> head_outputs) {
  if (head_outputs.empty()) throw ShapeError("fuse_heads: no head outputs");
  for (const Tensor& t : head_outputs) {
    if (t.shape() != head_outputs[0].shape()) {
      throw ShapeError("fuse_heads: head output shapes differ");
    }
  }
  const Tensor cat =
      head_outputs.size() == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return add_rowvec(matmul(cat, ps.get(prefix + ".w")), ps.get(prefix + ".b"));
}

}  // namespace cprel
