#pragma once

#include <span>
#include <string>

#include "cprel/params.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

struct DcgcnConfig {
  int layers = 2;  // L
  int heads = 2;   // N
  int blocks = 2;  // M
  int dim = 24;    // d, must be divisible by layers

  void validate() const;
};

// Registers "<prefix>.layer{l}.w" and ".b" for one densely connected stack.
void register_dcgcn_head(ParameterStore& ps, const std::string& prefix, int d,
                         int layers);

// Densely connected graph convolution: layer l consumes the concatenation of
// the block input and all previous layer outputs, emits d/layers features via
// ReLU(F (G W + b)); the layer outputs concatenate back to width d.
Tensor encode_forest(const ParameterStore& ps, const std::string& prefix,
                     const Tensor& f_hat, const Tensor& h_in, int layers);

// Registers "<prefix>.w" ((heads*d) x d) and "<prefix>.b".
void register_head_fusion(ParameterStore& ps, const std::string& prefix, int heads,
                          int d);

// Concatenate the N head outputs along features and map back to width d.
Tensor fuse_heads(const ParameterStore& ps, const std::string& prefix,
                  std::span<const Tensor> head_outputs);

}  // namespace cprel
