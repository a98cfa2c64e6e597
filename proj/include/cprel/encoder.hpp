#pragma once

#include <string>
#include <vector>

#include "cprel/params.hpp"
#include "cprel/tensor.hpp"

namespace cprel {

// Token vocabulary; id 0 is reserved for unknown words.
class WordVocab {
 public:
  WordVocab() : names_{"<unk>"} {}

  int encode_or_add(const std::string& token);
  int encode(const std::string& token) const;  // unknown -> 0
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  void replace_names(std::vector<std::string> names);
  bool operator==(const WordVocab&) const = default;

 private:
  std::vector<std::string> names_;
};

struct EncoderConfig {
  int vocab_size = 0;
  int embed_dim = 0;
  int hidden_dim = 0;  // per direction; node features are 2 * hidden_dim wide

  int out_dim() const { return 2 * hidden_dim; }
  void validate() const;
};

// Registers the embedding table and both LSTM directions under "embed." and
// "lstm.{fwd,bwd}.".
void register_encoder_params(ParameterStore& ps, const EncoderConfig& cfg);

// Row i is the embedding of token i. Unknown ids must already be folded to 0.
Tensor embed(const ParameterStore& ps, const std::vector<int>& ids);

// Single-layer BiLSTM; row i concatenates the forward state after token i and
// the backward state after token i of the reverse scan.
Tensor bilstm_encode(const ParameterStore& ps, const Tensor& x, int hidden_dim);

}  // namespace cprel
