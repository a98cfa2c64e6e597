#include "cprel/encoder.hpp"

#include "cprel/error.hpp"

namespace cprel {

int WordVocab::encode_or_add(const std::string& token) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == token) return static_cast<int>(i);
  names_.push_back(token);
  return static_cast<int>(names_.size()) - 1;
}

int WordVocab::encode(const std::string& token) const {
  for (std::size_t i = 1; i < names_.size(); ++i)
    if (names_[i] == token) return static_cast<int>(i);
  return 0;
}

void WordVocab::replace_names(std::vector<std::string> names) {
  if (names.empty() || names[0] != "<unk>") {
    throw ConfigError("word vocabulary must start with <unk>");
  }
  names_ = std::move(names);
}

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
}

namespace {

const char* kGates[] = {"i", "f", "o", "g"};

std::string gate_name(const char* dir, const char* kind, const char* gate) {
  return std::string("lstm.") + dir + "." + kind + "_" + gate;
}

// One LSTM step; x_t and the states are 1 x dim rows.
struct LstmParams {
  Tensor w[4], u[4], b[4];
};

LstmParams load_dir(const ParameterStore& ps, const char* dir) {
  LstmParams p;
  for (int g = 0; g < 4; ++g) {
    p.w[g] = ps.get(gate_name(dir, "w", kGates[g]));
    p.u[g] = ps.get(gate_name(dir, "u", kGates[g]));
    p.b[g] = ps.get(gate_name(dir, "b", kGates[g]));
  }
  return p;
}

void lstm_step(const LstmParams& p, const Tensor& x_t, Tensor& h, Tensor& c) {
  Tensor pre[4];
  for (int g = 0; g < 4; ++g) {
    pre[g] = add(add(matmul(x_t, p.w[g]), matmul(h, p.u[g])), p.b[g]);
  }
  const Tensor gi = sigmoid(pre[0]);
  const Tensor gf = sigmoid(pre[1]);
  const Tensor go = sigmoid(pre[2]);
  const Tensor gg = tanh_op(pre[3]);
  c = add(mul(gf, c), mul(gi, gg));
  h = mul(go, tanh_op(c));
}

}  // namespace

void register_encoder_params(ParameterStore& ps, const EncoderConfig& cfg) {
  cfg.validate();
  ps.add("embed.table", cfg.vocab_size, cfg.embed_dim, Init::Glorot);
  for (const char* dir : {"fwd", "bwd"}) {
    for (const char* gate : kGates) {
      ps.add(gate_name(dir, "w", gate), cfg.embed_dim, cfg.hidden_dim, Init::Glorot);
      ps.add(gate_name(dir, "u", gate), cfg.hidden_dim, cfg.hidden_dim, Init::Glorot);
      ps.add(gate_name(dir, "b", gate), 1, cfg.hidden_dim, Init::Zero);
    }
  }
}

Tensor embed(const ParameterStore& ps, const std::vector<int>& ids) {
  return embedding_rows(ps.get("embed.table"), ids);
}

Tensor bilstm_encode(const ParameterStore& ps, const Tensor& x, int hidden_dim) {
  const int n = x.rows();
  const LstmParams fwd = load_dir(ps, "fwd");
  const LstmParams bwd = load_dir(ps, "bwd");

  std::vector<Tensor> fwd_rows(static_cast<std::size_t>(n));
  Tensor h = Tensor::zeros({1, hidden_dim});
  Tensor c = Tensor::zeros({1, hidden_dim});
  for (int t = 0; t < n; ++t) {
    lstm_step(fwd, slice_rows(x, t, t + 1), h, c);
    fwd_rows[static_cast<std::size_t>(t)] = h;
  }

  std::vector<Tensor> bwd_rows(static_cast<std::size_t>(n));
  h = Tensor::zeros({1, hidden_dim});
  c = Tensor::zeros({1, hidden_dim});
  for (int t = n - 1; t >= 0; --t) {
    lstm_step(bwd, slice_rows(x, t, t + 1), h, c);
    bwd_rows[static_cast<std::size_t>(t)] = h;
  }

  const Tensor fwd_all = concat_rows(fwd_rows);
  const Tensor bwd_all = concat_rows(bwd_rows);
  const Tensor halves[] = {fwd_all, bwd_all};
  return concat_cols(halves);
}

}  // namespace cprel
