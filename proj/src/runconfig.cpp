#include "cprel/runconfig.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cprel/error.hpp"

namespace cprel {

using ordered_json = nlohmann::ordered_json;

void RunConfig::validate() const {
  model.validate();
  if (kappa < 1) throw ConfigError("kappa must be at least 1");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (explain_fraction <= 0.0 || explain_fraction > 1.0) {
    throw ConfigError("explain_fraction must be in (0,1]");
  }
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (explainer_hidden < 1 || explainer_epochs < 1 || explainer_lr <= 0.0) {
    throw ConfigError("explainer hyper-parameters must be positive");
  }
  explainer_loss_from_string(explainer_loss);
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

namespace {

template <typename T>
void read_key(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  static const char* known[] = {
      "task",   "q",        "n_heads", "m_blocks",  "l_layers",  "d",
      "embed_dim", "hidden_dim", "alpha", "beta",   "disable_semantic",
      "disable_pruning", "prune_softmax_substitute", "kappa",   "lr",       "epochs",    "batch_size",
      "seed",   "explain_fraction", "folds", "explainer_hidden",
      "explainer_epochs", "explainer_lr", "explainer_loss", "negative_label",
      "clip_norm"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key: " + key);
  }

  RunConfig cfg;
  read_key(j, "task", cfg.model.task);
  read_key(j, "q", cfg.model.q);
  read_key(j, "n_heads", cfg.model.n_heads);
  read_key(j, "m_blocks", cfg.model.m_blocks);
  read_key(j, "l_layers", cfg.model.l_layers);
  read_key(j, "d", cfg.model.d);
  read_key(j, "embed_dim", cfg.model.embed_dim);
  read_key(j, "hidden_dim", cfg.model.hidden_dim);
  read_key(j, "alpha", cfg.model.alpha);
  read_key(j, "beta", cfg.model.beta);
  read_key(j, "disable_semantic", cfg.model.disable_semantic);
  read_key(j, "disable_pruning", cfg.model.disable_pruning);
  read_key(j, "prune_softmax_substitute", cfg.model.prune_softmax_substitute);
  read_key(j, "kappa", cfg.kappa);
  read_key(j, "lr", cfg.lr);
  read_key(j, "epochs", cfg.epochs);
  read_key(j, "batch_size", cfg.batch_size);
  read_key(j, "seed", cfg.seed);
  read_key(j, "explain_fraction", cfg.explain_fraction);
  read_key(j, "folds", cfg.folds);
  read_key(j, "explainer_hidden", cfg.explainer_hidden);
  read_key(j, "explainer_epochs", cfg.explainer_epochs);
  read_key(j, "explainer_lr", cfg.explainer_lr);
  read_key(j, "explainer_loss", cfg.explainer_loss);
  read_key(j, "negative_label", cfg.negative_label);
  read_key(j, "clip_norm", cfg.clip_norm);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["task"] = model.task;
  j["q"] = model.q;
  j["n_heads"] = model.n_heads;
  j["m_blocks"] = model.m_blocks;
  j["l_layers"] = model.l_layers;
  j["d"] = model.d;
  j["embed_dim"] = model.embed_dim;
  j["hidden_dim"] = model.hidden_dim;
  j["alpha"] = model.alpha;
  j["beta"] = model.beta;
  j["disable_semantic"] = model.disable_semantic;
  j["disable_pruning"] = model.disable_pruning;
  j["prune_softmax_substitute"] = model.prune_softmax_substitute;
  j["kappa"] = kappa;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["explain_fraction"] = explain_fraction;
  j["folds"] = folds;
  j["explainer_hidden"] = explainer_hidden;
  j["explainer_epochs"] = explainer_epochs;
  j["explainer_lr"] = explainer_lr;
  j["explainer_loss"] = explainer_loss;
  j["negative_label"] = negative_label;
  j["clip_norm"] = clip_norm;
  return j.dump(2);
}

std::uint64_t RunConfig::protocol_hash() const {
  ordered_json j;
  j["task"] = model.task;
  j["q"] = model.q;
  j["n_heads"] = model.n_heads;
  j["m_blocks"] = model.m_blocks;
  j["l_layers"] = model.l_layers;
  j["d"] = model.d;
  j["embed_dim"] = model.embed_dim;
  j["hidden_dim"] = model.hidden_dim;
  j["alpha"] = model.alpha;
  j["kappa"] = kappa;
  j["lr"] = lr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  const std::string canon = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_to_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::uint64_t hex_to_hash(const std::string& s) {
  if (s.size() != 16) throw ConfigError("bad hash string");
  std::uint64_t h = 0;
  for (char c : s) {
    h <<= 4;
    if (c >= '0' && c <= '9') {
      h |= static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      h |= static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      throw ConfigError("bad hash string");
    }
  }
  return h;
}

}  // namespace cprel
