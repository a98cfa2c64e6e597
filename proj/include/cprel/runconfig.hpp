#pragma once

#include <cstdint>
#include <string>

#include "cprel/explain.hpp"
#include "cprel/model.hpp"

namespace cprel {

// Everything a training run needs; all randomness flows from the one seed.
struct RunConfig {
  ModelConfig model;
  int kappa = 20;
  double lr = 0.2;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 7;
  double explain_fraction = 1.0;
  int folds = 5;
  int explainer_hidden = 16;
  int explainer_epochs = 50;
  double explainer_lr = 0.5;
  std::string explainer_loss = "mask_bce";
  std::string negative_label = "None";
  double clip_norm = 5.0;

  void validate() const;

  static RunConfig from_json(const std::string& text);
  static RunConfig from_json_file(const std::string& path);
  std::string to_json() const;

  // Hash of the protocol-relevant fields (beta and the ablation switches are
  // excluded, since pretraining and full training legitimately differ there).
  std::uint64_t protocol_hash() const;
};

std::string hash_to_hex(std::uint64_t h);
std::uint64_t hex_to_hash(const std::string& s);

}  // namespace cprel
