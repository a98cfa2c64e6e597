#pragma once

#include <memory>
#include <string>

#include "cprel/explain.hpp"
#include "cprel/model.hpp"
#include "cprel/runconfig.hpp"

namespace cprel {

inline constexpr int kCheckpointFormatVersion = 1;

std::string read_file(const std::string& path);
// Writes to a sibling temp file and renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

void save_model_checkpoint(const std::string& path, const Model& model,
                           const RunConfig& cfg);

struct LoadedModel {
  std::unique_ptr<Model> model;
  RunConfig config;
};

// Validates the format version and every tensor shape against the config.
LoadedModel load_model_checkpoint(const std::string& path);

void save_explainer_checkpoint(const std::string& path, const Explainer& explainer,
                               std::uint64_t source_hash);

struct LoadedExplainer {
  std::shared_ptr<Explainer> explainer;
  std::uint64_t source_hash = 0;
};

LoadedExplainer load_explainer_checkpoint(const std::string& path);

}  // namespace cprel
