#include "cprel/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cprel/error.hpp"

namespace cprel {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("rename failed: " + path);
  }
}

namespace {

ordered_json params_to_json(const ParameterStore& ps) {
  ordered_json arr = ordered_json::array();
  for (const auto& [name, t] : ps.entries()) {
    ordered_json jp;
    jp["name"] = name;
    jp["shape"] = t.shape();
    jp["values"] = t.values();
    arr.push_back(std::move(jp));
  }
  return arr;
}

void params_from_json(ParameterStore& ps, const ordered_json& arr) {
  if (arr.size() != ps.size()) {
    throw ConfigError("checkpoint parameter count does not match the config");
  }
  for (const auto& jp : arr) {
    const std::string name = jp.at("name").get<std::string>();
    if (!ps.has(name)) throw ConfigError("checkpoint has unknown parameter: " + name);
    Tensor t = ps.get(name);
    const auto shape = jp.at("shape").get<std::vector<int>>();
    if (shape != t.shape()) {
      throw ConfigError("checkpoint shape mismatch for parameter: " + name);
    }
    auto values = jp.at("values").get<std::vector<double>>();
    if (values.size() != t.numel()) {
      throw ConfigError("checkpoint value count mismatch for parameter: " + name);
    }
    t.values() = std::move(values);
  }
}

ordered_json parse_checkpoint(const std::string& path, const char* expected_kind) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("format_version") ||
      j.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw ConfigError("unsupported checkpoint format version in " + path);
  }
  if (j.at("kind").get<std::string>() != expected_kind) {
    throw ConfigError("checkpoint " + path + " is not a " + expected_kind +
                      " checkpoint");
  }
  return j;
}

}  // namespace

void save_model_checkpoint(const std::string& path, const Model& model,
                           const RunConfig& cfg) {
  ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "model";
  j["config"] = ordered_json::parse(cfg.to_json());
  j["config_hash"] = hash_to_hex(cfg.protocol_hash());
  j["label_vocab"] = model.labels().names();
  j["dep_types"] = model.types().names();
  j["word_vocab"] = model.words().names();
  j["params"] = params_to_json(model.params());
  if (const Explainer* e = model.explainer()) {
    ordered_json je;
    je["in_dim"] = e->in_dim();
    je["hidden"] = e->hidden();
    je["params"] = params_to_json(e->params());
    j["explainer"] = std::move(je);
  }
  write_file_atomic(path, j.dump());
}

LoadedModel load_model_checkpoint(const std::string& path) {
  const ordered_json j = parse_checkpoint(path, "model");
  try {
    RunConfig cfg = RunConfig::from_json(j.at("config").dump());

    LabelVocab labels;
    for (const auto& name : j.at("label_vocab")) labels.add(name.get<std::string>());
    DepTypeVocab types;
    types.replace_names(j.at("dep_types").get<std::vector<std::string>>());
    WordVocab words;
    words.replace_names(j.at("word_vocab").get<std::vector<std::string>>());

    auto model = std::make_unique<Model>(cfg.model, std::move(words), std::move(types),
                                         std::move(labels), cfg.seed);
    params_from_json(model->params(), j.at("params"));
    if (j.contains("explainer")) {
      const ordered_json& je = j.at("explainer");
      auto explainer = std::make_shared<Explainer>(je.at("in_dim").get<int>(),
                                                   je.at("hidden").get<int>(), 0);
      params_from_json(explainer->params(), je.at("params"));
      explainer->params().set_requires_grad(false);
      model->set_explainer(std::move(explainer));
    }
    return {std::move(model), cfg};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint " + path + ": " + e.what());
  }
}

void save_explainer_checkpoint(const std::string& path, const Explainer& explainer,
                               std::uint64_t source_hash) {
  ordered_json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["kind"] = "explainer";
  j["in_dim"] = explainer.in_dim();
  j["hidden"] = explainer.hidden();
  j["source_hash"] = hash_to_hex(source_hash);
  j["params"] = params_to_json(explainer.params());
  write_file_atomic(path, j.dump());
}

LoadedExplainer load_explainer_checkpoint(const std::string& path) {
  const ordered_json j = parse_checkpoint(path, "explainer");
  try {
    const int in_dim = j.at("in_dim").get<int>();
    const int hidden = j.at("hidden").get<int>();
    auto explainer = std::make_shared<Explainer>(in_dim, hidden, 0);
    params_from_json(explainer->params(), j.at("params"));
    return {std::move(explainer), hex_to_hash(j.at("source_hash").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint " + path + ": " + e.what());
  }
}

}  // namespace cprel
