#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cprel {

struct EntityMention {
  int role = 0;  // 1..Q
  std::vector<int> token_indices;
  bool operator==(const EntityMention&) const = default;
};

// One relation-extraction example: tokens, per-token dependency head/type,
// entity mentions, and the gold relation label.
struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> sentence_breaks;  // sorted sentence-start indices, begins with 0
  std::vector<int> heads;            // -1 for a sentence root
  std::vector<std::string> deprels;
  std::vector<EntityMention> entities;  // length Q in {2, 3}
  std::string relation;

  int n() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Instance&) const = default;
};

// Relation label strings in first-appearance order.
class LabelVocab {
 public:
  int add(const std::string& label);          // returns id, inserting if new
  int index_of(const std::string& label) const;  // -1 if absent
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const LabelVocab&) const = default;

 private:
  std::vector<std::string> names_;
};

// Dependency-type vocabulary; id 0 is the reserved "none" (no edge) and id 1
// is the reserved "self" loop type.
class DepTypeVocab {
 public:
  DepTypeVocab() : names_{"none", "self"} {}
  static constexpr int kNone = 0;
  static constexpr int kSelf = 1;

  int encode_or_add(const std::string& name);
  int encode_strict(const std::string& name) const;  // VocabError if unknown
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  void replace_names(std::vector<std::string> names);
  bool operator==(const DepTypeVocab&) const = default;

 private:
  std::vector<std::string> names_;
};

// Symmetric n x n matrix of dependency-type ids with "self" on the diagonal.
struct TypedAdjacency {
  int n = 0;
  std::vector<int> type_ids;  // row-major, 0 = no edge

  int at(int i, int j) const { return type_ids[static_cast<std::size_t>(i) * n + j]; }
};

// Unoriented 1-best tree plus self loops; multi-sentence instances come out
// block diagonal. Unknown deprels raise VocabError.
TypedAdjacency build_typed_adjacency(const Instance& inst, const DepTypeVocab& types);

// Registers every dependency type appearing in the corpus.
void grow_dep_types(DepTypeVocab& types, const std::vector<Instance>& instances);

struct ParseOptions {
  bool lenient = false;  // skip malformed lines instead of aborting
};

struct SkippedLine {
  int line_no = 0;
  std::string message;
};

struct ParseResult {
  std::vector<Instance> instances;
  LabelVocab labels;
  std::vector<SkippedLine> skipped;
};

ParseResult parse_jsonl(std::istream& in, const ParseOptions& opts = {});

std::string instance_to_json_line(const Instance& inst);
void write_jsonl(std::ostream& out, const std::vector<Instance>& instances);

struct SyntheticConfig {
  int vocab_size = 24;
  int min_len = 10;
  int max_len = 18;
  int num_instances = 500;
  int num_classes = 2;
  std::uint64_t seed = 7;
};

SyntheticConfig synthetic_config_from_json(const std::string& text);

struct SyntheticCorpus {
  std::vector<Instance> instances;
  LabelVocab labels;
  // instance id -> planted trigger token pair (i < j)
  std::map<std::string, std::pair<int, int>> planted_edges;
};

// Plants two entity tokens and a class-specific ordered trigger-word pair in
// each sentence; the tree connects the trigger pair directly with probability
// one half. Labels are a deterministic function of the trigger words.
SyntheticCorpus gen_synthetic(const SyntheticConfig& cfg);

// The generator's labelling rule, recomputable from any generated instance.
std::string synthetic_label_rule(const Instance& inst, int num_classes);

struct FoldSplit {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

std::vector<FoldSplit> split_folds(const std::vector<Instance>& instances, int k,
                                   std::uint64_t seed);

}  // namespace cprel
