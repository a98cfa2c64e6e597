#include "cprel/corpus.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cprel/error.hpp"
#include "cprel/rng.hpp"

namespace cprel {

using ordered_json = nlohmann::ordered_json;

int LabelVocab::add(const std::string& label) {
  const int found = index_of(label);
  if (found >= 0) return found;
  names_.push_back(label);
  return static_cast<int>(names_.size()) - 1;
}

int LabelVocab::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == label) return static_cast<int>(i);
  return -1;
}

int DepTypeVocab::encode_or_add(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  names_.push_back(name);
  return static_cast<int>(names_.size()) - 1;
}

int DepTypeVocab::encode_strict(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  throw VocabError("unknown dependency type: " + name);
}

void DepTypeVocab::replace_names(std::vector<std::string> names) {
  if (names.size() < 2 || names[0] != "none" || names[1] != "self") {
    throw ConfigError("dependency-type vocabulary must start with none, self");
  }
  names_ = std::move(names);
}

// --- instance validation -----------------------------------------------------

namespace {

void validate_instance(const Instance& inst) {
  const int n = inst.n();
  if (n == 0) throw ParseError("tokens empty");
  if (inst.id.empty()) throw ParseError("id empty");
  if (static_cast<int>(inst.heads.size()) != n) throw ParseError("heads length mismatch");
  if (static_cast<int>(inst.deprels.size()) != n)
    throw ParseError("deprels length mismatch");

  if (inst.sentence_breaks.empty() || inst.sentence_breaks[0] != 0)
    throw ParseError("sentence_breaks must start with 0");
  for (std::size_t s = 0; s < inst.sentence_breaks.size(); ++s) {
    const int b = inst.sentence_breaks[s];
    if (b < 0 || b >= n) throw ParseError("sentence_breaks out of range");
    if (s > 0 && b <= inst.sentence_breaks[s - 1])
      throw ParseError("sentence_breaks not strictly increasing");
  }

  // Per-sentence spans: one root each, heads inside the span, no self loops.
  for (std::size_t s = 0; s < inst.sentence_breaks.size(); ++s) {
    const int lo = inst.sentence_breaks[s];
    const int hi = s + 1 < inst.sentence_breaks.size() ? inst.sentence_breaks[s + 1] : n;
    int roots = 0;
    for (int i = lo; i < hi; ++i) {
      const int h = inst.heads[i];
      if (h == i)
        throw ParseError("heads[" + std::to_string(i) + "] self-reference");
      if (h == -1) {
        ++roots;
        continue;
      }
      if (h < -1 || h >= n) throw ParseError("heads[" + std::to_string(i) + "] out of range");
      if (h < lo || h >= hi)
        throw ParseError("heads[" + std::to_string(i) + "] crosses sentence break");
    }
    if (roots != 1)
      throw ParseError("sentence span " + std::to_string(s) + " has " +
                       std::to_string(roots) + " roots");
  }

  for (int i = 0; i < n; ++i) {
    int steps = 0, cur = i;
    while (inst.heads[cur] != -1) {
      cur = inst.heads[cur];
      if (++steps > n) throw ParseError("head cycle involving token " + std::to_string(i));
    }
  }

  const int q = static_cast<int>(inst.entities.size());
  if (q != 2 && q != 3) throw ParseError("entity count must be 2 or 3");
  std::vector<bool> role_seen(static_cast<std::size_t>(q), false);
  for (const EntityMention& e : inst.entities) {
    if (e.role < 1 || e.role > q) throw ParseError("entity role out of range");
    if (role_seen[static_cast<std::size_t>(e.role - 1)])
      throw ParseError("duplicate entity role");
    role_seen[static_cast<std::size_t>(e.role - 1)] = true;
    if (e.token_indices.empty()) throw ParseError("entity mention empty");
    for (std::size_t k = 0; k < e.token_indices.size(); ++k) {
      const int t = e.token_indices[k];
      if (t < 0 || t >= n) throw ParseError("entity token index out of range");
      if (k > 0 && t <= e.token_indices[k - 1])
        throw ParseError("entity token indices not strictly increasing");
    }
  }
  if (inst.relation.empty()) throw ParseError("relation empty");
}

Instance instance_from_json(const ordered_json& j) {
  Instance inst;
  try {
    inst.id = j.at("id").get<std::string>();
    inst.tokens = j.at("tokens").get<std::vector<std::string>>();
    inst.sentence_breaks = j.at("sentence_breaks").get<std::vector<int>>();
    inst.heads = j.at("heads").get<std::vector<int>>();
    inst.deprels = j.at("deprels").get<std::vector<std::string>>();
    for (const auto& e : j.at("entities")) {
      EntityMention m;
      m.role = e.at("role").get<int>();
      m.token_indices = e.at("token_indices").get<std::vector<int>>();
      inst.entities.push_back(std::move(m));
    }
    inst.relation = j.at("relation").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad instance object: ") + e.what());
  }
  validate_instance(inst);
  return inst;
}

}  // namespace

TypedAdjacency build_typed_adjacency(const Instance& inst, const DepTypeVocab& types) {
  const int n = inst.n();
  TypedAdjacency adj;
  adj.n = n;
  adj.type_ids.assign(static_cast<std::size_t>(n) * n, DepTypeVocab::kNone);
  for (int i = 0; i < n; ++i)
    adj.type_ids[static_cast<std::size_t>(i) * n + i] = DepTypeVocab::kSelf;
  for (int i = 0; i < n; ++i) {
    const int h = inst.heads[i];
    if (h < 0) continue;
    const int t = types.encode_strict(inst.deprels[i]);
    adj.type_ids[static_cast<std::size_t>(i) * n + h] = t;
    adj.type_ids[static_cast<std::size_t>(h) * n + i] = t;
  }
  return adj;
}

void grow_dep_types(DepTypeVocab& types, const std::vector<Instance>& instances) {
  for (const Instance& inst : instances) {
    for (int i = 0; i < inst.n(); ++i) {
      if (inst.heads[i] >= 0) types.encode_or_add(inst.deprels[i]);
    }
  }
}

ParseResult parse_jsonl(std::istream& in, const ParseOptions& opts) {
  ParseResult result;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ordered_json j;
      try {
        j = ordered_json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
      }
      Instance inst = instance_from_json(j);
      result.labels.add(inst.relation);
      result.instances.push_back(std::move(inst));
    } catch (const ParseError& e) {
      const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
      if (opts.lenient) {
        result.skipped.push_back({line_no, msg});
      } else {
        throw ParseError(msg);
      }
    }
  }
  return result;
}

std::string instance_to_json_line(const Instance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["tokens"] = inst.tokens;
  j["sentence_breaks"] = inst.sentence_breaks;
  j["heads"] = inst.heads;
  j["deprels"] = inst.deprels;
  ordered_json ents = ordered_json::array();
  for (const EntityMention& e : inst.entities) {
    ordered_json je;
    je["role"] = e.role;
    je["token_indices"] = e.token_indices;
    ents.push_back(std::move(je));
  }
  j["entities"] = std::move(ents);
  j["relation"] = inst.relation;
  return j.dump();
}

void write_jsonl(std::ostream& out, const std::vector<Instance>& instances) {
  for (const Instance& inst : instances) out << instance_to_json_line(inst) << "\n";
}

// --- synthetic corpus --------------------------------------------------------

namespace {

// Random projective tree: pick a root in [lo, hi], recurse on both sides.
void build_tree(DetRng& rng, int lo, int hi, int parent, std::vector<int>& heads) {
  if (lo > hi) return;
  const int r = rng.uniform_int(lo, hi);
  heads[static_cast<std::size_t>(r)] = parent;
  build_tree(rng, lo, r - 1, r, heads);
  build_tree(rng, r + 1, hi, r, heads);
}

// All-pairs hop counts over the undirected tree, row-major n x n.
std::vector<int> tree_distances(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  std::vector<int> dist(static_cast<std::size_t>(n) * n, 1 << 20);
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (heads[i] >= 0) {
      adj[static_cast<std::size_t>(i)].push_back(heads[i]);
      adj[static_cast<std::size_t>(heads[i])].push_back(i);
    }
  }
  for (int s = 0; s < n; ++s) {
    std::vector<int> queue = {s};
    dist[static_cast<std::size_t>(s) * n + s] = 0;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int cur = queue[q];
      for (int nb : adj[static_cast<std::size_t>(cur)]) {
        if (dist[static_cast<std::size_t>(s) * n + nb] >
            dist[static_cast<std::size_t>(s) * n + cur] + 1) {
          dist[static_cast<std::size_t>(s) * n + nb] =
              dist[static_cast<std::size_t>(s) * n + cur] + 1;
          queue.push_back(nb);
        }
      }
    }
  }
  return dist;
}

const std::vector<std::string>& filler_deprels() {
  static const std::vector<std::string> kinds = {"nsubj", "dobj",   "amod",
                                                 "advmod", "nmod", "conj"};
  return kinds;
}

}  // namespace

SyntheticConfig synthetic_config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synthetic config: ") + e.what());
  }
  static const char* known[] = {"vocab_size", "min_len",     "max_len",
                                "num_instances", "num_classes", "seed"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown synthetic config key: " + key);
  }
  SyntheticConfig cfg;
  try {
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.min_len = j.at("min_len").get<int>();
    cfg.max_len = j.at("max_len").get<int>();
    cfg.num_instances = j.at("num_instances").get<int>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synthetic config: ") + e.what());
  }
  return cfg;
}

SyntheticCorpus gen_synthetic(const SyntheticConfig& cfg) {
  // The trigger pair for class c is a twin pair: two copies of the pool word
  // "trg<c>". Every other pool word appears exactly once, so the token SET is
  // identical across classes and only the repeated-word pattern carries the
  // label. Max pooling is blind to multiplicity, which keeps the pairwise
  // semantic path load-bearing.
  const int m = cfg.num_classes;
  if (m < 2) throw ConfigError("gen_synthetic: need at least 2 classes");
  if (cfg.min_len < 4) throw ConfigError("gen_synthetic: min_len below 4 is infeasible");
  if (cfg.min_len < m + 4) {
    throw ConfigError(
        "gen_synthetic: min_len must be at least num_classes + 4 to fit the "
        "trigger pool, both entities, and a filler");
  }
  if (cfg.max_len < cfg.min_len) throw ConfigError("gen_synthetic: max_len < min_len");
  if (cfg.num_instances < 1) throw ConfigError("gen_synthetic: num_instances < 1");
  if (cfg.vocab_size < 8) throw ConfigError("gen_synthetic: vocab_size below 8");
  if (cfg.vocab_size < m + 3)
    throw ConfigError("gen_synthetic: vocab_size too small for the class count");
  const int fillers = cfg.vocab_size - m - 2;

  DetRng rng(cfg.seed);
  SyntheticCorpus corpus;
  for (int idx = 0; idx < cfg.num_instances; ++idx) {
    const int cls = idx % m;
    const int len = rng.uniform_int(cfg.min_len, cfg.max_len);

    Instance inst;
    inst.id = "syn" + std::to_string(idx);
    inst.sentence_breaks = {0};
    inst.heads.assign(static_cast<std::size_t>(len), -1);
    build_tree(rng, 0, len - 1, -1, inst.heads);

    // Twin positions: a tree edge with probability one half, otherwise a pair
    // far apart in the tree (no shared neighbor), so syntax alone cannot
    // carry the pair.
    std::vector<int> dist = tree_distances(inst.heads);
    std::vector<std::pair<int, int>> edges, far_pairs;
    for (int i = 0; i < len; ++i) {
      for (int j = i + 1; j < len; ++j) {
        const int d = dist[static_cast<std::size_t>(i) * len + j];
        if (d == 1) edges.emplace_back(i, j);
        if (d >= 3) far_pairs.emplace_back(i, j);
      }
    }
    if (far_pairs.empty()) {
      for (int i = 0; i < len; ++i)
        for (int j = i + 1; j < len; ++j)
          if (dist[static_cast<std::size_t>(i) * len + j] >= 2)
            far_pairs.emplace_back(i, j);
    }
    const bool direct = rng.uniform() < 0.5;
    const auto& pick_from = direct ? edges : far_pairs;
    const auto [u, v] = pick_from[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(pick_from.size()) - 1))];

    // Remaining slots: one for each other pool word, two for the entities.
    std::vector<int> remaining;
    for (int i = 0; i < len; ++i)
      if (i != u && i != v) remaining.push_back(i);
    const auto draw_slot = [&] {
      const int pick = rng.uniform_int(0, static_cast<int>(remaining.size()) - 1);
      const int slot = remaining[static_cast<std::size_t>(pick)];
      remaining.erase(remaining.begin() + pick);
      return slot;
    };
    std::vector<int> pool_slot(static_cast<std::size_t>(m), -1);
    for (int w = 0; w < m; ++w) {
      if (w != cls) pool_slot[static_cast<std::size_t>(w)] = draw_slot();
    }
    const int ent_a = draw_slot();
    const int ent_b = draw_slot();

    inst.tokens.assign(static_cast<std::size_t>(len), "");
    for (int i = 0; i < len; ++i) {
      inst.tokens[static_cast<std::size_t>(i)] =
          "w" + std::to_string(rng.uniform_int(0, fillers - 1));
    }
    for (int w = 0; w < m; ++w) {
      if (w != cls)
        inst.tokens[static_cast<std::size_t>(pool_slot[static_cast<std::size_t>(w)])] =
            "trg" + std::to_string(w);
    }
    inst.tokens[static_cast<std::size_t>(u)] = "trg" + std::to_string(cls);
    inst.tokens[static_cast<std::size_t>(v)] = "trg" + std::to_string(cls);
    inst.tokens[static_cast<std::size_t>(std::min(ent_a, ent_b))] = "enta";
    inst.tokens[static_cast<std::size_t>(std::max(ent_a, ent_b))] = "entb";

    inst.deprels.assign(static_cast<std::size_t>(len), "");
    for (int i = 0; i < len; ++i) {
      if (inst.heads[i] == -1) {
        inst.deprels[static_cast<std::size_t>(i)] = "root";
      } else {
        const auto& kinds = filler_deprels();
        inst.deprels[static_cast<std::size_t>(i)] =
            kinds[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(kinds.size()) - 1))];
      }
    }

    inst.entities.push_back({1, {std::min(ent_a, ent_b)}});
    inst.entities.push_back({2, {std::max(ent_a, ent_b)}});
    inst.relation = "R" + std::to_string(cls);

    corpus.planted_edges[inst.id] = {u, v};
    corpus.labels.add(inst.relation);
    corpus.instances.push_back(std::move(inst));
  }
  return corpus;
}

std::string synthetic_label_rule(const Instance& inst, int num_classes) {
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (const std::string& tok : inst.tokens) {
    if (tok.rfind("trg", 0) == 0) {
      const int w = std::stoi(tok.substr(3));
      if (w < 0 || w >= num_classes)
        throw ConfigError("synthetic_label_rule: trigger outside the pool");
      counts[static_cast<std::size_t>(w)]++;
    }
  }
  int doubled = -1;
  for (int w = 0; w < num_classes; ++w) {
    if (counts[static_cast<std::size_t>(w)] == 2) {
      if (doubled >= 0)
        throw ConfigError("synthetic_label_rule: more than one twin pair");
      doubled = w;
    } else if (counts[static_cast<std::size_t>(w)] != 1) {
      throw ConfigError("synthetic_label_rule: pool word count out of pattern");
    }
  }
  if (doubled < 0) throw ConfigError("synthetic_label_rule: no twin pair found");
  return "R" + std::to_string(doubled);
}

std::vector<FoldSplit> split_folds(const std::vector<Instance>& instances, int k,
                                   std::uint64_t seed) {
  const int n = static_cast<int>(instances.size());
  if (k < 2 || k > n) throw ConfigError("split_folds: fold count out of range");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  DetRng rng(seed);
  rng.shuffle(idx);
  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    const int fold = i % k;
    for (int f = 0; f < k; ++f) {
      auto& dst = f == fold ? folds[static_cast<std::size_t>(f)].test
                            : folds[static_cast<std::size_t>(f)].train;
      dst.push_back(instances[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    }
  }
  return folds;
}

}  // namespace cprel
