#include "cprel/explain.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "cprel/error.hpp"
#include "cprel/model.hpp"
#include "cprel/rng.hpp"

namespace cprel {

using ordered_json = nlohmann::ordered_json;

ExplainerLoss explainer_loss_from_string(const std::string& s) {
  if (s == "mask_bce") return ExplainerLoss::MaskBce;
  if (s == "delta_regression") return ExplainerLoss::DeltaRegression;
  throw ConfigError("unknown explainer loss: " + s);
}

std::string to_string(ExplainerLoss loss) {
  return loss == ExplainerLoss::MaskBce ? "mask_bce" : "delta_regression";
}

Explainer::Explainer(int in_dim, int hidden, std::uint64_t seed)
    : in_dim_(in_dim), hidden_(hidden), params_(seed) {
  if (in_dim < 1 || hidden < 1) throw ConfigError("explainer dimensions must be positive");
  params_.add("explainer.gcn0.w", in_dim, hidden, Init::Glorot);
  params_.add("explainer.gcn1.w", hidden, hidden, Init::Glorot);
}

namespace {

Tensor explainer_encode(const ParameterStore& ps, const Tensor& forest,
                        const Tensor& h0) {
  if (forest.rows() != forest.cols() || forest.rows() != h0.rows()) {
    throw ShapeError("explainer: forest and feature shapes differ");
  }
  const Tensor z1 = relu(matmul(forest, matmul(h0, ps.get("explainer.gcn0.w"))));
  return relu(matmul(forest, matmul(z1, ps.get("explainer.gcn1.w"))));
}

}  // namespace

Tensor Explainer::gram_logits(const Tensor& forest, const Tensor& h0) const {
  const Tensor z = explainer_encode(params_, forest, h0);
  return matmul(z, transpose(z));
}

Tensor Explainer::forward(const Tensor& forest, const Tensor& h0) const {
  return sigmoid(gram_logits(forest, h0));
}

Tensor causal_prune(const Tensor& forest, const Tensor& explanation, double beta) {
  if (beta < 0.0 || beta > 1.0) throw ConfigError("causal_prune: beta outside [0,1]");
  if (forest.shape() != explanation.shape()) {
    throw ShapeError("causal_prune: matrix shapes differ");
  }
  return row_softmax(mul(forest, add_const(scale(explanation, beta), 1.0)));
}

// --- attribution ---------------------------------------------------------------

namespace {

double perturbed_loss(const Model& model, const ForestSnapshot& snap,
                      std::vector<std::vector<double>>& forests, int i, int j) {
  const std::size_t a = static_cast<std::size_t>(i) * snap.n + j;
  const std::size_t b = static_cast<std::size_t>(j) * snap.n + i;
  std::vector<std::pair<double, double>> kept;
  kept.reserve(forests.size());
  for (auto& f : forests) {
    kept.emplace_back(f[a], f[b]);
    f[a] = 0.0;
    f[b] = 0.0;
  }
  const double loss = model.loss_given_forests(snap, forests);
  for (std::size_t k = 0; k < forests.size(); ++k) {
    forests[k][a] = kept[k].first;
    forests[k][b] = kept[k].second;
  }
  return loss;
}

void check_edge(int n, int i, int j) {
  if (i < 0 || j < 0 || i >= n || j >= n) {
    throw IndexError("edge touches an out-of-range token index");
  }
  if (i == j) throw IndexError("edge endpoints must differ");
}

// Candidate pairs i < j in lexicographic order.
std::vector<std::pair<int, int>> candidate_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return pairs;
}

std::vector<std::pair<int, int>> select_topk(
    const std::vector<EdgeContribution>& contributions, int kappa) {
  std::vector<const EdgeContribution*> sorted;
  sorted.reserve(contributions.size());
  for (const EdgeContribution& c : contributions) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const EdgeContribution* a, const EdgeContribution* b) {
                     if (a->delta != b->delta) return a->delta > b->delta;
                     if (a->i != b->i) return a->i < b->i;
                     return a->j < b->j;
                   });
  const std::size_t keep =
      std::min<std::size_t>(static_cast<std::size_t>(kappa), sorted.size());
  std::vector<std::pair<int, int>> topk;
  topk.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) topk.emplace_back(sorted[k]->i, sorted[k]->j);
  return topk;
}

}  // namespace

EdgeContribution edge_contribution(const Model& model, const Instance& inst, int i,
                                   int j) {
  check_edge(inst.n(), i, j);
  const ForestSnapshot snap = model.snapshot_forests(inst);
  std::vector<std::vector<double>> forests = snap.forests;
  const double base = model.loss_given_forests(snap, forests);
  const double removed = perturbed_loss(model, snap, forests, i, j);
  return {i, j, removed - base};
}

std::vector<EdgeContribution> edge_contributions(const Model& model,
                                                 const Instance& inst) {
  const ForestSnapshot snap = model.snapshot_forests(inst);
  std::vector<std::vector<double>> forests = snap.forests;
  const double base = model.loss_given_forests(snap, forests);
  std::vector<EdgeContribution> out;
  for (const auto& [i, j] : candidate_pairs(inst.n())) {
    out.push_back({i, j, perturbed_loss(model, snap, forests, i, j) - base});
  }
  return out;
}

ExplanationRecord make_explanation_record(const Model& model, const Instance& inst,
                                          int kappa) {
  if (kappa < 1) throw ConfigError("kappa must be at least 1");
  const ForestSnapshot snap = model.snapshot_forests(inst);
  std::vector<std::vector<double>> forests = snap.forests;
  const double base = model.loss_given_forests(snap, forests);

  ExplanationRecord rec;
  rec.instance_id = inst.id;
  rec.n = snap.n;
  rec.feature_dim = snap.feature_dim;
  rec.forests = snap.forests;
  rec.node_features = snap.node_features;
  for (const auto& [i, j] : candidate_pairs(snap.n)) {
    rec.contributions.push_back(
        {i, j, perturbed_loss(model, snap, forests, i, j) - base});
  }
  rec.topk_edges = select_topk(rec.contributions, kappa);
  return rec;
}

std::vector<ExplanationRecord> build_explanation_dataset(
    const Model& model, std::span<const Instance> instances, int kappa) {
  if (instances.empty()) throw ConfigError("explanation dataset: no instances");
  if (kappa < 1) throw ConfigError("kappa must be at least 1");
  std::vector<ExplanationRecord> records;
  records.reserve(instances.size());
  for (const Instance& inst : instances) {
    records.push_back(make_explanation_record(model, inst, kappa));
  }
  return records;
}

// --- explainer training ---------------------------------------------------------

namespace {

// Symmetric 0/1 target with the diagonal excluded from the loss.
Tensor topk_target(const ExplanationRecord& rec) {
  Tensor y = Tensor::zeros({rec.n, rec.n});
  for (const auto& [i, j] : rec.topk_edges) {
    y(i, j) = 1.0;
    y(j, i) = 1.0;
  }
  return y;
}

// Per-record min-max normalized deltas, shared by both directions.
Tensor delta_target(const ExplanationRecord& rec) {
  double lo = 0.0, hi = 0.0;
  if (!rec.contributions.empty()) {
    lo = hi = rec.contributions[0].delta;
    for (const EdgeContribution& c : rec.contributions) {
      lo = std::min(lo, c.delta);
      hi = std::max(hi, c.delta);
    }
  }
  Tensor y = Tensor::zeros({rec.n, rec.n});
  for (const EdgeContribution& c : rec.contributions) {
    const double v = hi > lo ? (c.delta - lo) / (hi - lo) : 0.5;
    y(c.i, c.j) = v;
    y(c.j, c.i) = v;
  }
  return y;
}

Tensor offdiag_mask(int n) {
  Tensor m = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) m(i, j) = 1.0;
  return m;
}

// Mean over off-diagonal cells of the stable elementwise binary cross-entropy
// softplus(s) - s*y, computed from the pre-sigmoid logits.
Tensor bce_offdiag(const Tensor& gram, const Tensor& target, const Tensor& mask) {
  const int n = gram.rows();
  const double cells = static_cast<double>(n) * (n - 1);
  const Tensor per_cell = sub(softplus(gram), mul(gram, target));
  return scale(sum_all(mul(per_cell, mask)), 1.0 / cells);
}

Tensor mse_offdiag(const Tensor& x, const Tensor& target, const Tensor& mask) {
  const int n = x.rows();
  const double cells = static_cast<double>(n) * (n - 1);
  const Tensor diff = sub(x, target);
  return scale(sum_all(mul(mul(diff, diff), mask)), 1.0 / cells);
}

}  // namespace

ExplainerTrainResult train_explainer(std::span<const ExplanationRecord> records,
                                     const ExplainerTrainOptions& opts) {
  if (records.empty()) throw ConfigError("train_explainer: no records");
  if (opts.epochs < 1) throw ConfigError("train_explainer: epochs must be positive");
  const int in_dim = records[0].feature_dim;
  for (const ExplanationRecord& rec : records) {
    if (rec.feature_dim != in_dim) {
      throw ConfigError("train_explainer: inconsistent feature widths");
    }
  }

  auto explainer = std::make_shared<Explainer>(in_dim, opts.hidden, opts.seed);
  DetRng shuffler(opts.seed ^ 0xc2b2ae3d27d4eb4full);

  std::vector<int> order(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) order[i] = static_cast<int>(i);

  ExplainerTrainResult result;
  result.explainer = explainer;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (int idx : order) {
      const ExplanationRecord& rec = records[static_cast<std::size_t>(idx)];
      const Tensor h0 = Tensor::from({rec.n, rec.feature_dim}, rec.node_features);
      const Tensor mask = offdiag_mask(rec.n);
      const Tensor target =
          opts.loss == ExplainerLoss::MaskBce ? topk_target(rec) : delta_target(rec);

      explainer->params().zero_grad();
      std::vector<Tensor> losses;
      for (const auto& fvals : rec.forests) {
        const Tensor f = Tensor::from({rec.n, rec.n}, fvals);
        if (opts.loss == ExplainerLoss::MaskBce) {
          losses.push_back(bce_offdiag(explainer->gram_logits(f, h0), target, mask));
        } else {
          losses.push_back(mse_offdiag(explainer->forward(f, h0), target, mask));
        }
      }
      Tensor total = losses[0];
      for (std::size_t k = 1; k < losses.size(); ++k) total = add(total, losses[k]);
      const Tensor loss = scale(total, 1.0 / static_cast<double>(losses.size()));
      backward(loss);
      explainer->params().sgd_step(opts.lr, 1.0, opts.clip_norm);
      epoch_loss += loss.value();
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(records.size()));
  }
  return result;
}

// --- explanation dataset file ----------------------------------------------------

void write_explanations(std::ostream& out, std::span<const ExplanationRecord> records) {
  for (const ExplanationRecord& rec : records) {
    ordered_json j;
    j["id"] = rec.instance_id;
    j["n"] = rec.n;
    j["feature_dim"] = rec.feature_dim;
    ordered_json forests = ordered_json::array();
    for (const auto& f : rec.forests) {
      ordered_json m = ordered_json::array();
      for (int i = 0; i < rec.n; ++i) {
        ordered_json row = ordered_json::array();
        for (int jj = 0; jj < rec.n; ++jj)
          row.push_back(f[static_cast<std::size_t>(i) * rec.n + jj]);
        m.push_back(std::move(row));
      }
      forests.push_back(std::move(m));
    }
    j["forests"] = std::move(forests);
    ordered_json feats = ordered_json::array();
    for (int i = 0; i < rec.n; ++i) {
      ordered_json row = ordered_json::array();
      for (int k = 0; k < rec.feature_dim; ++k)
        row.push_back(rec.node_features[static_cast<std::size_t>(i) * rec.feature_dim + k]);
      feats.push_back(std::move(row));
    }
    j["node_features"] = std::move(feats);
    ordered_json deltas = ordered_json::array();
    for (const EdgeContribution& c : rec.contributions)
      deltas.push_back(ordered_json::array({c.i, c.j, c.delta}));
    j["deltas"] = std::move(deltas);
    ordered_json topk = ordered_json::array();
    for (const auto& [i, jj] : rec.topk_edges)
      topk.push_back(ordered_json::array({i, jj}));
    j["topk"] = std::move(topk);
    out << j.dump() << "\n";
  }
}

std::vector<ExplanationRecord> read_explanations(std::istream& in) {
  std::vector<ExplanationRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const ordered_json j = ordered_json::parse(line);
      ExplanationRecord rec;
      rec.instance_id = j.at("id").get<std::string>();
      rec.n = j.at("n").get<int>();
      rec.feature_dim = j.at("feature_dim").get<int>();
      for (const auto& m : j.at("forests")) {
        std::vector<double> f;
        f.reserve(static_cast<std::size_t>(rec.n) * rec.n);
        for (const auto& row : m)
          for (const auto& v : row) f.push_back(v.get<double>());
        if (f.size() != static_cast<std::size_t>(rec.n) * rec.n) {
          throw ParseError("forest matrix size mismatch");
        }
        rec.forests.push_back(std::move(f));
      }
      for (const auto& row : j.at("node_features"))
        for (const auto& v : row) rec.node_features.push_back(v.get<double>());
      if (rec.node_features.size() !=
          static_cast<std::size_t>(rec.n) * rec.feature_dim) {
        throw ParseError("node feature size mismatch");
      }
      for (const auto& d : j.at("deltas")) {
        rec.contributions.push_back(
            {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<double>()});
      }
      for (const auto& t : j.at("topk")) {
        rec.topk_edges.emplace_back(t.at(0).get<int>(), t.at(1).get<int>());
      }
      for (const auto& [i, jj] : rec.topk_edges) {
        const bool known = std::any_of(
            rec.contributions.begin(), rec.contributions.end(),
            [i = i, jj = jj](const EdgeContribution& c) { return c.i == i && c.j == jj; });
        if (!known) throw ParseError("topk edge missing from deltas");
      }
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("explanations line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("explanations line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

// --- case-study ranking -----------------------------------------------------------

std::vector<RankedEdge> rank_edges_by_explanation(const Model& model,
                                                  const Explainer& explainer,
                                                  const Instance& inst, int top) {
  if (top < 1) throw ConfigError("rank_edges: top must be positive");
  NoGradGuard ng;
  ForwardTrace trace;
  model.forward(inst, false, &trace);

  const int n = inst.n();
  std::vector<double> avg(static_cast<std::size_t>(n) * n, 0.0);
  for (const Tensor& f : trace.raw_forests) {
    const Tensor x = explainer.forward(f, trace.h0);
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += x.values()[k];
  }
  for (double& v : avg) v /= static_cast<double>(trace.raw_forests.size());

  std::vector<RankedEdge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      edges.push_back({i, j, avg[static_cast<std::size_t>(i) * n + j]});
  std::stable_sort(edges.begin(), edges.end(), [](const RankedEdge& a, const RankedEdge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  if (static_cast<int>(edges.size()) > top) edges.resize(static_cast<std::size_t>(top));
  return edges;
}

}  // namespace cprel
