// Acceptance suite: one pass/fail line per criterion on stdout.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cprel/checkpoint.hpp"
#include "cprel/cli.hpp"
#include "cprel/error.hpp"
#include "cprel/harness.hpp"
#include "test_util.hpp"

using namespace cprel;
using cprel::testutil::bitwise_equal;
using cprel::testutil::mini_corpus;

namespace {

void report(int criterion, const char* name, bool ok) {
  std::printf("ACCEPTANCE C%d %s: %s\n", criterion, name, ok ? "PASS" : "FAIL");
  std::fflush(stdout);
}

double elapsed_seconds(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

// The end-to-end synthetic pipeline (criterion 6), built once and shared.
struct Pipeline {
  SyntheticCorpus corpus;
  std::vector<Instance> train;
  std::vector<Instance> test;
  RunConfig cfg;
  TrainedModel pretrained;
  ExplainerTrainResult explainer;
  TrainedModel full;
  TrainedModel ablation;
  double pretrain_seconds = 0.0;
};

RunConfig pipeline_config() {
  RunConfig cfg;
  cfg.model.n_heads = 2;
  cfg.model.m_blocks = 1;
  cfg.model.l_layers = 2;
  cfg.model.d = 24;
  cfg.model.embed_dim = 24;
  cfg.model.hidden_dim = 6;
  cfg.model.alpha = 2e-4;
  cfg.model.beta = 1.0;
  cfg.lr = 0.1;
  cfg.epochs = 40;
  cfg.batch_size = 8;
  cfg.seed = 11;
  cfg.kappa = 20;
  cfg.explain_fraction = 0.2;
  cfg.explainer_hidden = 16;
  cfg.explainer_epochs = 400;
  cfg.explainer_lr = 3.0;
  return cfg;
}

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline pl;
    SyntheticConfig sc;
    sc.num_instances = 500;
    sc.seed = 7;
    sc.num_classes = 4;
    sc.min_len = 10;
    sc.max_len = 16;
    sc.vocab_size = 24;
    pl.corpus = gen_synthetic(sc);
    std::vector<FoldSplit> folds = split_folds(pl.corpus.instances, 5, 7);
    pl.train = std::move(folds[0].train);
    pl.test = std::move(folds[0].test);
    pl.cfg = pipeline_config();

    const auto t0 = std::chrono::steady_clock::now();
    pl.pretrained = pretrain_base(pl.cfg, pl.train);
    pl.pretrain_seconds = elapsed_seconds(t0);

    pl.explainer = train_explainer_for(pl.cfg, *pl.pretrained.model, pl.train);
    pl.full = train_full(pl.cfg, pl.train, pl.explainer.explainer,
                         pl.cfg.protocol_hash());
    RunConfig ab = pl.cfg;
    ab.model.disable_pruning = true;
    pl.ablation = train_full(ab, pl.train, nullptr, 0);
    return pl;
  }();
  return p;
}

std::filesystem::path work_dir(const std::string& name) {
  const auto dir = std::filesystem::path("acceptwork") / name;
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << text;
}

}  // namespace

TEST_CASE("criterion 1: gradient integrity of the full model") {
  // 4-token instances, N=2 M=2 L=2 d=8; briefly trained so every live
  // parameter keeps a well-conditioned gradient, pruning active.
  const std::vector<Instance> corpus = mini_corpus();
  RunConfig cfg;
  cfg.model.n_heads = 2;
  cfg.model.m_blocks = 2;
  cfg.model.l_layers = 2;
  cfg.model.d = 8;
  cfg.model.embed_dim = 8;
  cfg.model.hidden_dim = 4;
  cfg.model.alpha = 0.5;
  cfg.model.beta = 1.0;
  cfg.lr = 0.1;
  cfg.epochs = 12;
  cfg.batch_size = 4;
  cfg.seed = 21;
  auto explainer = std::make_shared<Explainer>(2 * cfg.model.hidden_dim, 8, 121);
  const TrainedModel trained =
      train_full(cfg, corpus, explainer, cfg.protocol_hash(), true);

  const Instance& inst = corpus[0];
  REQUIRE(inst.n() == 4);
  const auto t0 = std::chrono::steady_clock::now();
  const double err = finite_diff_check(
      [&] { return trained.model->forward(inst).loss_tensor; },
      trained.model->params(), 7e-4);
  const double secs = elapsed_seconds(t0);

  const bool ok = err <= 1e-5 && secs < 30.0;
  report(1, "gradient integrity", ok);
  CHECK(err <= 1e-5);
  CHECK(secs < 30.0);
}

TEST_CASE("criterion 2: stochasticity invariants on 100 random instances") {
  SyntheticConfig sc;
  sc.num_instances = 100;
  sc.seed = 42;
  sc.num_classes = 2;
  sc.min_len = 6;
  sc.max_len = 12;
  sc.vocab_size = 16;
  const SyntheticCorpus corpus = gen_synthetic(sc);
  Vocabs v = build_vocabs(corpus.instances, nullptr);
  ModelConfig mc;
  mc.n_heads = 2;
  mc.m_blocks = 2;
  mc.l_layers = 2;
  mc.d = 8;
  mc.embed_dim = 8;
  mc.hidden_dim = 4;
  mc.alpha = 0.5;
  mc.beta = 0.9;
  Model model(mc, v.words, v.types, v.labels, 5);
  model.set_explainer(std::make_shared<Explainer>(2 * mc.hidden_dim, 8, 6));

  bool rows_ok = true, sym_ok = true, range_ok = true;
  NoGradGuard ng;
  for (const Instance& inst : corpus.instances) {
    ForwardTrace trace;
    model.forward(inst, true, &trace);
    const auto check_rows = [&](const Tensor& f) {
      for (int i = 0; i < f.rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < f.cols(); ++j) sum += f(i, j);
        if (std::fabs(sum - 1.0) > 1e-12) rows_ok = false;
      }
    };
    for (const Tensor& f : trace.raw_forests) check_rows(f);
    for (const Tensor& f : trace.operative_forests) check_rows(f);
    for (const Tensor& x : trace.explanations) {
      for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) {
          if (std::fabs(x(i, j) - x(j, i)) > 1e-12) sym_ok = false;
          if (!(x(i, j) > 0.0 && x(i, j) < 1.0)) range_ok = false;
        }
      }
    }
  }
  const bool ok = rows_ok && sym_ok && range_ok;
  report(2, "stochasticity invariants", ok);
  CHECK(rows_ok);
  CHECK(sym_ok);
  CHECK(range_ok);
}

namespace {

// Brute-force oracle: re-evaluate both cross entropies per edge from scratch
// and sort with independent tie-break code.
std::vector<std::pair<int, int>> oracle_topk(const Model& model, const Instance& inst,
                                             int kappa) {
  std::vector<EdgeContribution> all;
  for (int i = 0; i < inst.n(); ++i) {
    for (int j = i + 1; j < inst.n(); ++j) {
      all.push_back(edge_contribution(model, inst, i, j));
    }
  }
  std::sort(all.begin(), all.end(), [](const EdgeContribution& a,
                                       const EdgeContribution& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return std::make_pair(a.i, a.j) < std::make_pair(b.i, b.j);
  });
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < kappa && k < static_cast<int>(all.size()); ++k) {
    out.emplace_back(all[static_cast<std::size_t>(k)].i,
                     all[static_cast<std::size_t>(k)].j);
  }
  return out;
}

SyntheticCorpus small_attribution_corpus() {
  SyntheticConfig sc;
  sc.num_instances = 50;
  sc.seed = 99;
  sc.num_classes = 2;
  sc.min_len = 6;
  sc.max_len = 6;
  sc.vocab_size = 12;
  return gen_synthetic(sc);
}

}  // namespace

TEST_CASE("criterion 3: attribution against the brute-force oracle") {
  const SyntheticCorpus corpus = small_attribution_corpus();
  RunConfig cfg;
  cfg.model.n_heads = 2;
  cfg.model.m_blocks = 2;
  cfg.model.l_layers = 2;
  cfg.model.d = 8;
  cfg.model.embed_dim = 8;
  cfg.model.hidden_dim = 4;
  cfg.model.alpha = 0.3;
  cfg.lr = 0.1;
  cfg.epochs = 10;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const TrainedModel pre = pretrain_base(cfg, corpus.instances);

  const auto t0 = std::chrono::steady_clock::now();
  bool sets_equal = true;
  int checked = 0;
  for (const Instance& inst : corpus.instances) {
    if (inst.n() > 6) continue;
    ++checked;
    const ExplanationRecord rec = make_explanation_record(*pre.model, inst, 5);
    const auto oracle = oracle_topk(*pre.model, inst, 5);
    if (std::set<std::pair<int, int>>(rec.topk_edges.begin(), rec.topk_edges.end()) !=
        std::set<std::pair<int, int>>(oracle.begin(), oracle.end())) {
      sets_equal = false;
    }
  }
  const double secs = elapsed_seconds(t0);
  const bool ok = sets_equal && checked == 50 && secs < 120.0;
  report(3, "attribution oracle", ok);
  CHECK(sets_equal);
  CHECK(checked == 50);
  CHECK(secs < 120.0);
}

TEST_CASE("criterion 4: null attribution under a forest-blind model") {
  const SyntheticCorpus corpus = small_attribution_corpus();
  Vocabs v = build_vocabs(corpus.instances, nullptr);
  ModelConfig mc;
  mc.n_heads = 2;
  mc.m_blocks = 2;
  mc.l_layers = 2;
  mc.d = 8;
  mc.embed_dim = 8;
  mc.hidden_dim = 4;
  mc.disable_pruning = true;
  Model model(mc, v.words, v.types, v.labels, 17);
  for (const auto& [name, t] : model.params().entries()) {
    if (name.find(".layer") != std::string::npos ||
        name.find(".fuse.") != std::string::npos) {
      Tensor tensor = t;
      tensor.values().assign(tensor.numel(), 0.0);
    }
  }
  bool all_zero = true;
  for (int k = 0; k < 10; ++k) {
    for (const EdgeContribution& c :
         edge_contributions(model, corpus.instances[static_cast<std::size_t>(k)])) {
      if (c.delta != 0.0) all_zero = false;
    }
  }
  report(4, "null attribution", all_zero);
  CHECK(all_zero);
}

TEST_CASE("criterion 5: gate endpoints") {
  // Mask dominance at alpha = 1.
  auto setup = cprel::testutil::tiny_setup(30, 13, 6, 15);
  ModelConfig mc = cprel::testutil::tiny_model_config();
  mc.alpha = 1.0;
  mc.disable_pruning = true;
  Model masked(mc, setup.vocabs.words, setup.vocabs.types, setup.vocabs.labels, 19);
  bool mass_ok = true;
  {
    NoGradGuard ng;
    for (const Instance& inst : setup.corpus.instances) {
      ForwardTrace trace;
      masked.forward(inst, true, &trace);
      const TypedAdjacency adj = build_typed_adjacency(inst, masked.types());
      for (const Tensor& f : trace.raw_forests) {
        double off = 0.0;
        for (int i = 0; i < f.rows(); ++i)
          for (int j = 0; j < f.cols(); ++j)
            if (adj.at(i, j) == DepTypeVocab::kNone) off += f(i, j);
        if (off >= 1e-30) mass_ok = false;
      }
    }
  }

  // Bitwise equality of the beta = 0 training run with the ablation that
  // substitutes row_softmax(F) for the prune step.
  auto small = cprel::testutil::tiny_setup(10, 23);
  RunConfig cfg;
  cfg.model = cprel::testutil::tiny_model_config();
  cfg.lr = 0.1;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  cfg.seed = 7;
  RunConfig ab = cfg;
  ab.model.disable_pruning = true;
  ab.model.prune_softmax_substitute = true;
  const TrainedModel base = train_full(ab, small.corpus.instances, nullptr, 0);
  RunConfig zb = cfg;
  zb.model.beta = 0.0;
  auto explainer = std::make_shared<Explainer>(2 * cfg.model.hidden_dim, 8, 77);
  const TrainedModel zero_beta =
      train_full(zb, small.corpus.instances, explainer, zb.protocol_hash());
  bool bitwise_ok = base.stats.epoch_losses == zero_beta.stats.epoch_losses;
  {
    NoGradGuard ng;
    for (const Instance& inst : small.corpus.instances) {
      if (!bitwise_equal(base.model->forward(inst).logits,
                         zero_beta.model->forward(inst).logits)) {
        bitwise_ok = false;
      }
    }
  }

  const bool ok = mass_ok && bitwise_ok;
  report(5, "gate endpoints", ok);
  CHECK(mass_ok);
  CHECK(bitwise_ok);
}

TEST_CASE("criterion 6: synthetic end-to-end pipeline") {
  const Pipeline& pl = pipeline();

  const Metrics train_m = evaluate(*pl.pretrained.model, pl.train, "None");
  const Metrics test_m = evaluate(*pl.pretrained.model, pl.test, "None");
  const bool time_ok = pl.pretrain_seconds < 300.0;
  const bool acc_ok = train_m.accuracy >= 0.95 && test_m.accuracy >= 0.90;

  int hits = 0;
  for (const Instance& inst : pl.test) {
    const ExplanationRecord rec = make_explanation_record(*pl.pretrained.model, inst, 5);
    const auto planted = pl.corpus.planted_edges.at(inst.id);
    for (const auto& e : rec.topk_edges) {
      if (e == planted) {
        ++hits;
        break;
      }
    }
  }
  const bool hit_ok = hits >= 80;

  const Metrics full_m = evaluate(*pl.full.model, pl.test, pl.cfg.negative_label);
  const Metrics ab_m = evaluate(*pl.ablation.model, pl.test, pl.cfg.negative_label);
  const bool prune_ok = full_m.accuracy >= ab_m.accuracy - 0.01;

  std::fprintf(stderr,
               "pipeline: pretrain %.1fs train_acc=%.3f test_acc=%.3f "
               "topk_hits=%d/100 full=%.3f ablation=%.3f\n",
               pl.pretrain_seconds, train_m.accuracy, test_m.accuracy, hits,
               full_m.accuracy, ab_m.accuracy);

  const bool ok = time_ok && acc_ok && hit_ok && prune_ok;
  report(6, "synthetic end-to-end", ok);
  CHECK(time_ok);
  CHECK(train_m.accuracy >= 0.95);
  CHECK(test_m.accuracy >= 0.90);
  CHECK(hits >= 80);
  CHECK(full_m.accuracy >= ab_m.accuracy - 0.01);
}

TEST_CASE("case study: planted pair ranks high in the averaged explanation") {
  const Pipeline& pl = pipeline();
  const Instance* probe = nullptr;
  for (const Instance& inst : pl.test) {
    if (inst.id == "syn468") probe = &inst;
  }
  REQUIRE(probe != nullptr);
  const auto planted = pl.corpus.planted_edges.at(probe->id);
  const std::vector<RankedEdge> top =
      rank_edges_by_explanation(*pl.full.model, *pl.explainer.explainer, *probe, 3);
  bool found = false;
  for (const RankedEdge& e : top) {
    if (std::make_pair(e.i, e.j) == planted) found = true;
  }
  CHECK(found);
}

TEST_CASE("criterion 7: determinism and persistence") {
  // Checkpoint round trip reproduces logits bitwise on 20 probes.
  const Pipeline& pl = pipeline();
  const auto dir = work_dir("c7");
  const std::string ckpt = (dir / "full.json").string();
  save_model_checkpoint(ckpt, *pl.full.model, pl.cfg);
  const LoadedModel loaded = load_model_checkpoint(ckpt);
  bool logits_ok = true;
  {
    NoGradGuard ng;
    for (int k = 0; k < 20; ++k) {
      const Instance& inst = pl.test[static_cast<std::size_t>(k)];
      if (!bitwise_equal(pl.full.model->forward(inst).logits,
                         loaded.model->forward(inst).logits)) {
        logits_ok = false;
      }
    }
  }

  // Every CLI command repeated with the same seed emits identical bytes.
  setenv("CPREL_FIXED_TIMING", "1", 1);
  const auto cdir = work_dir("c7_cli");
  write_text(cdir / "synth.json",
             R"({"vocab_size":12,"min_len":6,"max_len":8,"num_instances":12,)"
             R"("num_classes":2,"seed":3})");
  RunConfig tiny;
  tiny.model = cprel::testutil::tiny_model_config();
  tiny.kappa = 4;
  tiny.lr = 0.1;
  tiny.epochs = 6;
  tiny.batch_size = 4;
  tiny.seed = 7;
  tiny.explainer_hidden = 4;
  tiny.explainer_epochs = 10;
  tiny.explainer_lr = 1.0;
  write_text(cdir / "run.json", tiny.to_json());

  bool cli_ok = true;
  const auto rerun_identical = [&](const std::string& name,
                                   const std::vector<std::string>& args,
                                   const std::vector<std::string>& outputs) {
    std::vector<std::string> first;
    for (int round = 0; round < 2; ++round) {
      std::vector<std::string> full_args = args;
      if (cli_run(full_args) != 0) {
        std::fprintf(stderr, "command %s failed\n", name.c_str());
        cli_ok = false;
        return;
      }
      for (std::size_t k = 0; k < outputs.size(); ++k) {
        const std::string content = read_file(outputs[k]);
        if (round == 0) {
          first.push_back(content);
        } else if (first[k] != content) {
          std::fprintf(stderr, "command %s output %s differs across reruns\n",
                       name.c_str(), outputs[k].c_str());
          cli_ok = false;
        }
      }
    }
  };

  const std::string synth = (cdir / "synth.json").string();
  const std::string run = (cdir / "run.json").string();
  const std::string data = (cdir / "data.jsonl").string();
  const std::string pre = (cdir / "pre.json").string();
  const std::string expl = (cdir / "expl.jsonl").string();
  const std::string exck = (cdir / "explainer.json").string();
  const std::string full = (cdir / "full.json").string();
  const std::string metrics = (cdir / "metrics.json").string();
  const std::string cv = (cdir / "cv.json").string();
  const std::string sweep_csv = (cdir / "sweep.csv").string();
  const std::string edges = (cdir / "edges.json").string();
  const std::string dot = (cdir / "graph.dot").string();

  rerun_identical("gen-data", {"gen-data", "--config", synth, "--out", data}, {data});
  rerun_identical("pretrain",
                  {"pretrain", "--data", data, "--config", run, "--out", pre}, {pre});
  rerun_identical("explain-dataset",
                  {"explain-dataset", "--ckpt", pre, "--data", data, "--out", expl},
                  {expl});
  rerun_identical("train-explainer",
                  {"train-explainer", "--explanations", expl, "--ckpt", pre, "--out",
                   exck},
                  {exck});
  rerun_identical("train",
                  {"train", "--data", data, "--config", run, "--explainer", exck,
                   "--out", full},
                  {full});
  rerun_identical("eval", {"eval", "--ckpt", full, "--data", data, "--out", metrics},
                  {metrics});
  rerun_identical("crossval",
                  {"crossval", "--data", data, "--config", run, "--k", "2", "--out",
                   cv},
                  {cv});
  rerun_identical("sweep",
                  {"sweep", "--data", data, "--config", run, "--out", sweep_csv,
                   "--n-grid", "1", "--alpha-grid", "0.5", "--beta-grid", "0,1"},
                  {sweep_csv});
  rerun_identical("explain-instance",
                  {"explain-instance", "--ckpt", full, "--explainer", exck, "--data",
                   data, "--instance-id", "syn0", "--top", "5", "--out", edges,
                   "--dot", dot},
                  {edges, dot});

  const bool ok = logits_ok && cli_ok;
  report(7, "determinism and persistence", ok);
  CHECK(logits_ok);
  CHECK(cli_ok);
}

TEST_CASE("criterion 8: hyper-parameter sweep structure") {
  SyntheticConfig sc;
  sc.num_instances = 100;
  sc.seed = 5;
  sc.num_classes = 2;
  sc.min_len = 6;
  sc.max_len = 9;
  sc.vocab_size = 12;
  const SyntheticCorpus corpus = gen_synthetic(sc);
  const std::vector<FoldSplit> folds = split_folds(corpus.instances, 5, 5);

  RunConfig cfg;
  cfg.model = cprel::testutil::tiny_model_config();
  cfg.lr = 0.1;
  cfg.epochs = 60;
  cfg.batch_size = 4;
  cfg.seed = 5;
  cfg.kappa = 5;
  cfg.explainer_hidden = 4;
  cfg.explainer_epochs = 30;
  cfg.explainer_lr = 1.0;

  const std::vector<int> n_grid = {1, 2, 3};
  const std::vector<double> alpha_grid = {0.1, 0.5, 0.9};
  const std::vector<double> beta_grid = {0.0, 0.5, 1.0};
  const std::vector<SweepCell> cells =
      sweep(cfg, folds[0].train, folds[0].test, n_grid, alpha_grid, beta_grid);

  const bool count_ok = cells.size() == 27;
  bool none_failed = true;
  for (const SweepCell& c : cells) none_failed = none_failed && !c.failed;

  bool optimum_ok = false;
  for (const SweepCell& c : cells) {
    if (c.n_heads == 2 && c.alpha == 0.9 && c.beta == 1.0 && !c.failed &&
        std::isfinite(c.f1) && std::isfinite(c.accuracy)) {
      optimum_ok = true;
    }
  }

  // Well-formed CSV: header plus 27 six-column rows.
  const std::string csv = sweep_to_csv(cells, true);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  bool csv_ok = line == "N,alpha,beta,f1,accuracy,seconds";
  int rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    ++rows;
    if (std::count(line.begin(), line.end(), ',') != 5) csv_ok = false;
  }
  csv_ok = csv_ok && rows == 27;

  // Pruning should not hurt: mean F1 of beta > 0 cells stays within one point
  // of the beta = 0 column.
  double on = 0.0, off = 0.0;
  int on_n = 0, off_n = 0;
  for (const SweepCell& c : cells) {
    if (c.failed) continue;
    if (c.beta == 0.0) {
      off += c.f1;
      ++off_n;
    } else {
      on += c.f1;
      ++on_n;
    }
  }
  const bool prune_col_ok =
      on_n > 0 && off_n > 0 && on / on_n >= off / off_n - 0.01;

  const auto dir = work_dir("c8");
  write_file_atomic((dir / "sweep.csv").string(), csv);

  const bool ok = count_ok && none_failed && optimum_ok && csv_ok && prune_col_ok;
  report(8, "sweep structure", ok);
  CHECK(count_ok);
  CHECK(none_failed);
  CHECK(optimum_ok);
  CHECK(csv_ok);
  CHECK(prune_col_ok);
}
