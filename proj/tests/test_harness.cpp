#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cprel/error.hpp"
#include "cprel/harness.hpp"
#include "test_util.hpp"

using namespace cprel;
using cprel::testutil::bitwise_equal;
using cprel::testutil::tiny_model_config;
using cprel::testutil::tiny_setup;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.model = tiny_model_config();
  cfg.kappa = 4;
  cfg.lr = 0.1;
  cfg.epochs = 25;
  cfg.batch_size = 4;
  cfg.seed = 7;
  cfg.explainer_hidden = 4;
  cfg.explainer_epochs = 15;
  cfg.explainer_lr = 1.0;
  return cfg;
}

std::filesystem::path work_dir(const std::string& name) {
  const auto dir = std::filesystem::path("testwork") / name;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("run config round-trips through JSON and rejects unknown keys") {
  RunConfig cfg = tiny_run_config();
  cfg.model.alpha = 0.25;
  cfg.explainer_loss = "delta_regression";
  const RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.protocol_hash() == cfg.protocol_hash());
  CHECK_THROWS_AS(RunConfig::from_json(R"({"bogus":1})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"alpha":1.5})"), ConfigError);
}

TEST_CASE("protocol hash ignores beta and the ablation switches") {
  RunConfig a = tiny_run_config();
  RunConfig b = a;
  b.model.beta = 0.0;
  b.model.disable_pruning = true;
  CHECK(a.protocol_hash() == b.protocol_hash());
  b.seed = 8;
  CHECK(a.protocol_hash() != b.protocol_hash());
  RunConfig c = a;
  c.model.n_heads = 1;
  CHECK(a.protocol_hash() != c.protocol_hash());
}

TEST_CASE("pretraining returns a loadable checkpoint with every parameter") {
  auto setup = tiny_setup(10, 7);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 1;
  const TrainedModel trained = pretrain_base(cfg, setup.corpus.instances);
  const auto dir = work_dir("pretrain_smoke");
  const std::string path = (dir / "ckpt.json").string();
  RunConfig saved_cfg = cfg;
  saved_cfg.model.disable_pruning = true;
  save_model_checkpoint(path, *trained.model, saved_cfg);

  const LoadedModel loaded = load_model_checkpoint(path);
  CHECK(loaded.model->params().size() == trained.model->params().size());
  for (const auto& [name, t] : trained.model->params().entries()) {
    CHECK(loaded.model->params().has(name));
    CHECK(loaded.model->params().get(name).values() == t.values());
  }
}

TEST_CASE("seeded pretraining reruns reproduce the loss trace exactly") {
  auto setup = tiny_setup(12, 19);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 5;
  const TrainedModel a = pretrain_base(cfg, setup.corpus.instances);
  const TrainedModel b = pretrain_base(cfg, setup.corpus.instances);
  CHECK(a.stats.epoch_losses == b.stats.epoch_losses);
}

TEST_CASE("pretraining halves the loss on the desk fixture") {
  auto setup = tiny_setup(16, 7);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 60;
  const TrainedModel trained = pretrain_base(cfg, setup.corpus.instances);
  const auto& losses = trained.stats.epoch_losses;
  CHECK(losses.back() <= 0.5 * losses.front());
}

TEST_CASE("training aborts with a diagnostic when the loss blows up") {
  auto setup = tiny_setup(8, 3);
  RunConfig cfg = tiny_run_config();
  cfg.lr = 1e308;
  cfg.epochs = 4;
  cfg.clip_norm = 0.0;  // disable clipping so the step overflows
  CHECK_THROWS_WITH_AS(pretrain_base(cfg, setup.corpus.instances),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("train_full enforces the two-stage protocol hash") {
  auto setup = tiny_setup(8, 11);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 2;
  const TrainedModel pre = pretrain_base(cfg, setup.corpus.instances);
  const ExplainerTrainResult expl =
      train_explainer_for(cfg, *pre.model, setup.corpus.instances);

  CHECK_THROWS_AS(train_full(cfg, setup.corpus.instances, expl.explainer,
                             cfg.protocol_hash() + 1),
                  ConfigError);
  CHECK_NOTHROW(train_full(cfg, setup.corpus.instances, expl.explainer,
                           cfg.protocol_hash() + 1, true));
  CHECK_NOTHROW(
      train_full(cfg, setup.corpus.instances, expl.explainer, cfg.protocol_hash()));
}

TEST_CASE("beta zero training equals the ablation run bitwise") {
  auto setup = tiny_setup(10, 23);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 6;

  RunConfig ablation = cfg;
  ablation.model.disable_pruning = true;
  ablation.model.prune_softmax_substitute = true;
  const TrainedModel base = train_full(ablation, setup.corpus.instances, nullptr, 0);

  const TrainedModel pre = pretrain_base(cfg, setup.corpus.instances);
  const ExplainerTrainResult expl =
      train_explainer_for(cfg, *pre.model, setup.corpus.instances);
  RunConfig zero_beta = cfg;
  zero_beta.model.beta = 0.0;
  const TrainedModel full = train_full(zero_beta, setup.corpus.instances,
                                       expl.explainer, cfg.protocol_hash());

  CHECK(base.stats.epoch_losses == full.stats.epoch_losses);
  for (const Instance& inst : setup.corpus.instances) {
    NoGradGuard ng;
    const PredictionOutput a = base.model->forward(inst);
    const PredictionOutput b = full.model->forward(inst);
    CHECK(bitwise_equal(a.logits, b.logits));
  }
}

TEST_CASE("a fully trained desk model evaluates cleanly on itself") {
  auto setup = tiny_setup(16, 7);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 60;
  const TrainedModel trained = pretrain_base(cfg, setup.corpus.instances);
  const Metrics m = evaluate(*trained.model, setup.corpus.instances, "None");
  CHECK(m.accuracy == 1.0);
  CHECK(m.micro_f1 == 1.0);
  CHECK(m.total == 16);
  int bucket_total = 0;
  for (const BucketMetrics& b : m.buckets) bucket_total += b.count;
  CHECK(bucket_total == m.total);
}

TEST_CASE("an all-negative predictor scores zero micro F1") {
  // Hand-built instances where the first label is the negative class, and a
  // zero-weight head that always predicts index 0.
  std::vector<Instance> data;
  for (int k = 0; k < 6; ++k) {
    Instance inst;
    inst.id = "i" + std::to_string(k);
    inst.tokens = {"a", "b", "c", "d"};
    inst.sentence_breaks = {0};
    inst.heads = {-1, 0, 0, 2};
    inst.deprels = {"root", "x", "y", "z"};
    inst.entities = {{1, {0}}, {2, {3}}};
    inst.relation = k % 2 == 0 ? "None" : "R1";
    data.push_back(std::move(inst));
  }
  Vocabs v = build_vocabs(data, nullptr);
  ModelConfig mc = tiny_model_config();
  mc.disable_pruning = true;
  Model model(mc, v.words, v.types, v.labels, 3);
  for (const char* name : {"ffnn.w2", "ffnn.b2"}) {
    Tensor t = model.params().get(name);
    t.values().assign(t.numel(), 0.0);
  }
  const Metrics m = evaluate(model, data, "None");
  CHECK(m.accuracy == 0.5);
  CHECK(m.micro_f1 == 0.0);
}

TEST_CASE("evaluate rejects labels missing from the model vocabulary") {
  auto setup = tiny_setup(6, 31);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 1;
  const TrainedModel trained = pretrain_base(cfg, setup.corpus.instances);
  std::vector<Instance> test = setup.corpus.instances;
  test[0].relation = "R99";
  CHECK_THROWS_AS(evaluate(*trained.model, test, "None"), ConfigError);
}

TEST_CASE("metrics arithmetic on a hand-checked confusion") {
  LabelVocab labels;
  labels.add("None");
  labels.add("A");
  labels.add("B");
  const std::vector<int> gold = {1, 1, 2, 0, 0, 2};
  const std::vector<int> pred = {1, 2, 2, 0, 1, 0};
  const std::vector<int> len = {10, 30, 60, 10, 10, 30};
  const Metrics m = compute_metrics(gold, pred, len, labels, "None");
  CHECK(m.accuracy == doctest::Approx(3.0 / 6.0));
  // Positive-class pool: TP = 2 (one A, one B); FP = 2 (A->B, None->A);
  // FN = 2 (A->B, B->None).
  CHECK(m.micro_f1 == doctest::Approx(0.5));
  REQUIRE(m.buckets.size() == 3);
  CHECK(m.buckets[0].count == 3);
  CHECK(m.buckets[1].count == 2);
  CHECK(m.buckets[2].count == 1);
  CHECK(m.per_class[1].label == "A");
  CHECK(m.per_class[1].precision == doctest::Approx(0.5));
  CHECK(m.per_class[1].recall == doctest::Approx(0.5));
}

TEST_CASE("checkpoints round-trip byte-identically and reproduce logits") {
  auto setup = tiny_setup(10, 47);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 3;
  const TrainedModel pre = pretrain_base(cfg, setup.corpus.instances);
  const ExplainerTrainResult expl =
      train_explainer_for(cfg, *pre.model, setup.corpus.instances);
  const TrainedModel full = train_full(cfg, setup.corpus.instances, expl.explainer,
                                       cfg.protocol_hash());

  const auto dir = work_dir("ckpt_roundtrip");
  const std::string p1 = (dir / "a.json").string();
  const std::string p2 = (dir / "b.json").string();
  save_model_checkpoint(p1, *full.model, cfg);
  const LoadedModel loaded = load_model_checkpoint(p1);
  save_model_checkpoint(p2, *loaded.model, loaded.config);
  CHECK(read_file(p1) == read_file(p2));

  for (const Instance& inst : setup.corpus.instances) {
    NoGradGuard ng;
    const PredictionOutput a = full.model->forward(inst);
    const PredictionOutput b = loaded.model->forward(inst);
    CHECK(bitwise_equal(a.logits, b.logits));
  }
}

TEST_CASE("checkpoint loading validates shapes against the config") {
  auto setup = tiny_setup(6, 53);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 1;
  const TrainedModel pre = pretrain_base(cfg, setup.corpus.instances);
  const auto dir = work_dir("ckpt_validate");
  const std::string path = (dir / "ckpt.json").string();
  save_model_checkpoint(path, *pre.model, cfg);

  auto j = nlohmann::ordered_json::parse(read_file(path));
  j["params"][0]["shape"] = std::vector<int>{1, 1};
  write_file_atomic(path, j.dump());
  CHECK_THROWS_AS(load_model_checkpoint(path), ConfigError);

  auto j2 = nlohmann::ordered_json::parse(read_file(path));
  j2["format_version"] = 99;
  write_file_atomic(path, j2.dump());
  CHECK_THROWS_AS(load_model_checkpoint(path), ConfigError);
}

TEST_CASE("explainer checkpoints persist the source hash") {
  auto setup = tiny_setup(6, 59);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 2;
  const TrainedModel pre = pretrain_base(cfg, setup.corpus.instances);
  const ExplainerTrainResult expl =
      train_explainer_for(cfg, *pre.model, setup.corpus.instances);
  const auto dir = work_dir("explainer_ckpt");
  const std::string path = (dir / "ex.json").string();
  save_explainer_checkpoint(path, *expl.explainer, cfg.protocol_hash());
  const LoadedExplainer loaded = load_explainer_checkpoint(path);
  CHECK(loaded.source_hash == cfg.protocol_hash());
  CHECK(loaded.explainer->in_dim() == expl.explainer->in_dim());
  for (const auto& [name, t] : expl.explainer->params().entries()) {
    CHECK(loaded.explainer->params().get(name).values() == t.values());
  }
}

TEST_CASE("two-fold cross validation averages fold accuracies") {
  auto setup = tiny_setup(20, 7);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 8;
  cfg.explainer_epochs = 6;
  const CrossvalResult result = crossval(cfg, setup.corpus.instances, 2);
  REQUIRE(result.fold_metrics.size() == 2);
  const double mean =
      (result.fold_metrics[0].accuracy + result.fold_metrics[1].accuracy) / 2.0;
  CHECK(std::fabs(result.mean_accuracy - mean) <= 1e-12);
}

TEST_CASE("a single-cell sweep equals the direct two-stage run") {
  auto setup = tiny_setup(15, 7);
  RunConfig cfg = tiny_run_config();
  cfg.epochs = 6;
  cfg.explainer_epochs = 5;
  const auto folds = split_folds(setup.corpus.instances, 5, cfg.seed);
  const std::vector<Instance>& train = folds[0].train;
  const std::vector<Instance>& test = folds[0].test;

  const std::vector<SweepCell> cells =
      sweep(cfg, train, test, {2}, {cfg.model.alpha}, {cfg.model.beta});
  REQUIRE(cells.size() == 1);
  CHECK_FALSE(cells[0].failed);

  LabelVocab global;
  for (const Instance& inst : train) global.add(inst.relation);
  for (const Instance& inst : test) global.add(inst.relation);
  const TrainedModel pre = pretrain_base(cfg, train, &global);
  const ExplainerTrainResult expl = train_explainer_for(cfg, *pre.model, train);
  const TrainedModel full =
      train_full(cfg, train, expl.explainer, cfg.protocol_hash(), false, &global);
  const Metrics m = evaluate(*full.model, test, cfg.negative_label);
  CHECK(cells[0].f1 == m.micro_f1);
  CHECK(cells[0].accuracy == m.accuracy);

  const std::vector<SweepCell> again =
      sweep(cfg, train, test, {2}, {cfg.model.alpha}, {cfg.model.beta});
  CHECK(sweep_to_csv(cells, true) == sweep_to_csv(again, true));
}

TEST_CASE("explanation subsets are deterministic prefixes of a shuffle") {
  auto setup = tiny_setup(10, 61);
  const std::vector<Instance> half =
      explanation_subset(setup.corpus.instances, 0.5, 3);
  CHECK(half.size() == 5);
  const std::vector<Instance> again =
      explanation_subset(setup.corpus.instances, 0.5, 3);
  for (std::size_t k = 0; k < half.size(); ++k) CHECK(half[k].id == again[k].id);
  const std::vector<Instance> all = explanation_subset(setup.corpus.instances, 1.0, 3);
  CHECK(all.size() == 10);
  CHECK_THROWS_AS(explanation_subset(setup.corpus.instances, 0.0, 3), ConfigError);
}
