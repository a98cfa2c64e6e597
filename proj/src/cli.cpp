#include "cprel/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cprel/checkpoint.hpp"
#include "cprel/error.hpp"
#include "cprel/harness.hpp"

namespace cprel {

namespace {

ParseResult load_data_file(const std::string& path, bool lenient) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file: " + path);
  ParseResult result = parse_jsonl(in, ParseOptions{lenient});
  for (const SkippedLine& s : result.skipped) {
    std::fprintf(stderr, "skipped %s\n", s.message.c_str());
  }
  return result;
}

bool fixed_timing() { return std::getenv("CPREL_FIXED_TIMING") != nullptr; }

// Flag overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<int> batch_size;
  std::optional<int> kappa;
  bool disable_semantic = false;
  bool disable_pruning = false;

  void apply(RunConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    if (lr) cfg.lr = *lr;
    if (alpha) cfg.model.alpha = *alpha;
    if (beta) cfg.model.beta = *beta;
    if (batch_size) cfg.batch_size = *batch_size;
    if (kappa) cfg.kappa = *kappa;
    if (disable_semantic) cfg.model.disable_semantic = true;
    if (disable_pruning) cfg.model.disable_pruning = true;
    cfg.validate();
  }
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--seed", ov.seed, "override the config seed");
  cmd->add_option("--epochs", ov.epochs, "override training epochs");
  cmd->add_option("--lr", ov.lr, "override the learning rate");
  cmd->add_option("--alpha", ov.alpha, "override the syntax/semantics gate");
  cmd->add_option("--beta", ov.beta, "override the pruning strength");
  cmd->add_option("--batch", ov.batch_size, "override the batch size");
  cmd->add_option("--kappa", ov.kappa, "override the top-K explanation size");
  cmd->add_flag("--disable-semantic", ov.disable_semantic,
                "ablation: force alpha to 1");
  cmd->add_flag("--disable-pruning", ov.disable_pruning,
                "ablation: replace pruning with row_softmax");
}

void report_training(const TrainStats& stats) {
  for (std::size_t e = 0; e < stats.epoch_losses.size(); ++e) {
    std::fprintf(stderr, "epoch %zu loss %.6f\n", e, stats.epoch_losses[e]);
  }
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string render_dot(const Instance& inst, const std::vector<RankedEdge>& edges) {
  double max_w = 0.0;
  for (const RankedEdge& e : edges) max_w = std::max(max_w, e.weight);
  if (max_w <= 0.0) max_w = 1.0;

  std::ostringstream out;
  out << "graph explanation {\n";
  out << "  node [shape=box, fontsize=10];\n";
  std::vector<int> entity_role(static_cast<std::size_t>(inst.n()), 0);
  for (const EntityMention& e : inst.entities) {
    for (int t : e.token_indices) entity_role[static_cast<std::size_t>(t)] = e.role;
  }
  static const char* kEntityColors[] = {"", "salmon", "lightblue", "palegreen"};
  char buf[64];
  for (int i = 0; i < inst.n(); ++i) {
    out << "  n" << i << " [label=\"" << i << ":"
        << dot_escape(inst.tokens[static_cast<std::size_t>(i)]) << "\"";
    if (entity_role[static_cast<std::size_t>(i)] > 0) {
      out << ", style=filled, fillcolor="
          << kEntityColors[entity_role[static_cast<std::size_t>(i)]];
    }
    out << "];\n";
  }
  for (const RankedEdge& e : edges) {
    const double pen = 0.5 + 4.5 * e.weight / max_w;
    out << "  n" << e.i << " -- n" << e.j << " [penwidth=";
    std::snprintf(buf, sizeof(buf), "%.2f", pen);
    out << buf << ", label=\"";
    std::snprintf(buf, sizeof(buf), "%.3f", e.weight);
    out << buf << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

std::string crossval_to_json(const CrossvalResult& result) {
  nlohmann::ordered_json j;
  j["mean_accuracy"] = result.mean_accuracy;
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (const Metrics& m : result.fold_metrics) {
    folds.push_back(nlohmann::ordered_json::parse(metrics_to_json(m)));
  }
  j["folds"] = std::move(folds);
  return j.dump(2);
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"causality-pruned dependency-forest relation extraction"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "synthetic config JSON")->required();
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--seed", gen_seed, "override the config seed");

  // shared train-ish state
  struct TrainArgs {
    std::string data, config, out, eval_data;
    bool lenient = false;
    Overrides ov;
  };
  TrainArgs pre_args, full_args;
  std::string full_explainer;
  bool full_allow_mismatch = false;

  auto* pre = app.add_subcommand("pretrain", "train the pruning-free base model");
  pre->add_option("--data", pre_args.data, "training JSONL")->required();
  pre->add_option("--config", pre_args.config, "run config JSON")->required();
  pre->add_option("--out", pre_args.out, "checkpoint output path")->required();
  pre->add_option("--eval-data", pre_args.eval_data, "optional test JSONL");
  pre->add_flag("--lenient", pre_args.lenient, "skip malformed data lines");
  add_override_flags(pre, pre_args.ov);

  auto* expl_ds = app.add_subcommand("explain-dataset",
                                     "build the causal explanation dataset");
  std::string ed_ckpt, ed_data, ed_out;
  std::optional<int> ed_kappa;
  std::optional<double> ed_fraction;
  bool ed_lenient = false;
  expl_ds->add_option("--ckpt", ed_ckpt, "pre-trained model checkpoint")->required();
  expl_ds->add_option("--data", ed_data, "training JSONL")->required();
  expl_ds->add_option("--out", ed_out, "explanation JSONL output")->required();
  expl_ds->add_option("--kappa", ed_kappa, "top-K edges per instance");
  expl_ds->add_option("--fraction", ed_fraction, "fraction of the data to explain");
  expl_ds->add_flag("--lenient", ed_lenient, "skip malformed data lines");

  auto* tr_expl = app.add_subcommand("train-explainer", "train the causal explainer");
  std::string te_explanations, te_ckpt, te_out;
  std::optional<int> te_epochs;
  std::optional<double> te_lr;
  tr_expl->add_option("--explanations", te_explanations, "explanation JSONL")
      ->required();
  tr_expl->add_option("--ckpt", te_ckpt, "source pre-trained checkpoint")->required();
  tr_expl->add_option("--out", te_out, "explainer checkpoint output")->required();
  tr_expl->add_option("--epochs", te_epochs, "override explainer epochs");
  tr_expl->add_option("--lr", te_lr, "override explainer learning rate");

  auto* full = app.add_subcommand("train", "train the full pipeline with pruning");
  full->add_option("--data", full_args.data, "training JSONL")->required();
  full->add_option("--config", full_args.config, "run config JSON")->required();
  full->add_option("--explainer", full_explainer, "explainer checkpoint");
  full->add_option("--out", full_args.out, "checkpoint output path")->required();
  full->add_option("--eval-data", full_args.eval_data, "optional test JSONL");
  full->add_flag("--lenient", full_args.lenient, "skip malformed data lines");
  full->add_flag("--allow-mismatch", full_allow_mismatch,
                 "accept an explainer from a different pretraining config");
  add_override_flags(full, full_args.ov);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_out;
  bool ev_lenient = false;
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--data", ev_data, "test JSONL")->required();
  ev->add_option("--out", ev_out, "metrics JSON output path");
  ev->add_flag("--lenient", ev_lenient, "skip malformed data lines");

  auto* cv = app.add_subcommand("crossval", "k-fold cross validation");
  std::string cv_data, cv_config, cv_out;
  int cv_k = 0;
  bool cv_lenient = false;
  Overrides cv_ov;
  cv->add_option("--data", cv_data, "dataset JSONL")->required();
  cv->add_option("--config", cv_config, "run config JSON")->required();
  cv->add_option("--k", cv_k, "fold count (default: config folds)");
  cv->add_option("--out", cv_out, "report JSON output path");
  int cv_jobs = 1;
  cv->add_option("--jobs", cv_jobs, "worker bound (this build runs folds sequentially)")
      ->check(CLI::PositiveNumber);
  cv->add_flag("--lenient", cv_lenient, "skip malformed data lines");
  add_override_flags(cv, cv_ov);

  auto* sw = app.add_subcommand("sweep", "hyper-parameter grid sweep");
  std::string sw_data, sw_test, sw_config, sw_out;
  std::vector<int> sw_n = {1, 2, 3};
  std::vector<double> sw_alpha = {0.1, 0.5, 0.9};
  std::vector<double> sw_beta = {0.0, 0.5, 1.0};
  bool sw_lenient = false;
  Overrides sw_ov;
  sw->add_option("--data", sw_data, "training JSONL")->required();
  sw->add_option("--test", sw_test, "test JSONL (default: held-out fifth)");
  sw->add_option("--config", sw_config, "run config JSON")->required();
  sw->add_option("--out", sw_out, "CSV output path")->required();
  sw->add_option("--n-grid", sw_n, "head counts to sweep")->delimiter(',');
  sw->add_option("--alpha-grid", sw_alpha, "alpha values to sweep")->delimiter(',');
  sw->add_option("--beta-grid", sw_beta, "beta values to sweep")->delimiter(',');
  int sw_jobs = 1;
  sw->add_option("--jobs", sw_jobs, "worker bound (this build runs cells sequentially)")
      ->check(CLI::PositiveNumber);
  sw->add_flag("--lenient", sw_lenient, "skip malformed data lines");
  add_override_flags(sw, sw_ov);

  auto* ei = app.add_subcommand("explain-instance",
                                "rank edges of one instance by causal weight");
  std::string ei_ckpt, ei_explainer, ei_data, ei_id, ei_dot, ei_out;
  int ei_top = 10;
  bool ei_lenient = false;
  ei->add_option("--ckpt", ei_ckpt, "model checkpoint")->required();
  ei->add_option("--explainer", ei_explainer, "explainer checkpoint")->required();
  ei->add_option("--data", ei_data, "dataset JSONL containing the instance")
      ->required();
  ei->add_option("--instance-id", ei_id, "instance id")->required();
  ei->add_option("--top", ei_top, "edges to keep");
  ei->add_option("--dot", ei_dot, "optional DOT output path");
  ei->add_option("--out", ei_out, "optional JSON output path");
  ei->add_flag("--lenient", ei_lenient, "skip malformed data lines");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      SyntheticConfig cfg = synthetic_config_from_json(read_file(gen_config));
      if (gen_seed) cfg.seed = *gen_seed;
      const SyntheticCorpus corpus = gen_synthetic(cfg);
      std::ostringstream out;
      write_jsonl(out, corpus.instances);
      write_file_atomic(gen_out, out.str());
      std::fprintf(stderr, "wrote %zu instances to %s\n", corpus.instances.size(),
                   gen_out.c_str());
    } else if (pre->parsed()) {
      RunConfig cfg = RunConfig::from_json_file(pre_args.config);
      pre_args.ov.apply(cfg);
      cfg.model.disable_pruning = true;
      const ParseResult data = load_data_file(pre_args.data, pre_args.lenient);
      TrainedModel trained = pretrain_base(cfg, data.instances);
      report_training(trained.stats);
      save_model_checkpoint(pre_args.out, *trained.model, cfg);
      if (!pre_args.eval_data.empty()) {
        const ParseResult test = load_data_file(pre_args.eval_data, pre_args.lenient);
        const Metrics m = evaluate(*trained.model, test.instances, cfg.negative_label);
        std::printf("accuracy %.6f micro_f1 %.6f\n", m.accuracy, m.micro_f1);
      }
    } else if (expl_ds->parsed()) {
      LoadedModel loaded = load_model_checkpoint(ed_ckpt);
      const ParseResult data = load_data_file(ed_data, ed_lenient);
      const int kappa = ed_kappa.value_or(loaded.config.kappa);
      const double fraction = ed_fraction.value_or(loaded.config.explain_fraction);
      const std::vector<Instance> subset =
          explanation_subset(data.instances, fraction, loaded.config.seed);
      const std::vector<ExplanationRecord> records =
          build_explanation_dataset(*loaded.model, subset, kappa);
      std::ostringstream out;
      write_explanations(out, records);
      write_file_atomic(ed_out, out.str());
      std::fprintf(stderr, "wrote %zu explanation records to %s\n", records.size(),
                   ed_out.c_str());
    } else if (tr_expl->parsed()) {
      LoadedModel source = load_model_checkpoint(te_ckpt);
      std::ifstream in(te_explanations);
      if (!in) throw ConfigError("cannot open file: " + te_explanations);
      const std::vector<ExplanationRecord> records = read_explanations(in);
      ExplainerTrainOptions opts;
      opts.hidden = source.config.explainer_hidden;
      opts.epochs = te_epochs.value_or(source.config.explainer_epochs);
      opts.lr = te_lr.value_or(source.config.explainer_lr);
      opts.seed = source.config.seed ^ 0x6a09e667f3bcc909ull;
      opts.clip_norm = source.config.clip_norm;
      opts.loss = explainer_loss_from_string(source.config.explainer_loss);
      const ExplainerTrainResult result = train_explainer(records, opts);
      for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        std::fprintf(stderr, "explainer epoch %zu loss %.6f\n", e,
                     result.epoch_losses[e]);
      }
      save_explainer_checkpoint(te_out, *result.explainer,
                                source.config.protocol_hash());
    } else if (full->parsed()) {
      RunConfig cfg = RunConfig::from_json_file(full_args.config);
      full_args.ov.apply(cfg);
      const ParseResult data = load_data_file(full_args.data, full_args.lenient);
      std::shared_ptr<Explainer> explainer;
      std::uint64_t source_hash = 0;
      if (!cfg.model.disable_pruning) {
        if (full_explainer.empty()) {
          throw ConfigError("train: --explainer is required unless pruning is disabled");
        }
        LoadedExplainer le = load_explainer_checkpoint(full_explainer);
        explainer = le.explainer;
        source_hash = le.source_hash;
      }
      TrainedModel trained = train_full(cfg, data.instances, explainer, source_hash,
                                        full_allow_mismatch);
      report_training(trained.stats);
      save_model_checkpoint(full_args.out, *trained.model, cfg);
      if (!full_args.eval_data.empty()) {
        const ParseResult test = load_data_file(full_args.eval_data, full_args.lenient);
        const Metrics m = evaluate(*trained.model, test.instances, cfg.negative_label);
        std::printf("accuracy %.6f micro_f1 %.6f\n", m.accuracy, m.micro_f1);
      }
    } else if (ev->parsed()) {
      LoadedModel loaded = load_model_checkpoint(ev_ckpt);
      if (!loaded.config.model.disable_pruning && !loaded.model->explainer()) {
        throw ConfigError("eval: checkpoint expects pruning but no explainer is stored");
      }
      const ParseResult data = load_data_file(ev_data, ev_lenient);
      const Metrics m =
          evaluate(*loaded.model, data.instances, loaded.config.negative_label);
      const std::string json = metrics_to_json(m);
      if (!ev_out.empty()) write_file_atomic(ev_out, json + "\n");
      std::printf("%s\n", json.c_str());
    } else if (cv->parsed()) {
      RunConfig cfg = RunConfig::from_json_file(cv_config);
      cv_ov.apply(cfg);
      const ParseResult data = load_data_file(cv_data, cv_lenient);
      const int k = cv_k > 0 ? cv_k : cfg.folds;
      const CrossvalResult result = crossval(cfg, data.instances, k);
      const std::string json = crossval_to_json(result);
      if (!cv_out.empty()) write_file_atomic(cv_out, json + "\n");
      std::printf("%s\n", json.c_str());
    } else if (sw->parsed()) {
      RunConfig cfg = RunConfig::from_json_file(sw_config);
      sw_ov.apply(cfg);
      const ParseResult data = load_data_file(sw_data, sw_lenient);
      std::vector<Instance> train = data.instances;
      std::vector<Instance> test;
      if (!sw_test.empty()) {
        test = load_data_file(sw_test, sw_lenient).instances;
      } else {
        const std::vector<FoldSplit> folds = split_folds(train, 5, cfg.seed);
        train = folds[0].train;
        test = folds[0].test;
      }
      const std::vector<SweepCell> cells =
          sweep(cfg, train, test, sw_n, sw_alpha, sw_beta);
      write_file_atomic(sw_out, sweep_to_csv(cells, fixed_timing()));
    } else if (ei->parsed()) {
      LoadedModel loaded = load_model_checkpoint(ei_ckpt);
      LoadedExplainer le = load_explainer_checkpoint(ei_explainer);
      loaded.model->set_explainer(le.explainer);
      const ParseResult data = load_data_file(ei_data, ei_lenient);
      const Instance* inst = nullptr;
      for (const Instance& cand : data.instances) {
        if (cand.id == ei_id) inst = &cand;
      }
      if (!inst) throw ConfigError("unknown instance id: " + ei_id);
      const std::vector<RankedEdge> edges =
          rank_edges_by_explanation(*loaded.model, *le.explainer, *inst, ei_top);
      for (const RankedEdge& e : edges) {
        std::printf("%d %d %.6f %s -- %s\n", e.i, e.j, e.weight,
                    inst->tokens[static_cast<std::size_t>(e.i)].c_str(),
                    inst->tokens[static_cast<std::size_t>(e.j)].c_str());
      }
      if (!ei_out.empty()) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const RankedEdge& e : edges) {
          j.push_back(nlohmann::ordered_json::array({e.i, e.j, e.weight}));
        }
        write_file_atomic(ei_out, j.dump(2) + "\n");
      }
      if (!ei_dot.empty()) {
        write_file_atomic(ei_dot, render_dot(*inst, edges));
      }
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace cprel
