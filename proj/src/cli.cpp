#include "simcse/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "simcse/augment.hpp"
#include "simcse/data.hpp"
#include "simcse/errors.hpp"
#include "simcse/evalproto.hpp"
#include "simcse/io.hpp"
#include "simcse/metrics.hpp"
#include "simcse/rng.hpp"
#include "simcse/train.hpp"

namespace simcse::cli {
namespace {

namespace fs = std::filesystem;

/// Bad inputs and configs exit 1; failures inside an otherwise valid
/// computation exit 2.
int exit_code_for(const std::exception& e) {
  const bool validation =
      dynamic_cast<const IoError*>(&e) != nullptr ||
      dynamic_cast<const DimMismatchError*>(&e) != nullptr ||
      dynamic_cast<const InvalidPlanError*>(&e) != nullptr ||
      dynamic_cast<const LengthOverflowError*>(&e) != nullptr ||
      dynamic_cast<const PlanMismatchError*>(&e) != nullptr ||
      dynamic_cast<const TooShortError*>(&e) != nullptr ||
      dynamic_cast<const NoReplaceableTokenError*>(&e) != nullptr ||
      dynamic_cast<const EmptyCorpusError*>(&e) != nullptr ||
      dynamic_cast<const BadColumnCountError*>(&e) != nullptr ||
      dynamic_cast<const ScoreOutOfRangeError*>(&e) != nullptr ||
      dynamic_cast<const VocabTooSmallError*>(&e) != nullptr ||
      dynamic_cast<const ObjectiveDataMismatchError*>(&e) != nullptr ||
      dynamic_cast<const MissingHardNegativesError*>(&e) != nullptr ||
      dynamic_cast<const EmptySelectionError*>(&e) != nullptr;
  return validation ? 1 : 2;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

struct GenToyOpts {
  std::string out;
  std::uint64_t seed = 0;
  int clusters = 8;
  int per_cluster = 250;
  int vocab = 256;
  int len_min = 5;
  int len_max = 10;
};

int run_gen_toy(const GenToyOpts& o) {
  const data::ToyData toy =
      data::gen_toy_corpus(o.seed, o.clusters, o.per_cluster, o.vocab, {o.len_min, o.len_max});
  fs::create_directories(o.out);

  std::string corpus;
  for (const std::string& line : toy.sentences) {
    corpus += line;
    corpus += '\n';
  }
  io::write_file_atomic(join_path(o.out, "corpus.txt"), corpus);

  std::string nli;
  for (const auto& [a, p, n] : toy.triplets) {
    nli += toy.sentences[static_cast<std::size_t>(a)];
    nli += '\t';
    nli += toy.sentences[static_cast<std::size_t>(p)];
    nli += '\t';
    nli += toy.sentences[static_cast<std::size_t>(n)];
    nli += '\n';
  }
  io::write_file_atomic(join_path(o.out, "nli.tsv"), nli);

  data::save_sts(toy.probes, join_path(o.out, "probes.json"));

  const nlohmann::json echo = {{"command", "gen-toy"},     {"seed", o.seed},
                               {"n_clusters", o.clusters}, {"per_cluster", o.per_cluster},
                               {"vocab_size", o.vocab},    {"len_min", o.len_min},
                               {"len_max", o.len_max}};
  io::write_file_atomic(join_path(o.out, "effective_config.json"), echo.dump(2) + "\n");
  std::printf("wrote %zu sentences, %zu triplets, %zu probe subsets to %s\n",
              toy.sentences.size(), toy.triplets.size(), toy.probes.subsets.size(),
              o.out.c_str());
  return 0;
}

struct TrainOpts {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int steps = 0;
  bool steps_set = false;
  int epochs = 0;
  bool epochs_set = false;
  int batch_size = 0;
  bool batch_set = false;
  double lr = 0.0;
  bool lr_set = false;
  std::string dropout_mode;
  double dropout_p = 0.0;
  bool dropout_p_set = false;
  std::string objective;
  int probe_pairs = 0;
  bool probe_pairs_set = false;
  bool keep_best = false;
};

int run_train(const TrainOpts& o) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(o.config_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(o.config_path + ": bad JSON: " + e.what());
  }
  if (!j.is_object()) throw IoError(o.config_path + ": config root must be a JSON object");
  if (o.seed_set) j["seed"] = o.seed;
  if (o.steps_set) j["max_steps"] = o.steps;
  if (o.epochs_set) j["epochs"] = o.epochs;
  if (o.batch_set) j["batch_size"] = o.batch_size;
  if (o.lr_set) j["lr"] = o.lr;
  if (!o.dropout_mode.empty()) j["dropout"] = o.dropout_mode;
  if (o.dropout_p_set) j["encoder"]["dropout_p"] = o.dropout_p;
  if (!o.objective.empty()) j["objective"] = o.objective;
  if (o.probe_pairs_set) j["probe_pairs"] = o.probe_pairs;
  if (o.keep_best) j["keep_best"] = true;

  const TrainConfig cfg = train::parse_config(j.dump());
  const std::string base_dir = fs::path(o.config_path).parent_path().string();
  const TrainData data = train::load_train_data(cfg, base_dir);
  const TrainResult result = train::train_run(cfg, data);

  fs::create_directories(o.out);
  io::write_file_atomic(join_path(o.out, "effective_config.json"),
                        train::config_to_json(result.checkpoint.config));
  io::write_file_atomic(join_path(o.out, "trajectory.csv"), train::trajectory_to_csv(result.log));
  train::save_checkpoint(result.checkpoint, join_path(o.out, "checkpoint.bin"));

  if (result.aborted_nonfinite) {
    std::fprintf(stderr, "error: non-finite loss at step %d; kept the last finite checkpoint\n",
                 result.abort_step);
    return 2;
  }
  std::printf("trained %d steps; wrote checkpoint.bin and trajectory.csv to %s\n",
              result.checkpoint.step, o.out.c_str());
  return 0;
}

struct EvalOpts {
  std::string checkpoint;
  std::string manifest;
  std::string metric = "spearman";
  std::string agg = "all";
  std::string json_path;
};

int run_eval_sts(const EvalOpts& o) {
  const Checkpoint ckpt = train::load_checkpoint(o.checkpoint);
  const StsDataset dataset = data::load_sts(o.manifest);
  EvalConfig cfg;
  cfg.metric = o.metric == "pearson" ? Metric::pearson : Metric::spearman;
  cfg.aggregation = o.agg == "mean"    ? Aggregation::mean
                    : o.agg == "wmean" ? Aggregation::wmean
                                       : Aggregation::all;
  const std::vector<ScoredSubset> scored =
      evalproto::score_pairs(ckpt.models[0], dataset, ckpt.vocab);
  const EvalResult result = evalproto::evaluate(scored, cfg);

  std::fputs(evalproto::result_to_table(result).c_str(), stdout);
  const std::string json = evalproto::result_to_json(result, cfg);
  if (o.json_path.empty()) {
    std::fputs(json.c_str(), stdout);
  } else {
    io::write_file_atomic(o.json_path, json);
  }
  return 0;
}

struct AnalyzeOpts {
  std::string checkpoint;
  std::string probes;
  double tau = 0.05;
  int bands = 5;
  int bins = 20;
  double threshold = 4.0;
  int max_pairs = 0;
  std::string out = ".";
};

int run_analyze(const AnalyzeOpts& o) {
  const Checkpoint ckpt = train::load_checkpoint(o.checkpoint);
  const StsDataset sts = data::load_sts(o.probes);
  const ProbeSet probes = metrics::make_probe_set(sts, ckpt.vocab, o.threshold, o.max_pairs);
  DiagnosticsReport report = metrics::diagnose(ckpt.models[0], probes, o.tau);
  report.cosine_density = metrics::cosine_density(ckpt.models[0], probes, o.bands, o.bins);

  nlohmann::json out = nlohmann::json::parse(metrics::report_to_json(report));
  out["settings"] = {{"tau", o.tau},
                     {"n_bands", o.bands},
                     {"n_bins", o.bins},
                     {"threshold", o.threshold},
                     {"max_pairs", o.max_pairs}};
  fs::create_directories(o.out);
  io::write_file_atomic(join_path(o.out, "analysis.json"), out.dump(2) + "\n");
  io::write_file_atomic(join_path(o.out, "density.csv"),
                        metrics::density_to_csv(report.cosine_density));
  std::printf("align %.6f  uniform %.6f  sigma_max_ratio %.6f\n", report.align, report.uniform,
              report.sigma_max_ratio);
  return 0;
}

struct AugmentOpts {
  std::string in;
  std::string out;
  std::string op = "crop";
  double k = 20.0;
  std::uint64_t seed = 0;
  std::string synonyms;
};

int run_augment(const AugmentOpts& o) {
  const Corpus corpus = data::load_corpus(o.in);
  SynonymTable table;
  if (o.op == "synonym_replace") {
    if (o.synonyms.empty()) {
      throw ObjectiveDataMismatchError("--op synonym_replace needs --synonyms");
    }
    table = data::load_synonyms(o.synonyms, corpus.vocab);
  }

  std::string text;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const std::uint64_t seed = rng::hash_key({o.seed, static_cast<std::uint64_t>(i)});
    Sentence s;
    if (o.op == "crop") {
      s = augment::crop(corpus.sentences[i], o.k, seed);
    } else if (o.op == "word_delete") {
      s = augment::word_delete(corpus.sentences[i], o.k, seed);
    } else if (o.op == "delete_one_word") {
      s = augment::delete_one_word(corpus.sentences[i], seed);
    } else {
      s = augment::synonym_replace(corpus.sentences[i], table, seed);
    }
    for (std::size_t t = 0; t < s.size(); ++t) {
      if (t > 0) text += ' ';
      text += corpus.vocab.to_token[static_cast<std::size_t>(s[t])];
    }
    text += '\n';
  }
  io::write_file_atomic(o.out, text);
  // The corpus format is one sentence per line and cannot carry a header, so
  // the effective settings are echoed here instead.
  std::string settings = "op=" + o.op;
  if (o.op == "crop" || o.op == "word_delete") {
    char kbuf[32];
    std::snprintf(kbuf, sizeof(kbuf), " k=%g", o.k);
    settings += kbuf;
  }
  if (o.op == "synonym_replace") settings += " synonyms=" + o.synonyms;
  settings += " seed=" + std::to_string(o.seed);
  std::printf("augmented %zu sentences (%s)\n", corpus.sentences.size(), settings.c_str());
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"simcse-kit: contrastive sentence embeddings at desk scale"};
  app.require_subcommand(1);

  GenToyOpts gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-toy", "Generate a clustered toy corpus with probes");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--clusters", gen.clusters, "Number of topic clusters");
  gen_cmd->add_option("--per-cluster", gen.per_cluster, "Sentences per cluster");
  gen_cmd->add_option("--vocab", gen.vocab, "Vocabulary size");
  gen_cmd->add_option("--len-min", gen.len_min, "Minimum sentence length");
  gen_cmd->add_option("--len-max", gen.len_max, "Maximum sentence length");

  TrainOpts tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train an encoder from a config JSON");
  train_cmd->add_option("--config", tr.config_path, "Config JSON path")->required();
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  CLI::Option* tr_seed = train_cmd->add_option("--seed", tr.seed, "Override config seed");
  CLI::Option* tr_steps = train_cmd->add_option("--steps", tr.steps, "Override max_steps");
  CLI::Option* tr_epochs = train_cmd->add_option("--epochs", tr.epochs, "Override epochs");
  CLI::Option* tr_batch = train_cmd->add_option("--batch-size", tr.batch_size, "Override batch size");
  CLI::Option* tr_lr = train_cmd->add_option("--lr", tr.lr, "Override learning rate");
  train_cmd->add_option("--dropout-mode", tr.dropout_mode, "fresh, fixed, or none")
      ->check(CLI::IsMember({"fresh", "fixed", "none"}));
  CLI::Option* tr_p = train_cmd->add_option("--dropout-p", tr.dropout_p, "Override dropout rate");
  train_cmd->add_option("--objective", tr.objective, "Override training objective")
      ->check(CLI::IsMember({"unsup_dropout", "unsup_augment", "next_sentence", "supervised",
                             "supervised_hard_neg"}));
  CLI::Option* tr_pp = train_cmd->add_option("--probe-pairs", tr.probe_pairs,
                                             "Override probe pair budget");
  train_cmd->add_flag("--keep-best", tr.keep_best, "Keep the best probe-Spearman checkpoint");

  EvalOpts ev;
  CLI::App* eval_cmd = app.add_subcommand("eval-sts", "Score a checkpoint on an STS manifest");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--manifest", ev.manifest, "STS manifest JSON")->required();
  eval_cmd->add_option("--metric", ev.metric, "spearman or pearson")
      ->check(CLI::IsMember({"spearman", "pearson"}));
  eval_cmd->add_option("--agg", ev.agg, "all, mean, or wmean")
      ->check(CLI::IsMember({"all", "mean", "wmean"}));
  eval_cmd->add_option("--json", ev.json_path, "Write the JSON result here instead of stdout");

  AnalyzeOpts an;
  CLI::App* an_cmd = app.add_subcommand("analyze", "Diagnostics for a checkpoint on probe pairs");
  an_cmd->add_option("--checkpoint", an.checkpoint, "Checkpoint path")->required();
  an_cmd->add_option("--probes", an.probes, "Probe STS manifest JSON")->required();
  an_cmd->add_option("--tau", an.tau, "Temperature for the asymptotic terms");
  an_cmd->add_option("--bands", an.bands, "Gold-score bands for the density plot");
  an_cmd->add_option("--bins", an.bins, "Cosine bins per band");
  an_cmd->add_option("--threshold", an.threshold, "Positive-pair gold threshold");
  an_cmd->add_option("--max-pairs", an.max_pairs, "Cap on probe pairs (0 = all)");
  an_cmd->add_option("--out", an.out, "Output directory");

  AugmentOpts au;
  CLI::App* au_cmd = app.add_subcommand("augment", "Preview an augmentation operator on a corpus");
  au_cmd->add_option("--in", au.in, "Input corpus, one sentence per line")->required();
  au_cmd->add_option("--out", au.out, "Output corpus path")->required();
  au_cmd->add_option("--op", au.op, "Operator")
      ->check(CLI::IsMember({"crop", "word_delete", "delete_one_word", "synonym_replace"}));
  au_cmd->add_option("--k", au.k, "Percent of tokens to crop or delete");
  au_cmd->add_option("--seed", au.seed, "Operator seed");
  au_cmd->add_option("--synonyms", au.synonyms, "Synonym table JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  tr.seed_set = tr_seed->count() > 0;
  tr.steps_set = tr_steps->count() > 0;
  tr.epochs_set = tr_epochs->count() > 0;
  tr.batch_set = tr_batch->count() > 0;
  tr.lr_set = tr_lr->count() > 0;
  tr.dropout_p_set = tr_p->count() > 0;
  tr.probe_pairs_set = tr_pp->count() > 0;

  try {
    if (gen_cmd->parsed()) return run_gen_toy(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval_sts(ev);
    if (an_cmd->parsed()) return run_analyze(an);
    return run_augment(au);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  }
}

}  // namespace simcse::cli
