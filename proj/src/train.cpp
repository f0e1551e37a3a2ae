#include "simcse/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <utility>

#include <json.hpp>

#include "simcse/augment.hpp"
#include "simcse/embed.hpp"
#include "simcse/errors.hpp"
#include "simcse/io.hpp"
#include "simcse/metrics.hpp"
#include "simcse/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace simcse::train {
namespace {

constexpr char kMagic[9] = "SCSEKIT1";

// ---------------------------------------------------------------- enum names

template <typename E>
struct NamedValue {
  E value;
  const char* name;
};

constexpr NamedValue<Objective> kObjectives[] = {
    {Objective::unsup_dropout, "unsup_dropout"},
    {Objective::unsup_augment, "unsup_augment"},
    {Objective::next_sentence, "next_sentence"},
    {Objective::supervised, "supervised"},
    {Objective::supervised_hard_neg, "supervised_hard_neg"},
};
constexpr NamedValue<EncoderMode> kEncoderModes[] = {
    {EncoderMode::shared, "shared"},
    {EncoderMode::dual, "dual"},
};
constexpr NamedValue<DropoutMode> kDropoutModes[] = {
    {DropoutMode::fresh, "fresh"},
    {DropoutMode::fixed, "fixed"},
    {DropoutMode::none, "none"},
};
constexpr NamedValue<Similarity> kSimilarities[] = {
    {Similarity::cosine, "cosine"},
    {Similarity::dot, "dot"},
};
constexpr NamedValue<Pooling> kPoolings[] = {
    {Pooling::first_token, "first_token"},
    {Pooling::mean, "mean"},
    {Pooling::first_last_avg, "first_last_avg"},
};
constexpr NamedValue<ProjectionHead> kProjectionHeads[] = {
    {ProjectionHead::always, "always"},
    {ProjectionHead::train_only, "train_only"},
    {ProjectionHead::never, "never"},
};

template <typename E, std::size_t N>
const char* name_of(const NamedValue<E> (&table)[N], E value) {
  for (const auto& entry : table) {
    if (entry.value == value) return entry.name;
  }
  throw IoError("unnamed enum value");
}

template <typename E, std::size_t N>
E value_of(const NamedValue<E> (&table)[N], const std::string& name, const char* field) {
  for (const auto& entry : table) {
    if (name == entry.name) return entry.value;
  }
  throw IoError(std::string("config: unknown ") + field + " '" + name + "'");
}

// ------------------------------------------------------------ config parsing

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return key == k; }) == allowed.end()) {
      throw IoError(std::string("config: unknown key '") + key + "' in " + where);
    }
  }
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) {
    throw DimMismatchError("batch_size must be at least 2 for in-batch negatives");
  }
  if (!(cfg.lr >= 0.0)) throw DimMismatchError("lr must be non-negative");
  if (cfg.epochs < 1) throw DimMismatchError("epochs must be at least 1");
  if (cfg.steps_per_eval < 1) throw DimMismatchError("steps_per_eval must be at least 1");
  if (cfg.max_steps < 0) throw DimMismatchError("max_steps must be non-negative");
  if (cfg.probe_pairs < 0) throw DimMismatchError("probe_pairs must be non-negative");
  if (!(cfg.loss.tau > 0.0)) throw DimMismatchError("loss.tau must be positive");
  if (!(cfg.loss.alpha >= 0.0)) throw DimMismatchError("loss.alpha must be non-negative");
  if (!(cfg.augment.k_percent >= 0.0 && cfg.augment.k_percent < 100.0)) {
    throw DimMismatchError("augment.k_percent must lie in [0, 100)");
  }
  if (cfg.augment.window < 1) throw DimMismatchError("augment.window must be at least 1");
  const char* ops[] = {"crop", "word_delete", "delete_one_word", "synonym_replace"};
  if (std::find_if(std::begin(ops), std::end(ops),
                   [&](const char* op) { return cfg.augment.op == op; }) == std::end(ops)) {
    throw IoError("config: unknown augment.op '" + cfg.augment.op + "'");
  }
  const EncoderConfig& e = cfg.encoder;
  if (e.vocab_size < 0 || e.d_model < 1 || e.n_layers < 1 || e.n_heads < 1 || e.d_ff < 1 ||
      e.max_len < 2) {
    throw DimMismatchError("encoder sizes must be positive (max_len at least 2)");
  }
  if (e.d_model % e.n_heads != 0) throw DimMismatchError("d_model must divide into n_heads");
  if (!(e.dropout_p >= 0.0 && e.dropout_p < 1.0)) {
    throw DimMismatchError("encoder.dropout_p must lie in [0, 1)");
  }
}

bool is_supervised(Objective o) {
  return o == Objective::supervised || o == Objective::supervised_hard_neg;
}

}  // namespace

TrainConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config: bad JSON: ") + e.what());
  }
  if (!j.is_object()) throw IoError("config: root must be a JSON object");

  TrainConfig cfg;
  try {
    reject_unknown_keys(j,
                        {"batch_size", "lr", "epochs", "steps_per_eval", "seed", "objective",
                         "augment", "encoder_mode", "dropout", "loss", "encoder", "max_steps",
                         "probe_pairs", "keep_best", "data"},
                        "the top level");
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.steps_per_eval = j.value("steps_per_eval", cfg.steps_per_eval);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.max_steps = j.value("max_steps", cfg.max_steps);
    cfg.probe_pairs = j.value("probe_pairs", cfg.probe_pairs);
    cfg.keep_best = j.value("keep_best", cfg.keep_best);
    if (j.contains("objective")) {
      cfg.objective = value_of(kObjectives, j["objective"].get<std::string>(), "objective");
    }
    if (j.contains("encoder_mode")) {
      cfg.encoder_mode =
          value_of(kEncoderModes, j["encoder_mode"].get<std::string>(), "encoder_mode");
    }
    if (j.contains("dropout")) {
      cfg.dropout = value_of(kDropoutModes, j["dropout"].get<std::string>(), "dropout");
    }
    if (j.contains("augment")) {
      const nlohmann::json& a = j["augment"];
      reject_unknown_keys(a, {"op", "k_percent", "window"}, "augment");
      cfg.augment.op = a.value("op", cfg.augment.op);
      cfg.augment.k_percent = a.value("k_percent", cfg.augment.k_percent);
      cfg.augment.window = a.value("window", cfg.augment.window);
    }
    if (j.contains("loss")) {
      const nlohmann::json& l = j["loss"];
      reject_unknown_keys(l, {"tau", "alpha", "similarity"}, "loss");
      cfg.loss.tau = l.value("tau", cfg.loss.tau);
      cfg.loss.alpha = l.value("alpha", cfg.loss.alpha);
      if (l.contains("similarity")) {
        cfg.loss.similarity =
            value_of(kSimilarities, l["similarity"].get<std::string>(), "loss.similarity");
      }
    }
    bool projection_set = false;
    if (j.contains("encoder")) {
      const nlohmann::json& e = j["encoder"];
      reject_unknown_keys(e,
                          {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_len",
                           "dropout_p", "pooling", "projection_head"},
                          "encoder");
      cfg.encoder.vocab_size = e.value("vocab_size", cfg.encoder.vocab_size);
      cfg.encoder.d_model = e.value("d_model", cfg.encoder.d_model);
      cfg.encoder.n_layers = e.value("n_layers", cfg.encoder.n_layers);
      cfg.encoder.n_heads = e.value("n_heads", cfg.encoder.n_heads);
      cfg.encoder.d_ff = e.value("d_ff", cfg.encoder.d_ff);
      cfg.encoder.max_len = e.value("max_len", cfg.encoder.max_len);
      cfg.encoder.dropout_p = e.value("dropout_p", cfg.encoder.dropout_p);
      if (e.contains("pooling")) {
        cfg.encoder.pooling = value_of(kPoolings, e["pooling"].get<std::string>(), "pooling");
      }
      if (e.contains("projection_head")) {
        const std::string head = e["projection_head"].get<std::string>();
        if (head != "auto") {
          cfg.encoder.projection_head = value_of(kProjectionHeads, head, "projection_head");
          projection_set = true;
        }
      }
    }
    if (!projection_set) {
      cfg.encoder.projection_head =
          is_supervised(cfg.objective) ? ProjectionHead::always : ProjectionHead::train_only;
    }
    if (j.contains("data")) {
      const nlohmann::json& d = j["data"];
      reject_unknown_keys(d, {"corpus", "triplets", "probes", "synonyms"}, "data");
      cfg.data.corpus = d.value("corpus", cfg.data.corpus);
      cfg.data.triplets = d.value("triplets", cfg.data.triplets);
      cfg.data.probes = d.value("probes", cfg.data.probes);
      cfg.data.synonyms = d.value("synonyms", cfg.data.synonyms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
  const nlohmann::json j = {
      {"batch_size", cfg.batch_size},
      {"lr", cfg.lr},
      {"epochs", cfg.epochs},
      {"steps_per_eval", cfg.steps_per_eval},
      {"seed", cfg.seed},
      {"objective", name_of(kObjectives, cfg.objective)},
      {"augment",
       {{"op", cfg.augment.op},
        {"k_percent", cfg.augment.k_percent},
        {"window", cfg.augment.window}}},
      {"encoder_mode", name_of(kEncoderModes, cfg.encoder_mode)},
      {"dropout", name_of(kDropoutModes, cfg.dropout)},
      {"loss",
       {{"tau", cfg.loss.tau},
        {"alpha", cfg.loss.alpha},
        {"similarity", name_of(kSimilarities, cfg.loss.similarity)}}},
      {"encoder",
       {{"vocab_size", cfg.encoder.vocab_size},
        {"d_model", cfg.encoder.d_model},
        {"n_layers", cfg.encoder.n_layers},
        {"n_heads", cfg.encoder.n_heads},
        {"d_ff", cfg.encoder.d_ff},
        {"max_len", cfg.encoder.max_len},
        {"dropout_p", cfg.encoder.dropout_p},
        {"pooling", name_of(kPoolings, cfg.encoder.pooling)},
        {"projection_head", name_of(kProjectionHeads, cfg.encoder.projection_head)}}},
      {"max_steps", cfg.max_steps},
      {"probe_pairs", cfg.probe_pairs},
      {"keep_best", cfg.keep_best},
      {"data",
       {{"corpus", cfg.data.corpus},
        {"triplets", cfg.data.triplets},
        {"probes", cfg.data.probes},
        {"synonyms", cfg.data.synonyms}}},
  };
  return j.dump(2) + "\n";
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  const std::string text = config_to_json(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

/// Hash of only the fields that drive parameter evolution. Budget and
/// recording knobs (epochs, max_steps, steps_per_eval, probe_pairs,
/// keep_best) and data paths are excluded so a run can be resumed with a
/// longer step budget and still continue bit-identically.
std::uint64_t identity_hash(const TrainConfig& cfg) {
  TrainConfig reduced = cfg;
  reduced.epochs = 1;
  reduced.max_steps = 0;
  reduced.steps_per_eval = 1;
  reduced.probe_pairs = 0;
  reduced.keep_best = false;
  reduced.data = DataPaths{};
  return config_hash(reduced);
}

}  // namespace

TrainData load_train_data(const TrainConfig& cfg, const std::string& base_dir) {
  const auto resolve = [&](const std::string& path) {
    if (path.empty() || base_dir.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string();
  };
  if (cfg.data.corpus.empty()) {
    throw ObjectiveDataMismatchError("data.corpus is required (it defines the vocabulary)");
  }
  if (cfg.data.probes.empty()) {
    throw ObjectiveDataMismatchError("data.probes is required for the evaluation hook");
  }
  TrainData data;
  Corpus corpus = data::load_corpus(resolve(cfg.data.corpus));
  data.sentences = std::move(corpus.sentences);
  data.vocab = std::move(corpus.vocab);
  data.probes = data::load_sts(resolve(cfg.data.probes));
  if (!cfg.data.triplets.empty()) {
    data.triplets = data::load_nli_triplets(resolve(cfg.data.triplets), data.vocab);
  }
  if (!cfg.data.synonyms.empty()) {
    data.synonyms = data::load_synonyms(resolve(cfg.data.synonyms), data.vocab);
  }
  if (is_supervised(cfg.objective) && data.triplets.empty()) {
    throw ObjectiveDataMismatchError("supervised objectives need data.triplets");
  }
  if (cfg.objective == Objective::unsup_augment && cfg.augment.op == "synonym_replace" &&
      data.synonyms.empty()) {
    throw ObjectiveDataMismatchError("synonym_replace needs a non-empty data.synonyms table");
  }
  return data;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size()) {
    throw DimMismatchError("adam_step size mismatch");
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  state.t += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * g;
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
  }
}

namespace {

// ----------------------------------------------------------- batch assembly

struct SidePlans {
  DropoutPlan anchor;
  DropoutPlan positive;
  DropoutPlan negative;
};

SidePlans plans_for(const TrainConfig& cfg, int step) {
  switch (cfg.dropout) {
    case DropoutMode::none:
      return {{DropoutMode::none, 0}, {DropoutMode::none, 0}, {DropoutMode::none, 0}};
    case DropoutMode::fixed: {
      const DropoutPlan fixed{DropoutMode::fixed, cfg.seed};
      return {fixed, fixed, fixed};
    }
    default: {
      const auto side_seed = [&](std::uint64_t side) {
        return rng::hash_key({cfg.seed, static_cast<std::uint64_t>(step), side});
      };
      return {{DropoutMode::fresh, side_seed(0)},
              {DropoutMode::fresh, side_seed(1)},
              {DropoutMode::fresh, side_seed(2)}};
    }
  }
}

enum class Side { anchor, positive, negative };

TokenBatch pack_side(const std::vector<TrainInstance>& instances, Side side,
                     const TrainConfig& cfg, int max_len) {
  std::vector<Sentence> rows;
  rows.reserve(instances.size());
  for (const TrainInstance& inst : instances) {
    switch (side) {
      case Side::anchor:
        rows.push_back(inst.anchor);
        break;
      case Side::positive:
        if (cfg.objective == Objective::unsup_dropout) {
          rows.push_back(inst.anchor);
        } else if (inst.positive.has_value()) {
          rows.push_back(*inst.positive);
        } else {
          throw ObjectiveDataMismatchError("instance lacks the positive this objective needs");
        }
        break;
      case Side::negative:
        if (!inst.hard_negative.has_value()) {
          throw ObjectiveDataMismatchError("instance lacks the hard negative this objective needs");
        }
        rows.push_back(*inst.hard_negative);
        break;
    }
  }
  return embed::make_token_batch(rows, max_len);
}

const EncoderModel& positive_model(const std::vector<EncoderModel>& models) {
  return models.back();
}

struct StepEncodings {
  EmbeddingBatch batch;
  encoder::ForwardRecord rec_anchor;
  encoder::ForwardRecord rec_positive;
  std::optional<encoder::ForwardRecord> rec_negative;
};

StepEncodings encode_step(const std::vector<TrainInstance>& instances, const TrainConfig& cfg,
                          const std::vector<EncoderModel>& models, int step) {
  const SidePlans plans = plans_for(cfg, step);
  const int max_len = models[0].config.max_len;
  StepEncodings enc;
  enc.rec_anchor = encoder::encode_recorded(models[0], pack_side(instances, Side::anchor, cfg, max_len),
                                            plans.anchor, Phase::train);
  enc.rec_positive =
      encoder::encode_recorded(positive_model(models), pack_side(instances, Side::positive, cfg, max_len),
                               plans.positive, Phase::train);
  enc.batch.anchors = enc.rec_anchor.output;
  enc.batch.positives = enc.rec_positive.output;
  if (cfg.objective == Objective::supervised_hard_neg) {
    enc.rec_negative =
        encoder::encode_recorded(positive_model(models), pack_side(instances, Side::negative, cfg, max_len),
                                 plans.negative, Phase::train);
    enc.batch.negatives = enc.rec_negative->output;
  }
  return enc;
}

// ------------------------------------------------------------ instance prep

Sentence apply_augment(const Sentence& s, const AugmentSpec& spec, const SynonymTable& synonyms,
                       std::uint64_t seed) {
  if (spec.op == "crop") return augment::crop(s, spec.k_percent, seed);
  if (spec.op == "word_delete") return augment::word_delete(s, spec.k_percent, seed);
  if (spec.op == "delete_one_word") return augment::delete_one_word(s, seed);
  return augment::synonym_replace(s, synonyms, seed);
}

std::vector<TrainInstance> materialize_instances(const TrainConfig& cfg, const TrainData& data) {
  std::vector<TrainInstance> instances;
  switch (cfg.objective) {
    case Objective::unsup_dropout:
      for (const Sentence& s : data.sentences) instances.push_back({s, std::nullopt, std::nullopt});
      break;
    case Objective::unsup_augment:
      for (std::size_t i = 0; i < data.sentences.size(); ++i) {
        const Sentence& s = data.sentences[i];
        const std::uint64_t seed = rng::hash_key({cfg.seed, static_cast<std::uint64_t>(i)});
        instances.push_back({s, apply_augment(s, cfg.augment, data.synonyms, seed), std::nullopt});
      }
      break;
    case Objective::next_sentence:
      for (const auto& [i, j] :
           augment::next_sentence_pairs(data.sentences, cfg.augment.window, cfg.seed)) {
        instances.push_back({data.sentences[static_cast<std::size_t>(i)],
                             data.sentences[static_cast<std::size_t>(j)], std::nullopt});
      }
      break;
    case Objective::supervised:
    case Objective::supervised_hard_neg:
      instances = data.triplets;
      break;
  }
  if (static_cast<int>(instances.size()) < cfg.batch_size) {
    throw ObjectiveDataMismatchError("need at least batch_size instances, have " +
                                     std::to_string(instances.size()));
  }
  return instances;
}

std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng::Stream st(rng::kDomainShuffle, {seed, static_cast<std::uint64_t>(epoch)});
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(st.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

// -------------------------------------------------------------- probe stats

struct ProbeStats {
  double align = 0.0;
  double uniform = 0.0;
  double sigma_max_ratio = 0.0;
  double spearman = std::numeric_limits<double>::quiet_NaN();
};

ProbeStats eval_probe(const EncoderModel& model, const ProbeSet& probe, bool want_spearman) {
  ProbeStats stats;
  const Mat a = numerics::normalize_rows(embed::encode_sentences(model, probe.pair_a));
  const Mat b = numerics::normalize_rows(embed::encode_sentences(model, probe.pair_b));
  stats.align = losses::alignment(a, b);

  const Mat pool = numerics::normalize_rows(embed::encode_sentences(model, probe.pool));
  stats.uniform = losses::uniformity(pool);
  const std::vector<double> sigma = numerics::singular_values(pool);
  double total = 0.0;
  for (const double s : sigma) total += s;
  stats.sigma_max_ratio = sigma[0] / total;

  if (want_spearman) {
    const Mat ea = embed::encode_sentences(model, probe.scored_a);
    const Mat eb = embed::encode_sentences(model, probe.scored_b);
    std::vector<double> sims(probe.golds.size());
    for (std::size_t i = 0; i < sims.size(); ++i) {
      sims[i] = numerics::cosine_sim(ea.row(static_cast<int>(i)), eb.row(static_cast<int>(i)));
    }
    try {
      stats.spearman = numerics::spearman(sims, probe.golds);
    } catch (const DegenerateSeriesError&) {
    }
  }
  return stats;
}

void append_scaled(std::vector<double>& into, const std::vector<double>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

}  // namespace

EmbeddingBatch build_batch(const std::vector<TrainInstance>& instances, const TrainConfig& cfg,
                           const std::vector<EncoderModel>& models, int step) {
  if (instances.empty()) throw DimMismatchError("build_batch needs at least one instance");
  if (models.empty() || (cfg.encoder_mode == EncoderMode::dual && models.size() != 2)) {
    throw DimMismatchError("build_batch needs one encoder (shared) or two (dual)");
  }
  const SidePlans plans = plans_for(cfg, step);
  const int max_len = models[0].config.max_len;
  EmbeddingBatch batch;
  batch.anchors = encoder::encode(models[0], pack_side(instances, Side::anchor, cfg, max_len),
                                  plans.anchor, Phase::train);
  batch.positives =
      encoder::encode(positive_model(models), pack_side(instances, Side::positive, cfg, max_len),
                      plans.positive, Phase::train);
  if (cfg.objective == Objective::supervised_hard_neg) {
    batch.negatives =
        encoder::encode(positive_model(models), pack_side(instances, Side::negative, cfg, max_len),
                        plans.negative, Phase::train);
  }
  return batch;
}

TrainResult train_run(const TrainConfig& cfg_in, const TrainData& data, const TrainHooks& hooks,
                      const Checkpoint* resume) {
  TrainConfig cfg = cfg_in;
  if (cfg.encoder.vocab_size == 0) cfg.encoder.vocab_size = data.vocab.size();
  validate_config(cfg);
  const std::uint64_t hash = config_hash(cfg);

  const std::vector<TrainInstance> instances = materialize_instances(cfg, data);
  const int n = static_cast<int>(instances.size());
  const int steps_per_epoch = n / cfg.batch_size;
  const int total_steps =
      cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * steps_per_epoch;

  std::vector<EncoderModel> models;
  std::vector<AdamState> opt;
  int start_step = 0;
  if (resume != nullptr) {
    if (identity_hash(resume->config) != identity_hash(cfg)) {
      throw PlanMismatchError("resume checkpoint was trained under a different config");
    }
    models = resume->models;
    opt = resume->opt;
    start_step = resume->step;
  } else {
    models.push_back(encoder::init_params(cfg.encoder, cfg.seed));
    if (cfg.encoder_mode == EncoderMode::dual) {
      models.push_back(encoder::init_params(cfg.encoder, rng::hash_key({cfg.seed, 1})));
    }
    for (const EncoderModel& m : models) {
      AdamState state;
      state.m.assign(m.parameters.size(), 0.0);
      state.v.assign(m.parameters.size(), 0.0);
      opt.push_back(std::move(state));
    }
  }

  const ProbeSet probe = metrics::make_probe_set(data.probes, data.vocab, 4.0, cfg.probe_pairs);

  TrainResult result;
  auto snapshot = [&](int step) {
    return Checkpoint{cfg, hash, step, models, opt, data.vocab};
  };
  auto window_at = [&](int step) {
    const int epoch = (step - 1) / steps_per_epoch;
    const int slot = (step - 1) % steps_per_epoch;
    const std::vector<int> order = epoch_order(n, cfg.seed, epoch);
    std::vector<TrainInstance> window;
    window.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int k = 0; k < cfg.batch_size; ++k) {
      window.push_back(instances[static_cast<std::size_t>(order[static_cast<std::size_t>(
          slot * cfg.batch_size + k)])]);
    }
    return window;
  };
  const auto loss_of = [&](const EmbeddingBatch& batch) {
    return cfg.objective == Objective::supervised_hard_neg ? losses::supervised_loss(batch, cfg.loss)
                                                           : losses::infonce_loss(batch, cfg.loss);
  };
  auto record_eval = [&](int step, double loss_value, bool want_spearman) {
    const ProbeStats stats = eval_probe(models[0], probe, want_spearman);
    const TrajectoryRecord rec{step, loss_value, stats.align, stats.uniform,
                               stats.sigma_max_ratio};
    result.log.records.push_back(rec);
    if (hooks.on_record) hooks.on_record(rec);
    return stats;
  };

  if (start_step == 0 && total_steps > 0) {
    const EmbeddingBatch first = build_batch(window_at(1), cfg, models, 1);
    record_eval(0, loss_of(first).value, false);
  }

  Checkpoint best;
  double best_spearman = -std::numeric_limits<double>::infinity();
  for (int step = start_step + 1; step <= total_steps; ++step) {
    const std::vector<TrainInstance> window = window_at(step);
    const StepEncodings enc = encode_step(window, cfg, models, step);
    if (hooks.on_batch) hooks.on_batch(step, enc.batch);

    LossOutput loss;
    try {
      loss = loss_of(enc.batch);
    } catch (const NonFiniteLossError&) {
      result.checkpoint = snapshot(step - 1);
      result.aborted_nonfinite = true;
      result.abort_step = step;
      return result;
    }

    std::vector<double> grad_anchor = encoder::encode_backward(models[0], enc.rec_anchor,
                                                               loss.grad_anchors);
    std::vector<double> grad_positive = encoder::encode_backward(
        positive_model(models), enc.rec_positive, loss.grad_positives);
    if (enc.rec_negative.has_value()) {
      append_scaled(grad_positive, encoder::encode_backward(positive_model(models),
                                                            *enc.rec_negative,
                                                            *loss.grad_negatives));
    }
    if (cfg.encoder_mode == EncoderMode::shared) {
      append_scaled(grad_anchor, grad_positive);
      adam_step(models[0].parameters, grad_anchor, opt[0], cfg.lr);
    } else {
      adam_step(models[0].parameters, grad_anchor, opt[0], cfg.lr);
      adam_step(models[1].parameters, grad_positive, opt[1], cfg.lr);
    }

    if (step % cfg.steps_per_eval == 0 || step == total_steps) {
      const ProbeStats stats = record_eval(step, loss.value, cfg.keep_best);
      if (cfg.keep_best && stats.spearman > best_spearman) {
        best_spearman = stats.spearman;
        best = snapshot(step);
      }
    }
  }

  result.checkpoint = cfg.keep_best && std::isfinite(best_spearman) ? best : snapshot(total_steps);
  return result;
}

std::string trajectory_to_csv(const TrajectoryLog& log) {
  std::string csv = "step,loss,align,uniform,sigma_max_ratio\n";
  char buf[256];
  for (const TrajectoryRecord& rec : log.records) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", rec.step, rec.loss, rec.align,
                  rec.uniform, rec.sigma_max_ratio);
    csv += buf;
  }
  return csv;
}

namespace {

void append_u64(std::string& blob, std::uint64_t value) {
  char bytes[8];
  std::memcpy(bytes, &value, 8);
  blob.append(bytes, 8);
}

void append_doubles(std::string& blob, const std::vector<double>& values) {
  const std::size_t bytes = values.size() * sizeof(double);
  const std::size_t at = blob.size();
  blob.resize(at + bytes);
  std::memcpy(blob.data() + at, values.data(), bytes);
}

std::vector<double> read_doubles(const std::string& blob, std::size_t& cursor, std::size_t count,
                                 const std::string& path) {
  const std::size_t bytes = count * sizeof(double);
  if (cursor + bytes > blob.size()) throw IoError(path + ": checkpoint truncated");
  std::vector<double> values(count);
  std::memcpy(values.data(), blob.data() + cursor, bytes);
  cursor += bytes;
  return values;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json models = nlohmann::json::array();
  for (const EncoderModel& m : ckpt.models) models.push_back({{"param_count", m.parameters.size()}});
  nlohmann::json adam_t = nlohmann::json::array();
  for (const AdamState& s : ckpt.opt) adam_t.push_back(s.t);
  const nlohmann::json header = {{"version", 1},
                                 {"config", nlohmann::json::parse(config_to_json(ckpt.config))},
                                 {"config_hash", ckpt.config_hash},
                                 {"step", ckpt.step},
                                 {"models", models},
                                 {"adam_t", adam_t},
                                 {"vocab", ckpt.vocab.to_token}};
  const std::string head = header.dump();

  std::string blob(kMagic, 8);
  append_u64(blob, head.size());
  blob += head;
  for (const EncoderModel& m : ckpt.models) append_doubles(blob, m.parameters);
  for (const AdamState& s : ckpt.opt) {
    append_doubles(blob, s.m);
    append_doubles(blob, s.v);
  }
  io::write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string blob = io::read_file(path);
  if (blob.size() < 16 || blob.compare(0, 8, kMagic, 8) != 0) {
    throw IoError(path + ": not a simcse-kit checkpoint");
  }
  std::uint64_t head_len = 0;
  std::memcpy(&head_len, blob.data() + 8, 8);
  if (16 + head_len > blob.size()) throw IoError(path + ": checkpoint truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint header: " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = parse_config(header.at("config").dump());
    ckpt.config_hash = header.at("config_hash").get<std::uint64_t>();
    ckpt.step = header.at("step").get<int>();
    const auto tokens = header.at("vocab").get<std::vector<std::string>>();
    for (const std::string& tok : tokens) ckpt.vocab.add(tok);
    if (ckpt.vocab.size() < 3 || ckpt.vocab.to_token[0] != "<pad>" ||
        ckpt.vocab.to_token[1] != "<bos>" || ckpt.vocab.to_token[2] != "<unk>") {
      throw IoError(path + ": checkpoint vocabulary lacks the reserved tokens");
    }

    std::size_t cursor = 16 + head_len;
    for (const auto& meta : header.at("models")) {
      EncoderModel m;
      m.config = ckpt.config.encoder;
      m.layout = make_layout(m.config);
      if (meta.at("param_count").get<std::size_t>() != m.layout.total) {
        throw IoError(path + ": checkpoint parameter count does not match its config");
      }
      m.parameters = read_doubles(blob, cursor, m.layout.total, path);
      ckpt.models.push_back(std::move(m));
    }
    const auto adam_t = header.at("adam_t").get<std::vector<std::int64_t>>();
    if (adam_t.size() != ckpt.models.size()) throw IoError(path + ": malformed optimizer state");
    for (std::size_t i = 0; i < ckpt.models.size(); ++i) {
      AdamState state;
      state.t = adam_t[i];
      state.m = read_doubles(blob, cursor, ckpt.models[i].parameters.size(), path);
      state.v = read_doubles(blob, cursor, ckpt.models[i].parameters.size(), path);
      ckpt.opt.push_back(std::move(state));
    }
    if (cursor != blob.size()) throw IoError(path + ": trailing bytes after checkpoint payload");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint header: " + e.what());
  }
  if (config_hash(ckpt.config) != ckpt.config_hash) {
    throw IoError(path + ": checkpoint config hash mismatch");
  }
  return ckpt;
}

}  // namespace simcse::train
