#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "simcse/data.hpp"
#include "simcse/encoder.hpp"
#include "simcse/losses.hpp"

namespace simcse {

enum class Objective {
  unsup_dropout,        // positive = second encoding of the anchor
  unsup_augment,        // positive = augmented copy of the anchor
  next_sentence,        // positive = a following sentence from the corpus
  supervised,           // positive = entailment column
  supervised_hard_neg,  // + contradiction column as hard negatives
};

enum class EncoderMode { shared, dual };

/// Parameters of the augmentation objectives: op and k_percent drive
/// unsup_augment, window drives next_sentence.
struct AugmentSpec {
  std::string op = "crop";  // crop | word_delete | delete_one_word | synonym_replace
  double k_percent = 20.0;
  int window = 1;
};

/// Input file locations, resolved against the config file's directory.
struct DataPaths {
  std::string corpus;
  std::string triplets;
  std::string probes;
  std::string synonyms;
};

struct TrainConfig {
  int batch_size = 32;
  double lr = 1e-3;
  int epochs = 1;
  int steps_per_eval = 10;
  std::uint64_t seed = 0;
  Objective objective = Objective::unsup_dropout;
  AugmentSpec augment;
  EncoderMode encoder_mode = EncoderMode::shared;
  DropoutMode dropout = DropoutMode::fresh;
  LossConfig loss;
  EncoderConfig encoder;   // vocab_size 0 means "take it from the data"
  int max_steps = 0;       // > 0 caps the total step count, cycling epochs
  int probe_pairs = 512;   // probe pairs retained for the eval hook
  bool keep_best = false;  // return the best probe-Spearman checkpoint
  DataPaths data;
};

/// Everything a training run consumes, already tokenized.
struct TrainData {
  std::vector<Sentence> sentences;
  std::vector<TrainInstance> triplets;
  StsDataset probes;
  Vocab vocab;
  SynonymTable synonyms;
};

struct TrajectoryRecord {
  int step = 0;
  double loss = 0.0;
  double align = 0.0;
  double uniform = 0.0;
  double sigma_max_ratio = 0.0;
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

/// A resumable training snapshot; reloading and continuing reproduces the
/// uninterrupted run bit for bit because every random draw is derived from
/// (seed, step) rather than mutable generator state.
struct Checkpoint {
  TrainConfig config;
  std::uint64_t config_hash = 0;
  int step = 0;
  std::vector<EncoderModel> models;  // [anchor] or [anchor, positive]
  std::vector<AdamState> opt;
  Vocab vocab;
};

struct TrainHooks {
  std::function<void(int, const EmbeddingBatch&)> on_batch;
  std::function<void(const TrajectoryRecord&)> on_record;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrajectoryLog log;
  bool aborted_nonfinite = false;
  int abort_step = 0;
};

namespace train {

/// Parses and validates a config JSON document. Unknown keys are rejected;
/// a projection_head of "auto" resolves to train_only for the unsupervised
/// objectives and always for the supervised ones.
TrainConfig parse_config(const std::string& json_text);

/// Canonical JSON rendering (sorted keys, resolved enums); parse_config of
/// the output reproduces the config.
std::string config_to_json(const TrainConfig& cfg);

/// FNV-1a over the canonical JSON; stable across runs and builds.
std::uint64_t config_hash(const TrainConfig& cfg);

/// Loads corpus, probes, and per-objective extras from cfg.data, resolving
/// relative paths against base_dir.
TrainData load_train_data(const TrainConfig& cfg, const std::string& base_dir);

/// Standard bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) applied
/// in place.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr);

/// Encodes one window of instances into anchors/positives(/negatives) under
/// the step's dropout plans. models holds one encoder (shared) or two (dual:
/// anchors through the first, positives and negatives through the second).
EmbeddingBatch build_batch(const std::vector<TrainInstance>& instances, const TrainConfig& cfg,
                           const std::vector<EncoderModel>& models, int step);

/// Full training loop: per-epoch shuffling with ragged tails dropped, Adam
/// updates, and an eval hook at step 0, every steps_per_eval steps, and the
/// final step, recording the training loss plus probe alignment, uniformity,
/// and top-singular-value share. A non-finite loss stops the run and returns
/// the last finite state. Pass resume to continue a saved checkpoint; the
/// fields that drive parameter evolution must match the checkpoint's config,
/// while the step budget and recording knobs may differ (so a run can be
/// extended).
TrainResult train_run(const TrainConfig& cfg, const TrainData& data, const TrainHooks& hooks = {},
                      const Checkpoint* resume = nullptr);

/// CSV rendering with the header step,loss,align,uniform,sigma_max_ratio.
std::string trajectory_to_csv(const TrajectoryLog& log);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace train
}  // namespace simcse
