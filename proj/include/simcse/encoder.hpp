#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "simcse/numerics.hpp"

namespace simcse {

enum class Pooling { first_token, mean, first_last_avg };
enum class ProjectionHead { always, train_only, never };
enum class DropoutMode { fresh, fixed, none };
enum class Phase { train, eval };

/// Shape and behavior knobs of the encoder. d_model must be divisible by
/// n_heads; dropout_p must stay below 1.
struct EncoderConfig {
  int vocab_size = 0;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 64;
  int max_len = 32;
  double dropout_p = 0.1;
  Pooling pooling = Pooling::first_token;
  ProjectionHead projection_head = ProjectionHead::train_only;

  bool operator==(const EncoderConfig&) const = default;
};

/// How dropout masks are drawn for one forward pass. The mask bits are a pure
/// function of (seed, layer, role, element), so equal seeds reproduce equal
/// masks; mode none forces all-ones masks regardless of seed. fresh vs fixed
/// only matters to callers pairing two passes: fresh pairs use two seeds,
/// fixed pairs reuse one.
struct DropoutPlan {
  DropoutMode mode = DropoutMode::none;
  std::uint64_t seed = 0;
};

/// One named tensor inside the flat parameter array.
struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;

  std::size_t size() const {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    return n;
  }
};

/// Ordered tensor directory for the flat parameter array.
struct LayoutManifest {
  std::vector<TensorSpec> tensors;
  std::size_t total = 0;

  const TensorSpec& at(const std::string& name) const;
};

/// Tensor order: tok_embed, pos_embed, then per layer ln1_gamma, ln1_beta,
/// wq, bq, wk, bk, wv, bv, wo, bo, ln2_gamma, ln2_beta, w1, b1, w2, b2, and
/// finally proj_w, proj_b. Weight matrices are row-major [in][out].
LayoutManifest make_layout(const EncoderConfig& config);

/// Config plus flat parameters addressed through the layout manifest.
struct EncoderModel {
  EncoderConfig config;
  LayoutManifest layout;
  std::vector<double> parameters;

  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
};

/// N rows of token ids padded with id 0 to a common width. Row b is valid at
/// positions [0, lengths[b]); padding cells are never read.
struct TokenBatch {
  int rows = 0;
  int cols = 0;
  std::vector<int> ids;      // rows x cols, row-major
  std::vector<int> lengths;  // per row, in [1, cols]

  TokenBatch() = default;
  TokenBatch(int n, int l) : rows(n), cols(l), ids(static_cast<std::size_t>(n) * l, 0), lengths(static_cast<std::size_t>(n), 0) {}

  int& id(int b, int t) { return ids[static_cast<std::size_t>(b) * cols + t]; }
  int id(int b, int t) const { return ids[static_cast<std::size_t>(b) * cols + t]; }
};

namespace encoder {

/// Deterministic initialization: Xavier-uniform bound sqrt(6/(fan_in+fan_out))
/// for weight matrices, zeros for biases and LayerNorm shifts, ones for
/// LayerNorm scales, normal(0, 0.02) for both embedding tables.
EncoderModel init_params(const EncoderConfig& config, std::uint64_t seed);

/// Sentence embeddings, one row per batch row. Pre-norm transformer blocks
/// with no final LayerNorm; dropout only on attention probabilities and
/// feed-forward hidden activations, inverted-scaled by 1/(1-p). Pooling and
/// projection-head application follow the config (train_only heads are
/// skipped in eval). Deterministic given (parameters, batch, plan.seed,
/// phase).
/// Throws InvalidPlanError (eval with stochastic dropout), LengthOverflowError
/// (a row longer than max_len), DimMismatchError (malformed batch or ids).
Mat encode(const EncoderModel& model, const TokenBatch& batch, const DropoutPlan& plan,
           Phase phase);

/// Forward output plus the recorded activations needed for the backward pass.
struct ForwardRecord {
  Mat output;
  struct Tape;
  std::shared_ptr<const Tape> tape;
};

ForwardRecord encode_recorded(const EncoderModel& model, const TokenBatch& batch,
                              const DropoutPlan& plan, Phase phase);

/// Gradient of <upstream, record.output> with respect to every parameter,
/// in flat layout order, reusing the recorded dropout masks.
/// Throws PlanMismatchError when the record was not produced by a model of
/// this shape (or carries no tape), DimMismatchError on upstream shape.
std::vector<double> encode_backward(const EncoderModel& model, const ForwardRecord& record,
                                    const Mat& upstream);

/// One-call forward+backward in the train phase: gradient of
/// <upstream, encode(model, batch, plan, train)> for every parameter.
std::vector<double> encode_with_grad(const EncoderModel& model, const TokenBatch& batch,
                                     const DropoutPlan& plan, const Mat& upstream);

/// Central-difference audit of encode_with_grad over every parameter.
/// Returns the max relative error with denominator
/// max(|analytic|, |numeric|, 1e-6). The floor absorbs central-difference
/// cancellation noise on structurally-zero gradients (e.g. key biases, which
/// shift every attention logit equally and cancel in the softmax).
double param_grad_check(const EncoderModel& model, const TokenBatch& batch,
                        const DropoutPlan& plan, const Mat& upstream, double epsilon);

}  // namespace encoder
}  // namespace simcse
