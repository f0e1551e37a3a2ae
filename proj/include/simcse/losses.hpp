#pragma once

#include <optional>

#include "simcse/numerics.hpp"

namespace simcse {

enum class Similarity { cosine, dot };

/// Temperature, hard-negative weight and similarity metric for the
/// contrastive objectives. Defaults: tau = 0.05 with cosine similarity,
/// alpha = 1 (plain hard negatives).
struct LossConfig {
  double tau = 0.05;
  double alpha = 1.0;
  Similarity similarity = Similarity::cosine;
};

/// N anchors with row-aligned positives and optional hard negatives.
struct EmbeddingBatch {
  Mat anchors;                    // N x d
  Mat positives;                  // N x d
  std::optional<Mat> negatives;   // N x d when present

  int size() const { return anchors.rows; }
  int dim() const { return anchors.cols; }
};

/// Scalar loss plus exact gradients with respect to every input embedding.
struct LossOutput {
  double value = 0.0;
  Mat grad_anchors;
  Mat grad_positives;
  std::optional<Mat> grad_negatives;
};

namespace losses {

/// In-batch-negative cross-entropy: anchor i must pick its own positive out
/// of all N positives. Mean over anchors; log-sum-exp stabilized.
/// Throws ZeroNormError (cosine path), NonFiniteLossError.
LossOutput infonce_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

/// As infonce_loss but every anchor's denominator also contains all N hard
/// negatives, the matching one weighted by alpha (others weight 1). alpha = 1
/// gives the unweighted hard-negative objective.
/// Throws MissingHardNegativesError when batch.negatives is absent.
LossOutput supervised_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

/// Mean squared distance between row-aligned positive pairs. Inputs must be
/// row-normalized (tol 1e-8). Lower is better.
double alignment(const Mat& a, const Mat& b);

/// Log mean Gaussian-kernel value e^{-2 d^2} over all unordered distinct row
/// pairs. Inputs row-normalized; needs at least 2 rows. Lower is better.
double uniformity(const Mat& x);

struct AsymptoticTerms {
  double align_term = 0.0;          // -(1/tau) mean anchor.positive
  double uniform_term = 0.0;        // mean_i log mean_j e^{h_i.h_j / tau}
  double jensen_lower_bound = 0.0;  // gram_sum / (tau m^2); never above uniform_term
};

/// Large-batch decomposition of the contrastive objective over a pool of
/// normalized embeddings, with the Jensen lower bound on the repulsive term.
AsymptoticTerms asymptotic_terms(const Mat& anchors, const Mat& positives, double tau);

/// Central finite differences of the scalar loss against the analytic
/// gradients, over every embedding coordinate. Picks the supervised objective
/// when hard negatives are present. Returns the max relative error with
/// denominator max(|analytic|, |numeric|, 1e-8).
double loss_grad_check(const EmbeddingBatch& batch, const LossConfig& cfg, double epsilon);

}  // namespace losses
}  // namespace simcse
