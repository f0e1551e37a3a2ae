#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "simcse/data.hpp"
#include "simcse/encoder.hpp"

namespace simcse {

/// Inputs for checkpoint diagnostics: row-aligned positive pairs feed the
/// alignment probe, the deduplicated sentence pool feeds uniformity and the
/// singular spectrum, and the gold-scored pairs feed the density histograms.
struct ProbeSet {
  std::vector<Sentence> pair_a;
  std::vector<Sentence> pair_b;
  std::vector<Sentence> pool;
  std::vector<Sentence> scored_a;
  std::vector<Sentence> scored_b;
  std::vector<double> golds;
};

/// Cosine-similarity histogram for one gold-score band. Bands partition
/// [0, 5] and bins partition [-1, 1]; both use right-closed intervals with
/// the lowest interval also closed on the left.
struct DensityBand {
  double band_lo = 0.0;
  double band_hi = 0.0;
  std::vector<double> edges;  // n_bins + 1 ascending edges
  std::vector<int> counts;    // n_bins entries summing to pair_count
  int pair_count = 0;
};

struct DiagnosticsReport {
  double align = 0.0;
  double uniform = 0.0;
  std::vector<double> singular_values;  // max-normalized, non-increasing
  double sigma_max_ratio = 0.0;         // sigma_1 / sum(sigma)
  double gram_sum_over_m2_tau = 0.0;
  double jensen_gap = 0.0;              // uniform_term - jensen bound, >= 0
  std::vector<DensityBand> cosine_density;
};

namespace metrics {

/// Indices of pairs whose gold score strictly exceeds threshold.
/// Requires scores in [0, 5]; throws EmptySelectionError when none qualify.
std::vector<std::size_t> select_positive_pairs(const std::vector<double>& golds,
                                               double threshold = 4.0);

/// Builds a ProbeSet from gold-scored pairs: positives are the pairs passing
/// select_positive_pairs, the pool is every distinct sentence in first-seen
/// order. max_pairs > 0 keeps only the first max_pairs scored pairs.
ProbeSet make_probe_set(const StsDataset& probes, const Vocab& vocab, double threshold = 4.0,
                        int max_pairs = 0);

/// Per-band histograms of pair cosine similarities under eval-phase
/// encodings. Bands split [0, 5] by gold score, bins split [-1, 1].
std::vector<DensityBand> cosine_density(const EncoderModel& model, const ProbeSet& probes,
                                        int n_bands = 5, int n_bins = 20);

/// Full diagnostics on eval-phase, row-normalized probe embeddings. align and
/// uniform are computed by the loss-module definitions on the same
/// embeddings; the spectrum comes from the normalized pool matrix.
DiagnosticsReport diagnose(const EncoderModel& model, const ProbeSet& probes, double tau);

std::string report_to_json(const DiagnosticsReport& report);

/// CSV rows band,bin_left,bin_right,count with a header line.
std::string density_to_csv(const std::vector<DensityBand>& bands);

}  // namespace metrics
}  // namespace simcse
