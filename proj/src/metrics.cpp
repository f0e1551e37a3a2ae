#include "simcse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "simcse/embed.hpp"
#include "simcse/errors.hpp"
#include "simcse/losses.hpp"

namespace simcse::metrics {
namespace {

/// Right-closed interval index over [lo, hi] with n cells; the lowest cell is
/// also closed at lo. Values outside clamp to the boundary cells.
int cell_of(double x, double lo, double hi, int n) {
  const double w = (hi - lo) / n;
  const int idx = static_cast<int>(std::ceil((x - lo) / w)) - 1;
  return std::clamp(idx, 0, n - 1);
}

Sentence encode_text(const std::string& text, const Vocab& vocab) {
  return encode_tokens(tokenize(text), vocab);
}

std::vector<double> pair_cosines(const EncoderModel& model, const std::vector<Sentence>& a,
                                 const std::vector<Sentence>& b) {
  const Mat ea = embed::encode_sentences(model, a);
  const Mat eb = embed::encode_sentences(model, b);
  std::vector<double> sims(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    sims[i] = numerics::cosine_sim(ea.row(static_cast<int>(i)), eb.row(static_cast<int>(i)));
  }
  return sims;
}

}  // namespace

std::vector<std::size_t> select_positive_pairs(const std::vector<double>& golds,
                                               double threshold) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const double g = golds[i];
    if (!(g >= 0.0 && g <= 5.0)) {
      throw ScoreOutOfRangeError("gold score " + std::to_string(g) + " outside [0, 5]");
    }
    if (g > threshold) keep.push_back(i);
  }
  if (keep.empty()) {
    throw EmptySelectionError("no pair scores above threshold " + std::to_string(threshold));
  }
  return keep;
}

ProbeSet make_probe_set(const StsDataset& probes, const Vocab& vocab, double threshold,
                        int max_pairs) {
  ProbeSet set;
  for (const StsSubset& subset : probes.subsets) {
    for (const StsExample& ex : subset.examples) {
      if (max_pairs > 0 && static_cast<int>(set.golds.size()) >= max_pairs) break;
      set.scored_a.push_back(encode_text(ex.s1, vocab));
      set.scored_b.push_back(encode_text(ex.s2, vocab));
      set.golds.push_back(ex.gold);
    }
  }
  if (set.golds.empty()) throw EmptyCorpusError("probe dataset holds no pairs");

  for (const std::size_t i : select_positive_pairs(set.golds, threshold)) {
    set.pair_a.push_back(set.scored_a[i]);
    set.pair_b.push_back(set.scored_b[i]);
  }

  std::map<Sentence, bool> seen;
  for (const auto* side : {&set.scored_a, &set.scored_b}) {
    for (const Sentence& s : *side) {
      if (!seen.emplace(s, true).second) continue;
      set.pool.push_back(s);
    }
  }
  return set;
}

std::vector<DensityBand> cosine_density(const EncoderModel& model, const ProbeSet& probes,
                                        int n_bands, int n_bins) {
  if (n_bands < 1) throw DimMismatchError("n_bands must be at least 1");
  if (n_bins < 2) throw DimMismatchError("n_bins must be at least 2");
  std::vector<DensityBand> bands(static_cast<std::size_t>(n_bands));
  for (int b = 0; b < n_bands; ++b) {
    DensityBand& band = bands[static_cast<std::size_t>(b)];
    band.band_lo = 5.0 * b / n_bands;
    band.band_hi = 5.0 * (b + 1) / n_bands;
    band.edges.resize(static_cast<std::size_t>(n_bins) + 1);
    for (int e = 0; e <= n_bins; ++e) {
      band.edges[static_cast<std::size_t>(e)] = -1.0 + 2.0 * e / n_bins;
    }
    band.counts.assign(static_cast<std::size_t>(n_bins), 0);
  }
  if (probes.golds.empty()) return bands;

  const std::vector<double> sims = pair_cosines(model, probes.scored_a, probes.scored_b);
  for (std::size_t i = 0; i < sims.size(); ++i) {
    DensityBand& band = bands[static_cast<std::size_t>(cell_of(probes.golds[i], 0.0, 5.0, n_bands))];
    ++band.counts[static_cast<std::size_t>(cell_of(sims[i], -1.0, 1.0, n_bins))];
    ++band.pair_count;
  }
  return bands;
}

DiagnosticsReport diagnose(const EncoderModel& model, const ProbeSet& probes, double tau) {
  if (probes.pair_a.empty() || probes.pair_a.size() != probes.pair_b.size()) {
    throw DimMismatchError("probe set needs row-aligned positive pairs");
  }
  if (probes.pool.size() < 2) throw NeedTwoPointsError("probe pool needs at least 2 sentences");

  DiagnosticsReport report;
  const Mat a = numerics::normalize_rows(embed::encode_sentences(model, probes.pair_a));
  const Mat b = numerics::normalize_rows(embed::encode_sentences(model, probes.pair_b));
  report.align = losses::alignment(a, b);

  const Mat pool = numerics::normalize_rows(embed::encode_sentences(model, probes.pool));
  report.uniform = losses::uniformity(pool);

  const std::vector<double> sigma = numerics::singular_values(pool);
  report.singular_values = numerics::max_normalized(sigma);
  double total = 0.0;
  for (const double s : sigma) total += s;
  report.sigma_max_ratio = sigma[0] / total;

  const losses::AsymptoticTerms terms = losses::asymptotic_terms(pool, pool, tau);
  report.gram_sum_over_m2_tau = terms.jensen_lower_bound;
  report.jensen_gap = terms.uniform_term - terms.jensen_lower_bound;

  if (!probes.golds.empty()) report.cosine_density = cosine_density(model, probes);
  return report;
}

std::string report_to_json(const DiagnosticsReport& report) {
  nlohmann::json bands = nlohmann::json::array();
  for (const DensityBand& band : report.cosine_density) {
    bands.push_back({{"band_lo", band.band_lo},
                     {"band_hi", band.band_hi},
                     {"pair_count", band.pair_count},
                     {"edges", band.edges},
                     {"counts", band.counts}});
  }
  const nlohmann::json j = {{"align", report.align},
                            {"uniform", report.uniform},
                            {"singular_values", report.singular_values},
                            {"sigma_max_ratio", report.sigma_max_ratio},
                            {"gram_sum_over_m2_tau", report.gram_sum_over_m2_tau},
                            {"jensen_gap", report.jensen_gap},
                            {"cosine_density", bands}};
  return j.dump(2) + "\n";
}

std::string density_to_csv(const std::vector<DensityBand>& bands) {
  std::string csv = "band,bin_left,bin_right,count\n";
  char buf[128];
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const DensityBand& band = bands[b];
    for (std::size_t i = 0; i < band.counts.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%d\n", b, band.edges[i],
                    band.edges[i + 1], band.counts[i]);
      csv += buf;
    }
  }
  return csv;
}

}  // namespace simcse::metrics
