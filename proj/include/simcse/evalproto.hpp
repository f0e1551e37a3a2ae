#pragma once

#include <string>
#include <vector>

#include "simcse/data.hpp"
#include "simcse/encoder.hpp"

namespace simcse {

enum class Metric { spearman, pearson };
enum class Aggregation { all, mean, wmean };

/// Correlation metric and subset-aggregation scheme. The defaults follow the
/// main protocol: rank correlation over all subsets concatenated, with no
/// regressor stage.
struct EvalConfig {
  Metric metric = Metric::spearman;
  Aggregation aggregation = Aggregation::all;
};

/// One subset's model similarities aligned with its gold scores.
struct ScoredSubset {
  std::string name;
  std::vector<double> sims;
  std::vector<double> golds;
};

struct SubsetResult {
  std::string name;
  int n = 0;
  double correlation = 0.0;  // NaN when degenerate
  bool degenerate = false;
};

struct EvalResult {
  std::vector<SubsetResult> per_subset;
  double aggregate = 0.0;
  bool any_degenerate = false;
};

namespace evalproto {

/// Eval-phase cosine similarity for every pair, subset structure preserved.
std::vector<ScoredSubset> score_pairs(const EncoderModel& model, const StsDataset& dataset,
                                      const Vocab& vocab);

/// all: one correlation over the concatenation of every subset. mean:
/// unweighted average of per-subset correlations. wmean: per-subset
/// correlations weighted by subset size. Degenerate subsets (constant series)
/// are flagged and skipped by mean/wmean; "all" only needs the concatenation
/// to be non-degenerate. Throws DegenerateSeriesError when nothing usable
/// remains.
EvalResult evaluate(const std::vector<ScoredSubset>& subsets, const EvalConfig& cfg);

std::string result_to_json(const EvalResult& result, const EvalConfig& cfg);

/// Fixed-width table: one column per subset plus a trailing Avg. column.
std::string result_to_table(const EvalResult& result);

}  // namespace evalproto
}  // namespace simcse
