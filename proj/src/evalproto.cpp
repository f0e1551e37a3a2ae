#include "simcse/evalproto.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "simcse/embed.hpp"
#include "simcse/errors.hpp"
#include "simcse/numerics.hpp"

namespace simcse::evalproto {
namespace {

double correlate(Metric metric, const std::vector<double>& sims,
                 const std::vector<double>& golds) {
  return metric == Metric::spearman ? numerics::spearman(sims, golds)
                                    : numerics::pearson(sims, golds);
}

const char* metric_name(Metric m) { return m == Metric::spearman ? "spearman" : "pearson"; }

const char* aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::all: return "all";
    case Aggregation::mean: return "mean";
    default: return "wmean";
  }
}

}  // namespace

std::vector<ScoredSubset> score_pairs(const EncoderModel& model, const StsDataset& dataset,
                                      const Vocab& vocab) {
  std::vector<ScoredSubset> out;
  for (const StsSubset& subset : dataset.subsets) {
    ScoredSubset scored;
    scored.name = subset.name;
    std::vector<Sentence> left;
    std::vector<Sentence> right;
    for (const StsExample& ex : subset.examples) {
      left.push_back(encode_tokens(tokenize(ex.s1), vocab));
      right.push_back(encode_tokens(tokenize(ex.s2), vocab));
      scored.golds.push_back(ex.gold);
    }
    const Mat ea = embed::encode_sentences(model, left);
    const Mat eb = embed::encode_sentences(model, right);
    for (int i = 0; i < ea.rows; ++i) {
      scored.sims.push_back(numerics::cosine_sim(ea.row(i), eb.row(i)));
    }
    out.push_back(std::move(scored));
  }
  return out;
}

EvalResult evaluate(const std::vector<ScoredSubset>& subsets, const EvalConfig& cfg) {
  if (subsets.empty()) throw DimMismatchError("no subsets to evaluate");
  EvalResult result;
  for (const ScoredSubset& subset : subsets) {
    if (subset.sims.size() != subset.golds.size()) {
      throw DimMismatchError("subset '" + subset.name + "' has misaligned sims and golds");
    }
    SubsetResult row;
    row.name = subset.name;
    row.n = static_cast<int>(subset.sims.size());
    try {
      row.correlation = correlate(cfg.metric, subset.sims, subset.golds);
    } catch (const DegenerateSeriesError&) {
      row.degenerate = true;
      row.correlation = std::numeric_limits<double>::quiet_NaN();
    } catch (const NeedTwoPointsError&) {
      row.degenerate = true;
      row.correlation = std::numeric_limits<double>::quiet_NaN();
    }
    result.any_degenerate = result.any_degenerate || row.degenerate;
    result.per_subset.push_back(std::move(row));
  }

  if (cfg.aggregation == Aggregation::all) {
    std::vector<double> sims;
    std::vector<double> golds;
    for (const ScoredSubset& subset : subsets) {
      sims.insert(sims.end(), subset.sims.begin(), subset.sims.end());
      golds.insert(golds.end(), subset.golds.begin(), subset.golds.end());
    }
    result.aggregate = correlate(cfg.metric, sims, golds);
    return result;
  }

  double weighted = 0.0;
  double weight_total = 0.0;
  for (const SubsetResult& row : result.per_subset) {
    if (row.degenerate) continue;
    const double w = cfg.aggregation == Aggregation::mean ? 1.0 : static_cast<double>(row.n);
    weighted += w * row.correlation;
    weight_total += w;
  }
  if (weight_total == 0.0) {
    throw DegenerateSeriesError("every subset is degenerate; nothing to average");
  }
  result.aggregate = weighted / weight_total;
  return result;
}

std::string result_to_json(const EvalResult& result, const EvalConfig& cfg) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SubsetResult& row : result.per_subset) {
    nlohmann::json r = {{"name", row.name}, {"n", row.n}, {"degenerate", row.degenerate}};
    if (row.degenerate) {
      r["correlation"] = nullptr;
    } else {
      r["correlation"] = row.correlation;
    }
    rows.push_back(std::move(r));
  }
  const nlohmann::json j = {{"metric", metric_name(cfg.metric)},
                            {"aggregation", aggregation_name(cfg.aggregation)},
                            {"aggregate", result.aggregate},
                            {"per_subset", rows}};
  return j.dump(2) + "\n";
}

std::string result_to_table(const EvalResult& result) {
  std::string header;
  std::string values;
  char buf[64];
  auto add = [&](const std::string& title, const std::string& value) {
    const int width = std::max({static_cast<int>(title.size()), static_cast<int>(value.size()), 8});
    std::snprintf(buf, sizeof(buf), " %*s", width, title.c_str());
    header += buf;
    std::snprintf(buf, sizeof(buf), " %*s", width, value.c_str());
    values += buf;
  };
  for (const SubsetResult& row : result.per_subset) {
    if (row.degenerate) {
      add(row.name, "n/a");
    } else {
      std::snprintf(buf, sizeof(buf), "%.4f", row.correlation);
      add(row.name, buf);
    }
  }
  std::snprintf(buf, sizeof(buf), "%.4f", result.aggregate);
  add("Avg.", buf);
  return header + "\n" + values + "\n";
}

}  // namespace simcse::evalproto
