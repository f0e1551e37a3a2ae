#include <cmath>
#include <vector>

#include <doctest.h>

#include "simcse/data.hpp"
#include "simcse/errors.hpp"
#include "simcse/evalproto.hpp"
#include "simcse/numerics.hpp"

namespace {

using simcse::Aggregation;
using simcse::EvalConfig;
using simcse::EvalResult;
using simcse::Metric;
using simcse::ScoredSubset;

/// Subset A: spearman exactly 0.8 on n = 10 (two value blocks swapped).
ScoredSubset subset_a() {
  return {"a", {2, 2, 1, 1, 3, 3, 5, 5, 4, 4}, {1, 1, 2, 2, 3, 3, 4, 4, 5, 5}};
}

/// Subset B: spearman exactly 0.6 on n = 30 (six-fold replicated permutation).
ScoredSubset subset_b() {
  ScoredSubset s;
  s.name = "b";
  const double perm[5] = {3, 2, 1, 4, 5};
  for (int rep = 0; rep < 6; ++rep) {
    for (int k = 0; k < 5; ++k) {
      s.golds.push_back(k + 1);
      s.sims.push_back(perm[k]);
    }
  }
  return s;
}

EvalConfig cfg(Metric m, Aggregation a) { return {m, a}; }

}  // namespace

TEST_CASE("hand-built subsets give spearman 0.8 and 0.6") {
  const EvalResult a = simcse::evalproto::evaluate({subset_a()}, cfg(Metric::spearman, Aggregation::all));
  CHECK(std::abs(a.aggregate - 0.8) <= 1e-15);
  const EvalResult b = simcse::evalproto::evaluate({subset_b()}, cfg(Metric::spearman, Aggregation::all));
  CHECK(std::abs(b.aggregate - 0.6) <= 1e-15);
}

TEST_CASE("mean and wmean aggregate the 0.8/0.6 pair to 0.7 and 0.65") {
  const std::vector<ScoredSubset> subsets = {subset_a(), subset_b()};
  const EvalResult mean = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::mean));
  CHECK(std::abs(mean.aggregate - 0.7) <= 1e-15);
  const EvalResult wmean =
      simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::wmean));
  CHECK(std::abs(wmean.aggregate - 0.65) <= 1e-12);
  REQUIRE(mean.per_subset.size() == 2);
  CHECK(mean.per_subset[0].n == 10);
  CHECK(mean.per_subset[1].n == 30);
}

TEST_CASE("a single subset collapses all three aggregations") {
  for (const Aggregation agg : {Aggregation::all, Aggregation::mean, Aggregation::wmean}) {
    const EvalResult r = simcse::evalproto::evaluate({subset_a()}, cfg(Metric::spearman, agg));
    CHECK(std::abs(r.aggregate - 0.8) <= 1e-15);
  }
}

TEST_CASE("concatenation can reverse rank structure so all differs from mean") {
  const std::vector<ScoredSubset> subsets = {{"lo", {10, 20}, {1, 2}}, {"hi", {1, 2}, {3, 4}}};
  const EvalResult mean = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::mean));
  const EvalResult all = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::all));
  CHECK(mean.aggregate == doctest::Approx(1.0));
  CHECK(all.aggregate == doctest::Approx(-0.6));
  CHECK(all.aggregate < mean.aggregate);
}

TEST_CASE("all is partition-invariant while mean is not") {
  const ScoredSubset merged = {"m", {10, 20, 1, 2}, {1, 2, 3, 4}};
  const std::vector<ScoredSubset> split = {{"lo", {10, 20}, {1, 2}}, {"hi", {1, 2}, {3, 4}}};
  const EvalConfig all_cfg = cfg(Metric::spearman, Aggregation::all);
  CHECK(simcse::evalproto::evaluate({merged}, all_cfg).aggregate ==
        simcse::evalproto::evaluate(split, all_cfg).aggregate);
}

TEST_CASE("spearman aggregation is invariant under strictly increasing transforms") {
  std::vector<ScoredSubset> subsets = {subset_a(), subset_b()};
  std::vector<ScoredSubset> warped = subsets;
  for (ScoredSubset& s : warped) {
    for (double& x : s.sims) x = std::exp(0.3 * x) + 2.0;
  }
  for (const Aggregation agg : {Aggregation::all, Aggregation::mean, Aggregation::wmean}) {
    const double lhs = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, agg)).aggregate;
    const double rhs = simcse::evalproto::evaluate(warped, cfg(Metric::spearman, agg)).aggregate;
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("wmean equals mean when subset sizes agree") {
  const std::vector<ScoredSubset> subsets = {{"x", {1, 3, 2, 4, 6}, {1, 2, 3, 4, 5}},
                                             {"y", {5, 1, 2, 4, 3}, {1, 2, 3, 4, 5}}};
  const double mean = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::mean)).aggregate;
  const double wmean =
      simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::wmean)).aggregate;
  CHECK(std::abs(mean - wmean) <= 1e-15);
}

TEST_CASE("degenerate subsets are flagged and skipped by mean but not all") {
  const std::vector<ScoredSubset> subsets = {{"flat", {1, 1, 1}, {0, 2.5, 5}}, subset_a()};
  const EvalResult mean = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::mean));
  CHECK(mean.any_degenerate);
  CHECK(mean.per_subset[0].degenerate);
  CHECK(std::isnan(mean.per_subset[0].correlation));
  CHECK(std::abs(mean.aggregate - 0.8) <= 1e-15);

  const EvalResult all = simcse::evalproto::evaluate(subsets, cfg(Metric::spearman, Aggregation::all));
  CHECK(std::isfinite(all.aggregate));

  const std::vector<ScoredSubset> hopeless = {{"flat", {1, 1, 1}, {0, 2.5, 5}}};
  CHECK_THROWS_AS(
      simcse::evalproto::evaluate(hopeless, cfg(Metric::spearman, Aggregation::mean)),
      simcse::DegenerateSeriesError);
  CHECK_THROWS_AS(simcse::evalproto::evaluate({}, cfg(Metric::spearman, Aggregation::all)),
                  simcse::DimMismatchError);
}

TEST_CASE("pearson metric routes through the product-moment correlation") {
  const ScoredSubset linear = {"lin", {2, 4, 6, 8}, {1, 2, 3, 4}};
  const EvalResult r = simcse::evalproto::evaluate({linear}, cfg(Metric::pearson, Aggregation::all));
  CHECK(r.aggregate == doctest::Approx(1.0));
}

TEST_CASE("score_pairs yields exact unit similarity for identical sentences") {
  simcse::EncoderConfig ecfg;
  ecfg.vocab_size = 16;
  ecfg.d_model = 8;
  ecfg.n_layers = 1;
  ecfg.n_heads = 2;
  ecfg.d_ff = 16;
  ecfg.max_len = 8;
  const simcse::EncoderModel model = simcse::encoder::init_params(ecfg, 3);

  simcse::Vocab vocab = simcse::Vocab::with_reserved();
  for (const char* w : {"red", "blue", "green", "gray"}) vocab.add(w);
  simcse::StsDataset ds;
  simcse::StsSubset subset;
  subset.name = "pairs";
  subset.examples.push_back({"red blue", "red blue", 5.0});
  subset.examples.push_back({"green", "gray red", 1.0});
  ds.subsets.push_back(subset);

  const auto scored = simcse::evalproto::score_pairs(model, ds, vocab);
  REQUIRE(scored.size() == 1);
  REQUIRE(scored[0].sims.size() == 2);
  CHECK(scored[0].sims[0] == 1.0);
  for (const double s : scored[0].sims) {
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
  const auto again = simcse::evalproto::score_pairs(model, ds, vocab);
  CHECK(scored[0].sims == again[0].sims);
  CHECK(scored[0].golds == std::vector<double>{5.0, 1.0});
}

TEST_CASE("result serializers expose the aggregate and an Avg column") {
  const EvalResult r =
      simcse::evalproto::evaluate({subset_a(), subset_b()}, cfg(Metric::spearman, Aggregation::all));
  const std::string json =
      simcse::evalproto::result_to_json(r, cfg(Metric::spearman, Aggregation::all));
  CHECK(json.find("\"aggregate\"") != std::string::npos);
  CHECK(json.find("\"spearman\"") != std::string::npos);
  CHECK(json.find("\"per_subset\"") != std::string::npos);

  const std::string table = simcse::evalproto::result_to_table(r);
  CHECK(table.find("Avg.") != std::string::npos);
  CHECK(table.find("a") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
}
