#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "simcse/errors.hpp"
#include "simcse/losses.hpp"
#include "simcse/numerics.hpp"

using simcse::EmbeddingBatch;
using simcse::LossConfig;
using simcse::Mat;
using simcse::Similarity;
namespace losses = simcse::losses;
namespace num = simcse::numerics;

namespace {

Mat random_mat(std::mt19937_64& gen, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Mat m(rows, cols);
  for (double& x : m.v) x = dist(gen);
  return m;
}

std::vector<std::vector<double>> to_rows(const Mat& m) {
  std::vector<std::vector<double>> out(static_cast<size_t>(m.rows),
                                       std::vector<double>(static_cast<size_t>(m.cols)));
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) out[static_cast<size_t>(i)][static_cast<size_t>(j)] = m(i, j);
  }
  return out;
}

EmbeddingBatch random_batch(std::mt19937_64& gen, int n, int d, bool with_negatives) {
  EmbeddingBatch b;
  b.anchors = random_mat(gen, n, d);
  b.positives = random_mat(gen, n, d);
  if (with_negatives) b.negatives = random_mat(gen, n, d);
  return b;
}

}  // namespace

TEST_CASE("infonce matches brute-force oracle") {
  std::mt19937_64 gen(101);
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + static_cast<int>(gen() % 8);
    const int d = 2 + static_cast<int>(gen() % 5);
    EmbeddingBatch b = random_batch(gen, n, d, false);
    for (Similarity sim : {Similarity::cosine, Similarity::dot}) {
      for (double tau : {0.05, 0.3, 1.0}) {
        LossConfig cfg{tau, 1.0, sim};
        const double ref = oracle::infonce(to_rows(b.anchors), to_rows(b.positives), tau,
                                           sim == Similarity::cosine);
        const double got = losses::infonce_loss(b, cfg).value;
        CHECK(std::fabs(got - ref) <= 1e-10);
        CHECK(got >= 0.0);
      }
    }
  }
}

TEST_CASE("single-pair batch collapses to zero") {
  std::mt19937_64 gen(103);
  EmbeddingBatch b = random_batch(gen, 1, 4, false);
  LossConfig cfg;
  auto out = losses::infonce_loss(b, cfg);
  CHECK(out.value == 0.0);
  for (double g : out.grad_anchors.v) CHECK(g == 0.0);
  for (double g : out.grad_positives.v) CHECK(g == 0.0);
}

TEST_CASE("infonce gradients pass finite differences") {
  std::mt19937_64 gen(107);
  for (Similarity sim : {Similarity::cosine, Similarity::dot}) {
    EmbeddingBatch b = random_batch(gen, 5, 4, false);
    LossConfig cfg{0.1, 1.0, sim};
    CHECK(losses::loss_grad_check(b, cfg, 1e-5) < 1e-4);
  }
  // The sharp-temperature reference case: 4x8 at tau 0.05.
  EmbeddingBatch sharp = random_batch(gen, 4, 8, false);
  LossConfig sharp_cfg{0.05, 1.0, Similarity::cosine};
  CHECK(losses::loss_grad_check(sharp, sharp_cfg, 1e-5) < 1e-4);
}

TEST_CASE("infonce rejects bad input") {
  LossConfig cfg;
  EmbeddingBatch b;
  b.anchors = Mat(2, 3);
  b.positives = Mat(3, 3);
  b.anchors.v.assign(b.anchors.v.size(), 0.5);
  b.positives.v.assign(b.positives.v.size(), 0.5);
  CHECK_THROWS_AS(losses::infonce_loss(b, cfg), simcse::DimMismatchError);

  SUBCASE("zero anchor under cosine") {
    EmbeddingBatch z;
    z.anchors = Mat(2, 3);
    z.positives = Mat(2, 3);
    z.positives.v.assign(z.positives.v.size(), 1.0);
    z.anchors(0, 0) = 1.0;  // row 1 stays zero
    CHECK_THROWS_AS(losses::infonce_loss(z, cfg), simcse::ZeroNormError);
  }

  SUBCASE("non-finite input surfaces as NonFiniteLossError") {
    std::mt19937_64 gen(109);
    EmbeddingBatch b2 = random_batch(gen, 3, 3, false);
    b2.anchors(1, 1) = std::numeric_limits<double>::quiet_NaN();
    LossConfig dot_cfg{0.05, 1.0, Similarity::dot};
    CHECK_THROWS_AS(losses::infonce_loss(b2, dot_cfg), simcse::NonFiniteLossError);
  }
}

TEST_CASE("supervised loss matches brute-force oracle") {
  std::mt19937_64 gen(113);
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + static_cast<int>(gen() % 7);
    const int d = 2 + static_cast<int>(gen() % 5);
    EmbeddingBatch b = random_batch(gen, n, d, true);
    for (Similarity sim : {Similarity::cosine, Similarity::dot}) {
      for (double alpha : {1.0, 0.5, 2.0, 0.0}) {
        LossConfig cfg{0.1, alpha, sim};
        const double ref =
            oracle::supervised(to_rows(b.anchors), to_rows(b.positives), to_rows(*b.negatives),
                               cfg.tau, alpha, sim == Similarity::cosine);
        const double got = losses::supervised_loss(b, cfg).value;
        CHECK(std::fabs(got - ref) <= 1e-10);
      }
    }
  }
}

TEST_CASE("alpha equal to one reduces to the unweighted hard-negative loss") {
  std::mt19937_64 gen(127);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + static_cast<int>(gen() % 6);
    EmbeddingBatch b = random_batch(gen, n, 4, true);
    LossConfig cfg{0.05, 1.0, Similarity::cosine};
    const double weighted = losses::supervised_loss(b, cfg).value;
    // Unweighted reference: every negative term carries weight one.
    const double plain = oracle::supervised(to_rows(b.anchors), to_rows(b.positives),
                                            to_rows(*b.negatives), cfg.tau, 1.0, true);
    CHECK(std::fabs(weighted - plain) <= 1e-12);
  }
}

TEST_CASE("supervised gradients pass finite differences") {
  std::mt19937_64 gen(131);
  for (double alpha : {1.0, 0.3, 0.0, 2.0}) {
    EmbeddingBatch b = random_batch(gen, 4, 3, true);
    LossConfig cfg{0.1, alpha, Similarity::cosine};
    CHECK(losses::loss_grad_check(b, cfg, 1e-5) < 1e-4);
  }
  EmbeddingBatch b = random_batch(gen, 4, 3, true);
  LossConfig cfg{0.2, 1.5, Similarity::dot};
  CHECK(losses::loss_grad_check(b, cfg, 1e-5) < 1e-4);
}

TEST_CASE("supervised loss requires negatives") {
  std::mt19937_64 gen(137);
  EmbeddingBatch b = random_batch(gen, 3, 3, false);
  CHECK_THROWS_AS(losses::supervised_loss(b, LossConfig{}), simcse::MissingHardNegativesError);
}

TEST_CASE("alignment") {
  SUBCASE("identical inputs give zero") {
    std::mt19937_64 gen(139);
    Mat a = num::normalize_rows(random_mat(gen, 5, 4));
    CHECK(losses::alignment(a, a) == 0.0);
  }

  SUBCASE("orthogonal unit pair") {
    Mat a(1, 2);
    a(0, 0) = 1.0;
    Mat b(1, 2);
    b(0, 1) = 1.0;
    CHECK(losses::alignment(a, b) == doctest::Approx(2.0));
  }

  SUBCASE("matches oracle") {
    std::mt19937_64 gen(149);
    for (int t = 0; t < 10; ++t) {
      Mat a = num::normalize_rows(random_mat(gen, 8, 5));
      Mat b = num::normalize_rows(random_mat(gen, 8, 5));
      CHECK(losses::alignment(a, b) ==
            doctest::Approx(oracle::alignment(to_rows(a), to_rows(b))).epsilon(1e-12));
    }
  }

  SUBCASE("rejects unnormalized rows") {
    Mat a(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 2.0;
    CHECK_THROWS_AS(losses::alignment(a, a), simcse::NotNormalizedError);
  }
}

TEST_CASE("uniformity") {
  SUBCASE("antipodal pair") {
    Mat x(2, 3);
    x(0, 0) = 1.0;
    x(1, 0) = -1.0;
    CHECK(losses::uniformity(x) == doctest::Approx(-8.0).epsilon(1e-12));
  }

  SUBCASE("matches oracle") {
    std::mt19937_64 gen(151);
    for (int t = 0; t < 10; ++t) {
      Mat x = num::normalize_rows(random_mat(gen, 9, 4));
      CHECK(losses::uniformity(x) ==
            doctest::Approx(oracle::uniformity(to_rows(x))).epsilon(1e-12));
    }
  }

  SUBCASE("needs two points") {
    Mat x(1, 3);
    x(0, 0) = 1.0;
    CHECK_THROWS_AS(losses::uniformity(x), simcse::NeedTwoPointsError);
  }

  SUBCASE("rejects unnormalized rows") {
    Mat x(2, 2);
    x(0, 0) = 3.0;
    x(1, 1) = 3.0;
    CHECK_THROWS_AS(losses::uniformity(x), simcse::NotNormalizedError);
  }
}

TEST_CASE("asymptotic terms") {
  SUBCASE("matches oracle and respects the Jensen bound") {
    std::mt19937_64 gen(157);
    for (int t = 0; t < 15; ++t) {
      const int m = 2 + static_cast<int>(gen() % 10);
      Mat a = num::normalize_rows(random_mat(gen, m, 6));
      Mat p = num::normalize_rows(random_mat(gen, m, 6));
      auto out = losses::asymptotic_terms(a, p, 0.05);
      CHECK(out.align_term ==
            doctest::Approx(oracle::align_term(to_rows(a), to_rows(p), 0.05)).epsilon(1e-10));
      CHECK(out.uniform_term ==
            doctest::Approx(oracle::uniform_term(to_rows(a), 0.05)).epsilon(1e-10));
      CHECK(out.jensen_lower_bound ==
            doctest::Approx(oracle::jensen_bound(to_rows(a), 0.05)).epsilon(1e-10));
      CHECK(out.uniform_term >= out.jensen_lower_bound - 1e-12);
    }
  }

  SUBCASE("identical points meet the bound with equality") {
    Mat a(4, 3);
    for (int i = 0; i < 4; ++i) a(i, 0) = 1.0;
    auto out = losses::asymptotic_terms(a, a, 0.05);
    CHECK(out.uniform_term == doctest::Approx(20.0).epsilon(1e-14));
    CHECK(out.jensen_lower_bound == doctest::Approx(20.0).epsilon(1e-14));
    CHECK(out.align_term == doctest::Approx(-20.0).epsilon(1e-14));
  }

  SUBCASE("rejects unnormalized rows") {
    Mat a(2, 2);
    a(0, 0) = 2.0;
    a(1, 1) = 2.0;
    CHECK_THROWS_AS(losses::asymptotic_terms(a, a, 0.05), simcse::NotNormalizedError);
  }
}
