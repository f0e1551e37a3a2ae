#pragma once

#include <span>
#include <vector>

namespace simcse {

/// Dense row-major matrix of doubles. All accumulation across this module is
/// sequential in row-major order, so results are bit-reproducible.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

  std::span<double> row(int i) { return {v.data() + static_cast<size_t>(i) * cols, static_cast<size_t>(cols)}; }
  std::span<const double> row(int i) const { return {v.data() + static_cast<size_t>(i) * cols, static_cast<size_t>(cols)}; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

/// Average ranks (1-based, fractional for ties). Ranks sum to n(n+1)/2.
struct RankedSeries {
  std::vector<double> ranks;
};

namespace numerics {

/// Norm threshold below which a vector counts as zero.
inline constexpr double kZeroNormEps = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Cosine similarity of two equal-length vectors.
/// Bitwise-identical vectors map to exactly 1.0.
/// Throws DimMismatchError, ZeroNormError.
double cosine_sim(std::span<const double> a, std::span<const double> b);

/// Returns a copy of W with every row scaled to unit L2 norm.
/// Throws ZeroNormError naming the offending row.
Mat normalize_rows(const Mat& w);

/// True if every row norm is within tol of 1.
bool rows_normalized(const Mat& w, double tol = 1e-8);

/// Fractional (average-tie) ranks of x.
RankedSeries average_ranks(std::span<const double> x);

/// Product-moment correlation. Throws DegenerateSeriesError on a constant
/// series, DimMismatchError on length mismatch.
double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman rank correlation: pearson of average-tie ranks.
double spearman(std::span<const double> x, std::span<const double> y);

/// Singular values of W, descending, length min(rows, cols). Computed by a
/// cyclic Jacobi eigensolve of the smaller Gram matrix; converged when the
/// off-diagonal Frobenius mass falls below 1e-12 of the total.
/// Throws NoConvergenceError after max_sweeps full sweeps.
std::vector<double> singular_values(const Mat& w, int max_sweeps = 60);

/// Same spectrum scaled so the largest value is 1 (all zeros stay zero).
std::vector<double> max_normalized(std::span<const double> sigma);

/// Sum of all entries of W*W^T, computed as the squared norm of the column
/// sums of W.
double gram_sum(const Mat& w);

}  // namespace numerics
}  // namespace simcse
