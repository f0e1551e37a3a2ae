#include "simcse/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "simcse/errors.hpp"

namespace simcse::numerics {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimMismatchError("cosine_sim: vector lengths differ (" +
                           std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw DimMismatchError("cosine_sim: empty vectors");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na < kZeroNormEps || nb < kZeroNormEps)
    throw ZeroNormError("cosine_sim: vector norm below " + std::to_string(kZeroNormEps));
  // A pair of bitwise-equal vectors has cosine exactly 1; the division below
  // can land one ulp off, so short-circuit that case.
  if (std::equal(a.begin(), a.end(), b.begin())) return 1.0;
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

Mat normalize_rows(const Mat& w) {
  Mat out(w.rows, w.cols);
  for (int i = 0; i < w.rows; ++i) {
    const double n = norm2(w.row(i));
    if (n < kZeroNormEps)
      throw ZeroNormError("normalize_rows: row " + std::to_string(i) + " has norm below threshold");
    for (int j = 0; j < w.cols; ++j) out(i, j) = w(i, j) / n;
  }
  return out;
}

bool rows_normalized(const Mat& w, double tol) {
  for (int i = 0; i < w.rows; ++i)
    if (std::abs(norm2(w.row(i)) - 1.0) > tol) return false;
  return true;
}

RankedSeries average_ranks(std::span<const double> x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return x[i] < x[j]; });
  RankedSeries rs;
  rs.ranks.assign(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    // positions i..j (0-based) share the average of ranks i+1..j+1
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) rs.ranks[order[k]] = r;
    i = j + 1;
  }
  return rs;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimMismatchError("pearson: series lengths differ");
  const size_t n = x.size();
  if (n < 2) throw DegenerateSeriesError("pearson: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw DegenerateSeriesError("pearson: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimMismatchError("spearman: series lengths differ");
  const RankedSeries rx = average_ranks(x);
  const RankedSeries ry = average_ranks(y);
  return pearson(rx.ranks, ry.ranks);
}

namespace {

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. g is
// modified in place; only eigenvalues are needed, so no rotation matrix is
// accumulated.
std::vector<double> jacobi_eigenvalues(Mat& g, int max_sweeps) {
  const int n = g.rows;
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) total += g(i, j) * g(i, j);
  const double frob = std::sqrt(total);
  const double threshold = 1e-12 * std::max(frob, 1e-300);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += 2.0 * g(p, q) * g(p, q);
    if (std::sqrt(off) <= threshold) {
      std::vector<double> eig(n);
      for (int i = 0; i < n; ++i) eig[i] = g(i, i);
      return eig;
    }
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double gpq = g(p, q);
        if (gpq == 0.0) continue;
        const double theta = (g(q, q) - g(p, p)) / (2.0 * gpq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double gkp = g(k, p);
          const double gkq = g(k, q);
          g(k, p) = c * gkp - s * gkq;
          g(k, q) = s * gkp + c * gkq;
        }
        for (int k = 0; k < n; ++k) {
          const double gpk = g(p, k);
          const double gqk = g(q, k);
          g(p, k) = c * gpk - s * gqk;
          g(q, k) = s * gpk + c * gqk;
        }
      }
    }
  }
  throw NoConvergenceError("jacobi eigensolve did not converge within " +
                           std::to_string(max_sweeps) + " sweeps");
}

}  // namespace

std::vector<double> singular_values(const Mat& w, int max_sweeps) {
  for (double x : w.v)
    if (!std::isfinite(x)) throw DimMismatchError("singular_values: non-finite entry");
  const int k = std::min(w.rows, w.cols);
  // Gram matrix on the smaller side; its eigenvalues are the squared
  // singular values of w.
  Mat g(k, k);
  if (w.cols <= w.rows) {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        double s = 0.0;
        for (int i = 0; i < w.rows; ++i) s += w(i, a) * w(i, b);
        g(a, b) = s;
      }
  } else {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) g(a, b) = dot(w.row(a), w.row(b));
  }
  std::vector<double> eig = jacobi_eigenvalues(g, max_sweeps);
  std::vector<double> sigma(eig.size());
  for (size_t i = 0; i < eig.size(); ++i) sigma[i] = std::sqrt(std::max(eig[i], 0.0));
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  return sigma;
}

std::vector<double> max_normalized(std::span<const double> sigma) {
  std::vector<double> out(sigma.begin(), sigma.end());
  if (out.empty() || out.front() == 0.0) return out;
  const double top = out.front();
  for (double& s : out) s /= top;
  return out;
}

double gram_sum(const Mat& w) {
  double total = 0.0;
  for (int j = 0; j < w.cols; ++j) {
    double colsum = 0.0;
    for (int i = 0; i < w.rows; ++i) colsum += w(i, j);
    total += colsum * colsum;
  }
  return total;
}

}  // namespace simcse::numerics
