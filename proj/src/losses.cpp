#include "simcse/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "simcse/errors.hpp"

namespace simcse::losses {
namespace {

struct UnitRows {
  Mat unit;
  std::vector<double> norms;
};

UnitRows unit_rows(const Mat& m, const char* role) {
  UnitRows out{Mat(m.rows, m.cols), std::vector<double>(static_cast<size_t>(m.rows), 0.0)};
  for (int i = 0; i < m.rows; ++i) {
    const double n = numerics::norm2(m.row(i));
    if (n < numerics::kZeroNormEps) {
      throw ZeroNormError(std::string(role) + " row " + std::to_string(i) + " has zero norm");
    }
    out.norms[static_cast<size_t>(i)] = n;
    for (int k = 0; k < m.cols; ++k) out.unit(i, k) = m(i, k) / n;
  }
  return out;
}

void require_same_shape(const Mat& a, const Mat& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimMismatchError(std::string(what) + ": " + std::to_string(a.rows) + "x" +
                           std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                           std::to_string(b.cols));
  }
}

void require_nonempty(const Mat& a, const char* what) {
  if (a.rows < 1 || a.cols < 1) throw DimMismatchError(std::string(what) + " is empty");
}

Mat sim_matrix(const Mat& a, const Mat& b) {
  Mat s(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < b.rows; ++j) s(i, j) = numerics::dot(a.row(i), b.row(j));
  }
  return s;
}

/// Adds coef * d sim(a_i, b_j) into the two gradient rows. For cosine the
/// sim matrix holds unit-row dots and norms supply the chain factor.
void add_sim_grad(double coef, double sim, bool cosine, const Mat& a, const Mat& b,
                  const UnitRows* ua, const UnitRows* ub, int i, int j, Mat& ga, Mat& gb) {
  const int d = a.cols;
  if (cosine) {
    const double ia = 1.0 / ua->norms[static_cast<size_t>(i)];
    const double ib = 1.0 / ub->norms[static_cast<size_t>(j)];
    for (int k = 0; k < d; ++k) {
      ga(i, k) += coef * (ub->unit(j, k) - sim * ua->unit(i, k)) * ia;
      gb(j, k) += coef * (ua->unit(i, k) - sim * ub->unit(j, k)) * ib;
    }
  } else {
    for (int k = 0; k < d; ++k) {
      ga(i, k) += coef * b(j, k);
      gb(j, k) += coef * a(i, k);
    }
  }
}

void require_finite(const LossOutput& out) {
  bool ok = std::isfinite(out.value);
  auto scan = [&ok](const Mat& g) {
    for (double x : g.v) ok = ok && std::isfinite(x);
  };
  scan(out.grad_anchors);
  scan(out.grad_positives);
  if (out.grad_negatives) scan(*out.grad_negatives);
  if (!ok) throw NonFiniteLossError("loss or gradient is not finite");
}

}  // namespace

LossOutput infonce_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  const Mat& a = batch.anchors;
  const Mat& p = batch.positives;
  require_nonempty(a, "anchors");
  require_same_shape(a, p, "anchors vs positives");
  const int n = a.rows;
  const int d = a.cols;
  const double inv_tau = 1.0 / cfg.tau;
  const bool cosine = cfg.similarity == Similarity::cosine;

  UnitRows ua, up;
  if (cosine) {
    ua = unit_rows(a, "anchor");
    up = unit_rows(p, "positive");
  }
  const Mat s = cosine ? sim_matrix(ua.unit, up.unit) : sim_matrix(a, p);

  LossOutput out;
  out.grad_anchors = Mat(n, d);
  out.grad_positives = Mat(n, d);

  Mat coef(n, n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) hi = std::max(hi, s(i, j) * inv_tau);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(s(i, j) * inv_tau - hi);
    total += hi + std::log(z) - s(i, i) * inv_tau;
    for (int j = 0; j < n; ++j) {
      const double prob = std::exp(s(i, j) * inv_tau - hi) / z;
      coef(i, j) = (prob - (i == j ? 1.0 : 0.0)) * inv_tau / n;
    }
  }
  out.value = total / n;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      add_sim_grad(coef(i, j), s(i, j), cosine, a, p, &ua, &up, i, j, out.grad_anchors,
                   out.grad_positives);
    }
  }
  require_finite(out);
  return out;
}

LossOutput supervised_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  if (!batch.negatives) throw MissingHardNegativesError("supervised loss needs hard negatives");
  const Mat& a = batch.anchors;
  const Mat& p = batch.positives;
  const Mat& g = *batch.negatives;
  require_nonempty(a, "anchors");
  require_same_shape(a, p, "anchors vs positives");
  require_same_shape(a, g, "anchors vs negatives");
  const int n = a.rows;
  const int d = a.cols;
  const double inv_tau = 1.0 / cfg.tau;
  const bool cosine = cfg.similarity == Similarity::cosine;

  UnitRows ua, up, ug;
  if (cosine) {
    ua = unit_rows(a, "anchor");
    up = unit_rows(p, "positive");
    ug = unit_rows(g, "negative");
  }
  const Mat sp = cosine ? sim_matrix(ua.unit, up.unit) : sim_matrix(a, p);
  const Mat sn = cosine ? sim_matrix(ua.unit, ug.unit) : sim_matrix(a, g);

  LossOutput out;
  out.grad_anchors = Mat(n, d);
  out.grad_positives = Mat(n, d);
  out.grad_negatives.emplace(n, d);

  Mat cp(n, n);
  Mat cn(n, n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) hi = std::max(hi, sp(i, j) * inv_tau);
    for (int j = 0; j < n; ++j) {
      const double w = (i == j) ? cfg.alpha : 1.0;
      if (w > 0.0) hi = std::max(hi, sn(i, j) * inv_tau);
    }
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(sp(i, j) * inv_tau - hi);
    for (int j = 0; j < n; ++j) {
      const double w = (i == j) ? cfg.alpha : 1.0;
      if (w != 0.0) z += w * std::exp(sn(i, j) * inv_tau - hi);
    }
    total += hi + std::log(z) - sp(i, i) * inv_tau;
    for (int j = 0; j < n; ++j) {
      const double q = std::exp(sp(i, j) * inv_tau - hi) / z;
      cp(i, j) = (q - (i == j ? 1.0 : 0.0)) * inv_tau / n;
      const double w = (i == j) ? cfg.alpha : 1.0;
      const double r = (w == 0.0) ? 0.0 : w * std::exp(sn(i, j) * inv_tau - hi) / z;
      cn(i, j) = r * inv_tau / n;
    }
  }
  out.value = total / n;

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      add_sim_grad(cp(i, j), sp(i, j), cosine, a, p, &ua, &up, i, j, out.grad_anchors,
                   out.grad_positives);
      add_sim_grad(cn(i, j), sn(i, j), cosine, a, g, &ua, &ug, i, j, out.grad_anchors,
                   *out.grad_negatives);
    }
  }
  require_finite(out);
  return out;
}

double alignment(const Mat& a, const Mat& b) {
  require_nonempty(a, "alignment input");
  require_same_shape(a, b, "alignment inputs");
  if (!numerics::rows_normalized(a) || !numerics::rows_normalized(b)) {
    throw NotNormalizedError("alignment expects unit-norm rows");
  }
  double total = 0.0;
  for (int i = 0; i < a.rows; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < a.cols; ++k) {
      const double diff = a(i, k) - b(i, k);
      d2 += diff * diff;
    }
    total += d2;
  }
  return total / a.rows;
}

double uniformity(const Mat& x) {
  require_nonempty(x, "uniformity input");
  if (!numerics::rows_normalized(x)) throw NotNormalizedError("uniformity expects unit-norm rows");
  if (x.rows < 2) throw NeedTwoPointsError("uniformity needs at least two rows");
  double total = 0.0;
  long long count = 0;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = i + 1; j < x.rows; ++j) {
      double d2 = 0.0;
      for (int k = 0; k < x.cols; ++k) {
        const double diff = x(i, k) - x(j, k);
        d2 += diff * diff;
      }
      total += std::exp(-2.0 * d2);
      ++count;
    }
  }
  return std::log(total / static_cast<double>(count));
}

AsymptoticTerms asymptotic_terms(const Mat& anchors, const Mat& positives, double tau) {
  require_nonempty(anchors, "anchors");
  require_same_shape(anchors, positives, "anchors vs positives");
  if (!numerics::rows_normalized(anchors) || !numerics::rows_normalized(positives)) {
    throw NotNormalizedError("asymptotic terms expect unit-norm rows");
  }
  const int m = anchors.rows;
  const double inv_tau = 1.0 / tau;

  AsymptoticTerms out;
  double align_sum = 0.0;
  for (int i = 0; i < m; ++i) align_sum += numerics::dot(anchors.row(i), positives.row(i));
  out.align_term = -inv_tau * align_sum / m;

  const Mat s = sim_matrix(anchors, anchors);
  double uniform_sum = 0.0;
  const double log_m = std::log(static_cast<double>(m));
  for (int i = 0; i < m; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) hi = std::max(hi, s(i, j) * inv_tau);
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += std::exp(s(i, j) * inv_tau - hi);
    uniform_sum += hi + std::log(z) - log_m;
  }
  out.uniform_term = uniform_sum / m;
  out.jensen_lower_bound = numerics::gram_sum(anchors) * inv_tau / (static_cast<double>(m) * m);
  return out;
}

double loss_grad_check(const EmbeddingBatch& batch, const LossConfig& cfg, double epsilon) {
  EmbeddingBatch work = batch;
  auto eval = [&cfg](const EmbeddingBatch& b) {
    return b.negatives ? supervised_loss(b, cfg).value : infonce_loss(b, cfg).value;
  };
  const LossOutput base = batch.negatives ? supervised_loss(batch, cfg) : infonce_loss(batch, cfg);

  double worst = 0.0;
  auto sweep = [&](Mat& m, const Mat& grad) {
    for (int i = 0; i < m.rows; ++i) {
      for (int k = 0; k < m.cols; ++k) {
        const double saved = m(i, k);
        m(i, k) = saved + epsilon;
        const double up = eval(work);
        m(i, k) = saved - epsilon;
        const double down = eval(work);
        m(i, k) = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double analytic = grad(i, k);
        const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        worst = std::max(worst, std::fabs(analytic - numeric) / scale);
      }
    }
  };
  sweep(work.anchors, base.grad_anchors);
  sweep(work.positives, base.grad_positives);
  if (work.negatives) sweep(*work.negatives, *base.grad_negatives);
  return worst;
}

}  // namespace simcse::losses
