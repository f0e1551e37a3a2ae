#include "simcse/encoder.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "simcse/errors.hpp"
#include "simcse/rng.hpp"

namespace simcse {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
  return cdf + x * pdf;
}

}  // namespace

const TensorSpec& LayoutManifest::at(const std::string& name) const {
  for (const TensorSpec& t : tensors) {
    if (t.name == name) return t;
  }
  throw DimMismatchError("unknown tensor: " + name);
}

LayoutManifest make_layout(const EncoderConfig& c) {
  if (c.d_model <= 0 || c.n_heads <= 0 || c.d_model % c.n_heads != 0) {
    throw DimMismatchError("d_model must be a positive multiple of n_heads");
  }
  if (c.n_layers < 1) throw DimMismatchError("n_layers must be at least 1");
  if (c.vocab_size < 1) throw DimMismatchError("vocab_size must be positive");
  if (c.d_ff < 1 || c.max_len < 1) throw DimMismatchError("d_ff and max_len must be positive");
  if (!(c.dropout_p >= 0.0 && c.dropout_p < 1.0)) {
    throw InvalidPlanError("dropout_p must lie in [0, 1)");
  }

  LayoutManifest m;
  auto add = [&m](std::string name, std::vector<int> shape) {
    TensorSpec t{std::move(name), std::move(shape), m.total};
    m.total += t.size();
    m.tensors.push_back(std::move(t));
  };
  add("tok_embed", {c.vocab_size, c.d_model});
  add("pos_embed", {c.max_len, c.d_model});
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1_gamma", {c.d_model});
    add(p + "ln1_beta", {c.d_model});
    add(p + "wq", {c.d_model, c.d_model});
    add(p + "bq", {c.d_model});
    add(p + "wk", {c.d_model, c.d_model});
    add(p + "bk", {c.d_model});
    add(p + "wv", {c.d_model, c.d_model});
    add(p + "bv", {c.d_model});
    add(p + "wo", {c.d_model, c.d_model});
    add(p + "bo", {c.d_model});
    add(p + "ln2_gamma", {c.d_model});
    add(p + "ln2_beta", {c.d_model});
    add(p + "w1", {c.d_model, c.d_ff});
    add(p + "b1", {c.d_ff});
    add(p + "w2", {c.d_ff, c.d_model});
    add(p + "b2", {c.d_model});
  }
  add("proj_w", {c.d_model, c.d_model});
  add("proj_b", {c.d_model});
  return m;
}

std::span<double> EncoderModel::tensor(const std::string& name) {
  const TensorSpec& t = layout.at(name);
  return {parameters.data() + t.offset, t.size()};
}

std::span<const double> EncoderModel::tensor(const std::string& name) const {
  const TensorSpec& t = layout.at(name);
  return {parameters.data() + t.offset, t.size()};
}

namespace encoder {

namespace {

bool ends_with(const std::string& s, const char* suffix) {
  const std::string suf(suffix);
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

void validate_call(const EncoderModel& model, const TokenBatch& batch, const DropoutPlan& plan,
                   Phase phase) {
  const EncoderConfig& c = model.config;
  if (model.parameters.size() != model.layout.total) {
    throw DimMismatchError("parameter array does not match the layout manifest");
  }
  if (phase == Phase::eval && plan.mode != DropoutMode::none) {
    throw InvalidPlanError("eval forward requires dropout mode none");
  }
  if (batch.rows < 1 || batch.cols < 1) throw DimMismatchError("empty token batch");
  if (static_cast<int>(batch.lengths.size()) != batch.rows ||
      batch.ids.size() != static_cast<std::size_t>(batch.rows) * batch.cols) {
    throw DimMismatchError("token batch arrays disagree with rows x cols");
  }
  for (int b = 0; b < batch.rows; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    if (len < 1 || len > batch.cols) {
      throw DimMismatchError("row " + std::to_string(b) + " length outside [1, cols]");
    }
    if (len > c.max_len) {
      throw LengthOverflowError("row " + std::to_string(b) + " length " + std::to_string(len) +
                                " exceeds max_len " + std::to_string(c.max_len));
    }
    for (int t = 0; t < len; ++t) {
      const int id = batch.id(b, t);
      if (id < 0 || id >= c.vocab_size) {
        throw DimMismatchError("token id " + std::to_string(id) + " outside vocab");
      }
    }
  }
}

// y = x W + b with W row-major [in][out].
void linear(const Mat& x, std::span<const double> w, std::span<const double> b, int in, int out,
            Mat& y) {
  for (int t = 0; t < x.rows; ++t) {
    for (int o = 0; o < out; ++o) {
      double s = b[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) {
        s += x(t, i) * w[static_cast<std::size_t>(i) * out + o];
      }
      y(t, o) = s;
    }
  }
}

void layer_norm(const Mat& x, std::span<const double> gamma, std::span<const double> beta, Mat& y,
                Mat& xhat, std::vector<double>& invstd) {
  const int d = x.cols;
  invstd.assign(static_cast<std::size_t>(x.rows), 0.0);
  for (int t = 0; t < x.rows; ++t) {
    double mu = 0.0;
    for (int k = 0; k < d; ++k) mu += x(t, k);
    mu /= d;
    double var = 0.0;
    for (int k = 0; k < d; ++k) {
      const double dev = x(t, k) - mu;
      var += dev * dev;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    invstd[static_cast<std::size_t>(t)] = inv;
    for (int k = 0; k < d; ++k) {
      const double xh = (x(t, k) - mu) * inv;
      xhat(t, k) = xh;
      y(t, k) = gamma[static_cast<std::size_t>(k)] * xh + beta[static_cast<std::size_t>(k)];
    }
  }
}

// Grad at the LayerNorm input given the grad at its output; accumulates the
// gamma/beta gradients.
Mat ln_backward(const Mat& dy, const Mat& xhat, const std::vector<double>& invstd,
                std::span<const double> gamma, double* dgamma, double* dbeta) {
  const int d = dy.cols;
  Mat dx(dy.rows, d);
  std::vector<double> dxhat(static_cast<std::size_t>(d), 0.0);
  for (int t = 0; t < dy.rows; ++t) {
    double m1 = 0.0;
    double m2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const double g = dy(t, k) * gamma[static_cast<std::size_t>(k)];
      dxhat[static_cast<std::size_t>(k)] = g;
      m1 += g;
      m2 += g * xhat(t, k);
      dgamma[k] += dy(t, k) * xhat(t, k);
      dbeta[k] += dy(t, k);
    }
    m1 /= d;
    m2 /= d;
    const double inv = invstd[static_cast<std::size_t>(t)];
    for (int k = 0; k < d; ++k) {
      dx(t, k) = inv * (dxhat[static_cast<std::size_t>(k)] - m1 - xhat(t, k) * m2);
    }
  }
  return dx;
}

double attn_mask_value(const DropoutPlan& plan, double p, std::uint64_t layer, std::uint64_t row,
                       std::uint64_t head, std::uint64_t t, std::uint64_t u) {
  const double r = rng::u01({rng::kDomainDropout, plan.seed, layer, 0ULL, row, head, t, u});
  return r >= p ? 1.0 / (1.0 - p) : 0.0;
}

double ff_mask_value(const DropoutPlan& plan, double p, std::uint64_t layer, std::uint64_t row,
                     std::uint64_t t, std::uint64_t j) {
  const double r = rng::u01({rng::kDomainDropout, plan.seed, layer, 1ULL, row, t, j});
  return r >= p ? 1.0 / (1.0 - p) : 0.0;
}

}  // namespace

struct ForwardRecord::Tape {
  EncoderConfig config;
  DropoutPlan plan;
  Phase phase = Phase::train;
  TokenBatch batch;
  std::size_t param_count = 0;
  bool proj_applied = false;

  struct RowLayer {
    Mat x_in;                    // T x d layer input
    Mat xhat1;                   // T x d
    std::vector<double> invstd1;
    Mat u;                       // T x d LayerNorm-1 output
    Mat q, k, v;                 // T x d
    Mat probs;                   // (H*T) x T softmax, pre-dropout
    Mat attn_mask;               // (H*T) x T mask values
    Mat concat;                  // T x d head outputs before the output proj
    Mat x2;                      // T x d after the attention residual
    Mat xhat2;
    std::vector<double> invstd2;
    Mat vlin;                    // T x d LayerNorm-2 output
    Mat h_pre;                   // T x f before GELU
    Mat g_act;                   // T x f after GELU, pre-dropout
    Mat ff_mask;                 // T x f mask values
  };
  std::vector<std::vector<RowLayer>> layers;  // [layer][row]
  std::vector<Mat> x_final;                   // per row: T x d
  std::vector<Mat> x_first;                   // per row, first_last_avg only
  Mat pooled;                                 // N x d before the projection head
  Mat proj_out;                               // N x d after it, when applied
};

namespace {

using Tape = ForwardRecord::Tape;

Mat forward(const EncoderModel& model, const TokenBatch& batch, const DropoutPlan& plan,
            Phase phase, Tape* tape) {
  validate_call(model, batch, plan, phase);
  const EncoderConfig& c = model.config;
  const int n = batch.rows;
  const int d = c.d_model;
  const int heads = c.n_heads;
  const int dh = d / heads;
  const int f = c.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double p = c.dropout_p;
  const bool use_dropout = plan.mode != DropoutMode::none && p > 0.0;
  const bool want_first = c.pooling == Pooling::first_last_avg;
  const bool apply_proj = c.projection_head == ProjectionHead::always ||
                          (c.projection_head == ProjectionHead::train_only && phase == Phase::train);

  if (tape) {
    tape->config = c;
    tape->plan = plan;
    tape->phase = phase;
    tape->batch = batch;
    tape->param_count = model.parameters.size();
    tape->proj_applied = apply_proj;
    tape->layers.assign(static_cast<std::size_t>(c.n_layers), {});
    for (auto& per_row : tape->layers) per_row.resize(static_cast<std::size_t>(n));
    tape->x_final.resize(static_cast<std::size_t>(n));
    if (want_first) tape->x_first.resize(static_cast<std::size_t>(n));
  }

  const std::span<const double> tok = model.tensor("tok_embed");
  const std::span<const double> pos = model.tensor("pos_embed");

  Mat pooled(n, d);
  for (int b = 0; b < n; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];

    Mat x(len, d);
    for (int t = 0; t < len; ++t) {
      const std::size_t base = static_cast<std::size_t>(batch.id(b, t)) * d;
      const std::size_t pbase = static_cast<std::size_t>(t) * d;
      for (int k = 0; k < d; ++k) x(t, k) = tok[base + k] + pos[pbase + k];
    }

    Mat first_copy;
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      const auto g1 = model.tensor(pre + "ln1_gamma");
      const auto b1n = model.tensor(pre + "ln1_beta");
      const auto wq = model.tensor(pre + "wq");
      const auto bq = model.tensor(pre + "bq");
      const auto wk = model.tensor(pre + "wk");
      const auto bk = model.tensor(pre + "bk");
      const auto wv = model.tensor(pre + "wv");
      const auto bv = model.tensor(pre + "bv");
      const auto wo = model.tensor(pre + "wo");
      const auto bo = model.tensor(pre + "bo");
      const auto g2 = model.tensor(pre + "ln2_gamma");
      const auto b2n = model.tensor(pre + "ln2_beta");
      const auto w1 = model.tensor(pre + "w1");
      const auto bb1 = model.tensor(pre + "b1");
      const auto w2 = model.tensor(pre + "w2");
      const auto bb2 = model.tensor(pre + "b2");

      Mat u(len, d), xhat1(len, d);
      std::vector<double> invstd1;
      layer_norm(x, g1, b1n, u, xhat1, invstd1);

      Mat q(len, d), k(len, d), v(len, d);
      linear(u, wq, bq, d, d, q);
      linear(u, wk, bk, d, d, k);
      linear(u, wv, bv, d, d, v);

      Mat probs(heads * len, len);
      Mat attn_mask(heads * len, len);
      Mat concat(len, d);
      std::vector<double> sc(static_cast<std::size_t>(len), 0.0);
      for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int t = 0; t < len; ++t) {
          double hi = 0.0;
          for (int u2 = 0; u2 < len; ++u2) {
            double s = 0.0;
            for (int kk = 0; kk < dh; ++kk) s += q(t, off + kk) * k(u2, off + kk);
            s *= scale;
            sc[static_cast<std::size_t>(u2)] = s;
            if (u2 == 0 || s > hi) hi = s;
          }
          double z = 0.0;
          for (int u2 = 0; u2 < len; ++u2) z += std::exp(sc[static_cast<std::size_t>(u2)] - hi);
          const int prow = h * len + t;
          for (int u2 = 0; u2 < len; ++u2) {
            const double pv = std::exp(sc[static_cast<std::size_t>(u2)] - hi) / z;
            probs(prow, u2) = pv;
            attn_mask(prow, u2) =
                use_dropout ? attn_mask_value(plan, p, static_cast<std::uint64_t>(l),
                                              static_cast<std::uint64_t>(b),
                                              static_cast<std::uint64_t>(h),
                                              static_cast<std::uint64_t>(t),
                                              static_cast<std::uint64_t>(u2))
                            : 1.0;
          }
          for (int kk = 0; kk < dh; ++kk) {
            double s = 0.0;
            for (int u2 = 0; u2 < len; ++u2) {
              s += probs(prow, u2) * attn_mask(prow, u2) * v(u2, off + kk);
            }
            concat(t, off + kk) = s;
          }
        }
      }

      Mat attn(len, d);
      linear(concat, wo, bo, d, d, attn);
      Mat x2(len, d);
      for (int t = 0; t < len; ++t) {
        for (int kk = 0; kk < d; ++kk) x2(t, kk) = x(t, kk) + attn(t, kk);
      }

      Mat vlin(len, d), xhat2(len, d);
      std::vector<double> invstd2;
      layer_norm(x2, g2, b2n, vlin, xhat2, invstd2);

      Mat h_pre(len, f);
      linear(vlin, w1, bb1, d, f, h_pre);
      Mat g_act(len, f), ff_mask(len, f), g_drop(len, f);
      for (int t = 0; t < len; ++t) {
        for (int j = 0; j < f; ++j) {
          const double g = gelu(h_pre(t, j));
          g_act(t, j) = g;
          const double mv = use_dropout
                                ? ff_mask_value(plan, p, static_cast<std::uint64_t>(l),
                                                static_cast<std::uint64_t>(b),
                                                static_cast<std::uint64_t>(t),
                                                static_cast<std::uint64_t>(j))
                                : 1.0;
          ff_mask(t, j) = mv;
          g_drop(t, j) = g * mv;
        }
      }
      Mat ffo(len, d);
      linear(g_drop, w2, bb2, f, d, ffo);

      Mat x3(len, d);
      for (int t = 0; t < len; ++t) {
        for (int kk = 0; kk < d; ++kk) x3(t, kk) = x2(t, kk) + ffo(t, kk);
      }

      if (tape) {
        Tape::RowLayer& rl = tape->layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(b)];
        rl.x_in = std::move(x);
        rl.xhat1 = std::move(xhat1);
        rl.invstd1 = std::move(invstd1);
        rl.u = std::move(u);
        rl.q = std::move(q);
        rl.k = std::move(k);
        rl.v = std::move(v);
        rl.probs = std::move(probs);
        rl.attn_mask = std::move(attn_mask);
        rl.concat = std::move(concat);
        rl.x2 = std::move(x2);
        rl.xhat2 = std::move(xhat2);
        rl.invstd2 = std::move(invstd2);
        rl.vlin = std::move(vlin);
        rl.h_pre = std::move(h_pre);
        rl.g_act = std::move(g_act);
        rl.ff_mask = std::move(ff_mask);
      }
      x = std::move(x3);
      if (want_first && l == 0) first_copy = x;
    }

    switch (c.pooling) {
      case Pooling::first_token:
        for (int k = 0; k < d; ++k) pooled(b, k) = x(0, k);
        break;
      case Pooling::mean:
        for (int k = 0; k < d; ++k) {
          double s = 0.0;
          for (int t = 0; t < len; ++t) s += x(t, k);
          pooled(b, k) = s / len;
        }
        break;
      case Pooling::first_last_avg:
        for (int k = 0; k < d; ++k) {
          double sf = 0.0;
          double sl = 0.0;
          for (int t = 0; t < len; ++t) {
            sf += first_copy(t, k);
            sl += x(t, k);
          }
          pooled(b, k) = 0.5 * (sf / len + sl / len);
        }
        break;
    }

    if (tape) {
      tape->x_final[static_cast<std::size_t>(b)] = std::move(x);
      if (want_first) tape->x_first[static_cast<std::size_t>(b)] = std::move(first_copy);
    }
  }

  Mat out = pooled;
  if (apply_proj) {
    const auto pw = model.tensor("proj_w");
    const auto pb = model.tensor("proj_b");
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < d; ++o) {
        double s = pb[static_cast<std::size_t>(o)];
        for (int i = 0; i < d; ++i) s += pooled(b, i) * pw[static_cast<std::size_t>(i) * d + o];
        out(b, o) = std::tanh(s);
      }
    }
  }

  if (tape) {
    tape->pooled = std::move(pooled);
    if (apply_proj) tape->proj_out = out;
  }
  return out;
}

}  // namespace

EncoderModel init_params(const EncoderConfig& config, std::uint64_t seed) {
  EncoderModel m;
  m.config = config;
  m.layout = make_layout(config);
  m.parameters.assign(m.layout.total, 0.0);
  for (std::size_t ti = 0; ti < m.layout.tensors.size(); ++ti) {
    const TensorSpec& t = m.layout.tensors[ti];
    double* out = m.parameters.data() + t.offset;
    rng::Stream stream(rng::kDomainInit, {seed, static_cast<std::uint64_t>(ti)});
    if (t.name == "tok_embed" || t.name == "pos_embed") {
      for (std::size_t i = 0; i < t.size(); ++i) out[i] = 0.02 * stream.next_normal();
    } else if (t.shape.size() == 2) {
      const double a = std::sqrt(6.0 / (t.shape[0] + t.shape[1]));
      for (std::size_t i = 0; i < t.size(); ++i) out[i] = a * (2.0 * stream.next_u01() - 1.0);
    } else if (ends_with(t.name, "_gamma")) {
      for (std::size_t i = 0; i < t.size(); ++i) out[i] = 1.0;
    }
    // biases and LayerNorm shifts stay zero
  }
  return m;
}

Mat encode(const EncoderModel& model, const TokenBatch& batch, const DropoutPlan& plan,
           Phase phase) {
  return forward(model, batch, plan, phase, nullptr);
}

ForwardRecord encode_recorded(const EncoderModel& model, const TokenBatch& batch,
                              const DropoutPlan& plan, Phase phase) {
  auto tape = std::make_shared<Tape>();
  Mat out = forward(model, batch, plan, phase, tape.get());
  return ForwardRecord{std::move(out), std::move(tape)};
}

std::vector<double> encode_backward(const EncoderModel& model, const ForwardRecord& record,
                                    const Mat& upstream) {
  if (!record.tape) throw PlanMismatchError("forward record carries no activation tape");
  const Tape& tape = *record.tape;
  if (tape.param_count != model.parameters.size() || !(tape.config == model.config)) {
    throw PlanMismatchError("forward record does not match this model");
  }
  const EncoderConfig& c = model.config;
  const int n = tape.batch.rows;
  const int d = c.d_model;
  const int heads = c.n_heads;
  const int dh = d / heads;
  const int f = c.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (upstream.rows != n || upstream.cols != d) {
    throw DimMismatchError("upstream gradient shape does not match the encoder output");
  }

  std::vector<double> grads(model.layout.total, 0.0);
  auto gspan = [&](const std::string& name) {
    const TensorSpec& t = model.layout.at(name);
    return grads.data() + t.offset;
  };

  // Projection head.
  Mat dpooled(n, d);
  if (tape.proj_applied) {
    const auto pw = model.tensor("proj_w");
    double* dpw = gspan("proj_w");
    double* dpb = gspan("proj_b");
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < d; ++o) {
        const double y = tape.proj_out(b, o);
        const double dz = upstream(b, o) * (1.0 - y * y);
        dpb[o] += dz;
        for (int i = 0; i < d; ++i) {
          dpooled(b, i) += dz * pw[static_cast<std::size_t>(i) * d + o];
          dpw[i * d + o] += tape.pooled(b, i) * dz;
        }
      }
    }
  } else {
    dpooled = upstream;
  }

  double* dtok = gspan("tok_embed");
  double* dpos = gspan("pos_embed");

  for (int b = 0; b < n; ++b) {
    const int len = tape.batch.lengths[static_cast<std::size_t>(b)];

    // Pooling backward into the final hidden states.
    Mat dx(len, d);
    Mat dfirst;
    switch (c.pooling) {
      case Pooling::first_token:
        for (int k = 0; k < d; ++k) dx(0, k) = dpooled(b, k);
        break;
      case Pooling::mean:
        for (int t = 0; t < len; ++t) {
          for (int k = 0; k < d; ++k) dx(t, k) = dpooled(b, k) / len;
        }
        break;
      case Pooling::first_last_avg:
        if (c.n_layers == 1) {
          for (int t = 0; t < len; ++t) {
            for (int k = 0; k < d; ++k) dx(t, k) = dpooled(b, k) / len;
          }
        } else {
          dfirst = Mat(len, d);
          for (int t = 0; t < len; ++t) {
            for (int k = 0; k < d; ++k) {
              dx(t, k) = 0.5 * dpooled(b, k) / len;
              dfirst(t, k) = 0.5 * dpooled(b, k) / len;
            }
          }
        }
        break;
    }

    for (int l = c.n_layers - 1; l >= 0; --l) {
      const Tape::RowLayer& rl = tape.layers[static_cast<std::size_t>(l)][static_cast<std::size_t>(b)];
      const std::string pre = "layer" + std::to_string(l) + ".";
      const auto g1 = model.tensor(pre + "ln1_gamma");
      const auto wq = model.tensor(pre + "wq");
      const auto wk = model.tensor(pre + "wk");
      const auto wv = model.tensor(pre + "wv");
      const auto wo = model.tensor(pre + "wo");
      const auto g2 = model.tensor(pre + "ln2_gamma");
      const auto w1 = model.tensor(pre + "w1");
      const auto w2 = model.tensor(pre + "w2");

      // Feed-forward half: x3 = x2 + dropout(gelu(LN2(x2) W1 + b1)) W2 + b2.
      double* dw2 = gspan(pre + "w2");
      double* db2 = gspan(pre + "b2");
      Mat dh_pre(len, f);
      for (int t = 0; t < len; ++t) {
        for (int j = 0; j < f; ++j) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += dx(t, k) * w2[static_cast<std::size_t>(j) * d + k];
          const double gd = s * rl.ff_mask(t, j);
          dh_pre(t, j) = gd * gelu_grad(rl.h_pre(t, j));
        }
      }
      for (int j = 0; j < f; ++j) {
        for (int k = 0; k < d; ++k) {
          double s = 0.0;
          for (int t = 0; t < len; ++t) {
            s += rl.g_act(t, j) * rl.ff_mask(t, j) * dx(t, k);
          }
          dw2[j * d + k] += s;
        }
      }
      for (int k = 0; k < d; ++k) {
        double s = 0.0;
        for (int t = 0; t < len; ++t) s += dx(t, k);
        db2[k] += s;
      }

      double* dw1 = gspan(pre + "w1");
      double* db1 = gspan(pre + "b1");
      Mat dvlin(len, d);
      for (int t = 0; t < len; ++t) {
        for (int i = 0; i < d; ++i) {
          double s = 0.0;
          for (int j = 0; j < f; ++j) s += dh_pre(t, j) * w1[static_cast<std::size_t>(i) * f + j];
          dvlin(t, i) = s;
        }
      }
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < f; ++j) {
          double s = 0.0;
          for (int t = 0; t < len; ++t) s += rl.vlin(t, i) * dh_pre(t, j);
          dw1[i * f + j] += s;
        }
      }
      for (int j = 0; j < f; ++j) {
        double s = 0.0;
        for (int t = 0; t < len; ++t) s += dh_pre(t, j);
        db1[j] += s;
      }

      Mat dx2 = ln_backward(dvlin, rl.xhat2, rl.invstd2, g2, gspan(pre + "ln2_gamma"),
                            gspan(pre + "ln2_beta"));
      for (int t = 0; t < len; ++t) {
        for (int k = 0; k < d; ++k) dx2(t, k) += dx(t, k);
      }

      // Attention half: x2 = x_in + (heads(LN1(x_in)) Wo + bo).
      double* dwo = gspan(pre + "wo");
      double* dbo = gspan(pre + "bo");
      Mat dconcat(len, d);
      for (int t = 0; t < len; ++t) {
        for (int i = 0; i < d; ++i) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += dx2(t, k) * wo[static_cast<std::size_t>(i) * d + k];
          dconcat(t, i) = s;
        }
      }
      for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
          double s = 0.0;
          for (int t = 0; t < len; ++t) s += rl.concat(t, i) * dx2(t, k);
          dwo[i * d + k] += s;
        }
      }
      for (int k = 0; k < d; ++k) {
        double s = 0.0;
        for (int t = 0; t < len; ++t) s += dx2(t, k);
        dbo[k] += s;
      }

      Mat dq(len, d), dk(len, d), dv(len, d);
      std::vector<double> dprob(static_cast<std::size_t>(len), 0.0);
      for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int t = 0; t < len; ++t) {
          const int prow = h * len + t;
          for (int u2 = 0; u2 < len; ++u2) {
            double s = 0.0;
            for (int kk = 0; kk < dh; ++kk) s += dconcat(t, off + kk) * rl.v(u2, off + kk);
            // through the dropout scale into the raw softmax output
            dprob[static_cast<std::size_t>(u2)] = s * rl.attn_mask(prow, u2);
            const double pd = rl.probs(prow, u2) * rl.attn_mask(prow, u2);
            for (int kk = 0; kk < dh; ++kk) dv(u2, off + kk) += pd * dconcat(t, off + kk);
          }
          double dot = 0.0;
          for (int u2 = 0; u2 < len; ++u2) {
            dot += rl.probs(prow, u2) * dprob[static_cast<std::size_t>(u2)];
          }
          for (int u2 = 0; u2 < len; ++u2) {
            const double ds = rl.probs(prow, u2) * (dprob[static_cast<std::size_t>(u2)] - dot) * scale;
            for (int kk = 0; kk < dh; ++kk) {
              dq(t, off + kk) += ds * rl.k(u2, off + kk);
              dk(u2, off + kk) += ds * rl.q(t, off + kk);
            }
          }
        }
      }

      Mat du(len, d);
      auto back_linear = [&](const Mat& dout, std::span<const double> w, const char* wname,
                             const char* bname) {
        double* dw = gspan(pre + wname);
        double* db = gspan(pre + bname);
        for (int t = 0; t < len; ++t) {
          for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int o = 0; o < d; ++o) s += dout(t, o) * w[static_cast<std::size_t>(i) * d + o];
            du(t, i) += s;
          }
        }
        for (int i = 0; i < d; ++i) {
          for (int o = 0; o < d; ++o) {
            double s = 0.0;
            for (int t = 0; t < len; ++t) s += rl.u(t, i) * dout(t, o);
            dw[i * d + o] += s;
          }
        }
        for (int o = 0; o < d; ++o) {
          double s = 0.0;
          for (int t = 0; t < len; ++t) s += dout(t, o);
          db[o] += s;
        }
      };
      back_linear(dq, wq, "wq", "bq");
      back_linear(dk, wk, "wk", "bk");
      back_linear(dv, wv, "wv", "bv");

      Mat dx_in = ln_backward(du, rl.xhat1, rl.invstd1, g1, gspan(pre + "ln1_gamma"),
                              gspan(pre + "ln1_beta"));
      for (int t = 0; t < len; ++t) {
        for (int k = 0; k < d; ++k) dx_in(t, k) += dx2(t, k);
      }
      dx = std::move(dx_in);

      if (l == 1 && dfirst.rows > 0) {
        for (int t = 0; t < len; ++t) {
          for (int k = 0; k < d; ++k) dx(t, k) += dfirst(t, k);
        }
      }
    }

    for (int t = 0; t < len; ++t) {
      const std::size_t base = static_cast<std::size_t>(tape.batch.id(b, t)) * d;
      const std::size_t pbase = static_cast<std::size_t>(t) * d;
      for (int k = 0; k < d; ++k) {
        dtok[base + k] += dx(t, k);
        dpos[pbase + k] += dx(t, k);
      }
    }
  }
  return grads;
}

std::vector<double> encode_with_grad(const EncoderModel& model, const TokenBatch& batch,
                                     const DropoutPlan& plan, const Mat& upstream) {
  return encode_backward(model, encode_recorded(model, batch, plan, Phase::train), upstream);
}

double param_grad_check(const EncoderModel& model, const TokenBatch& batch,
                        const DropoutPlan& plan, const Mat& upstream, double epsilon) {
  const std::vector<double> analytic = encode_with_grad(model, batch, plan, upstream);
  EncoderModel work = model;
  auto objective = [&]() {
    const Mat out = encode(work, batch, plan, Phase::train);
    double s = 0.0;
    for (std::size_t i = 0; i < out.v.size(); ++i) s += upstream.v[i] * out.v[i];
    return s;
  };
  double worst = 0.0;
  for (std::size_t pi = 0; pi < work.parameters.size(); ++pi) {
    const double saved = work.parameters[pi];
    work.parameters[pi] = saved + epsilon;
    const double up = objective();
    work.parameters[pi] = saved - epsilon;
    const double down = objective();
    work.parameters[pi] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[pi];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace encoder
}  // namespace simcse
