#include "steerlab/model.hpp"

#include "steerlab/error.hpp"
#include "steerlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace steerlab {

namespace {

constexpr double kNormEps = 1e-6;
constexpr double kInitStd = 0.02;
constexpr double kInvSqrt2 = 0.70710678118654752440;

// Returns x * inv_rms * gain and stores inv_rms per row.
Matrix rms_norm(const Matrix& x, const Matrix& gain, Matrix& inv_rms) {
  const auto d = static_cast<double>(x.cols());
  inv_rms.resize(x.rows(), 1);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const double ms = x.row(t).squaredNorm() / d;
    inv_rms(t, 0) = 1.0 / std::sqrt(ms + kNormEps);
    out.row(t) = x.row(t).cwiseProduct(gain) * inv_rms(t, 0);
  }
  return out;
}

// dx for y = x * r * g with r = (mean(x^2) + eps)^(-1/2); accumulates dgain.
Matrix rms_norm_backward(const Matrix& x, const Matrix& gain, const Matrix& inv_rms,
                         const Matrix& dy, Matrix& dgain) {
  const auto d = static_cast<double>(x.cols());
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const double r = inv_rms(t, 0);
    dgain += dy.row(t).cwiseProduct(x.row(t)) * r;
    const RowVector dxhat = dy.row(t).cwiseProduct(gain);
    const double dot = dxhat.dot(x.row(t));
    dx.row(t) = dxhat * r - x.row(t) * (r * r * r * dot / d);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

Matrix normal_tensor(std::uint64_t seed, const std::string& name, Eigen::Index rows,
                     Eigen::Index cols, double std_dev) {
  const std::uint64_t key = splitmix64(seed ^ hash_name(name));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = std_dev * counter_normal(key, static_cast<std::uint64_t>(i));
  }
  return m;
}

}  // namespace

std::string to_string(VectorKind kind) { return kind == VectorKind::en ? "en" : "loc"; }

VectorKind vector_kind_from_string(const std::string& s) {
  if (s == "en") return VectorKind::en;
  if (s == "loc") return VectorKind::loc;
  fail_data("unknown steering vector kind '" + s + "'");
}

bool SteeringPlan::touches(int layer) const {
  for (const auto& e : entries) {
    if (e.layer == layer) return true;
  }
  return false;
}

Vector SteeringPlan::delta_at(int layer, int d_model) const {
  Vector delta = Vector::Zero(d_model);
  for (const auto& e : entries) {
    if (e.layer == layer) delta += e.gamma * e.vector;
  }
  return delta;
}

void ModelConfig::validate() const {
  if (vocab_size < 1) fail_data("invalid model config: vocab_size must be >= 1");
  if (n_layers < 1) fail_data("invalid model config: n_layers must be >= 1");
  if (d_model < 1) fail_data("invalid model config: d_model must be >= 1");
  if (n_heads < 1) fail_data("invalid model config: n_heads must be >= 1");
  if (d_ff < 1) fail_data("invalid model config: d_ff must be >= 1");
  if (max_seq_len < 2) fail_data("invalid model config: max_seq_len must be >= 2");
  if (d_model % n_heads != 0) fail_data("invalid model config: d_model not divisible by n_heads");
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, ff = c.d_ff;
  const std::size_t per_block = d + 4 * d * d + d + d * ff + ff + ff * d + d;
  return c.vocab_size * d + c.max_seq_len * d + c.n_layers * per_block + d;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

bool Weights::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Matrix& m) { ok = ok && m.allFinite(); });
  return ok;
}

bool Weights::same_shape(const Weights& other) const {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> a, b;
  visit([&](const std::string&, const Matrix& m) { a.emplace_back(m.rows(), m.cols()); });
  other.visit([&](const std::string&, const Matrix& m) { b.emplace_back(m.rows(), m.cols()); });
  return a == b;
}

Weights zero_weights(const ModelConfig& c) {
  Weights w;
  const int d = c.d_model;
  w.tok_emb = Matrix::Zero(c.vocab_size, d);
  w.pos_emb = Matrix::Zero(c.max_seq_len, d);
  w.blocks.resize(static_cast<std::size_t>(c.n_layers));
  for (auto& b : w.blocks) {
    b.attn_norm = Matrix::Zero(1, d);
    b.wq = Matrix::Zero(d, d);
    b.wk = Matrix::Zero(d, d);
    b.wv = Matrix::Zero(d, d);
    b.wo = Matrix::Zero(d, d);
    b.mlp_norm = Matrix::Zero(1, d);
    b.w_in = Matrix::Zero(d, c.d_ff);
    b.b_in = Matrix::Zero(1, c.d_ff);
    b.w_out = Matrix::Zero(c.d_ff, d);
    b.b_out = Matrix::Zero(1, d);
  }
  w.final_norm = Matrix::Zero(1, d);
  return w;
}

Weights zeros_like(const Weights& w) {
  Weights z = w;
  z.visit([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

Parameters init_model(const ModelConfig& config) {
  config.validate();
  Parameters p;
  p.config = config;
  p.weights = zero_weights(config);
  p.weights.visit([&](const std::string& name, Matrix& m) {
    if (name.ends_with("norm")) {
      m.setOnes();
    } else if (name.ends_with("b_in") || name.ends_with("b_out")) {
      m.setZero();
    } else {
      m = normal_tensor(config.seed, name, m.rows(), m.cols(), kInitStd);
    }
  });
  return p;
}

void check_plan(const ModelConfig& config, const SteeringPlan& plan) {
  for (const auto& e : plan.entries) {
    if (e.layer < 1 || e.layer > config.n_layers) {
      fail_data("steering plan layer " + std::to_string(e.layer) + " out of range 1.." +
                std::to_string(config.n_layers));
    }
    if (e.vector.size() != config.d_model) {
      fail_data("steering plan dimension " + std::to_string(e.vector.size()) +
                " != d_model " + std::to_string(config.d_model));
    }
    if (!std::isfinite(e.gamma) || !e.vector.allFinite()) {
      fail_numeric("steering plan contains non-finite values");
    }
  }
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double mx = logits.row(t).maxCoeff();
    // shift first: x - (mx + log z) loses the low bits when |mx| is large
    const Eigen::ArrayXd shifted = (logits.row(t).array() - mx).transpose();
    out.row(t) = (shifted - std::log(shifted.exp().sum())).transpose();
  }
  return out;
}

Matrix head_logits(const Parameters& params, const Matrix& residual) {
  Matrix inv_rms;
  const Matrix normed = rms_norm(residual, params.weights.final_norm, inv_rms);
  return normed * params.weights.tok_emb.transpose();
}

ForwardCache forward_cached(const Parameters& params, const Tokens& tokens,
                            const SteeringPlan* plan) {
  const ModelConfig& c = params.config;
  const Weights& w = params.weights;
  const auto T = static_cast<Eigen::Index>(tokens.size());
  if (T < 1) fail_data("empty token sequence");
  if (T > c.max_seq_len) {
    fail_data("sequence length " + std::to_string(T) + " exceeds max_seq_len " +
              std::to_string(c.max_seq_len));
  }
  for (TokenId id : tokens) {
    if (id < 0 || id >= c.vocab_size) {
      fail_data("token id " + std::to_string(id) + " out of range for vocab " +
                std::to_string(c.vocab_size));
    }
  }
  if (plan) check_plan(c, *plan);

  const int H = c.n_heads;
  const int dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardCache cache;
  cache.tokens = tokens;
  cache.blocks.resize(static_cast<std::size_t>(c.n_layers));
  cache.trace.tokens = tokens;
  cache.trace.attention_mask.assign(tokens.size(), 1);
  cache.trace.layers.reserve(static_cast<std::size_t>(c.n_layers));

  Matrix x(T, c.d_model);
  for (Eigen::Index t = 0; t < T; ++t) {
    x.row(t) = w.tok_emb.row(tokens[static_cast<std::size_t>(t)]) + w.pos_emb.row(t);
  }

  for (int l = 0; l < c.n_layers; ++l) {
    const BlockWeights& b = w.blocks[static_cast<std::size_t>(l)];
    BlockCache& bc = cache.blocks[static_cast<std::size_t>(l)];
    bc.x_in = x;
    bc.norm1 = rms_norm(x, b.attn_norm, bc.inv_rms1);
    bc.q = bc.norm1 * b.wq;
    bc.k = bc.norm1 * b.wk;
    bc.v = bc.norm1 * b.wv;
    bc.attn.resize(T, c.d_model);
    bc.probs.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      Matrix scores = bc.q.middleCols(h * dh, dh) * bc.k.middleCols(h * dh, dh).transpose();
      Matrix& p = bc.probs[static_cast<std::size_t>(h)];
      p = Matrix::Zero(T, T);
      for (Eigen::Index i = 0; i < T; ++i) {
        const auto row = scores.row(i).head(i + 1).array() * scale;
        const double mx = row.maxCoeff();
        const Eigen::ArrayXXd e = (row - mx).exp();
        p.row(i).head(i + 1) = e / e.sum();
      }
      bc.attn.middleCols(h * dh, dh) = p * bc.v.middleCols(h * dh, dh);
    }
    bc.x_mid = x + bc.attn * b.wo;
    bc.norm2 = rms_norm(bc.x_mid, b.mlp_norm, bc.inv_rms2);
    bc.pre_act = (bc.norm2 * b.w_in).rowwise() + b.b_in.row(0);
    bc.act = bc.pre_act.unaryExpr(&gelu);
    x = (bc.x_mid + bc.act * b.w_out).rowwise() + b.b_out.row(0);
    if (plan && plan->touches(l + 1)) {
      const RowVector delta = plan->delta_at(l + 1, c.d_model).transpose();
      x.rowwise() += delta;
    }
    cache.trace.layers.push_back(x);
  }

  cache.x_final = x;
  cache.norm_final = rms_norm(x, w.final_norm, cache.inv_rms_final);
  cache.logits = cache.norm_final * w.tok_emb.transpose();
  return cache;
}

ForwardResult forward_with_trace(const Parameters& params, const Tokens& tokens,
                                 const SteeringPlan* plan) {
  ForwardCache cache = forward_cached(params, tokens, plan);
  return {std::move(cache.logits), std::move(cache.trace)};
}

void backward(const Parameters& params, const ForwardCache& cache, const Matrix* dlogits,
              std::span<const std::pair<int, Matrix>> dtrace, Weights& grad) {
  const ModelConfig& c = params.config;
  const Weights& w = params.weights;
  const auto T = static_cast<Eigen::Index>(cache.tokens.size());
  const int H = c.n_heads;
  const int dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dx = Matrix::Zero(T, c.d_model);
  if (dlogits) {
    const Matrix dnorm = (*dlogits) * w.tok_emb;
    grad.tok_emb.noalias() += dlogits->transpose() * cache.norm_final;
    dx = rms_norm_backward(cache.x_final, w.final_norm, cache.inv_rms_final, dnorm,
                           grad.final_norm);
  }

  for (int l = c.n_layers - 1; l >= 0; --l) {
    for (const auto& [layer, g] : dtrace) {
      if (layer == l + 1) dx += g;
    }
    const BlockWeights& b = w.blocks[static_cast<std::size_t>(l)];
    const BlockCache& bc = cache.blocks[static_cast<std::size_t>(l)];
    BlockWeights& gb = grad.blocks[static_cast<std::size_t>(l)];

    // MLP branch.
    gb.b_out += dx.colwise().sum();
    gb.w_out.noalias() += bc.act.transpose() * dx;
    Matrix dpre = (dx * b.w_out.transpose()).cwiseProduct(bc.pre_act.unaryExpr(&gelu_grad));
    gb.b_in += dpre.colwise().sum();
    gb.w_in.noalias() += bc.norm2.transpose() * dpre;
    const Matrix dnorm2 = dpre * b.w_in.transpose();
    Matrix dmid = dx + rms_norm_backward(bc.x_mid, b.mlp_norm, bc.inv_rms2, dnorm2, gb.mlp_norm);

    // Attention branch.
    gb.wo.noalias() += bc.attn.transpose() * dmid;
    const Matrix dattn = dmid * b.wo.transpose();
    Matrix dq(T, c.d_model), dk(T, c.d_model), dv(T, c.d_model);
    for (int h = 0; h < H; ++h) {
      const Matrix& p = bc.probs[static_cast<std::size_t>(h)];
      const auto da = dattn.middleCols(h * dh, dh);
      const Matrix dp = da * bc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * da;
      Matrix ds = p.cwiseProduct(dp);
      const Eigen::VectorXd row_dot = ds.rowwise().sum();
      ds -= p.cwiseProduct(row_dot.replicate(1, T));
      ds *= scale;
      dq.middleCols(h * dh, dh) = ds * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * bc.q.middleCols(h * dh, dh);
    }
    gb.wq.noalias() += bc.norm1.transpose() * dq;
    gb.wk.noalias() += bc.norm1.transpose() * dk;
    gb.wv.noalias() += bc.norm1.transpose() * dv;
    const Matrix dnorm1 = dq * b.wq.transpose() + dk * b.wk.transpose() + dv * b.wv.transpose();
    dx = dmid + rms_norm_backward(bc.x_in, b.attn_norm, bc.inv_rms1, dnorm1, gb.attn_norm);
  }

  for (Eigen::Index t = 0; t < T; ++t) {
    grad.tok_emb.row(cache.tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    grad.pos_emb.row(t) += dx.row(t);
  }
}

Parameters apply_sgd_step(const Parameters& params, const GradientSet& grads, double lr) {
  if (!params.weights.same_shape(grads.weights)) fail_data("gradient shape mismatch");
  if (!grads.weights.all_finite()) fail_numeric("non-finite gradient");
  Parameters out = params;
  std::vector<const Matrix*> g;
  grads.weights.visit([&](const std::string&, const Matrix& m) { g.push_back(&m); });
  std::size_t i = 0;
  out.weights.visit([&](const std::string&, Matrix& m) { m -= lr * (*g[i++]); });
  if (!out.weights.all_finite()) fail_numeric("non-finite parameters after SGD step");
  out.revision += 1;
  return out;
}

AdamState adam_state_for(const Parameters& params) {
  return {zeros_like(params.weights), zeros_like(params.weights), 0};
}

Parameters apply_adam_step(const Parameters& params, const GradientSet& grads, AdamState& state, double lr,
                           double beta1, double beta2, double eps) {
  if (!params.weights.same_shape(grads.weights) || !params.weights.same_shape(state.m)) {
    fail_data("gradient shape mismatch");
  }
  if (!grads.weights.all_finite()) fail_numeric("non-finite gradient");
  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, state.step);
  const double c2 = 1.0 - std::pow(beta2, state.step);
  std::vector<const Matrix*> g;
  std::vector<Matrix*> m, v;
  grads.weights.visit([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  state.m.visit([&](const std::string&, Matrix& x) { m.push_back(&x); });
  state.v.visit([&](const std::string&, Matrix& x) { v.push_back(&x); });
  Parameters out = params;
  std::size_t i = 0;
  out.weights.visit([&](const std::string&, Matrix& w) {
    *m[i] = beta1 * (*m[i]) + (1.0 - beta1) * (*g[i]);
    *v[i] = beta2 * (*v[i]) + (1.0 - beta2) * g[i]->cwiseAbs2();
    w.array() -= lr * ((m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + eps));
    ++i;
  });
  if (!out.weights.all_finite()) fail_numeric("non-finite parameters after Adam step");
  out.revision += 1;
  return out;
}

}  // namespace steerlab
