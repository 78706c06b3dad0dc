#pragma once

#include "steerlab/plan.hpp"
#include "steerlab/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace steerlab {

struct ModelConfig {
  int vocab_size = 0;
  int n_layers = 12;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 64;
  std::uint64_t seed = 0;

  // Throws Error(data) naming the violated constraint.
  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  bool operator==(const ModelConfig&) const = default;
};

struct BlockWeights {
  Matrix attn_norm;  // [1 x d]
  Matrix wq, wk, wv, wo;  // [d x d]
  Matrix mlp_norm;  // [1 x d]
  Matrix w_in;  // [d x ff]
  Matrix b_in;  // [1 x ff]
  Matrix w_out;  // [ff x d]
  Matrix b_out;  // [1 x d]
};

// Named tensor table. Visiting order is fixed and defines the flat layout
// used by checkpoints and gradient checks.
struct Weights {
  Matrix tok_emb;  // [V x d], also the (tied) unembedding
  Matrix pos_emb;  // [max_seq_len x d]
  std::vector<BlockWeights> blocks;
  Matrix final_norm;  // [1 x d]

  template <typename F>
  void visit(F&& f) {
    f(std::string("tok_emb"), tok_emb);
    f(std::string("pos_emb"), pos_emb);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      f(p + "attn_norm", b.attn_norm);
      f(p + "wq", b.wq);
      f(p + "wk", b.wk);
      f(p + "wv", b.wv);
      f(p + "wo", b.wo);
      f(p + "mlp_norm", b.mlp_norm);
      f(p + "w_in", b.w_in);
      f(p + "b_in", b.b_in);
      f(p + "w_out", b.w_out);
      f(p + "b_out", b.b_out);
    }
    f(std::string("final_norm"), final_norm);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<Weights*>(this)->visit([&](const std::string& name, Matrix& m) {
      f(name, static_cast<const Matrix&>(m));
    });
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_shape(const Weights& other) const;
};

// Zero-initialized weights with the shapes implied by `config`.
Weights zero_weights(const ModelConfig& config);
Weights zeros_like(const Weights& w);

struct Parameters {
  ModelConfig config;
  Weights weights;
  std::uint64_t revision = 0;
};

struct GradientSet {
  Weights weights;
  double loss = 0.0;
};

// Residual stream after each block; layers[l - 1] holds layer l.
struct ActivationTrace {
  std::vector<Matrix> layers;
  Tokens tokens;
  std::vector<std::uint8_t> attention_mask;

  const Matrix& at(int layer) const { return layers.at(static_cast<std::size_t>(layer - 1)); }
  int n_layers() const { return static_cast<int>(layers.size()); }
};

// Intermediates retained for the backward pass.
struct BlockCache {
  Matrix x_in, norm1, inv_rms1;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head [T x T]
  Matrix attn;  // concatenated head outputs
  Matrix x_mid, norm2, inv_rms2;
  Matrix pre_act, act;
};

struct ForwardCache {
  Tokens tokens;
  std::vector<BlockCache> blocks;
  Matrix x_final, norm_final, inv_rms_final;
  Matrix logits;
  ActivationTrace trace;
};

std::size_t parameter_count(const ModelConfig& config);

Parameters init_model(const ModelConfig& config);

// Plan entries are validated against the model (layer range, dimension).
void check_plan(const ModelConfig& config, const SteeringPlan& plan);

ForwardCache forward_cached(const Parameters& params, const Tokens& tokens,
                            const SteeringPlan* plan = nullptr);

struct ForwardResult {
  Matrix logits;  // [T x V]
  ActivationTrace trace;
};

ForwardResult forward_with_trace(const Parameters& params, const Tokens& tokens,
                                 const SteeringPlan* plan = nullptr);

// Final norm + tied unembedding applied to a residual stream [T x d].
Matrix head_logits(const Parameters& params, const Matrix& residual);

// Row-wise log-softmax with max subtraction.
Matrix log_softmax_rows(const Matrix& logits);

// Accumulates into `grad` the parameter gradient for upstream gradients on the
// logits (optional) and on any number of trace layers.
void backward(const Parameters& params, const ForwardCache& cache, const Matrix* dlogits,
              std::span<const std::pair<int, Matrix>> dtrace, Weights& grad);

Parameters apply_sgd_step(const Parameters& params, const GradientSet& grads, double lr);

// First and second moment estimates for Adam.
struct AdamState {
  Weights m, v;
  int step = 0;
};

AdamState adam_state_for(const Parameters& params);

Parameters apply_adam_step(const Parameters& params, const GradientSet& grads, AdamState& state, double lr,
                           double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace steerlab
