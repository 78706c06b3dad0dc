#pragma once

#include "steerlab/model.hpp"
#include "steerlab/rng.hpp"

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

using namespace steerlab;

inline ModelConfig tiny_config(int vocab, int layers = 1, int d = 4, int heads = 2, int ff = 8) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.n_layers = layers;
  c.d_model = d;
  c.n_heads = heads;
  c.d_ff = ff;
  c.max_seq_len = 16;
  c.seed = 42;
  return c;
}

// Every tensor (gains and biases included) gets O(scale) noise so no term hides.
inline void scramble(Parameters& p, std::uint64_t seed, double scale = 0.5) {
  std::uint64_t k = seed;
  p.weights.visit([&](const std::string&, Matrix& m) {
    ++k;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += scale * counter_normal(k, static_cast<std::uint64_t>(i));
  });
}

inline std::vector<double*> flat(Weights& w) {
  std::vector<double*> out;
  w.visit([&](const std::string&, Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
  });
  return out;
}

// Plain-loop reference forward pass; shares nothing with the library but the
// weight layout. Returns logits[t][v].
inline std::vector<std::vector<double>> naive_forward(const Parameters& p, const Tokens& tokens) {
  using Rows = std::vector<std::vector<double>>;
  const auto& c = p.config;
  const int T = static_cast<int>(tokens.size());
  const int d = c.d_model, H = c.n_heads, dh = d / H, F = c.d_ff;
  const auto& w = p.weights;

  auto norm = [&](const std::vector<double>& x, const Matrix& g) {
    double ms = 0;
    for (double v : x) ms += v * v;
    ms /= d;
    const double r = 1.0 / std::sqrt(ms + 1e-6);
    std::vector<double> y(d);
    for (int i = 0; i < d; ++i) y[i] = x[i] * r * g(0, i);
    return y;
  };
  auto matvec = [](const std::vector<double>& x, const Matrix& m) {
    std::vector<double> y(static_cast<std::size_t>(m.cols()), 0.0);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) y[j] += x[i] * m(i, j);
    return y;
  };

  Rows x(T, std::vector<double>(d));
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < d; ++i) x[t][i] = w.tok_emb(tokens[t], i) + w.pos_emb(t, i);

  for (const auto& b : w.blocks) {
    Rows q(T), k(T), v(T);
    for (int t = 0; t < T; ++t) {
      const auto n = norm(x[t], b.attn_norm);
      q[t] = matvec(n, b.wq);
      k[t] = matvec(n, b.wk);
      v[t] = matvec(n, b.wv);
    }
    Rows heads(T, std::vector<double>(d, 0.0));
    for (int h = 0; h < H; ++h) {
      for (int t = 0; t < T; ++t) {
        std::vector<double> s(t + 1);
        double mx = -1e300;
        for (int u = 0; u <= t; ++u) {
          double dot = 0;
          for (int i = 0; i < dh; ++i) dot += q[t][h * dh + i] * k[u][h * dh + i];
          s[u] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[u]);
        }
        double z = 0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (int u = 0; u <= t; ++u)
          for (int i = 0; i < dh; ++i) heads[t][h * dh + i] += s[u] / z * v[u][h * dh + i];
      }
    }
    for (int t = 0; t < T; ++t) {
      const auto o = matvec(heads[t], b.wo);
      for (int i = 0; i < d; ++i) x[t][i] += o[i];
      auto hidden = matvec(norm(x[t], b.mlp_norm), b.w_in);
      for (int j = 0; j < F; ++j) {
        const double a = hidden[j] + b.b_in(0, j);
        hidden[j] = 0.5 * a * (1.0 + std::erf(a / std::sqrt(2.0)));
      }
      const auto out = matvec(hidden, b.w_out);
      for (int i = 0; i < d; ++i) x[t][i] += out[i] + b.b_out(0, i);
    }
  }
  Rows logits(T, std::vector<double>(static_cast<std::size_t>(c.vocab_size), 0.0));
  for (int t = 0; t < T; ++t) {
    const auto n = norm(x[t], w.final_norm);
    for (int v = 0; v < c.vocab_size; ++v)
      for (int i = 0; i < d; ++i) logits[t][v] += n[i] * w.tok_emb(v, i);
  }
  return logits;
}

inline double naive_log_softmax(const std::vector<double>& row, int idx) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  double z = 0;
  for (double v : row) z += std::exp(v - mx);
  return row[idx] - mx - std::log(z);
}

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("steerlab_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing
