#include "steerlab/objectives.hpp"

#include "steerlab/error.hpp"
#include "steerlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>


namespace steerlab {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::lm: return "lm";
    case Objective::mist: return "mist";
    case Objective::midalign: return "midalign";
    case Objective::clo: return "clo";
  }
  return "lm";
}

Objective objective_from_string(const std::string& s) {
  if (s == "lm") return Objective::lm;
  if (s == "mist") return Objective::mist;
  if (s == "midalign") return Objective::midalign;
  if (s == "clo") return Objective::clo;
  fail_usage("unknown objective '" + s + "' (expected lm|mist|midalign|clo)");
}

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  fail_usage("unknown optimizer '" + s + "' (expected sgd|adam)");
}

void TrainConfig::validate(int n_layers) const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail_data("invalid train config: lr must be finite and >= 0");
  if (batch_size < 1) fail_data("invalid train config: batch_size must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) fail_data("invalid train config: warmup_fraction must be in [0, 1]");
  if (epochs < 0) fail_data("invalid train config: epochs must be >= 0");
  if (midalign_layer < 1 || midalign_layer > n_layers) {
    fail_data("invalid train config: midalign_layer out of range 1.." + std::to_string(n_layers));
  }
  if (!(clo_lambda >= 0.0 && clo_lambda <= 1.0)) fail_data("invalid train config: clo_lambda must be in [0,1]");
  if (!(clo_beta > 0.0) || !std::isfinite(clo_beta)) fail_data("invalid train config: clo_beta must be > 0");
}

namespace {

Tokens concat(const Tokens& a, const Tokens& b) {
  Tokens out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite_loss(double loss, const char* what) {
  if (!std::isfinite(loss)) fail_numeric(std::string("non-finite ") + what + " loss");
}

}  // namespace

SequenceScore sequence_log_prob(const Parameters& params, const Tokens& query, const Tokens& response,
                                bool with_grad, const SteeringPlan* plan) {
  if (query.empty()) fail_data("empty query");
  if (response.empty()) fail_data("empty response");
  SequenceScore s;
  s.cache = forward_cached(params, concat(query, response), plan);
  const Matrix logp = log_softmax_rows(s.cache.logits);
  if (with_grad) s.dlogits = Matrix::Zero(logp.rows(), logp.cols());
  for (std::size_t i = 0; i < response.size(); ++i) {
    const auto pos = static_cast<Eigen::Index>(query.size() - 1 + i);
    s.log_prob += logp(pos, response[i]);
    if (with_grad) {
      s.dlogits.row(pos) = -logp.row(pos).array().exp();
      s.dlogits(pos, response[i]) += 1.0;
    }
  }
  return s;
}

GradientSet loss_sft(const Parameters& params, std::span<const SftExample> batch) {
  if (batch.empty()) fail_data("empty SFT batch");
  GradientSet g{zeros_like(params.weights), 0.0};
  std::size_t n_tokens = 0;
  for (const auto& ex : batch) n_tokens += ex.response.size();
  if (n_tokens == 0) fail_data("empty response");
  const double inv = 1.0 / static_cast<double>(n_tokens);
  double total = 0.0;
  for (const auto& ex : batch) {
    SequenceScore s = sequence_log_prob(params, ex.query, ex.response, true);
    total += s.log_prob;
    const Matrix d = s.dlogits * (-inv);
    backward(params, s.cache, &d, {}, g.weights);
  }
  g.loss = -total * inv;
  check_finite_loss(g.loss, "SFT");
  return g;
}

PooledAlignLoss midalign_from_pooled(const Matrix& source, const Matrix& target) {
  const Eigen::Index B = source.rows();
  if (B < 1 || target.rows() != B || target.cols() != source.cols()) {
    fail_data("alignment batch shape mismatch");
  }
  Vector src_norm(B), tgt_norm(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    src_norm(i) = source.row(i).norm();
    tgt_norm(i) = target.row(i).norm();
    if (src_norm(i) == 0.0 || tgt_norm(i) == 0.0) {
      fail_numeric("zero-norm pooled activation in alignment batch (cosine undefined)");
    }
  }
  PooledAlignLoss out;
  out.cosine.resize(B, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index b = 0; b < B; ++b) {
      out.cosine(i, b) = source.row(i).dot(target.row(b)) / (src_norm(i) * tgt_norm(b));
    }
  }
  out.d_source = Matrix::Zero(B, source.cols());
  out.d_target = Matrix::Zero(B, source.cols());
  const double invB = 1.0 / static_cast<double>(B);
  double total = 0.0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double mx = out.cosine.row(i).maxCoeff();
    const Eigen::ArrayXd e = (out.cosine.row(i).array() - mx).exp().transpose();
    const double sum = e.sum();
    total += (mx + std::log(sum)) - out.cosine(i, i);
    for (Eigen::Index b = 0; b < B; ++b) {
      const double dc = (e(b) / sum - (b == i ? 1.0 : 0.0)) * invB;
      const double c = out.cosine(i, b);
      const double denom = src_norm(i) * tgt_norm(b);
      out.d_source.row(i) += dc * (target.row(b) / denom - c * source.row(i) / (src_norm(i) * src_norm(i)));
      out.d_target.row(b) += dc * (source.row(i) / denom - c * target.row(b) / (tgt_norm(b) * tgt_norm(b)));
    }
  }
  out.loss = total * invB;
  return out;
}

GradientSet loss_midalign(const Parameters& params, std::span<const AlignPair> batch, int layer) {
  if (batch.empty()) fail_data("empty alignment batch");
  if (layer < 1 || layer > params.config.n_layers) {
    fail_data("alignment layer " + std::to_string(layer) + " out of range");
  }
  const auto B = static_cast<Eigen::Index>(batch.size());
  const int d = params.config.d_model;
  std::vector<ForwardCache> src_cache, tgt_cache;
  Matrix src(B, d), tgt(B, d);
  for (Eigen::Index i = 0; i < B; ++i) {
    const auto& p = batch[static_cast<std::size_t>(i)];
    src_cache.push_back(forward_cached(params, p.source));
    tgt_cache.push_back(forward_cached(params, p.target));
    src.row(i) = src_cache.back().trace.at(layer).colwise().mean();
    tgt.row(i) = tgt_cache.back().trace.at(layer).colwise().mean();
  }
  const PooledAlignLoss pooled = midalign_from_pooled(src, tgt);
  GradientSet g{zeros_like(params.weights), pooled.loss};
  auto push_back_grad = [&](const ForwardCache& cache, const RowVector& dpool) {
    const auto T = static_cast<Eigen::Index>(cache.tokens.size());
    const Matrix per_pos = (dpool / static_cast<double>(T)).replicate(T, 1);
    const std::pair<int, Matrix> dtrace[] = {{layer, per_pos}};
    backward(params, cache, nullptr, dtrace, g.weights);
  };
  for (Eigen::Index i = 0; i < B; ++i) {
    push_back_grad(src_cache[static_cast<std::size_t>(i)], pooled.d_source.row(i));
    push_back_grad(tgt_cache[static_cast<std::size_t>(i)], pooled.d_target.row(i));
  }
  check_finite_loss(g.loss, "alignment");
  return g;
}

CloLoss loss_clo(const Parameters& params, const Parameters& ref, std::span<const PreferenceTriple> batch,
                 double lambda, double beta, int pivot) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail_data("clo lambda must be in [0,1]");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail_data("clo beta must be > 0");
  if (!params.weights.same_shape(ref.weights)) fail_data("reference parameters are not shape-congruent");
  std::size_t n_pivot = 0, n_local = 0, sft_tokens = 0;
  for (const auto& t : batch) {
    if (t.lang == pivot) {
      ++n_pivot;
    } else {
      ++n_local;
      sft_tokens += t.y_pref.size();
    }
  }
  if (n_pivot == 0 || n_local == 0) fail_data("CLO batch must contain both preference directions");
  if (sft_tokens == 0) fail_data("empty response");

  CloLoss out;
  out.grads.weights = zeros_like(params.weights);
  double sft_sum = 0.0, cl_pivot = 0.0, cl_local = 0.0;
  const double inv_sft = 1.0 / static_cast<double>(sft_tokens);
  for (const auto& t : batch) {
    SequenceScore pref = sequence_log_prob(params, t.x, t.y_pref, true);
    SequenceScore rej = sequence_log_prob(params, t.x, t.y_rej, true);
    const double pref_ref = sequence_log_prob(ref, t.x, t.y_pref, false).log_prob;
    const double rej_ref = sequence_log_prob(ref, t.x, t.y_rej, false).log_prob;
    const double z = beta * ((pref.log_prob - pref_ref) - (rej.log_prob - rej_ref));
    out.z.push_back(z);
    const bool local = t.lang != pivot;
    const double n_dir = static_cast<double>(local ? n_local : n_pivot);
    (local ? cl_local : cl_pivot) += softplus(-z);
    // d(-log sigmoid(z))/dz, averaged within the direction.
    const double dz = -sigmoid(-z) / n_dir;
    double pref_coef = (1.0 - lambda) * dz * beta;
    const double rej_coef = -(1.0 - lambda) * dz * beta;
    if (local) {
      sft_sum += pref.log_prob;
      pref_coef += -lambda * inv_sft;
    }
    const Matrix dp = pref.dlogits * pref_coef;
    const Matrix dr = rej.dlogits * rej_coef;
    backward(params, pref.cache, &dp, {}, out.grads.weights);
    backward(params, rej.cache, &dr, {}, out.grads.weights);
  }
  out.sft = -sft_sum * inv_sft;
  out.cl = cl_pivot / static_cast<double>(n_pivot) + cl_local / static_cast<double>(n_local);
  out.grads.loss = lambda * out.sft + (1.0 - lambda) * out.cl;
  check_finite_loss(out.grads.loss, "CLO");
  return out;
}

namespace {

template <typename T>
std::vector<std::vector<T>> make_batches(std::vector<T> items, int batch_size, Rng& rng) {
  rng.shuffle(items);
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); i += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(items.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i), items.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "cosine"; }

LrSchedule lr_schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine") return LrSchedule::cosine;
  fail_data("unknown lr schedule '" + s + "'");
}

double TrainConfig::lr_at(int step, int total) const {
  const int warm = static_cast<int>(std::llround(warmup_fraction * total));
  if (step < warm) return lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  if (schedule == LrSchedule::constant || total <= warm) return lr;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return 0.5 * lr * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train(const Parameters& params, const TrainingCorpora& corpora, const TrainConfig& cfg) {
  cfg.validate(params.config.n_layers);
  TrainResult r{params, {}};
  const std::string obj = to_string(cfg.objective);
  int step = 0;
  auto log = [&](const std::string& kind, double loss) { r.log.push_back({step++, obj, kind, loss}); };

  std::vector<SftExample> sft;
  if (cfg.objective == Objective::lm) {
    for (const auto& line : corpora.lm) {
      if (line.tokens.size() < 2) continue;
      const auto cut = static_cast<std::size_t>(std::clamp<int>(line.prompt_length, 1, static_cast<int>(line.tokens.size()) - 1));
      sft.push_back({Tokens(line.tokens.begin(), line.tokens.begin() + cut),
                     Tokens(line.tokens.begin() + cut, line.tokens.end())});
    }
  } else {
    for (auto& [q, a] : corpora.sft_pairs()) sft.push_back({q, a});
  }
  std::vector<AlignPair> align;
  for (const auto& p : corpora.parallel) {
    Tokens src = p.pivot_query;
    src.insert(src.end(), p.pivot_response.begin(), p.pivot_response.end());
    Tokens tgt = p.query;
    tgt.insert(tgt.end(), p.response.begin(), p.response.end());
    align.push_back({std::move(src), std::move(tgt)});
  }
  if (cfg.objective != Objective::midalign && cfg.objective != Objective::clo && sft.empty() && cfg.epochs > 0) {
    fail_data("training corpus is empty");
  }

  auto n_batches = [&](std::size_t n) { return static_cast<int>((n + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size)); };
  int per_epoch = n_batches(sft.size());
  if (cfg.objective == Objective::midalign) per_epoch = 2 * std::max(per_epoch, n_batches(align.size()));
  if (cfg.objective == Objective::clo) per_epoch = n_batches(corpora.preferences.size() / 2);
  const int total = per_epoch * cfg.epochs;

  AdamState adam;
  if (cfg.optimizer == Optimizer::adam) adam = adam_state_for(params);
  int updates = 0;
  auto update = [&](const GradientSet& g) {
    const double lr = cfg.lr_at(updates++, total);
    r.params = cfg.optimizer == Optimizer::sgd ? apply_sgd_step(r.params, g, lr) : apply_adam_step(r.params, g, adam, lr);
  };

  Rng rng(sub_seed(cfg.seed, "batching"));
  const Parameters ref = params;  // frozen reference policy for CLO
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    switch (cfg.objective) {
      case Objective::lm:
      case Objective::mist: {
        for (const auto& batch : make_batches(sft, cfg.batch_size, rng)) {
          GradientSet g = loss_sft(r.params, batch);
          log(cfg.objective == Objective::lm ? "lm" : "sft", g.loss);
          update(g);
        }
        break;
      }
      case Objective::midalign: {
        if (align.empty() || sft.empty()) fail_data("midalign needs parallel data");
        const auto sft_batches = make_batches(sft, cfg.batch_size, rng);
        const auto align_batches = make_batches(align, cfg.batch_size, rng);
        const std::size_t rounds = std::max(sft_batches.size(), align_batches.size());
        for (std::size_t i = 0; i < rounds; ++i) {
          GradientSet gs = loss_sft(r.params, sft_batches[i % sft_batches.size()]);
          log("sft", gs.loss);
          update(gs);
          GradientSet ga = loss_midalign(r.params, align_batches[i % align_batches.size()], cfg.midalign_layer);
          log("align", ga.loss);
          update(ga);
        }
        break;
      }
      case Objective::clo: {
        if (corpora.preferences.size() < 2) fail_data("clo needs preference triples");
        // Triples are emitted in direction pairs; batching keeps pairs together.
        std::vector<std::size_t> pair_ids;
        for (std::size_t i = 0; i + 1 < corpora.preferences.size(); i += 2) pair_ids.push_back(i);
        for (const auto& ids : make_batches(pair_ids, cfg.batch_size, rng)) {
          std::vector<PreferenceTriple> batch;
          for (std::size_t i : ids) {
            batch.push_back(corpora.preferences[i]);
            batch.push_back(corpora.preferences[i + 1]);
          }
          CloLoss l = loss_clo(r.params, ref, batch, cfg.clo_lambda, cfg.clo_beta);
          log("clo", l.grads.loss);
          update(l.grads);
        }
        break;
      }
    }
  }
  return r;
}

}  // namespace steerlab
