#pragma once

#include "steerlab/model.hpp"
#include "steerlab/world.hpp"

#include <span>
#include <string>
#include <vector>

namespace steerlab {

// `lm` is plain next-token pretraining on the per-language corpora; it
// produces the unaligned base model the alignment objectives start from.
enum class Objective { lm, mist, midalign, clo };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

enum class Optimizer { sgd, adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

enum class LrSchedule { constant, cosine };
std::string to_string(LrSchedule s);
LrSchedule lr_schedule_from_string(const std::string& s);

struct TrainConfig {
  Objective objective = Objective::mist;
  Optimizer optimizer = Optimizer::sgd;
  double lr = 0.05;
  // Linear warmup over the first warmup_fraction of updates, then the schedule.
  LrSchedule schedule = LrSchedule::constant;
  double warmup_fraction = 0.0;
  int batch_size = 8;
  int epochs = 1;
  int midalign_layer = 6;
  double clo_lambda = 0.5;
  double clo_beta = 1.0;
  std::uint64_t seed = 0;

  void validate(int n_layers) const;
  // Learning rate for update `step` (0-based) of `total`.
  double lr_at(int step, int total) const;
};

struct SftExample {
  Tokens query;
  Tokens response;
};

struct AlignPair {
  Tokens source;
  Tokens target;
};

// Sum of log p(response | query) plus its gradient with respect to the logits
// of the concatenated sequence (rows before the response are zero).
struct SequenceScore {
  double log_prob = 0.0;
  Matrix dlogits;
  ForwardCache cache;
};

SequenceScore sequence_log_prob(const Parameters& params, const Tokens& query, const Tokens& response,
                                bool with_grad, const SteeringPlan* plan = nullptr);

// Mean response-token NLL over the batch.
GradientSet loss_sft(const Parameters& params, std::span<const SftExample> batch);

// InfoNCE over mean-pooled layer activations, target side as the candidate set.
struct PooledAlignLoss {
  double loss = 0.0;
  Matrix cosine;  // [B x B], cosine(src_i, tgt_b)
  Matrix d_source;  // [B x d]
  Matrix d_target;  // [B x d]
};

PooledAlignLoss midalign_from_pooled(const Matrix& source, const Matrix& target);

GradientSet loss_midalign(const Parameters& params, std::span<const AlignPair> batch, int layer);

struct CloLoss {
  GradientSet grads;
  double sft = 0.0;
  double cl = 0.0;
  std::vector<double> z;  // one per triple, in batch order
};

CloLoss loss_clo(const Parameters& params, const Parameters& ref, std::span<const PreferenceTriple> batch,
                 double lambda, double beta, int pivot = 0);

struct TrainLogRow {
  int step = 0;
  std::string objective;
  std::string loss_kind;
  double loss = 0.0;
};

struct TrainResult {
  Parameters params;
  std::vector<TrainLogRow> log;
};

TrainResult train(const Parameters& params, const TrainingCorpora& corpora, const TrainConfig& cfg);

}  // namespace steerlab
