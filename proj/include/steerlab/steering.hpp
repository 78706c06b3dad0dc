#pragma once

#include "steerlab/model.hpp"
#include "steerlab/plan.hpp"
#include "steerlab/world.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace steerlab {

inline constexpr double kDefaultGamma = 2.0;

struct PairSet {
  VectorKind kind = VectorKind::en;
  // (positive, negative) inputs.
  std::vector<std::pair<Tokens, Tokens>> pairs;
  Split source = Split::dev1;
};

struct SteeringVector {
  VectorKind kind = VectorKind::en;
  int layer = 1;
  Vector values;
  int n_pairs = 0;
  std::uint64_t model_revision = 0;
  double gamma_default = kDefaultGamma;

  bool operator==(const SteeringVector&) const = default;
};

// Layer-l residual activation at the final position of the input.
using ActivationFn = std::function<Vector(const Tokens&, int layer)>;

Vector final_token_activation(const Parameters& params, const Tokens& tokens, int layer);

// Mean of (h(pos) - h(neg)) over the pair set.
SteeringVector extract_steering_vector(const ActivationFn& activation, const PairSet& pairs, int layer,
                                       int d_model, std::uint64_t revision = 0);
SteeringVector extract_steering_vector(const Parameters& params, const PairSet& pairs, int layer);

SteeringPlan make_plan(const SteeringVector& v, double gamma);
SteeringPlan make_surgical_plan(const SteeringVector& v_en, const SteeringVector& v_loc, double gamma);
SteeringPlan combine(const std::vector<SteeringPlan>& plans);

// Throws unless the vector was extracted from this model revision (or `force`).
void check_revision(const SteeringVector& v, const Parameters& params, bool force);

// Pairs (pivot rendering, target rendering) of the same universal fact.
PairSet build_pair_set_en(const Vocabulary& vocab, const std::vector<McqItem>& items, int pivot, int target);

// Pairs (contextualized, decontextualized) of each contextualized item in `lang`.
PairSet build_pair_set_loc(const std::vector<McqItem>& items, int lang);

}  // namespace steerlab
