#pragma once

#include "steerlab/tensor.hpp"

#include <string>
#include <vector>

namespace steerlab {

enum class VectorKind { en, loc };

std::string to_string(VectorKind kind);
VectorKind vector_kind_from_string(const std::string& s);

struct PlanEntry {
  int layer = 0;  // 1-based: added to the residual stream after block `layer`
  Vector vector;
  double gamma = 0.0;
  VectorKind kind = VectorKind::en;
};

// A set of residual-stream additions applied during a forward pass.
struct SteeringPlan {
  std::vector<PlanEntry> entries;

  bool empty() const { return entries.empty(); }
  // Sum of gamma * v over the entries at `layer`; zero-length when none apply.
  bool touches(int layer) const;
  Vector delta_at(int layer, int d_model) const;
};

}  // namespace steerlab
