#include "steerlab/steering.hpp"

#include "steerlab/error.hpp"

#include <algorithm>
#include <map>

namespace steerlab {

Vector final_token_activation(const Parameters& params, const Tokens& tokens, int layer) {
  const ForwardResult r = forward_with_trace(params, tokens);
  const Matrix& h = r.trace.at(layer);
  return h.row(h.rows() - 1).transpose();
}

SteeringVector extract_steering_vector(const ActivationFn& activation, const PairSet& pairs, int layer,
                                       int d_model, std::uint64_t revision) {
  if (pairs.pairs.empty()) fail_data("empty pair set");
  SteeringVector v;
  v.kind = pairs.kind;
  v.layer = layer;
  v.values = Vector::Zero(d_model);
  v.n_pairs = static_cast<int>(pairs.pairs.size());
  v.model_revision = revision;
  for (const auto& [pos, neg] : pairs.pairs) {
    const Vector hp = activation(pos, layer);
    const Vector hn = activation(neg, layer);
    if (hp.size() != d_model || hn.size() != d_model) fail_data("activation dimension mismatch");
    v.values += hp - hn;
  }
  v.values /= static_cast<double>(pairs.pairs.size());
  if (!v.values.allFinite()) fail_numeric("non-finite steering vector");
  return v;
}

SteeringVector extract_steering_vector(const Parameters& params, const PairSet& pairs, int layer) {
  if (layer < 1 || layer > params.config.n_layers) {
    fail_data("extraction layer " + std::to_string(layer) + " out of range 1.." +
              std::to_string(params.config.n_layers));
  }
  const ActivationFn fn = [&](const Tokens& t, int l) { return final_token_activation(params, t, l); };
  return extract_steering_vector(fn, pairs, layer, params.config.d_model, params.revision);
}

SteeringPlan make_plan(const SteeringVector& v, double gamma) {
  SteeringPlan p;
  p.entries.push_back({v.layer, v.values, gamma, v.kind});
  return p;
}

SteeringPlan make_surgical_plan(const SteeringVector& v_en, const SteeringVector& v_loc, double gamma) {
  if (v_en.values.size() != v_loc.values.size()) fail_data("steering vector dimension mismatch");
  if (v_en.model_revision != v_loc.model_revision) fail_data("steering vectors come from different model revisions");
  SteeringPlan p;
  p.entries.push_back({v_en.layer, v_en.values, gamma, v_en.kind});
  p.entries.push_back({v_loc.layer, v_loc.values, gamma, v_loc.kind});
  return p;
}

SteeringPlan combine(const std::vector<SteeringPlan>& plans) {
  SteeringPlan out;
  for (const auto& p : plans) out.entries.insert(out.entries.end(), p.entries.begin(), p.entries.end());
  return out;
}

void check_revision(const SteeringVector& v, const Parameters& params, bool force) {
  if (v.values.size() != params.config.d_model) {
    fail_data("steering vector dimension " + std::to_string(v.values.size()) + " != d_model " +
              std::to_string(params.config.d_model));
  }
  if (!force && v.model_revision != params.revision) {
    fail_data("steering vector revision " + std::to_string(v.model_revision) + " != checkpoint revision " +
              std::to_string(params.revision) + " (use --force to override)");
  }
}

PairSet build_pair_set_en(const Vocabulary& vocab, const std::vector<McqItem>& items, int pivot, int target) {
  auto fact_of = [&](const McqItem& it) {
    for (TokenId t : it.query) {
      const int s = vocab.subject_index(t);
      if (s >= 0) return s;
    }
    return -1;
  };
  std::map<int, const McqItem*> pivot_by_fact;
  std::vector<const McqItem*> targets;
  for (const auto& it : items) {
    if (it.kind != FactKind::universal) continue;
    if (it.lang == pivot) pivot_by_fact[fact_of(it)] = &it;
    if (it.lang == target) targets.push_back(&it);
  }
  std::sort(targets.begin(), targets.end(), [](const McqItem* a, const McqItem* b) { return a->id < b->id; });
  PairSet set;
  set.kind = VectorKind::en;
  if (!targets.empty()) set.source = targets.front()->split;
  for (const McqItem* t : targets) {
    const auto it = pivot_by_fact.find(fact_of(*t));
    if (it == pivot_by_fact.end()) {
      fail_data("item " + std::to_string(t->id) + " has no pivot-language counterpart");
    }
    set.pairs.emplace_back(it->second->query, t->query);
  }
  if (set.pairs.empty()) fail_data("no universal items for target language " + std::to_string(target));
  return set;
}

PairSet build_pair_set_loc(const std::vector<McqItem>& items, int lang) {
  PairSet set;
  set.kind = VectorKind::loc;
  std::vector<const McqItem*> ctx;
  for (const auto& it : items) {
    if (it.kind == FactKind::cultural && it.lang == lang && it.contextualized) ctx.push_back(&it);
  }
  std::sort(ctx.begin(), ctx.end(), [](const McqItem* a, const McqItem* b) { return a->id < b->id; });
  if (!ctx.empty()) set.source = ctx.front()->split;
  for (const McqItem* it : ctx) set.pairs.emplace_back(it->query, decontextualize(*it).query);
  if (set.pairs.empty()) fail_data("no contextualized cultural items for language " + std::to_string(lang));
  return set;
}

}  // namespace steerlab
