#include "steerlab/eval.hpp"

#include "steerlab/error.hpp"
#include "steerlab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace steerlab {

ScoredItem score_mcq(const Parameters& params, const McqItem& item, const SteeringPlan* plan, bool length_norm) {
  if (item.options.empty()) fail_data("item " + std::to_string(item.id) + " has no options");
  ScoredItem out;
  for (const auto& option : item.options) {
    if (item.query.size() + option.size() > static_cast<std::size_t>(params.config.max_seq_len)) {
      fail_data("item " + std::to_string(item.id) + ": query + option exceeds max_seq_len");
    }
    double ll = sequence_log_prob(params, item.query, option, false, plan).log_prob;
    if (length_norm) ll /= static_cast<double>(option.size());
    if (!std::isfinite(ll)) fail_numeric("non-finite option log-likelihood");
    out.option_log_likelihood.push_back(ll);
  }
  const auto& ll = out.option_log_likelihood;
  out.chosen = static_cast<int>(std::max_element(ll.begin(), ll.end()) - ll.begin());
  return out;
}

McqScorer model_scorer(const Parameters& params, const SteeringPlan* plan, bool length_norm) {
  return [&params, plan, length_norm](const McqItem& item) { return score_mcq(params, item, plan, length_norm); };
}

const AccuracyRow* EvalReport::find(int lang, const std::string& dataset) const {
  for (const auto& r : rows) {
    if (r.lang == lang && r.dataset == dataset) return &r;
  }
  return nullptr;
}

double EvalReport::at(int lang, const std::string& dataset) const {
  const AccuracyRow* r = find(lang, dataset);
  if (!r) fail_data("report has no " + dataset + " accuracy for language " + std::to_string(lang));
  return r->accuracy();
}

void summarize(EvalReport& report) {
  std::map<std::pair<int, std::string>, AccuracyRow> rows;
  int correct = 0;
  auto bump = [&](int lang, const std::string& ds, bool ok) {
    AccuracyRow& r = rows[{lang, ds}];
    r.lang = lang;
    r.dataset = ds;
    r.total += 1;
    r.correct += ok ? 1 : 0;
  };
  for (const auto& it : report.items) {
    const bool ok = it.correct();
    correct += ok ? 1 : 0;
    if (it.kind == FactKind::universal) {
      bump(it.lang, "universal", ok);
    } else {
      // The cultural benchmark is the decontextualized form; region-marked items are diagnostic.
      bump(it.lang, it.contextualized ? "cultural_ctx" : "cultural", ok);
    }
  }
  report.rows.clear();
  for (auto& [k, r] : rows) report.rows.push_back(r);
  report.accuracy = report.items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(report.items.size());
}

EvalReport accuracy(const McqScorer& scorer, const std::vector<McqItem>& items) {
  if (items.empty()) fail_data("cannot evaluate an empty item set");
  EvalReport report;
  for (const auto& it : items) {
    if (it.gold < 0 || it.gold >= static_cast<int>(it.options.size())) {
      fail_data("item " + std::to_string(it.id) + " has gold index out of range");
    }
    ScoredItem s = scorer(it);
    report.items.push_back({it.id, it.lang, it.kind, it.contextualized, it.split, it.gold, s.chosen,
                            it.pivot_option, std::move(s.option_log_likelihood)});
  }
  std::stable_sort(report.items.begin(), report.items.end(),
                   [](const ItemRecord& a, const ItemRecord& b) { return a.item_id < b.item_id; });
  summarize(report);
  return report;
}

EvalReport accuracy(const Parameters& params, const std::vector<McqItem>& items, const SteeringPlan* plan,
                    bool length_norm) {
  EvalReport r = accuracy(model_scorer(params, plan, length_norm), items);
  r.model_revision = params.revision;
  return r;
}

PlanePoint plane_point_from_accuracies(const std::string& method, const std::string& lang, double base_universal,
                                       double base_cultural, double cand_universal, double cand_cultural) {
  return {method, lang, cand_universal - base_universal, cand_cultural - base_cultural};
}

std::vector<PlanePoint> plane_points(const EvalReport& baseline, const EvalReport& candidate,
                                     const std::string& method, int pivot) {
  std::vector<int> base_ids, cand_ids;
  for (const auto& it : baseline.items) base_ids.push_back(it.item_id);
  for (const auto& it : candidate.items) cand_ids.push_back(it.item_id);
  if (base_ids != cand_ids) fail_data("plane_point: baseline and candidate cover different items");

  std::set<int> langs;
  for (const auto& r : baseline.rows) {
    if (r.lang != pivot) langs.insert(r.lang);
  }
  std::vector<PlanePoint> out;
  double sum_t = 0.0, sum_l = 0.0;
  for (int lang : langs) {
    PlanePoint p = plane_point_from_accuracies(
        method, std::to_string(lang), 100.0 * baseline.at(lang, "universal"), 100.0 * baseline.at(lang, "cultural"),
        100.0 * candidate.at(lang, "universal"), 100.0 * candidate.at(lang, "cultural"));
    sum_t += p.transfer;
    sum_l += p.localization;
    out.push_back(p);
  }
  if (!langs.empty()) {
    const auto n = static_cast<double>(langs.size());
    out.push_back({method, "avg", sum_t / n, sum_l / n});
  }
  return out;
}

bool bias_eligible(const McqItem& item, int pivot) {
  return item.kind == FactKind::cultural && !item.contextualized && item.lang != pivot && item.pivot_option &&
         *item.pivot_option != item.gold;
}

namespace {

BiasReport tally(const std::vector<std::tuple<int, bool>>& picks) {
  std::map<int, BiasRow> rows;
  BiasReport out;
  for (const auto& [lang, picked] : picks) {
    BiasRow& r = rows[lang];
    r.lang = lang;
    r.eligible += 1;
    r.pivot_picks += picked ? 1 : 0;
    out.eligible += 1;
    out.pivot_picks += picked ? 1 : 0;
  }
  if (out.eligible == 0) fail_data("english_bias: no eligible items");
  for (auto& [l, r] : rows) out.rows.push_back(r);
  return out;
}

}  // namespace

BiasReport english_bias(const McqScorer& scorer, const std::vector<McqItem>& cultural, int pivot) {
  std::vector<std::tuple<int, bool>> picks;
  for (const auto& it : cultural) {
    if (!bias_eligible(it, pivot)) continue;
    picks.emplace_back(it.lang, scorer(it).chosen == *it.pivot_option);
  }
  return tally(picks);
}

BiasReport english_bias(const EvalReport& report, int pivot) {
  std::vector<std::tuple<int, bool>> picks;
  for (const auto& r : report.items) {
    const bool eligible = r.kind == FactKind::cultural && !r.contextualized && r.lang != pivot && r.pivot_option && *r.pivot_option != r.gold;
    if (eligible) picks.emplace_back(r.lang, r.chosen == *r.pivot_option);
  }
  return tally(picks);
}

}  // namespace steerlab
