#pragma once

#include "steerlab/model.hpp"
#include "steerlab/world.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace steerlab {

struct ScoredItem {
  int chosen = 0;
  std::vector<double> option_log_likelihood;
};

using McqScorer = std::function<ScoredItem(const McqItem&)>;

// Summed option log-likelihood given the query, one forward pass per option.
// Exact ties go to the lowest option index.
ScoredItem score_mcq(const Parameters& params, const McqItem& item, const SteeringPlan* plan = nullptr,
                     bool length_norm = false);

McqScorer model_scorer(const Parameters& params, const SteeringPlan* plan = nullptr, bool length_norm = false);

struct ItemRecord {
  int item_id = 0;
  int lang = 0;
  FactKind kind = FactKind::universal;
  bool contextualized = false;
  Split split = Split::test;
  int gold = 0;
  int chosen = 0;
  std::optional<int> pivot_option;
  std::vector<double> option_log_likelihood;

  bool correct() const { return chosen == gold; }
};

struct AccuracyRow {
  int lang = 0;
  std::string dataset;  // universal | cultural (decontextualized) | cultural_ctx
  int correct = 0;
  int total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct EvalReport {
  std::string plan_id = "none";
  std::uint64_t model_revision = 0;
  double accuracy = 0.0;  // over all records
  std::vector<AccuracyRow> rows;
  std::vector<ItemRecord> items;  // ordered by item id

  // Accuracy for (lang, dataset); throws when absent.
  double at(int lang, const std::string& dataset) const;
  const AccuracyRow* find(int lang, const std::string& dataset) const;
};

EvalReport accuracy(const McqScorer& scorer, const std::vector<McqItem>& items);
EvalReport accuracy(const Parameters& params, const std::vector<McqItem>& items,
                    const SteeringPlan* plan = nullptr, bool length_norm = false);

// Rebuilds the accuracy rows from item records.
void summarize(EvalReport& report);

struct PlanePoint {
  std::string method;
  std::string lang;
  double transfer = 0.0;  // accuracy points on the universal set
  double localization = 0.0;  // accuracy points on the cultural set
};

PlanePoint plane_point_from_accuracies(const std::string& method, const std::string& lang, double base_universal,
                                       double base_cultural, double cand_universal, double cand_cultural);

// One point per non-pivot language plus an "avg" point over them.
std::vector<PlanePoint> plane_points(const EvalReport& baseline, const EvalReport& candidate,
                                     const std::string& method, int pivot = 0);

struct BiasRow {
  int lang = 0;
  int eligible = 0;
  int pivot_picks = 0;
  double fraction() const { return eligible ? static_cast<double>(pivot_picks) / eligible : 0.0; }
};

struct BiasReport {
  std::vector<BiasRow> rows;  // non-pivot languages with eligible items
  int eligible = 0;
  int pivot_picks = 0;
  double fraction() const { return eligible ? static_cast<double>(pivot_picks) / eligible : 0.0; }
};

// Eligible: non-pivot decontextualized cultural items whose pivot-world option exists and is not gold.
bool bias_eligible(const McqItem& item, int pivot);
BiasReport english_bias(const McqScorer& scorer, const std::vector<McqItem>& cultural, int pivot = 0);
BiasReport english_bias(const EvalReport& report, int pivot = 0);

}  // namespace steerlab
