#pragma once

#include "steerlab/persist.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace steerlab {

struct RunConfig {
  WorldSpec world;
  ModelConfig model;  // vocab_size is filled in from the world
  TrainConfig pretrain;  // produces the unaligned checkpoint
  TrainConfig align;  // the alignment method under study
  double gamma = kDefaultGamma;
  int layer_en = 5;
  int layer_loc = 7;
  std::vector<int> sweep_layers;  // empty: every layer
  std::string out_dir = "run";
  std::uint64_t seed = 42;

  void validate() const;
  std::vector<int> sweep_grid() const;
};

RunConfig default_run_config();
// Derives every component seed from one global seed.
void reseed(RunConfig& cfg, std::uint64_t seed);

json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const json& j);

// ---- building blocks shared by the CLI commands --------------------------------

Parameters fresh_model(const RunConfig& cfg, const Vocabulary& vocab);

// Pairs pooled over every non-pivot language.
PairSet en_pair_set(const Vocabulary& vocab, const std::vector<McqItem>& items, int n_languages);
PairSet loc_pair_set(const std::vector<McqItem>& items, int n_languages);
PairSet pair_set_for(VectorKind kind, const Vocabulary& vocab, const std::vector<McqItem>& items, int n_languages);

// Universal and cultural (both forms) items of one split.
std::vector<McqItem> split_items(const EvalSets& sets, Split split);
std::vector<SweepDataset> sweep_datasets(const EvalSets& sets, Split split);

// One entry per vector, all at scale `gamma`; vectors are checked against the checkpoint.
SteeringPlan plan_from_vectors(const std::vector<SteeringVector>& vectors, double gamma, const Parameters& params,
                               bool force);

std::vector<ScatterPoint> plane_scatter(const std::vector<PlanePoint>& points, std::vector<std::string>& groups);

// ---- end to end --------------------------------------------------------------------

struct PipelineResult {
  EvalReport base, aligned, en, loc, surgical;
  std::vector<PlanePoint> plane;
  BiasReport bias_base, bias_aligned, bias_surgical;
};

// gen -> pretrain -> align -> extract -> eval -> plane, plus sweep, perpendicularity,
// overlap and a summary; every artifact lands under `dir`.
PipelineResult run_pipeline(const RunConfig& cfg, const fs::path& dir, bool overwrite, std::ostream* progress);

// Summary of a run directory (accuracies, plane, bias, perpendicularity, sweep argmax).
json summarize_run(const fs::path& dir);
std::string summary_markdown(const json& summary);

}  // namespace steerlab
