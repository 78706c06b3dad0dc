#pragma once

#include "steerlab/analysis.hpp"
#include "steerlab/eval.hpp"
#include "steerlab/model.hpp"
#include "steerlab/objectives.hpp"
#include "steerlab/steering.hpp"
#include "steerlab/world.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace steerlab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- files ----------------------------------------------------------------

std::string read_file(const fs::path& path);
// Refuses to replace an existing file unless `overwrite`; creates parent dirs.
void write_file(const fs::path& path, const std::string& bytes, bool overwrite);
void ensure_writable(const fs::path& path, bool overwrite);
json read_json(const fs::path& path);

// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

// ---- checkpoints ------------------------------------------------------------
// "STB1" | u32 LE header length | JSON header | little-endian f64 payload.

inline constexpr int kCheckpointVersion = 1;

std::string encode_checkpoint(const Parameters& params);
Parameters decode_checkpoint(const std::string& bytes);
void save_checkpoint(const fs::path& path, const Parameters& params, bool overwrite);
Parameters load_checkpoint(const fs::path& path);

// ---- configs ----------------------------------------------------------------

json to_json(const WorldSpec& spec);
json to_json(const ModelConfig& config);
json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
WorldSpec world_spec_from_json(const json& j);
ModelConfig model_config_from_json(const json& j);
TrainConfig train_config_from_json(const json& j);

// ---- steering vectors ----------------------------------------------------------

json to_json(const SteeringVector& v);
SteeringVector steering_vector_from_json(const json& j);
void save_vector(const fs::path& path, const SteeringVector& v, bool overwrite);
SteeringVector load_vector(const fs::path& path);

// ---- datasets (JSONL) --------------------------------------------------------------

json to_json(const McqItem& item);
McqItem item_from_json(const json& j);
json to_json(const CorpusLine& line);
CorpusLine corpus_line_from_json(const json& j);
json to_json(const ParallelPair& p);
ParallelPair parallel_pair_from_json(const json& j);
json to_json(const PreferenceTriple& t);
PreferenceTriple preference_from_json(const json& j);

template <typename T>
std::string to_jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<json> read_jsonl(const fs::path& path);

struct WorldFiles {
  static constexpr const char* spec = "spec.json";
  static constexpr const char* corpus = "corpus.jsonl";
  static constexpr const char* parallel = "parallel.jsonl";
  static constexpr const char* preferences = "preferences.jsonl";
  static constexpr const char* universal = "items_universal.jsonl";
  static constexpr const char* cultural = "items_cultural.jsonl";
};

void save_world(const fs::path& dir, const World& world, bool overwrite);
TrainingCorpora load_corpora(const fs::path& dir);
EvalSets load_eval_sets(const fs::path& dir);
WorldSpec load_world_spec(const fs::path& dir);

// ---- reports -------------------------------------------------------------------

json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const json& j);
json to_json(const BiasReport& bias);

std::string train_log_csv(const std::vector<TrainLogRow>& log);
std::string sweep_csv(const SweepTable& table);
std::string perp_csv(const PerpReport& report);
std::string plane_csv(const std::vector<PlanePoint>& points);
std::string pca_csv(const OverlapReport& report);

// ---- plots ---------------------------------------------------------------------

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  int group = 0;
  std::string text;
};

struct ScatterStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool quadrant_axes = false;  // draw x=0 and y=0
  std::vector<std::string> group_names;
};

std::string scatter_svg(const std::vector<ScatterPoint>& points, const ScatterStyle& style);

}  // namespace steerlab
