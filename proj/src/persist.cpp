#include "steerlab/persist.hpp"

#include "steerlab/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace steerlab {

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail_data(what + ": invalid JSON (" + e.what() + ")");
  }
}

// Typed field access that reports the offending key instead of a library error.
template <typename T>
T field(const json& j, const char* key, const std::string& what) {
  if (!j.is_object() || !j.contains(key)) fail_data(what + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail_data(what + ": field '" + std::string(key) + "' has the wrong type");
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out, const std::string& what) {
  if (j.contains(key)) out = field<T>(j, key, what);
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& what) {
  if (!j.is_object()) fail_data(what + ": expected a JSON object");
  const std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) fail_data(what + ": unknown field '" + k + "'");
  }
}

Tokens tokens_field(const json& j, const char* key, const std::string& what) {
  return field<Tokens>(j, key, what);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_f64(std::string& out, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

// ---- files ----------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_writable(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite) fail_usage(path.string() + " exists (pass --overwrite to replace it)");
}

void write_file(const fs::path& path, const std::string& bytes, bool overwrite) {
  ensure_writable(path, overwrite);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_data("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail_data("short write to " + path.string());
}

json read_json(const fs::path& path) { return parse_json(read_file(path), path.string()); }

std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc()) fail_numeric("cannot format double");
  return std::string(buf.data(), end);
}

// ---- configs ----------------------------------------------------------------

json to_json(const WorldSpec& s) {
  return {{"n_languages", s.n_languages},
          {"n_universal_facts", s.n_universal_facts},
          {"n_cultural_facts", s.n_cultural_facts},
          {"universal_coverage_nonpivot", s.universal_coverage_nonpivot},
          {"tokens_per_language", s.tokens_per_language},
          {"n_objects", s.n_objects},
          {"n_options", s.n_options},
          {"n_relations", s.n_relations},
          {"pivot_option_fraction", s.pivot_option_fraction},
          {"dev1_fraction", s.dev1_fraction},
          {"dev2_fraction", s.dev2_fraction},
          {"parallel_fraction", s.parallel_fraction},
          {"seed", s.seed}};
}

WorldSpec world_spec_from_json(const json& j) {
  const std::string w = "world spec";
  reject_unknown(j,
                 {"n_languages", "n_universal_facts", "n_cultural_facts", "universal_coverage_nonpivot",
                  "tokens_per_language", "n_objects", "n_options", "n_relations", "pivot_option_fraction",
                  "dev1_fraction", "dev2_fraction", "parallel_fraction", "seed"},
                 w);
  WorldSpec s;
  maybe(j, "n_languages", s.n_languages, w);
  maybe(j, "n_universal_facts", s.n_universal_facts, w);
  maybe(j, "n_cultural_facts", s.n_cultural_facts, w);
  maybe(j, "universal_coverage_nonpivot", s.universal_coverage_nonpivot, w);
  maybe(j, "tokens_per_language", s.tokens_per_language, w);
  maybe(j, "n_objects", s.n_objects, w);
  maybe(j, "n_options", s.n_options, w);
  maybe(j, "n_relations", s.n_relations, w);
  maybe(j, "pivot_option_fraction", s.pivot_option_fraction, w);
  maybe(j, "dev1_fraction", s.dev1_fraction, w);
  maybe(j, "dev2_fraction", s.dev2_fraction, w);
  maybe(j, "parallel_fraction", s.parallel_fraction, w);
  maybe(j, "seed", s.seed, w);
  return s;
}

json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers}, {"d_model", c.d_model},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},         {"max_seq_len", c.max_seq_len},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model config";
  reject_unknown(j, {"vocab_size", "n_layers", "d_model", "n_heads", "d_ff", "max_seq_len", "seed"}, w);
  ModelConfig c;
  maybe(j, "vocab_size", c.vocab_size, w);
  maybe(j, "n_layers", c.n_layers, w);
  maybe(j, "d_model", c.d_model, w);
  maybe(j, "n_heads", c.n_heads, w);
  maybe(j, "d_ff", c.d_ff, w);
  maybe(j, "max_seq_len", c.max_seq_len, w);
  maybe(j, "seed", c.seed, w);
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"optimizer", to_string(c.optimizer)},
          {"lr", c.lr},
          {"schedule", to_string(c.schedule)},
          {"warmup_fraction", c.warmup_fraction},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"midalign_layer", c.midalign_layer},
          {"clo_lambda", c.clo_lambda},
          {"clo_beta", c.clo_beta},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train config";
  reject_unknown(j,
                 {"objective", "optimizer", "lr", "schedule", "warmup_fraction", "batch_size", "epochs",
                  "midalign_layer", "clo_lambda", "clo_beta", "seed"},
                 w);
  TrainConfig c;
  if (j.contains("objective")) c.objective = objective_from_string(field<std::string>(j, "objective", w));
  if (j.contains("optimizer")) c.optimizer = optimizer_from_string(field<std::string>(j, "optimizer", w));
  maybe(j, "lr", c.lr, w);
  if (j.contains("schedule")) c.schedule = lr_schedule_from_string(field<std::string>(j, "schedule", w));
  maybe(j, "warmup_fraction", c.warmup_fraction, w);
  maybe(j, "batch_size", c.batch_size, w);
  maybe(j, "epochs", c.epochs, w);
  maybe(j, "midalign_layer", c.midalign_layer, w);
  maybe(j, "clo_lambda", c.clo_lambda, w);
  maybe(j, "clo_beta", c.clo_beta, w);
  maybe(j, "seed", c.seed, w);
  return c;
}

// ---- checkpoints ------------------------------------------------------------

std::string encode_checkpoint(const Parameters& params) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  params.weights.visit([&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * 8;
  });
  const json header = {{"format", "STB"},
                       {"version", kCheckpointVersion},
                       {"config", to_json(params.config)},
                       {"revision", params.revision},
                       {"tensors", tensors},
                       {"payload_bytes", offset}};
  const std::string h = header.dump();

  std::string out = "STB" + std::to_string(kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out.reserve(out.size() + offset);
  params.weights.visit([&](const std::string&, const Matrix& m) {
    // Row-major storage: data() walks the tensor in (row, col) order.
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  });
  return out;
}

Parameters decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 3, "STB") != 0) fail_data("not a checkpoint (bad magic)");
  if (bytes[3] != static_cast<char>('0' + kCheckpointVersion)) {
    fail_data(std::string("checkpoint format version '") + bytes[3] + "' is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t hlen = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(hlen)) fail_data("checkpoint header truncated");
  const json header = parse_json(bytes.substr(8, hlen), "checkpoint header");
  const std::string w = "checkpoint header";
  if (field<int>(header, "version", w) != kCheckpointVersion) fail_data("checkpoint header version mismatch");

  Parameters p;
  p.config = model_config_from_json(field<json>(header, "config", w));
  p.config.validate();
  p.revision = field<std::uint64_t>(header, "revision", w);
  p.weights = zero_weights(p.config);

  const std::size_t base = 8 + hlen;
  const auto payload = field<std::uint64_t>(header, "payload_bytes", w);
  if (bytes.size() - base != payload) {
    fail_data("checkpoint payload is " + std::to_string(bytes.size() - base) + " bytes, header declares " +
              std::to_string(payload));
  }
  const json tensors = field<json>(header, "tensors", w);
  std::size_t idx = 0;
  std::uint64_t expected = 0;
  p.weights.visit([&](const std::string& name, Matrix& m) {
    if (idx >= tensors.size()) fail_data("checkpoint is missing tensor " + name);
    const json& t = tensors[idx++];
    const auto shape = field<std::vector<Eigen::Index>>(t, "shape", w);
    const auto offset = field<std::uint64_t>(t, "offset", w);
    if (field<std::string>(t, "name", w) != name || shape.size() != 2 || shape[0] != m.rows() ||
        shape[1] != m.cols() || offset != expected) {
      fail_data("checkpoint tensor table does not match the config at " + name);
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(bytes, base + offset + 8 * i);
    expected += static_cast<std::uint64_t>(m.size()) * 8;
  });
  if (idx != tensors.size() || expected != payload) fail_data("checkpoint tensor table has extra entries");
  return p;
}

void save_checkpoint(const fs::path& path, const Parameters& params, bool overwrite) {
  write_file(path, encode_checkpoint(params), overwrite);
}

Parameters load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file(path)); }

// ---- steering vectors ----------------------------------------------------------

json to_json(const SteeringVector& v) {
  return {{"kind", to_string(v.kind)},
          {"layer", v.layer},
          {"dim", v.values.size()},
          {"gamma_default", v.gamma_default},
          {"model_revision", v.model_revision},
          {"values", std::vector<double>(v.values.data(), v.values.data() + v.values.size())}};
}

SteeringVector steering_vector_from_json(const json& j) {
  const std::string w = "steering vector";
  reject_unknown(j, {"kind", "layer", "dim", "gamma_default", "model_revision", "values"}, w);
  SteeringVector v;
  v.kind = vector_kind_from_string(field<std::string>(j, "kind", w));
  v.layer = field<int>(j, "layer", w);
  v.gamma_default = field<double>(j, "gamma_default", w);
  v.model_revision = field<std::uint64_t>(j, "model_revision", w);
  const auto values = field<std::vector<double>>(j, "values", w);
  if (static_cast<int>(values.size()) != field<int>(j, "dim", w)) fail_data("steering vector: dim does not match values");
  v.values = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (!v.values.allFinite() || !std::isfinite(v.gamma_default)) fail_numeric("steering vector has non-finite values");
  return v;
}

void save_vector(const fs::path& path, const SteeringVector& v, bool overwrite) {
  write_file(path, to_json(v).dump() + "\n", overwrite);
}

SteeringVector load_vector(const fs::path& path) { return steering_vector_from_json(read_json(path)); }

// ---- datasets (JSONL) --------------------------------------------------------------

json to_json(const McqItem& it) {
  return {{"id", it.id},
          {"lang", it.lang},
          {"kind", to_string(it.kind)},
          {"ctx", it.contextualized},
          {"query", it.query},
          {"options", it.options},
          {"gold", it.gold},
          {"pivot_opt", it.pivot_option ? json(*it.pivot_option) : json(nullptr)},
          {"split", to_string(it.split)}};
}

McqItem item_from_json(const json& j) {
  const std::string w = "item";
  McqItem it;
  it.id = field<int>(j, "id", w);
  it.lang = field<int>(j, "lang", w);
  it.kind = fact_kind_from_string(field<std::string>(j, "kind", w));
  it.contextualized = field<bool>(j, "ctx", w);
  it.query = tokens_field(j, "query", w);
  it.options = field<std::vector<Tokens>>(j, "options", w);
  it.gold = field<int>(j, "gold", w);
  if (j.contains("pivot_opt") && !j.at("pivot_opt").is_null()) it.pivot_option = field<int>(j, "pivot_opt", w);
  it.split = split_from_string(field<std::string>(j, "split", w));
  if (it.options.empty() || it.gold < 0 || it.gold >= static_cast<int>(it.options.size())) {
    fail_data("item " + std::to_string(it.id) + ": gold index out of range");
  }
  return it;
}

json to_json(const CorpusLine& line) {
  return {{"lang", line.lang}, {"tokens", line.tokens}, {"prompt_len", line.prompt_length}};
}

CorpusLine corpus_line_from_json(const json& j) {
  CorpusLine line;
  line.lang = field<int>(j, "lang", "corpus line");
  line.tokens = tokens_field(j, "tokens", "corpus line");
  maybe(j, "prompt_len", line.prompt_length, "corpus line");
  return line;
}

json to_json(const ParallelPair& p) {
  return {{"lang", p.lang},
          {"fact", p.fact},
          {"pivot_query", p.pivot_query},
          {"pivot_response", p.pivot_response},
          {"query", p.query},
          {"response", p.response}};
}

ParallelPair parallel_pair_from_json(const json& j) {
  const std::string w = "parallel pair";
  ParallelPair p;
  p.lang = field<int>(j, "lang", w);
  p.fact = field<int>(j, "fact", w);
  p.pivot_query = tokens_field(j, "pivot_query", w);
  p.pivot_response = tokens_field(j, "pivot_response", w);
  p.query = tokens_field(j, "query", w);
  p.response = tokens_field(j, "response", w);
  return p;
}

json to_json(const PreferenceTriple& t) {
  return {{"x", t.x}, {"y_pref", t.y_pref}, {"y_rej", t.y_rej}, {"lang", t.lang}};
}

PreferenceTriple preference_from_json(const json& j) {
  const std::string w = "preference";
  return {tokens_field(j, "x", w), tokens_field(j, "y_pref", w), tokens_field(j, "y_rej", w), field<int>(j, "lang", w)};
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<json> rows;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    rows.push_back(parse_json(line, path.string() + ":" + std::to_string(n)));
  }
  return rows;
}

void save_world(const fs::path& dir, const World& world, bool overwrite) {
  const TrainingCorpora corpora = emit_training_corpora(world);
  const EvalSets sets = emit_eval_sets(world);
  write_file(dir / WorldFiles::spec, to_json(world.spec).dump(2) + "\n", overwrite);
  write_file(dir / WorldFiles::corpus, to_jsonl(corpora.lm), overwrite);
  write_file(dir / WorldFiles::parallel, to_jsonl(corpora.parallel), overwrite);
  write_file(dir / WorldFiles::preferences, to_jsonl(corpora.preferences), overwrite);
  write_file(dir / WorldFiles::universal, to_jsonl(sets.universal), overwrite);
  write_file(dir / WorldFiles::cultural, to_jsonl(sets.cultural), overwrite);
}

WorldSpec load_world_spec(const fs::path& dir) { return world_spec_from_json(read_json(dir / WorldFiles::spec)); }

TrainingCorpora load_corpora(const fs::path& dir) {
  TrainingCorpora c;
  for (const auto& j : read_jsonl(dir / WorldFiles::corpus)) c.lm.push_back(corpus_line_from_json(j));
  for (const auto& j : read_jsonl(dir / WorldFiles::parallel)) c.parallel.push_back(parallel_pair_from_json(j));
  for (const auto& j : read_jsonl(dir / WorldFiles::preferences)) c.preferences.push_back(preference_from_json(j));
  return c;
}

EvalSets load_eval_sets(const fs::path& dir) {
  EvalSets s;
  for (const auto& j : read_jsonl(dir / WorldFiles::universal)) s.universal.push_back(item_from_json(j));
  for (const auto& j : read_jsonl(dir / WorldFiles::cultural)) s.cultural.push_back(item_from_json(j));
  return s;
}

// ---- reports -------------------------------------------------------------------

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"lang", row.lang},
                    {"dataset", row.dataset},
                    {"correct", row.correct},
                    {"total", row.total},
                    {"accuracy", row.accuracy()}});
  }
  json items = json::array();
  for (const auto& it : r.items) {
    items.push_back({{"id", it.item_id},
                     {"lang", it.lang},
                     {"kind", to_string(it.kind)},
                     {"ctx", it.contextualized},
                     {"split", to_string(it.split)},
                     {"gold", it.gold},
                     {"chosen", it.chosen},
                     {"pivot_opt", it.pivot_option ? json(*it.pivot_option) : json(nullptr)},
                     {"option_loglik", it.option_log_likelihood}});
  }
  return {{"plan_id", r.plan_id},
          {"model_revision", r.model_revision},
          {"accuracy", r.accuracy},
          {"rows", rows},
          {"items", items}};
}

EvalReport eval_report_from_json(const json& j) {
  const std::string w = "eval report";
  EvalReport r;
  r.plan_id = field<std::string>(j, "plan_id", w);
  r.model_revision = field<std::uint64_t>(j, "model_revision", w);
  for (const auto& it : field<json>(j, "items", w)) {
    ItemRecord rec;
    rec.item_id = field<int>(it, "id", w);
    rec.lang = field<int>(it, "lang", w);
    rec.kind = fact_kind_from_string(field<std::string>(it, "kind", w));
    rec.contextualized = field<bool>(it, "ctx", w);
    rec.split = split_from_string(field<std::string>(it, "split", w));
    rec.gold = field<int>(it, "gold", w);
    rec.chosen = field<int>(it, "chosen", w);
    if (!it.at("pivot_opt").is_null()) rec.pivot_option = field<int>(it, "pivot_opt", w);
    rec.option_log_likelihood = field<std::vector<double>>(it, "option_loglik", w);
    r.items.push_back(std::move(rec));
  }
  summarize(r);
  return r;
}

json to_json(const BiasReport& b) {
  json rows = json::array();
  for (const auto& row : b.rows) {
    rows.push_back({{"lang", row.lang},
                    {"eligible", row.eligible},
                    {"pivot_picks", row.pivot_picks},
                    {"fraction", row.fraction()}});
  }
  return {{"eligible", b.eligible}, {"pivot_picks", b.pivot_picks}, {"fraction", b.fraction()}, {"rows", rows}};
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,objective,loss_kind,loss\n";
  for (const auto& r : log) {
    out += std::to_string(r.step) + "," + r.objective + "," + r.loss_kind + "," + format_double(r.loss) + "\n";
  }
  return out;
}

std::string sweep_csv(const SweepTable& t) {
  std::string out = "layer,kind,dataset,accuracy\n";
  for (const auto& r : t.rows) {
    out += std::to_string(r.layer) + "," + r.kind + "," + r.dataset + "," + format_double(r.accuracy) + "\n";
  }
  return out;
}

std::string perp_csv(const PerpReport& report) {
  std::string out = "layer,score_deg\n";
  for (const auto& r : report.rows) out += std::to_string(r.layer) + "," + format_double(r.score_deg) + "\n";
  return out;
}

std::string plane_csv(const std::vector<PlanePoint>& points) {
  std::string out = "method,lang,transfer,localization\n";
  for (const auto& p : points) {
    out += p.method + "," + p.lang + "," + format_double(p.transfer) + "," + format_double(p.localization) + "\n";
  }
  return out;
}

std::string pca_csv(const OverlapReport& report) {
  std::string out = "layer,row,label,pc1,pc2\n";
  for (const auto& l : report.layers) {
    const Matrix& p = l.pca.projections;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const int label = l.pca.labels.empty() ? 0 : l.pca.labels[static_cast<std::size_t>(i)];
      out += std::to_string(l.layer) + "," + std::to_string(i) + "," + std::to_string(label) + "," +
             format_double(p(i, 0)) + "," + format_double(p.cols() > 1 ? p(i, 1) : 0.0) + "\n";
    }
  }
  return out;
}

// ---- plots ---------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace

std::string scatter_svg(const std::vector<ScatterPoint>& points, const ScatterStyle& style) {
  static const std::array<const char*, 8> palette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                     "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  const double W = 480, H = 400, M = 56;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool first = !style.quadrant_axes;  // quadrant plots always include the origin
  for (const auto& p : points) {
    if (first) {
      x0 = x1 = p.x;
      y0 = y1 = p.y;
      first = false;
    }
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  const double padx = std::max(1e-9, (x1 - x0) * 0.1), pady = std::max(1e-9, (y1 - y0) * 0.1);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto sx = [&](double x) { return M + (x - x0) / (x1 - x0) * (W - 2 * M); };
  auto sy = [&](double y) { return H - M - (y - y0) / (y1 - y0) * (H - 2 * M); };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W) + "\" height=\"" + fixed(H) +
                  "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(style.title) +
       "</text>\n";
  s += "<rect x=\"" + fixed(M) + "\" y=\"" + fixed(M) + "\" width=\"" + fixed(W - 2 * M) + "\" height=\"" +
       fixed(H - 2 * M) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (style.quadrant_axes) {
    s += "<line x1=\"" + fixed(sx(0)) + "\" y1=\"" + fixed(M) + "\" x2=\"" + fixed(sx(0)) + "\" y2=\"" + fixed(H - M) +
         "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    s += "<line x1=\"" + fixed(M) + "\" y1=\"" + fixed(sy(0)) + "\" x2=\"" + fixed(W - M) + "\" y2=\"" + fixed(sy(0)) +
         "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  s += "<text x=\"" + fixed(W / 2) + "\" y=\"" + fixed(H - 16) + "\" text-anchor=\"middle\">" +
       xml_escape(style.x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fixed(H / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + fixed(H / 2) +
       ")\">" + xml_escape(style.y_label) + "</text>\n";
  for (const auto& [v, anchor, x, y] :
       {std::tuple{x0, "start", M, H - M + 14}, std::tuple{x1, "end", W - M, H - M + 14}}) {
    s += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" text-anchor=\"" + anchor + "\">" + fixed(v) + "</text>\n";
  }
  s += "<text x=\"" + fixed(M - 4) + "\" y=\"" + fixed(H - M) + "\" text-anchor=\"end\">" + fixed(y0) + "</text>\n";
  s += "<text x=\"" + fixed(M - 4) + "\" y=\"" + fixed(M + 4) + "\" text-anchor=\"end\">" + fixed(y1) + "</text>\n";

  for (const auto& p : points) {
    const char* color = palette[static_cast<std::size_t>(p.group) % palette.size()];
    s += "<circle cx=\"" + fixed(sx(p.x)) + "\" cy=\"" + fixed(sy(p.y)) + "\" r=\"4\" fill=\"" + color +
         "\" fill-opacity=\"0.8\"/>\n";
    if (!p.text.empty()) {
      s += "<text x=\"" + fixed(sx(p.x) + 6) + "\" y=\"" + fixed(sy(p.y) - 6) + "\">" + xml_escape(p.text) + "</text>\n";
    }
  }
  for (std::size_t g = 0; g < style.group_names.size(); ++g) {
    const double y = M + 14 * static_cast<double>(g) + 10;
    s += "<circle cx=\"" + fixed(W - M - 70) + "\" cy=\"" + fixed(y - 4) + "\" r=\"4\" fill=\"" +
         palette[g % palette.size()] + "\"/>\n";
    s += "<text x=\"" + fixed(W - M - 62) + "\" y=\"" + fixed(y) + "\">" + xml_escape(style.group_names[g]) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace steerlab
