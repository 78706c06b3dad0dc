#include "steerlab/pipeline.hpp"

#include "steerlab/error.hpp"
#include "steerlab/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace steerlab {

void RunConfig::validate() const {
  world.validate();
  ModelConfig m = model;
  m.vocab_size = std::max(m.vocab_size, 1);
  m.validate();
  pretrain.validate(model.n_layers);
  align.validate(model.n_layers);
  if (!std::isfinite(gamma)) fail_data("gamma must be finite");
  for (int l : {layer_en, layer_loc}) {
    if (l < 1 || l > model.n_layers) {
      fail_data("steering layer " + std::to_string(l) + " outside 1.." + std::to_string(model.n_layers));
    }
  }
  for (int l : sweep_layers) {
    if (l < 1 || l > model.n_layers) fail_data("sweep layer " + std::to_string(l) + " outside the model");
  }
  if (out_dir.empty()) fail_data("output directory must be non-empty");
}

std::vector<int> RunConfig::sweep_grid() const {
  if (!sweep_layers.empty()) return sweep_layers;
  std::vector<int> all(static_cast<std::size_t>(model.n_layers));
  for (int i = 0; i < model.n_layers; ++i) all[static_cast<std::size_t>(i)] = i + 1;
  return all;
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.pretrain.objective = Objective::lm;
  cfg.pretrain.optimizer = Optimizer::adam;
  cfg.pretrain.lr = 0.0003;
  cfg.pretrain.batch_size = 8;
  cfg.pretrain.epochs = 40;

  cfg.align.objective = Objective::clo;
  cfg.align.optimizer = Optimizer::sgd;
  cfg.align.lr = 0.003;
  cfg.align.batch_size = 8;
  cfg.align.epochs = 3;
  reseed(cfg, cfg.seed);
  return cfg;
}

void reseed(RunConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.world.seed = seed;
  cfg.model.seed = sub_seed(seed, "init");
  cfg.pretrain.seed = seed;
  cfg.align.seed = seed;
}

json to_json(const RunConfig& c) {
  return {{"world", to_json(c.world)},
          {"model", to_json(c.model)},
          {"pretrain", to_json(c.pretrain)},
          {"align", to_json(c.align)},
          {"steering", {{"gamma", c.gamma}, {"layer_en", c.layer_en}, {"layer_loc", c.layer_loc}}},
          {"sweep_layers", c.sweep_layers},
          {"out_dir", c.out_dir},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) fail_data("run config: expected a JSON object");
  static const std::vector<std::string> known = {"world", "model",        "pretrain", "align",
                                                 "steering", "sweep_layers", "out_dir", "seed"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) fail_data("run config: unknown field '" + k + "'");
  }
  RunConfig c = default_run_config();
  // A global seed reseeds everything first; explicit component seeds still win below.
  try {
    if (j.contains("seed")) reseed(c, j.at("seed").get<std::uint64_t>());
    if (j.contains("world")) {
      json w = to_json(c.world);
      w.update(j.at("world"));
      c.world = world_spec_from_json(w);
    }
    if (j.contains("model")) {
      json m = to_json(c.model);
      m.update(j.at("model"));
      c.model = model_config_from_json(m);
    }
    if (j.contains("pretrain")) {
      json t = to_json(c.pretrain);
      t.update(j.at("pretrain"));
      c.pretrain = train_config_from_json(t);
    }
    if (j.contains("align")) {
      json t = to_json(c.align);
      t.update(j.at("align"));
      c.align = train_config_from_json(t);
    }
    if (j.contains("steering")) {
      const json& s = j.at("steering");
      for (const auto& [k, v] : s.items()) {
        if (k != "gamma" && k != "layer_en" && k != "layer_loc") fail_data("run config: unknown steering field '" + k + "'");
      }
      if (s.contains("gamma")) c.gamma = s.at("gamma").get<double>();
      if (s.contains("layer_en")) c.layer_en = s.at("layer_en").get<int>();
      if (s.contains("layer_loc")) c.layer_loc = s.at("layer_loc").get<int>();
    }
    if (j.contains("sweep_layers")) c.sweep_layers = j.at("sweep_layers").get<std::vector<int>>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    fail_data(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

Parameters fresh_model(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelConfig m = cfg.model;
  m.vocab_size = vocab.size();
  return init_model(m);
}

PairSet en_pair_set(const Vocabulary& vocab, const std::vector<McqItem>& items, int n_languages) {
  PairSet set;
  set.kind = VectorKind::en;
  for (int l = 1; l < n_languages; ++l) {
    const PairSet part = build_pair_set_en(vocab, items, 0, l);
    set.pairs.insert(set.pairs.end(), part.pairs.begin(), part.pairs.end());
  }
  if (set.pairs.empty()) fail_data("no parallel pairs for EN vector extraction");
  return set;
}

PairSet loc_pair_set(const std::vector<McqItem>& items, int n_languages) {
  PairSet set;
  set.kind = VectorKind::loc;
  for (int l = 1; l < n_languages; ++l) {
    const PairSet part = build_pair_set_loc(items, l);
    set.pairs.insert(set.pairs.end(), part.pairs.begin(), part.pairs.end());
  }
  return set;
}

PairSet pair_set_for(VectorKind kind, const Vocabulary& vocab, const std::vector<McqItem>& items, int n_languages) {
  return kind == VectorKind::en ? en_pair_set(vocab, items, n_languages) : loc_pair_set(items, n_languages);
}

std::vector<McqItem> split_items(const EvalSets& sets, Split split) {
  std::vector<McqItem> out = select(sets.universal, split);
  const std::vector<McqItem> c = select(sets.cultural, split);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<SweepDataset> sweep_datasets(const EvalSets& sets, Split split) {
  std::vector<McqItem> cultural;
  for (const auto& it : select(sets.cultural, split)) {
    if (!it.contextualized) cultural.push_back(it);
  }
  return {{"universal", select(sets.universal, split)}, {"cultural", std::move(cultural)}};
}

SteeringPlan plan_from_vectors(const std::vector<SteeringVector>& vectors, double gamma, const Parameters& params,
                               bool force) {
  std::vector<SteeringPlan> plans;
  for (const auto& v : vectors) {
    check_revision(v, params, force);
    plans.push_back(make_plan(v, gamma));
  }
  SteeringPlan plan = combine(plans);
  check_plan(params.config, plan);
  return plan;
}

std::vector<ScatterPoint> plane_scatter(const std::vector<PlanePoint>& points, std::vector<std::string>& groups) {
  std::vector<ScatterPoint> out;
  for (const auto& p : points) {
    auto it = std::find(groups.begin(), groups.end(), p.method);
    if (it == groups.end()) it = groups.insert(groups.end(), p.method);
    out.push_back({p.localization, p.transfer, static_cast<int>(it - groups.begin()), p.lang});
  }
  return out;
}

namespace {

class Progress {
 public:
  explicit Progress(std::ostream* out) : out_(out), t0_(std::chrono::steady_clock::now()) {}
  void operator()(const std::string& msg) const {
    if (!out_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "[%7.1fs] ", s);
    *out_ << buf << msg << std::endl;
  }

 private:
  std::ostream* out_;
  std::chrono::steady_clock::time_point t0_;
};

void save_report(const fs::path& path, const EvalReport& r, bool overwrite) {
  write_file(path, to_json(r).dump(1) + "\n", overwrite);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

json accuracy_table(const EvalReport& r) {
  json out = json::object();
  for (const auto& row : r.rows) out[std::to_string(row.lang)][row.dataset] = row.accuracy();
  return out;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg_in, const fs::path& dir, bool overwrite, std::ostream* progress) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const Progress log(progress);
  PipelineResult res;

  const World world = generate_world(cfg.world);
  cfg.model.vocab_size = world.vocab.size();
  write_file(dir / "run_config.json", to_json(cfg).dump(2) + "\n", overwrite);
  save_world(dir / "world", world, overwrite);
  const TrainingCorpora corpora = emit_training_corpora(world);
  const EvalSets sets = emit_eval_sets(world);
  log("world: vocab " + std::to_string(world.vocab.size()) + ", " + std::to_string(corpora.lm.size()) +
      " corpus lines, " + std::to_string(sets.all().size()) + " items");

  const TrainResult base = train(fresh_model(cfg, world.vocab), corpora, cfg.pretrain);
  save_checkpoint(dir / "base" / "model.ckpt", base.params, overwrite);
  write_file(dir / "base" / "train_log.csv", train_log_csv(base.log), overwrite);
  log("pretrained (" + to_string(cfg.pretrain.objective) + ", " + std::to_string(base.log.size()) + " steps)");

  const std::string method = to_string(cfg.align.objective);
  const TrainResult aligned = train(base.params, corpora, cfg.align);
  save_checkpoint(dir / method / "model.ckpt", aligned.params, overwrite);
  write_file(dir / method / "train_log.csv", train_log_csv(aligned.log), overwrite);
  log("aligned with " + method + " (" + std::to_string(aligned.log.size()) + " steps)");

  const int L = cfg.world.n_languages;
  const std::vector<McqItem> dev1 = split_items(sets, Split::dev1);
  const PairSet en_pairs = en_pair_set(world.vocab, dev1, L);
  const PairSet loc_pairs = loc_pair_set(dev1, L);
  const SteeringVector v_en = extract_steering_vector(aligned.params, en_pairs, cfg.layer_en);
  const SteeringVector v_loc = extract_steering_vector(aligned.params, loc_pairs, cfg.layer_loc);
  save_vector(dir / "vectors" / ("en_L" + std::to_string(cfg.layer_en) + ".json"), v_en, overwrite);
  save_vector(dir / "vectors" / ("loc_L" + std::to_string(cfg.layer_loc) + ".json"), v_loc, overwrite);
  log("extracted steering vectors");

  const std::vector<McqItem> test = split_items(sets, Split::test);
  auto evaluate = [&](const Parameters& p, const SteeringPlan* plan, const std::string& id) {
    EvalReport r = accuracy(p, test, plan);
    r.plan_id = id;
    save_report(dir / "reports" / ("eval_" + id + ".json"), r, overwrite);
    return r;
  };
  const SteeringPlan p_en = make_plan(v_en, cfg.gamma);
  const SteeringPlan p_loc = make_plan(v_loc, cfg.gamma);
  const SteeringPlan p_sur = make_surgical_plan(v_en, v_loc, cfg.gamma);
  res.base = evaluate(base.params, nullptr, "base");
  res.aligned = evaluate(aligned.params, nullptr, method);
  res.en = evaluate(aligned.params, &p_en, method + "+en");
  res.loc = evaluate(aligned.params, &p_loc, method + "+loc");
  res.surgical = evaluate(aligned.params, &p_sur, method + "+sur");
  log("evaluated test split");

  for (const EvalReport* r : {&res.aligned, &res.en, &res.loc, &res.surgical}) {
    const auto pts = plane_points(res.base, *r, r->plan_id);
    res.plane.insert(res.plane.end(), pts.begin(), pts.end());
  }
  write_file(dir / "plane.csv", plane_csv(res.plane), overwrite);
  {
    ScatterStyle style{"Transfer vs. localization (vs. unaligned)", "localization (points)", "transfer (points)", true, {}};
    const auto pts = plane_scatter(res.plane, style.group_names);
    write_file(dir / "plane.svg", scatter_svg(pts, style), overwrite);
  }

  res.bias_base = english_bias(res.base);
  res.bias_aligned = english_bias(res.aligned);
  res.bias_surgical = english_bias(res.surgical);
  write_file(dir / "bias.json",
             json{{"base", to_json(res.bias_base)},
                  {method, to_json(res.bias_aligned)},
                  {method + "+sur", to_json(res.bias_surgical)}}
                     .dump(2) +
                 "\n",
             overwrite);

  // Layer analyses run on the unaligned model, with dev1 pairs and dev2 scoring.
  const std::vector<int> grid = cfg.sweep_grid();
  const SweepTable sweep = layer_sweep(base.params, {en_pairs, loc_pairs}, grid, sweep_datasets(sets, Split::dev2), cfg.gamma);
  write_file(dir / "sweep.csv", sweep_csv(sweep), overwrite);
  {
    std::string csv = "kind,dataset,layer,accuracy\n";
    for (const auto& a : sweep.argmax) {
      csv += a.kind + "," + a.dataset + "," + std::to_string(a.layer) + "," + format_double(a.accuracy) + "\n";
    }
    write_file(dir / "sweep_argmax.csv", csv, overwrite);
    ScatterStyle style{"Layer sweep (dev2)", "layer", "accuracy", false, {}};
    std::vector<ScatterPoint> pts;
    for (const auto& row : sweep.rows) {
      if (row.kind == "none") continue;
      const std::string g = row.kind + "/" + row.dataset;
      auto it = std::find(style.group_names.begin(), style.group_names.end(), g);
      if (it == style.group_names.end()) it = style.group_names.insert(style.group_names.end(), g);
      pts.push_back({static_cast<double>(row.layer), row.accuracy, static_cast<int>(it - style.group_names.begin()), ""});
    }
    write_file(dir / "sweep.svg", scatter_svg(pts, style), overwrite);
  }
  log("layer sweep done");

  write_file(dir / "perp.csv", perp_csv(perpendicularity_report(base.params, en_pairs, loc_pairs, grid)), overwrite);

  std::vector<McqItem> queries;
  for (const auto& it : select(sets.universal, Split::test)) queries.push_back(it);
  const OverlapReport overlap = language_overlap_report(base.params, queries, grid);
  write_file(dir / "pca.csv", pca_csv(overlap), overwrite);
  {
    std::string csv = "layer,centroid_distance\n";
    for (const auto& l : overlap.layers) csv += std::to_string(l.layer) + "," + format_double(l.centroid_distance) + "\n";
    write_file(dir / "overlap.csv", csv, overwrite);
    const OverlapLayer& mid = overlap.layers[overlap.layers.size() / 2];
    ScatterStyle style{"Final-token activations, layer " + std::to_string(mid.layer), "PC1", "PC2", false, {}};
    for (int l = 0; l < L; ++l) style.group_names.push_back("lang " + std::to_string(l));
    std::vector<ScatterPoint> pts;
    for (Eigen::Index i = 0; i < mid.pca.projections.rows(); ++i) {
      pts.push_back({mid.pca.projections(i, 0), mid.pca.projections(i, 1), mid.pca.labels[static_cast<std::size_t>(i)], ""});
    }
    write_file(dir / "pca.svg", scatter_svg(pts, style), overwrite);
  }
  log("perpendicularity and overlap done");

  const json summary = summarize_run(dir);
  write_file(dir / "summary.json", summary.dump(2) + "\n", overwrite);
  write_file(dir / "summary.md", summary_markdown(summary), overwrite);
  log("wrote " + (dir / "summary.md").string());
  return res;
}

json summarize_run(const fs::path& dir) {
  const RunConfig cfg = run_config_from_json(read_json(dir / "run_config.json"));
  json s;
  s["seed"] = cfg.seed;
  s["method"] = to_string(cfg.align.objective);

  json acc = json::object();
  for (const auto& entry : fs::directory_iterator(dir / "reports")) {
    const EvalReport r = eval_report_from_json(read_json(entry.path()));
    acc[r.plan_id] = {{"overall", r.accuracy}, {"by_lang", accuracy_table(r)}};
  }
  s["accuracy"] = acc;

  json plane = json::array();
  for (const auto& row : read_csv(dir / "plane.csv")) {
    if (row.size() != 4) fail_data("plane.csv: malformed row");
    plane.push_back({{"method", row[0]}, {"lang", row[1]}, {"transfer", std::stod(row[2])},
                     {"localization", std::stod(row[3])}});
  }
  s["plane"] = plane;
  s["bias"] = read_json(dir / "bias.json");

  json perp = json::array();
  for (const auto& row : read_csv(dir / "perp.csv")) perp.push_back({{"layer", std::stoi(row[0])}, {"score_deg", std::stod(row[1])}});
  s["perpendicularity"] = perp;

  json argmax = json::array();
  for (const auto& row : read_csv(dir / "sweep_argmax.csv")) {
    argmax.push_back({{"kind", row[0]}, {"dataset", row[1]}, {"layer", std::stoi(row[2])}, {"accuracy", std::stod(row[3])}});
  }
  s["sweep_argmax"] = argmax;
  return s;
}

std::string summary_markdown(const json& s) {
  std::ostringstream md;
  char buf[160];
  md << "# Run summary\n\nseed " << s["seed"].get<std::uint64_t>() << ", alignment method `"
     << s["method"].get<std::string>() << "`\n\n## Accuracy (test split)\n\n| plan | lang | universal | cultural | cultural_ctx |\n|---|---|---|---|---|\n";
  for (const auto& [plan, a] : s["accuracy"].items()) {
    for (const auto& [lang, ds] : a["by_lang"].items()) {
      auto get = [&](const char* k) { return ds.contains(k) ? ds[k].get<double>() * 100.0 : 0.0; };
      std::snprintf(buf, sizeof buf, "| %s | %s | %.2f | %.2f | %.2f |\n", plan.c_str(), lang.c_str(), get("universal"),
                    get("cultural"), get("cultural_ctx"));
      md << buf;
    }
  }
  md << "\n## Transfer-localization plane (points vs. unaligned)\n\n| method | lang | transfer | localization |\n|---|---|---|---|\n";
  for (const auto& p : s["plane"]) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %+.2f | %+.2f |\n", p["method"].get<std::string>().c_str(),
                  p["lang"].get<std::string>().c_str(), p["transfer"].get<double>(), p["localization"].get<double>());
    md << buf;
  }
  md << "\n## Pivot-answer bias on cultural items\n\n| model | eligible | pivot picks | fraction |\n|---|---|---|---|\n";
  for (const auto& [name, b] : s["bias"].items()) {
    std::snprintf(buf, sizeof buf, "| %s | %d | %d | %.3f |\n", name.c_str(), b["eligible"].get<int>(),
                  b["pivot_picks"].get<int>(), b["fraction"].get<double>());
    md << buf;
  }
  md << "\n## Layer sweep argmax (unaligned model, dev2)\n\n| kind | dataset | layer | accuracy |\n|---|---|---|---|\n";
  for (const auto& a : s["sweep_argmax"]) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %d | %.2f |\n", a["kind"].get<std::string>().c_str(),
                  a["dataset"].get<std::string>().c_str(), a["layer"].get<int>(), a["accuracy"].get<double>() * 100.0);
    md << buf;
  }
  md << "\n## Perpendicularity of EN and LOC vectors\n\n| layer | score (deg) |\n|---|---|\n";
  for (const auto& p : s["perpendicularity"]) {
    std::snprintf(buf, sizeof buf, "| %d | %.2f |\n", p["layer"].get<int>(), p["score_deg"].get<double>());
    md << buf;
  }
  return md.str();
}

}  // namespace steerlab
