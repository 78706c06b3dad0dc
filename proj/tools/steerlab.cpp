// steerlab: generate the toy world, train, steer, evaluate and report.

#include "steerlab/error.hpp"
#include "steerlab/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>

using namespace steerlab;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool overwrite = false;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--config", c.config, "Run config (JSON)")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "Output path");
  if (out_required) out->required();
  cmd->add_flag("--overwrite", c.overwrite, "Replace existing outputs");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? default_run_config() : run_config_from_json(read_json(c.config));
  if (c.seed) reseed(cfg, *c.seed);
  cfg.validate();
  return cfg;
}

std::pair<int, int> parse_range(const std::string& s) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
  } catch (const std::exception&) {
    fail_usage("--layers expects a..b, got '" + s + "'");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

// Parameters must come with a world whose vocabulary matches.
void check_vocab(const Parameters& p, const WorldSpec& spec) {
  const int v = Vocabulary(spec).size();
  if (p.config.vocab_size != v) {
    fail_data("checkpoint vocab " + std::to_string(p.config.vocab_size) + " does not match world vocab " +
              std::to_string(v));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual alignment vs. cultural localization on a synthetic multilingual world"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // gen
  Common gen_opts;
  std::string gen_spec;
  auto* gen = app.add_subcommand("gen", "Generate the world: spec, corpora and MCQ items");
  add_common(gen, gen_opts);
  gen->add_option("--spec", gen_spec, "World spec (JSON), merged over the config's world settings")->check(CLI::ExistingFile);

  // train
  Common train_opts;
  std::string train_world, train_base, train_objective;
  auto* train_cmd = app.add_subcommand("train", "Train a checkpoint (pretraining or an alignment method)");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--world", train_world, "World directory from `gen`")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--base", train_base, "Starting checkpoint (default: fresh init)")->check(CLI::ExistingFile);
  train_cmd->add_option("--objective", train_objective, "lm | mist | midalign | clo")
      ->check(CLI::IsMember({"lm", "mist", "midalign", "clo"}));

  // steer-extract
  Common ex_opts;
  std::string ex_ckpt, ex_world, ex_kind;
  int ex_layer = 0;
  auto* extract = app.add_subcommand("steer-extract", "Extract an EN or LOC steering vector from dev1 pairs");
  add_common(extract, ex_opts);
  extract->add_option("--ckpt", ex_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  extract->add_option("--world", ex_world, "World directory")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--kind", ex_kind, "en | loc")->required()->check(CLI::IsMember({"en", "loc"}));
  extract->add_option("--layer", ex_layer, "Layer (default from config)");

  // sweep
  Common sw_opts;
  std::string sw_ckpt, sw_world, sw_kind = "en,loc", sw_layers;
  double sw_gamma = 0.0;
  auto* sweep = app.add_subcommand("sweep", "Per-layer steering sweep on dev2");
  add_common(sweep, sw_opts);
  sweep->add_option("--ckpt", sw_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sweep->add_option("--world", sw_world, "World directory")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--kind", sw_kind, "en, loc or en,loc");
  sweep->add_option("--layers", sw_layers, "Layer range a..b (default: all)");
  sweep->add_option("--gamma", sw_gamma, "Steering scale (default from config)");

  // eval
  Common ev_opts;
  std::string ev_ckpt, ev_world, ev_plan, ev_split = "test";
  double ev_gamma = 0.0;
  bool ev_force = false, ev_length_norm = false;
  auto* eval = app.add_subcommand("eval", "Score MCQ items, optionally under a steering plan");
  add_common(eval, ev_opts);
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--world", ev_world, "World directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--plan", ev_plan, "Vector file(s), comma separated");
  eval->add_option("--gamma", ev_gamma, "Steering scale (default from config)");
  eval->add_option("--split", ev_split, "dev1 | dev2 | test")->check(CLI::IsMember({"dev1", "dev2", "test"}));
  eval->add_flag("--force", ev_force, "Accept vectors from another model revision");
  eval->add_flag("--length-norm", ev_length_norm, "Length-normalize option log-likelihoods");

  // plane
  Common pl_opts;
  std::string pl_base;
  std::vector<std::string> pl_cands;
  auto* plane = app.add_subcommand("plane", "Transfer/localization deltas of candidate reports vs. a baseline");
  add_common(plane, pl_opts);
  plane->add_option("--baseline", pl_base, "Baseline EvalReport")->required()->check(CLI::ExistingFile);
  plane->add_option("--candidate", pl_cands, "Candidate EvalReport(s)")->required()->check(CLI::ExistingFile);

  // report
  Common rp_opts;
  std::string rp_run;
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  add_common(report, rp_opts, false);
  report->add_option("--run", rp_run, "Run directory")->required()->check(CLI::ExistingDirectory);

  // run
  Common run_opts;
  auto* run = app.add_subcommand("run", "Full pipeline: gen, pretrain, align, extract, eval, plane, sweep, report");
  add_common(run, run_opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  }

  try {
    if (*gen) {
      RunConfig cfg = load_config(gen_opts);
      if (!gen_spec.empty()) {
        json w = to_json(cfg.world);
        w.update(read_json(gen_spec));
        cfg.world = world_spec_from_json(w);
        if (gen_opts.seed) cfg.world.seed = *gen_opts.seed;  // --seed still wins
        cfg.world.validate();
      }
      ensure_writable(fs::path(gen_opts.out) / "run_config.json", gen_opts.overwrite);
      save_world(gen_opts.out, generate_world(cfg.world), gen_opts.overwrite);
      write_file(fs::path(gen_opts.out) / "run_config.json", to_json(cfg).dump(2) + "\n", gen_opts.overwrite);
    } else if (*train_cmd) {
      RunConfig cfg = load_config(train_opts);
      const WorldSpec spec = load_world_spec(train_world);
      const TrainingCorpora corpora = load_corpora(train_world);
      Parameters start;
      TrainConfig tc = cfg.align;
      if (!train_base.empty()) {
        start = load_checkpoint(train_base);
        check_vocab(start, spec);
      } else {
        start = fresh_model(cfg, Vocabulary(spec));
        tc = cfg.pretrain;
      }
      if (!train_objective.empty()) {
        const Objective o = objective_from_string(train_objective);
        if (o != tc.objective) tc = (o == cfg.pretrain.objective) ? cfg.pretrain : cfg.align;
        tc.objective = o;
      }
      const fs::path out = train_opts.out;
      ensure_writable(out / "model.ckpt", train_opts.overwrite);
      ensure_writable(out / "train_log.csv", train_opts.overwrite);
      const TrainResult r = train(start, corpora, tc);
      save_checkpoint(out / "model.ckpt", r.params, train_opts.overwrite);
      write_file(out / "train_log.csv", train_log_csv(r.log), train_opts.overwrite);
    } else if (*extract) {
      const RunConfig cfg = load_config(ex_opts);
      const WorldSpec spec = load_world_spec(ex_world);
      const Parameters p = load_checkpoint(ex_ckpt);
      check_vocab(p, spec);
      const VectorKind kind = vector_kind_from_string(ex_kind);
      const int layer = ex_layer ? ex_layer : (kind == VectorKind::en ? cfg.layer_en : cfg.layer_loc);
      ensure_writable(ex_opts.out, ex_opts.overwrite);
      const auto dev1 = split_items(load_eval_sets(ex_world), Split::dev1);
      SteeringVector v = extract_steering_vector(p, pair_set_for(kind, Vocabulary(spec), dev1, spec.n_languages), layer);
      v.gamma_default = cfg.gamma;
      save_vector(ex_opts.out, v, ex_opts.overwrite);
    } else if (*sweep) {
      const RunConfig cfg = load_config(sw_opts);
      const WorldSpec spec = load_world_spec(sw_world);
      const Parameters p = load_checkpoint(sw_ckpt);
      check_vocab(p, spec);
      std::vector<int> layers = cfg.sweep_grid();
      if (!sw_layers.empty()) {
        const auto [a, b] = parse_range(sw_layers);
        if (a < 1 || b > p.config.n_layers || a > b) fail_usage("--layers out of range 1.." + std::to_string(p.config.n_layers));
        layers.clear();
        for (int l = a; l <= b; ++l) layers.push_back(l);
      }
      const EvalSets sets = load_eval_sets(sw_world);
      const auto dev1 = split_items(sets, Split::dev1);
      std::vector<PairSet> pairs;
      for (const auto& k : split_list(sw_kind)) {
        pairs.push_back(pair_set_for(vector_kind_from_string(k), Vocabulary(spec), dev1, spec.n_languages));
      }
      const fs::path out = sw_opts.out;
      ensure_writable(out / "sweep.csv", sw_opts.overwrite);
      const SweepTable t =
          layer_sweep(p, pairs, layers, sweep_datasets(sets, Split::dev2), sw_gamma != 0.0 ? sw_gamma : cfg.gamma);
      write_file(out / "sweep.csv", sweep_csv(t), sw_opts.overwrite);
      ScatterStyle style{"Layer sweep (dev2)", "layer", "accuracy", false, {}};
      std::vector<ScatterPoint> pts;
      for (const auto& row : t.rows) {
        if (row.kind == "none") continue;
        const std::string g = row.kind + "/" + row.dataset;
        auto it = std::find(style.group_names.begin(), style.group_names.end(), g);
        if (it == style.group_names.end()) it = style.group_names.insert(style.group_names.end(), g);
        pts.push_back({static_cast<double>(row.layer), row.accuracy, static_cast<int>(it - style.group_names.begin()), ""});
      }
      write_file(out / "sweep.svg", scatter_svg(pts, style), sw_opts.overwrite);
      for (const auto& a : t.argmax) std::cout << a.kind << " " << a.dataset << " best layer " << a.layer << "\n";
    } else if (*eval) {
      const RunConfig cfg = load_config(ev_opts);
      const WorldSpec spec = load_world_spec(ev_world);
      const Parameters p = load_checkpoint(ev_ckpt);
      check_vocab(p, spec);
      std::vector<SteeringVector> vectors;
      std::string plan_id;
      for (const auto& f : split_list(ev_plan)) {
        vectors.push_back(load_vector(f));
        plan_id += (plan_id.empty() ? "" : "+") + fs::path(f).stem().string();
      }
      const double gamma = ev_gamma != 0.0 ? ev_gamma : cfg.gamma;
      const SteeringPlan plan = plan_from_vectors(vectors, gamma, p, ev_force);
      ensure_writable(ev_opts.out, ev_opts.overwrite);
      EvalReport r = accuracy(p, split_items(load_eval_sets(ev_world), split_from_string(ev_split)),
                              vectors.empty() ? nullptr : &plan, ev_length_norm);
      r.plan_id = plan_id.empty() ? "none" : plan_id;
      write_file(ev_opts.out, to_json(r).dump(1) + "\n", ev_opts.overwrite);
      for (const auto& row : r.rows) {
        std::cout << "lang " << row.lang << " " << row.dataset << " " << row.correct << "/" << row.total << "\n";
      }
    } else if (*plane) {
      const EvalReport base = eval_report_from_json(read_json(pl_base));
      std::vector<PlanePoint> points;
      for (const auto& c : pl_cands) {
        const EvalReport cand = eval_report_from_json(read_json(c));
        const auto pts = plane_points(base, cand, cand.plan_id == "none" ? fs::path(c).stem().string() : cand.plan_id);
        points.insert(points.end(), pts.begin(), pts.end());
      }
      const fs::path out = pl_opts.out;
      ensure_writable(out / "plane.csv", pl_opts.overwrite);
      write_file(out / "plane.csv", plane_csv(points), pl_opts.overwrite);
      ScatterStyle style{"Transfer vs. localization", "localization (points)", "transfer (points)", true, {}};
      const auto pts = plane_scatter(points, style.group_names);
      write_file(out / "plane.svg", scatter_svg(pts, style), pl_opts.overwrite);
    } else if (*report) {
      const json s = summarize_run(rp_run);
      const fs::path out = rp_opts.out.empty() ? fs::path(rp_run) / "summary.md" : fs::path(rp_opts.out);
      write_file(out, summary_markdown(s), rp_opts.overwrite);
    } else if (*run) {
      const RunConfig cfg = load_config(run_opts);
      const fs::path out = run_opts.out.empty() ? fs::path(cfg.out_dir) : fs::path(run_opts.out);
      if (fs::exists(out / "run_config.json") && !run_opts.overwrite) {
        fail_usage(out.string() + " already holds a run (pass --overwrite to replace it)");
      }
      const PipelineResult r = run_pipeline(cfg, out, run_opts.overwrite, &std::cerr);
      for (const auto& p : r.plane) {
        if (p.lang == "avg") std::cout << p.method << ": transfer " << p.transfer << ", localization " << p.localization << "\n";
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::data);
  }
  return 0;
}
