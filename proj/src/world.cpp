#include "steerlab/world.hpp"

#include "steerlab/error.hpp"
#include "steerlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace steerlab {

void WorldSpec::validate() const {
  if (n_languages < 2) fail_data("invalid world spec: n_languages must be >= 2");
  if (n_options < 2) fail_data("invalid world spec: n_options must be >= 2");
  if (n_universal_facts < 0 || n_cultural_facts < 0) fail_data("invalid world spec: negative fact count");
  if (n_universal_facts + n_cultural_facts < 1) fail_data("invalid world spec: no facts");
  if (n_relations < 1) fail_data("invalid world spec: n_relations must be >= 1");
  if (!(universal_coverage_nonpivot >= 0.0 && universal_coverage_nonpivot <= 1.0)) {
    fail_data("invalid world spec: universal_coverage_nonpivot must be in [0,1]");
  }
  if (!(pivot_option_fraction >= 0.0 && pivot_option_fraction <= 1.0)) {
    fail_data("invalid world spec: pivot_option_fraction must be in [0,1]");
  }
  if (!(parallel_fraction >= 0.0 && parallel_fraction <= 1.0)) {
    fail_data("invalid world spec: parallel_fraction must be in [0,1]");
  }
  if (!(dev1_fraction >= 0.0 && dev2_fraction >= 0.0 && dev1_fraction + dev2_fraction < 1.0)) {
    fail_data("invalid world spec: dev fractions must be >= 0 and sum below 1");
  }
  if (tokens_per_language < n_relations + 1) {
    fail_data("vocab too small: tokens_per_language=" + std::to_string(tokens_per_language) + " but " +
              std::to_string(n_relations + 1) + " language tokens are required");
  }
  if (n_objects < std::max(n_options, n_cultural_facts > 0 ? n_languages + n_options - 2 : 0)) {
    fail_data("vocab too small: n_objects=" + std::to_string(n_objects) + " cannot fill " +
              std::to_string(n_options) + " distinct options");
  }
}

Vocabulary::Vocabulary(const WorldSpec& spec)
    : n_languages_(spec.n_languages),
      n_subjects_(spec.n_universal_facts + spec.n_cultural_facts),
      n_relations_(spec.n_relations),
      n_objects_(spec.n_objects),
      per_language_(spec.tokens_per_language) {}

int Vocabulary::size() const { return base(n_languages_); }

int Vocabulary::language_of(TokenId t) const {
  const int first = base(0);
  if (t < first || t >= size()) return -1;
  return (t - first) / per_language_;
}

int Vocabulary::subject_index(TokenId t) const {
  const int off = t - subject(0);
  return off >= 0 && off < n_subjects_ ? off : -1;
}

int Vocabulary::object_index(TokenId t) const {
  const int off = t - object(0);
  return off >= 0 && off < n_objects_ ? off : -1;
}

std::string to_string(FactKind k) { return k == FactKind::universal ? "universal" : "cultural"; }

std::string to_string(Split s) {
  switch (s) {
    case Split::dev1: return "dev1";
    case Split::dev2: return "dev2";
    case Split::test: return "test";
  }
  return "test";
}

FactKind fact_kind_from_string(const std::string& s) {
  if (s == "universal") return FactKind::universal;
  if (s == "cultural") return FactKind::cultural;
  fail_data("unknown item kind '" + s + "'");
}

Split split_from_string(const std::string& s) {
  if (s == "dev1") return Split::dev1;
  if (s == "dev2") return Split::dev2;
  if (s == "test") return Split::test;
  fail_data("unknown split '" + s + "'");
}

int World::fact_of(const Tokens& query) const {
  for (TokenId t : query) {
    const int s = vocab.subject_index(t);
    if (s >= 0) return s;
  }
  return -1;
}

Tokens render_query(const World& world, const Fact& fact, int lang, bool contextualized, int region) {
  const Vocabulary& v = world.vocab;
  Tokens q{v.lang_tag(lang), v.subject(fact.id), v.relation(lang, fact.relation)};
  if (contextualized) q.push_back(v.region(region < 0 ? lang : region));
  q.push_back(v.qmark());
  return q;
}

Tokens render_answer(const World& world, int lang, int object) {
  return {world.vocab.object(object), world.vocab.end_marker(lang)};
}

namespace {

void assign_splits(std::vector<Fact>& facts, FactKind kind, const WorldSpec& spec, Rng& rng) {
  std::vector<int> ids;
  for (const auto& f : facts) {
    if (f.kind == kind) ids.push_back(f.id);
  }
  if (ids.empty()) return;
  const auto n = static_cast<int>(ids.size());
  const int n_dev1 = static_cast<int>(std::floor(spec.dev1_fraction * n + 1e-9));
  const int n_dev2 = static_cast<int>(std::floor(spec.dev2_fraction * n + 1e-9));
  if ((spec.dev1_fraction > 0 && n_dev1 < 1) || (spec.dev2_fraction > 0 && n_dev2 < 1) ||
      n - n_dev1 - n_dev2 < 1) {
    fail_data("set too small to split: " + std::to_string(n) + " " + to_string(kind) + " facts");
  }
  rng.shuffle(ids);
  for (int i = 0; i < n; ++i) {
    Split s = i < n_dev1 ? Split::dev1 : (i < n_dev1 + n_dev2 ? Split::dev2 : Split::test);
    facts[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])].split = s;
  }
}

// Objects in [0, n) excluding `banned`, k distinct.
std::vector<int> draw_excluding(Rng& rng, int n, int k, const std::set<int>& banned) {
  std::vector<int> pool;
  for (int o = 0; o < n; ++o) {
    if (!banned.contains(o)) pool.push_back(o);
  }
  std::vector<int> out;
  for (int idx : rng.sample_distinct(static_cast<int>(pool.size()), k)) {
    out.push_back(pool[static_cast<std::size_t>(idx)]);
  }
  return out;
}

}  // namespace

World generate_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.spec = spec;
  world.vocab = Vocabulary(spec);
  const int L = spec.n_languages;
  const int n_obj = world.vocab.n_objects();
  const int n_dis = spec.n_options - 1;

  Rng fact_rng(sub_seed(spec.seed, "facts"));
  const int n_facts = spec.n_universal_facts + spec.n_cultural_facts;
  world.facts.resize(static_cast<std::size_t>(n_facts));
  for (int i = 0; i < n_facts; ++i) {
    Fact& f = world.facts[static_cast<std::size_t>(i)];
    f.id = i;
    f.kind = i < spec.n_universal_facts ? FactKind::universal : FactKind::cultural;
    f.relation = i % spec.n_relations;
    f.answer.resize(static_cast<std::size_t>(L));
    f.distractors.resize(static_cast<std::size_t>(L));
    f.option_order.clear();
    if (f.kind == FactKind::universal) {
      const int answer = static_cast<int>(fact_rng.below(static_cast<std::uint64_t>(n_obj)));
      const auto dis = draw_excluding(fact_rng, n_obj, n_dis, {answer});
      for (int l = 0; l < L; ++l) {
        f.answer[static_cast<std::size_t>(l)] = answer;
        f.distractors[static_cast<std::size_t>(l)] = dis;
      }
    } else {
      // Distinct local answers per language.
      f.answer = fact_rng.sample_distinct(n_obj, L);
      const int pivot_answer = f.answer[0];
      for (int l = 0; l < L; ++l) {
        const int local = f.answer[static_cast<std::size_t>(l)];
        std::vector<int> dis;
        if (l != 0 && fact_rng.uniform() < spec.pivot_option_fraction) {
          dis.push_back(pivot_answer);
          for (int o : draw_excluding(fact_rng, n_obj, n_dis - 1, {local, pivot_answer})) dis.push_back(o);
        } else {
          dis = draw_excluding(fact_rng, n_obj, n_dis, {local, pivot_answer});
        }
        f.distractors[static_cast<std::size_t>(l)] = dis;
      }
    }
  }

  // Option order: a permutation of [gold, distractors...]; shared across languages
  // for universal facts so that renderings stay translation-equivalent.
  Rng order_rng(sub_seed(spec.seed, "option_order"));
  for (auto& f : world.facts) {
    std::vector<int> perm(static_cast<std::size_t>(spec.n_options));
    for (int i = 0; i < spec.n_options; ++i) perm[static_cast<std::size_t>(i)] = i;
    if (f.kind == FactKind::universal) {
      order_rng.shuffle(perm);
      for (int l = 0; l < L; ++l) f.option_order.insert(f.option_order.end(), perm.begin(), perm.end());
    } else {
      for (int l = 0; l < L; ++l) {
        order_rng.shuffle(perm);
        f.option_order.insert(f.option_order.end(), perm.begin(), perm.end());
      }
    }
  }

  Rng split_rng(sub_seed(spec.seed, "splits"));
  assign_splits(world.facts, FactKind::universal, spec, split_rng);
  assign_splits(world.facts, FactKind::cultural, spec, split_rng);

  // Coverage: the pivot states every universal fact; other languages a seeded subset.
  Rng cov_rng(sub_seed(spec.seed, "coverage"));
  const int n_cov = static_cast<int>(std::llround(spec.universal_coverage_nonpivot * spec.n_universal_facts));
  world.covered_universal.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    auto& cov = world.covered_universal[static_cast<std::size_t>(l)];
    if (l == 0) {
      for (int i = 0; i < spec.n_universal_facts; ++i) cov.push_back(i);
    } else {
      cov = cov_rng.sample_distinct(spec.n_universal_facts, n_cov);
      std::sort(cov.begin(), cov.end());
    }
  }

  // Translated data covers a seeded subset of each kind of fact.
  Rng par_rng(sub_seed(spec.seed, "parallel"));
  for (const auto& [first, count] : {std::pair{0, spec.n_universal_facts},
                                      std::pair{spec.n_universal_facts, spec.n_cultural_facts}}) {
    const int k = static_cast<int>(std::llround(spec.parallel_fraction * count));
    for (int i : par_rng.sample_distinct(count, k)) world.parallel_facts.push_back(first + i);
  }
  std::sort(world.parallel_facts.begin(), world.parallel_facts.end());

  for (int l = 0; l < L; ++l) {
    for (int i : world.covered_universal[static_cast<std::size_t>(l)]) {
      const Fact& f = world.facts[static_cast<std::size_t>(i)];
      Tokens t = render_query(world, f, l, false);
      const Tokens a = render_answer(world, l, f.answer[static_cast<std::size_t>(l)]);
      const int q = static_cast<int>(t.size());
      t.insert(t.end(), a.begin(), a.end());
      world.corpus.push_back({l, std::move(t), q});
    }
    for (const auto& f : world.facts) {
      if (f.kind != FactKind::cultural) continue;
      for (bool ctx : {true, false}) {
        Tokens t = render_query(world, f, l, ctx);
        const Tokens a = render_answer(world, l, f.answer[static_cast<std::size_t>(l)]);
        const int q = static_cast<int>(t.size());
        t.insert(t.end(), a.begin(), a.end());
        world.corpus.push_back({l, std::move(t), q});
      }
    }
    // Every corpus also describes other regions' customs, marked by region.
    for (const auto& f : world.facts) {
      if (f.kind != FactKind::cultural) continue;
      for (int region = 0; region < L; ++region) {
        if (region == l) continue;
        Tokens t = render_query(world, f, l, true, region);
        const Tokens a = render_answer(world, l, f.answer[static_cast<std::size_t>(region)]);
        const int q = static_cast<int>(t.size());
        t.insert(t.end(), a.begin(), a.end());
        world.corpus.push_back({l, std::move(t), q});
      }
    }
  }
  return world;
}

TrainingCorpora emit_training_corpora(const World& world) {
  TrainingCorpora out;
  out.lm = world.corpus;
  const int pivot = world.pivot();
  for (int l = 0; l < world.spec.n_languages; ++l) {
    if (l == pivot) continue;
    for (int id : world.parallel_facts) {
      const Fact& f = world.facts[static_cast<std::size_t>(id)];
      // Translated pivot data carries the pivot world's answer.
      const int answer = f.answer[static_cast<std::size_t>(pivot)];
      ParallelPair p;
      p.lang = l;
      p.fact = f.id;
      p.pivot_query = render_query(world, f, pivot, false);
      p.pivot_response = render_answer(world, pivot, answer);
      p.query = render_query(world, f, l, false);
      p.response = render_answer(world, l, answer);
      out.parallel.push_back(std::move(p));
    }
  }
  for (const auto& p : out.parallel) {
    out.preferences.push_back({p.pivot_query, p.pivot_response, p.response, pivot});
    out.preferences.push_back({p.query, p.response, p.pivot_response, p.lang});
  }
  return out;
}

std::vector<std::pair<Tokens, Tokens>> TrainingCorpora::sft_pairs() const {
  std::vector<std::pair<Tokens, Tokens>> out;
  std::set<int> pivot_seen;
  for (const auto& p : parallel) {
    if (pivot_seen.insert(p.fact).second) out.emplace_back(p.pivot_query, p.pivot_response);
  }
  for (const auto& p : parallel) out.emplace_back(p.query, p.response);
  return out;
}

EvalSets emit_eval_sets(const World& world) {
  EvalSets sets;
  const int L = world.spec.n_languages;
  const int n_opt = world.spec.n_options;
  int next_id = 0;
  for (const auto& f : world.facts) {
    for (int l = 0; l < L; ++l) {
      const auto lz = static_cast<std::size_t>(l);
      std::vector<int> semantic{f.answer[lz]};
      semantic.insert(semantic.end(), f.distractors[lz].begin(), f.distractors[lz].end());
      McqItem base;
      base.lang = l;
      base.kind = f.kind;
      base.split = f.split;
      for (int i = 0; i < n_opt; ++i) {
        const int src = f.option_order[lz * static_cast<std::size_t>(n_opt) + static_cast<std::size_t>(i)];
        base.options.push_back(render_answer(world, l, semantic[static_cast<std::size_t>(src)]));
        if (src == 0) base.gold = i;
        if (f.kind == FactKind::cultural && semantic[static_cast<std::size_t>(src)] == f.answer[0]) {
          base.pivot_option = i;
        }
      }
      if (f.kind == FactKind::universal) {
        base.id = next_id++;
        base.query = render_query(world, f, l, false);
        sets.universal.push_back(base);
      } else {
        for (bool ctx : {true, false}) {
          McqItem item = base;
          item.id = next_id++;
          item.contextualized = ctx;
          item.query = render_query(world, f, l, ctx);
          sets.cultural.push_back(std::move(item));
        }
      }
    }
  }
  return sets;
}

std::vector<McqItem> EvalSets::all() const {
  std::vector<McqItem> out = universal;
  out.insert(out.end(), cultural.begin(), cultural.end());
  return out;
}

McqItem decontextualize(const McqItem& item) {
  if (!item.contextualized) fail_data("item " + std::to_string(item.id) + " is already decontextualized");
  if (item.query.size() < 2) fail_data("item " + std::to_string(item.id) + " has no region marker");
  McqItem out = item;
  out.query.erase(out.query.end() - 2);
  out.contextualized = false;
  return out;
}

std::vector<McqItem> select(const std::vector<McqItem>& items, std::optional<Split> split,
                            std::optional<int> lang, std::optional<bool> contextualized) {
  std::vector<McqItem> out;
  for (const auto& it : items) {
    if (split && it.split != *split) continue;
    if (lang && it.lang != *lang) continue;
    if (contextualized && it.contextualized != *contextualized) continue;
    out.push_back(it);
  }
  return out;
}

}  // namespace steerlab
