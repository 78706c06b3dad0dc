#pragma once

#include "steerlab/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace steerlab {

struct WorldSpec {
  int n_languages = 3;  // language 0 is the pivot
  int n_universal_facts = 60;
  int n_cultural_facts = 30;
  double universal_coverage_nonpivot = 0.1;
  // Private token block per language: relation words, end marker, reserved ids.
  int tokens_per_language = 8;
  int n_objects = 40;  // shared answer-entity tokens
  int n_options = 4;
  int n_relations = 4;
  // Fraction of non-pivot cultural items whose distractors include the pivot answer.
  double pivot_option_fraction = 1.0;
  double dev1_fraction = 0.1;
  double dev2_fraction = 0.1;
  // Fraction of facts (per kind) that appear in the parallel/preference data.
  double parallel_fraction = 0.5;
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const WorldSpec&) const = default;
};

// Token-id layout: structural tokens (QMARK, language tags, region markers),
// shared entities (subjects, answer objects), then one disjoint block per
// language holding its relation words and end-of-answer marker.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(const WorldSpec& spec);

  int size() const;
  int n_languages() const { return n_languages_; }
  int n_subjects() const { return n_subjects_; }
  int n_objects() const { return n_objects_; }

  TokenId qmark() const { return 0; }
  TokenId lang_tag(int lang) const { return 1 + lang; }
  TokenId region(int lang) const { return 1 + n_languages_ + lang; }
  TokenId subject(int s) const { return 1 + 2 * n_languages_ + s; }
  TokenId object(int o) const { return 1 + 2 * n_languages_ + n_subjects_ + o; }
  TokenId relation(int lang, int r) const { return base(lang) + r; }
  TokenId end_marker(int lang) const { return base(lang) + n_relations_; }

  bool is_region(TokenId t) const { return t >= region(0) && t < region(n_languages_); }
  // Region index of a region marker, or -1.
  int region_index(TokenId t) const { return is_region(t) ? t - region(0) : -1; }
  // Language block a token belongs to, or -1 for shared tokens.
  int language_of(TokenId t) const;
  // Semantic subject index of a subject token, or -1.
  int subject_index(TokenId t) const;
  // Semantic object index of an entity token, or -1.
  int object_index(TokenId t) const;

 private:
  TokenId base(int lang) const { return 1 + 2 * n_languages_ + n_subjects_ + n_objects_ + lang * per_language_; }

  int n_languages_ = 0;
  int n_subjects_ = 0;
  int n_relations_ = 0;
  int n_objects_ = 0;
  int per_language_ = 0;
};

enum class FactKind { universal, cultural };
enum class Split { dev1, dev2, test };

std::string to_string(FactKind k);
std::string to_string(Split s);
FactKind fact_kind_from_string(const std::string& s);
Split split_from_string(const std::string& s);

struct Fact {
  int id = 0;  // also the semantic subject index
  FactKind kind = FactKind::universal;
  int relation = 0;
  std::vector<int> answer;  // object per language; identical across languages iff universal
  std::vector<std::vector<int>> distractors;  // per language, n_options - 1 objects
  std::vector<int> option_order;  // per language: permutation of [answer, distractors...]
  Split split = Split::test;
};

struct McqItem {
  int id = 0;
  int lang = 0;
  FactKind kind = FactKind::universal;
  bool contextualized = false;
  Tokens query;
  std::vector<Tokens> options;
  int gold = 0;
  std::optional<int> pivot_option;
  Split split = Split::test;

  bool operator==(const McqItem&) const = default;
};

struct CorpusLine {
  int lang = 0;
  Tokens tokens;
  int prompt_length = 1;  // leading tokens given as context, not scored
  bool operator==(const CorpusLine&) const = default;
};

// A query-response pair rendered in the pivot and in one other language.
struct ParallelPair {
  int lang = 0;  // non-pivot side
  int fact = 0;
  Tokens pivot_query, pivot_response;
  Tokens query, response;
  bool operator==(const ParallelPair&) const = default;
};

struct PreferenceTriple {
  Tokens x, y_pref, y_rej;
  int lang = 0;  // language of x
  bool operator==(const PreferenceTriple&) const = default;
};

struct TrainingCorpora {
  std::vector<CorpusLine> lm;  // per-language statements, grouped by language
  std::vector<ParallelPair> parallel;
  std::vector<PreferenceTriple> preferences;
  // Query-response pairs in every language (pivot side once), for SFT.
  std::vector<std::pair<Tokens, Tokens>> sft_pairs() const;
};

struct EvalSets {
  std::vector<McqItem> universal;
  std::vector<McqItem> cultural;  // contextualized and decontextualized

  std::vector<McqItem> all() const;
};

struct World {
  WorldSpec spec;
  Vocabulary vocab;
  std::vector<Fact> facts;
  std::vector<CorpusLine> corpus;
  // Universal facts stated in each language's corpus, sorted.
  std::vector<std::vector<int>> covered_universal;
  std::vector<int> parallel_facts;  // ascending fact ids

  int pivot() const { return 0; }
  int fact_of(const Tokens& query) const;
};

World generate_world(const WorldSpec& spec);
TrainingCorpora emit_training_corpora(const World& world);
EvalSets emit_eval_sets(const World& world);

// [LANG, subject, relation, (REGION), QMARK]; the region defaults to the language's own.
Tokens render_query(const World& world, const Fact& fact, int lang, bool contextualized, int region = -1);
// [object, end marker of `lang`]
Tokens render_answer(const World& world, int lang, int object);

// Drops the region marker (the token just before the terminating QMARK).
McqItem decontextualize(const McqItem& item);

std::vector<McqItem> select(const std::vector<McqItem>& items, std::optional<Split> split,
                            std::optional<int> lang = std::nullopt,
                            std::optional<bool> contextualized = std::nullopt);

}  // namespace steerlab
