#include "support.hpp"

#include "steerlab/error.hpp"
#include "steerlab/steering.hpp"

#include <doctest.h>

using namespace steerlab;
using testing::scramble;
using testing::tiny_config;

namespace {

Parameters toy_model() {
  Parameters p = init_model(tiny_config(12, 3, 8, 2, 16));
  scramble(p, 21);
  return p;
}

SteeringVector unit_vector(int layer, int d, std::uint64_t key) {
  SteeringVector v;
  v.layer = layer;
  v.values.resize(d);
  for (int i = 0; i < d; ++i) v.values(i) = counter_normal(key, static_cast<std::uint64_t>(i));
  return v;
}

}  // namespace

TEST_CASE("identical pairs extract the zero vector") {
  const Parameters p = toy_model();
  PairSet set;
  set.pairs = {{{1, 2, 3}, {1, 2, 3}}, {{4, 0}, {4, 0}}};
  for (int l = 1; l <= 3; ++l) {
    const SteeringVector v = extract_steering_vector(p, set, l);
    CHECK(v.values.isZero(0.0));
    CHECK(v.n_pairs == 2);
    CHECK(v.layer == l);
  }
}

TEST_CASE("extraction is the mean difference of stub activations") {
  // h(tokens) = tokens[0] * e_0 + layer * e_1 + tokens.size() * e_2
  const ActivationFn stub = [](const Tokens& t, int layer) {
    Vector h = Vector::Zero(3);
    h(0) = t[0];
    h(1) = layer;
    h(2) = static_cast<double>(t.size());
    return h;
  };
  PairSet set;
  set.kind = VectorKind::loc;
  set.pairs = {{{5, 1}, {1}}, {{2, 9, 9}, {4, 1}}};
  const SteeringVector v = extract_steering_vector(stub, set, 4, 3, 17);
  CHECK(v.kind == VectorKind::loc);
  CHECK(v.model_revision == 17);
  CHECK(v.values(0) == ((5 - 1) + (2 - 4)) / 2.0);
  CHECK(v.values(1) == 0.0);
  CHECK(v.values(2) == (1 + 1) / 2.0);
  CHECK_THROWS_AS(extract_steering_vector(stub, PairSet{}, 4, 3), Error);
  CHECK_THROWS_AS(extract_steering_vector(stub, set, 4, 5), Error);
}

TEST_CASE("final-token activation is the last trace row") {
  const Parameters p = toy_model();
  const Tokens t{3, 4, 5, 6};
  const auto r = forward_with_trace(p, t);
  CHECK(final_token_activation(p, t, 2) == r.trace.at(2).row(3).transpose());
}

TEST_CASE("gamma 0 and zero-vector plans are bit-exact no-ops") {
  const Parameters p = toy_model();
  const Tokens t{1, 7, 3, 11, 2};
  const Matrix base = forward_with_trace(p, t).logits;
  const SteeringPlan g0 = make_plan(unit_vector(2, 8, 1), 0.0);
  SteeringVector zero = unit_vector(2, 8, 1);
  zero.values.setZero();
  const SteeringPlan z = make_plan(zero, 2.0);
  CHECK(forward_with_trace(p, t, &g0).logits == base);
  CHECK(forward_with_trace(p, t, &z).logits == base);
}

TEST_CASE("the plan adds gamma * v after its block at every position") {
  const Parameters p = toy_model();
  const Tokens t{1, 7, 3, 11, 2};
  const SteeringVector v = unit_vector(2, 8, 9);
  const auto base = forward_with_trace(p, t);
  const SteeringPlan plus = make_plan(v, 2.0);
  const SteeringPlan minus = make_plan(v, -2.0);
  const auto up = forward_with_trace(p, t, &plus);
  const auto down = forward_with_trace(p, t, &minus);
  CHECK(up.trace.at(1) == base.trace.at(1));
  const RowVector d = (2.0 * v.values).transpose();
  CHECK(up.trace.at(2) == (base.trace.at(2).rowwise() + d).eval());
  CHECK(down.trace.at(2) == (base.trace.at(2).rowwise() - d).eval());
  CHECK(plus.delta_at(2, 8) == -minus.delta_at(2, 8));
  CHECK(plus.delta_at(1, 8).isZero(0.0));
  CHECK(up.logits != base.logits);
}

TEST_CASE("surgical plan = EN entry + LOC entry") {
  SteeringVector en = unit_vector(1, 8, 3), loc = unit_vector(3, 8, 4);
  en.kind = VectorKind::en;
  loc.kind = VectorKind::loc;
  const SteeringPlan s = make_surgical_plan(en, loc, 2.0);
  REQUIRE(s.entries.size() == 2);
  CHECK(s.entries[0].layer == 1);
  CHECK(s.entries[1].kind == VectorKind::loc);
  const SteeringPlan c = combine({make_plan(en, 2.0), make_plan(loc, 2.0)});
  const Parameters p = toy_model();
  CHECK(forward_with_trace(p, {1, 2, 3}, &s).logits == forward_with_trace(p, {1, 2, 3}, &c).logits);
  loc.model_revision = 5;
  CHECK_THROWS_AS(make_surgical_plan(en, loc, 2.0), Error);
}

TEST_CASE("vectors refuse foreign model revisions unless forced") {
  Parameters p = toy_model();
  p.revision = 10;
  SteeringVector v = unit_vector(1, 8, 2);
  v.model_revision = 9;
  try {
    check_revision(v, p, false);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.exit_code() == 2);
  }
  CHECK_NOTHROW(check_revision(v, p, true));
  v.model_revision = 10;
  CHECK_NOTHROW(check_revision(v, p, false));
  v.values = Vector::Zero(4);
  CHECK_THROWS_AS(check_revision(v, p, true), Error);
}

TEST_CASE("pair sets from the world") {
  const World w = generate_world(WorldSpec{});
  const EvalSets sets = emit_eval_sets(w);
  const auto dev1_u = select(sets.universal, Split::dev1);
  const PairSet en = build_pair_set_en(w.vocab, dev1_u, 0, 2);
  CHECK(en.pairs.size() == 6);
  for (const auto& [pos, neg] : en.pairs) {
    CHECK(pos[0] == w.vocab.lang_tag(0));
    CHECK(neg[0] == w.vocab.lang_tag(2));
    CHECK(pos[1] == neg[1]);  // same subject
  }
  const PairSet loc = build_pair_set_loc(select(sets.cultural, Split::dev1), 1);
  CHECK(loc.pairs.size() == 3);
  for (const auto& [pos, neg] : loc.pairs) {
    CHECK(pos.size() == neg.size() + 1);
    CHECK(w.vocab.region_index(pos[3]) == 1);
  }
  CHECK(loc.source == Split::dev1);
  CHECK_THROWS_AS(build_pair_set_loc(select(sets.cultural, Split::dev1, std::nullopt, false), 1), Error);
}
