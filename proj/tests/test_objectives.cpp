#include "support.hpp"

#include "steerlab/error.hpp"
#include "steerlab/objectives.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace steerlab;
using testing::naive_forward;
using testing::naive_log_softmax;
using testing::scramble;
using testing::tiny_config;

namespace {

std::vector<PreferenceTriple> toy_triples() {
  // lang 0 is the pivot; both directions present
  return {{{1, 2, 0}, {3, 6}, {4, 6}, 0}, {{5, 2, 0}, {4, 7}, {3, 7}, 1}, {{1, 5, 0}, {3, 7}, {4, 7}, 1}};
}

}  // namespace

TEST_CASE("all-zero model: SFT loss is ln V") {
  for (int V : {2, 8, 37}) {
    Parameters p;
    p.config = tiny_config(V);
    p.weights = zero_weights(p.config);
    const std::vector<SftExample> batch{{{1, 0}, {1}}, {{0}, {1, 0, 1}}};
    CHECK(std::abs(loss_sft(p, batch).loss - std::log(static_cast<double>(V))) <= 1e-12);
  }
}

TEST_CASE("SFT on a 2-token vocabulary matches hand-chained softmax") {
  Parameters p = init_model(tiny_config(2));
  scramble(p, 31, 0.8);
  const Tokens q{0, 1}, r{1, 1, 0};
  Tokens full = q;
  full.insert(full.end(), r.begin(), r.end());
  const auto logits = naive_forward(p, full);
  double nll = 0;
  for (std::size_t i = 0; i < r.size(); ++i) nll -= naive_log_softmax(logits[q.size() - 1 + i], r[i]);
  const std::vector<SftExample> batch{{q, r}};
  CHECK(loss_sft(p, batch).loss == doctest::Approx(nll / 3.0).epsilon(1e-12));
  CHECK(sequence_log_prob(p, q, r, false).log_prob == doctest::Approx(-nll).epsilon(1e-12));
}

TEST_CASE("SFT loss is a token-weighted mean over the batch") {
  Parameters p = init_model(tiny_config(6));
  scramble(p, 2);
  const SftExample a{{1, 2}, {3}}, b{{4}, {5, 0, 2}};
  const double la = loss_sft(p, std::vector{a}).loss;
  const double lb = loss_sft(p, std::vector{b}).loss;
  CHECK(loss_sft(p, std::vector{a, b}).loss == doctest::Approx((la * 1 + lb * 3) / 4).epsilon(1e-13));
}

TEST_CASE("alignment loss closed forms") {
  SUBCASE("singleton batch is exactly zero") {
    Matrix s(1, 3), t(1, 3);
    s << 0.3, -1.0, 2.0;
    t << 5.0, 0.1, -0.7;
    CHECK(midalign_from_pooled(s, t).loss == 0.0);
  }
  SUBCASE("cosines 1 on the diagonal, -1 off it") {
    Matrix s(2, 2), t(2, 2);
    s << 1, 0, -1, 0;
    t << 2, 0, -3, 0;
    const auto r = midalign_from_pooled(s, t);
    CHECK(r.cosine(0, 1) == -1.0);
    CHECK(std::abs(r.loss - std::log1p(std::exp(-2.0))) <= 1e-12);
  }
  SUBCASE("zero vector is a numeric failure") {
    Matrix s = Matrix::Zero(2, 2), t = Matrix::Ones(2, 2);
    try {
      midalign_from_pooled(s, t);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.exit_code() == 3);
    }
  }
}

TEST_CASE("pooled alignment gradient matches finite differences") {
  Matrix s(3, 4), t(3, 4);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    s.data()[i] = counter_normal(1, static_cast<std::uint64_t>(i));
    t.data()[i] = counter_normal(2, static_cast<std::uint64_t>(i));
  }
  const auto r = midalign_from_pooled(s, t);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    Matrix sp = s, sm = s, tp = t, tm = t;
    sp.data()[i] += 1e-6;
    sm.data()[i] -= 1e-6;
    tp.data()[i] += 1e-6;
    tm.data()[i] -= 1e-6;
    const double ns = (midalign_from_pooled(sp, t).loss - midalign_from_pooled(sm, t).loss) / 2e-6;
    const double nt = (midalign_from_pooled(s, tp).loss - midalign_from_pooled(s, tm).loss) / 2e-6;
    CHECK(r.d_source.data()[i] == doctest::Approx(ns).epsilon(1e-6));
    CHECK(r.d_target.data()[i] == doctest::Approx(nt).epsilon(1e-6));
  }
}

TEST_CASE("contrastive term at the reference point is 2 ln 2") {
  Parameters p = init_model(tiny_config(8));
  scramble(p, 4);
  const auto batch = toy_triples();
  const CloLoss r = loss_clo(p, p, batch, 0.5, 1.0);
  for (double z : r.z) CHECK(z == 0.0);
  CHECK(std::abs(r.cl - 2.0 * std::numbers::ln2) <= 1e-12);
}

TEST_CASE("lambda = 1 reduces to SFT on the local preferred responses") {
  Parameters p = init_model(tiny_config(8));
  scramble(p, 4);
  Parameters ref = init_model(tiny_config(8));
  const auto batch = toy_triples();
  const CloLoss r = loss_clo(p, ref, batch, 1.0, 1.0);
  std::vector<SftExample> sft;
  for (const auto& t : batch)
    if (t.lang != 0) sft.push_back({t.x, t.y_pref});
  const GradientSet g = loss_sft(p, sft);
  CHECK(r.grads.loss == doctest::Approx(g.loss).epsilon(1e-14));
  auto a = testing::flat(const_cast<Weights&>(r.grads.weights));
  auto b = testing::flat(const_cast<Weights&>(g.weights));
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(*a[i] - *b[i]));
  CHECK(worst < 1e-15);
}

TEST_CASE("beta scales the preference margin linearly") {
  Parameters p = init_model(tiny_config(8));
  scramble(p, 4);
  Parameters ref = init_model(tiny_config(8));
  const auto batch = toy_triples();
  const CloLoss one = loss_clo(p, ref, batch, 0.5, 1.0);
  const CloLoss two = loss_clo(p, ref, batch, 0.5, 2.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(one.z[i] != 0.0);
    CHECK(two.z[i] == doctest::Approx(2.0 * one.z[i]).epsilon(1e-13));
  }
}

TEST_CASE("CLO needs both preference directions") {
  const Parameters p = init_model(tiny_config(8));
  auto batch = toy_triples();
  batch.erase(batch.begin());
  CHECK_THROWS_AS(loss_clo(p, p, batch, 0.5, 1.0), Error);
}

TEST_CASE("learning-rate schedules") {
  TrainConfig c;
  c.lr = 0.1;
  CHECK(c.lr_at(0, 10) == 0.1);
  CHECK(c.lr_at(9, 10) == 0.1);
  c.schedule = LrSchedule::cosine;
  CHECK(c.lr_at(0, 10) == doctest::Approx(0.1));
  CHECK(c.lr_at(5, 10) == doctest::Approx(0.05));
  CHECK(c.lr_at(9, 10) < 0.01);
  c.schedule = LrSchedule::constant;
  c.warmup_fraction = 0.5;
  CHECK(c.lr_at(0, 10) < c.lr_at(4, 10));
  CHECK(c.lr_at(6, 10) == 0.1);
  c.warmup_fraction = 2.0;
  CHECK_THROWS_AS(c.validate(12), Error);
}

TEST_CASE("string conversions") {
  for (auto o : {Objective::lm, Objective::mist, Objective::midalign, Objective::clo})
    CHECK(objective_from_string(to_string(o)) == o);
  try {
    objective_from_string("dpo");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.exit_code() == 1);
  }
  CHECK(optimizer_from_string("adam") == Optimizer::adam);
  CHECK(lr_schedule_from_string("cosine") == LrSchedule::cosine);
}

TEST_CASE("each objective trains and is reproducible") {
  WorldSpec ws;
  ws.n_universal_facts = 20;
  ws.n_cultural_facts = 10;
  const World w = generate_world(ws);
  const TrainingCorpora corp = emit_training_corpora(w);
  ModelConfig mc = tiny_config(w.vocab.size(), 2, 16, 2, 32);
  const Parameters p0 = init_model(mc);

  for (auto obj : {Objective::lm, Objective::mist, Objective::midalign, Objective::clo}) {
    CAPTURE(to_string(obj));
    TrainConfig tc;
    tc.objective = obj;
    tc.optimizer = Optimizer::adam;
    tc.lr = 0.01;
    tc.epochs = 2;
    tc.midalign_layer = 1;
    tc.seed = 3;
    const TrainResult a = train(p0, corp, tc);
    const TrainResult b = train(p0, corp, tc);
    REQUIRE_FALSE(a.log.empty());
    CHECK(a.params.revision > p0.revision);
    CHECK(a.params.weights.tok_emb == b.params.weights.tok_emb);
    CHECK(a.log.size() == b.log.size());
    CHECK(a.params.weights.all_finite());
  }
}

TEST_CASE("pretraining lowers the corpus loss") {
  WorldSpec ws;
  ws.n_universal_facts = 20;
  ws.n_cultural_facts = 10;
  const World w = generate_world(ws);
  const TrainingCorpora corp = emit_training_corpora(w);
  const Parameters p0 = init_model(tiny_config(w.vocab.size(), 2, 16, 2, 32));
  TrainConfig tc;
  tc.objective = Objective::lm;
  tc.optimizer = Optimizer::adam;
  tc.lr = 0.01;
  tc.epochs = 5;
  tc.midalign_layer = 1;
  const TrainResult r = train(p0, corp, tc);
  CHECK(r.log.back().loss < 0.7 * r.log.front().loss);
}
