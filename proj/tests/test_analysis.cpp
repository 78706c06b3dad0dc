#include "support.hpp"

#include "steerlab/analysis.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace steerlab;
using testing::scramble;
using testing::tiny_config;

namespace {

Vector randn(std::uint64_t key, int d) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = counter_normal(key, static_cast<std::uint64_t>(i));
  return v;
}

}  // namespace

TEST_CASE("perpendicularity of known angles") {
  Vector a(2), b(2);
  a << 1, 0;
  b << 0, 3;
  CHECK(std::abs(perpendicularity(a, b) - 90.0) <= 1e-9);
  CHECK(std::abs(perpendicularity(a, (2.5 * a).eval()) - 0.0) <= 1e-9);
  CHECK(std::abs(perpendicularity(a, (-a).eval()) - 0.0) <= 1e-9);
  b << 1, 1;
  CHECK(std::abs(perpendicularity(a, b) - 45.0) <= 1e-9);
  b << -1, 1;  // 135 degrees is also 45 away from parallel
  CHECK(std::abs(perpendicularity(a, b) - 45.0) <= 1e-9);
  CHECK_THROWS_AS(perpendicularity(a, Vector::Zero(2).eval()), Error);
}

TEST_CASE("perpendicularity is scale and order invariant") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vector u = randn(2 * i + 1, 16), v = randn(2 * i + 2, 16);
    const double s1 = 1e-3 + 100 * rng.uniform(), s2 = 1e-3 + 100 * rng.uniform();
    const double p = perpendicularity(u, v);
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 90.0);
    CHECK(std::abs(perpendicularity((s1 * u).eval(), (s2 * v).eval()) - p) <= 1e-9);
    CHECK(std::abs(perpendicularity(v, u) - p) <= 1e-9);
    CHECK(std::abs(perpendicularity((-u).eval(), v) - p) <= 1e-9);
  }
}

TEST_CASE("PCA recovers planted rank-2 data") {
  const int n = 40, d = 6;
  Matrix basis(2, d);
  basis << 1, 2, 0, -1, 0, 1, 0, 1, 1, 1, -2, 0;
  Matrix coeff(n, 2);
  for (int i = 0; i < n; ++i) {
    coeff(i, 0) = 3.0 * counter_normal(8, i);
    coeff(i, 1) = 0.5 * counter_normal(9, i);
  }
  RowVector offset(d);
  offset << 5, -1, 0, 2, 2, 7;
  const Matrix data = (coeff * basis).rowwise() + offset;
  const PcaResult r = pca_project(data, 2);

  const Matrix recon = (r.projections * r.components).rowwise() + r.mean;
  CHECK((recon - data).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((r.components * r.components.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.explained_variance(0) >= r.explained_variance(1));
  CHECK(std::abs(r.explained_variance_ratio.sum() - 1.0) < 1e-9);

  // sign convention: largest-magnitude coordinate positive
  for (int c = 0; c < 2; ++c) {
    Eigen::Index arg;
    r.components.row(c).cwiseAbs().maxCoeff(&arg);
    CHECK(r.components(c, arg) > 0);
  }
}

TEST_CASE("full-rank PCA: variances add up to the total") {
  const int n = 30, d = 5;
  Matrix data(n, d);
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] = counter_normal(4, i) * (1 + i % d);
  const PcaResult r = pca_project(data, d);
  const Matrix centered = data.rowwise() - data.colwise().mean();
  const double total = centered.squaredNorm() / (n - 1);
  CHECK(std::abs(r.total_variance - total) <= 1e-12 * total);
  CHECK(std::abs(r.explained_variance.sum() - total) <= 1e-9 * total);
  CHECK_THROWS_AS(pca_project(data, d + 1), Error);
  CHECK_THROWS_AS(pca_project(data.topRows(1), 1), Error);
}

TEST_CASE("centroid distance on planted clusters") {
  // two clusters at x = -2 and x = +2, symmetric noise in y
  Matrix pts(8, 2);
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    pts(i, 0) = i < 4 ? -2.0 : 2.0;
    pts(i, 1) = (i % 2 ? 0.1 : -0.1);
    labels.push_back(i < 4 ? 0 : 1);
  }
  const PcaResult r = pca_project(pts, 2, labels);
  CHECK(mean_centroid_distance(r) == doctest::Approx(4.0).epsilon(1e-12));

  // three labels on an equilateral triangle with side 1
  Matrix tri(3, 2);
  tri << 0, 0, 1, 0, 0.5, std::sqrt(3.0) / 2;
  CHECK(mean_centroid_distance(pca_project(tri, 2, {0, 1, 2})) == doctest::Approx(1.0).epsilon(1e-12));

  const OverlapReport o = overlap_from_activations({3, 5}, {pts, (0.5 * pts).eval()}, labels);
  REQUIRE(o.layers.size() == 2);
  CHECK(o.layers[1].layer == 5);
  CHECK(o.layers[1].centroid_distance == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(overlap_from_activations({1}, {pts}, std::vector<int>(8, 0)), Error);
}

TEST_CASE("layer sweep shape and argmax tie-break") {
  WorldSpec ws;
  ws.n_universal_facts = 20;
  ws.n_cultural_facts = 10;
  const World w = generate_world(ws);
  const EvalSets sets = emit_eval_sets(w);
  Parameters p = init_model(tiny_config(w.vocab.size(), 3, 8, 2, 16));
  scramble(p, 1, 0.2);
  PairSet loc = build_pair_set_loc(select(sets.cultural, Split::dev1), 1);
  const std::vector<SweepDataset> ds{{"cultural", select(sets.cultural, Split::dev2, std::nullopt, false)}};

  // gamma 0: every layer ties with the baseline, so the shallowest wins
  const SweepTable t = layer_sweep(p, {loc}, {1, 2, 3}, ds, 0.0);
  CHECK(t.rows.size() == 1 + 3);
  CHECK(t.rows[0].kind == "none");
  for (const auto& row : t.rows) CHECK(row.accuracy == t.rows[0].accuracy);
  REQUIRE(t.argmax.size() == 1);
  CHECK(t.argmax[0].layer == 1);
  CHECK(t.argmax[0].kind == "loc");
}

TEST_CASE("perpendicularity report has one row per layer") {
  WorldSpec ws;
  ws.n_universal_facts = 20;
  ws.n_cultural_facts = 10;
  const World w = generate_world(ws);
  const EvalSets sets = emit_eval_sets(w);
  Parameters p = init_model(tiny_config(w.vocab.size(), 3, 8, 2, 16));
  scramble(p, 2, 0.2);
  const auto dev1u = select(sets.universal, Split::dev1);
  const PairSet en = build_pair_set_en(w.vocab, dev1u, 0, 1);
  const PairSet loc = build_pair_set_loc(select(sets.cultural, Split::dev1), 1);
  const PerpReport r = perpendicularity_report(p, en, loc, {1, 3});
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) CHECK((row.score_deg >= 0.0 && row.score_deg <= 90.0));
  const auto v1 = extract_steering_vector(p, en, 3).values;
  const auto v2 = extract_steering_vector(p, loc, 3).values;
  CHECK(r.rows[1].score_deg == perpendicularity(v1, v2));
}
