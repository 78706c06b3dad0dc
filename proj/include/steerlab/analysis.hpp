#pragma once

#include "steerlab/error.hpp"
#include "steerlab/model.hpp"
#include "steerlab/steering.hpp"
#include "steerlab/tensor.hpp"
#include "steerlab/world.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace steerlab {

struct PcaResult {
  Matrix components;  // [k x d], orthonormal rows
  Vector explained_variance;  // [k], eigenvalues of the sample covariance
  Vector explained_variance_ratio;  // [k], over the sum of all eigenvalues
  double total_variance = 0.0;  // trace of the sample covariance
  RowVector mean;
  Matrix projections;  // [n x k]
  std::vector<int> labels;
};

// PCA by eigendecomposition of the sample covariance. Each component is
// flipped so that its largest-magnitude coordinate is positive.
template <typename Derived>
PcaResult pca_project(const Eigen::MatrixBase<Derived>& data, int k, std::vector<int> labels = {}) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  if (n < 2) fail_data("pca needs at least 2 rows");
  if (k < 1 || k > std::min(n, d)) fail_data("pca: k=" + std::to_string(k) + " exceeds min(n, d)");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n) fail_data("pca: label count mismatch");

  PcaResult r;
  r.labels = std::move(labels);
  r.mean = data.colwise().mean();
  const Matrix centered = data.rowwise() - r.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail_numeric("pca: eigendecomposition failed");

  const Eigen::VectorXd evals = solver.eigenvalues().cwiseMax(0.0);
  r.total_variance = cov.trace();
  const double eig_sum = evals.sum();
  r.components.resize(k, d);
  r.explained_variance.resize(k);
  r.explained_variance_ratio.resize(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - c;  // eigenvalues come back ascending
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.row(c) = v.transpose();
    r.explained_variance(c) = evals(src);
    r.explained_variance_ratio(c) = eig_sum > 0 ? evals(src) / eig_sum : 0.0;
  }
  r.projections = centered * r.components.transpose();
  return r;
}

// 90 minus the deviation of the inter-vector angle from 90 degrees.
template <typename A, typename B>
double perpendicularity(const Eigen::MatrixBase<A>& v1, const Eigen::MatrixBase<B>& v2) {
  const double n1 = v1.norm();
  const double n2 = v2.norm();
  if (n1 == 0.0 || n2 == 0.0) fail_data("perpendicularity: zero vector");
  const double c = std::clamp(v1.dot(v2) / (n1 * n2), -1.0, 1.0);
  const double angle = std::acos(c) * 180.0 / std::numbers::pi;
  return 90.0 - std::abs(angle - 90.0);
}

struct PerpRow {
  int layer = 0;
  double score_deg = 0.0;
};

struct PerpReport {
  std::vector<PerpRow> rows;
};

PerpReport perpendicularity_report(const Parameters& params, const PairSet& en_pairs, const PairSet& loc_pairs,
                                   const std::vector<int>& layers);

struct SweepRow {
  int layer = 0;  // 0 with kind "none" is the unsteered baseline
  std::string kind;
  std::string dataset;
  double accuracy = 0.0;
};

struct SweepArgmax {
  std::string kind;
  std::string dataset;
  int layer = 0;
  double accuracy = 0.0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::vector<SweepArgmax> argmax;
};

struct SweepDataset {
  std::string name;
  std::vector<McqItem> items;
};

// For each layer: extract the vector from `pairs` at that layer, steer at that
// layer with `gamma` and score every dataset. Argmax ties go to the shallower layer.
SweepTable layer_sweep(const Parameters& params, const std::vector<PairSet>& pair_sets, const std::vector<int>& layers,
                       const std::vector<SweepDataset>& datasets, double gamma);

// Mean pairwise distance between per-label centroids in the top-2 PCA plane.
double mean_centroid_distance(const PcaResult& pca);

struct OverlapLayer {
  int layer = 0;
  PcaResult pca;
  double centroid_distance = 0.0;
};

struct OverlapReport {
  std::vector<OverlapLayer> layers;
};

// Per-layer PCA of the supplied activations (rows labelled by language).
OverlapReport overlap_from_activations(const std::vector<int>& layers, const std::vector<Matrix>& activations,
                                       const std::vector<int>& labels);

OverlapReport language_overlap_report(const Parameters& params, const std::vector<McqItem>& items,
                                      const std::vector<int>& layers);

}  // namespace steerlab
