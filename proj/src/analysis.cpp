#include "steerlab/analysis.hpp"

#include "steerlab/eval.hpp"

#include <map>
#include <set>

namespace steerlab {

PerpReport perpendicularity_report(const Parameters& params, const PairSet& en_pairs, const PairSet& loc_pairs,
                                   const std::vector<int>& layers) {
  PerpReport r;
  for (int layer : layers) {
    const SteeringVector en = extract_steering_vector(params, en_pairs, layer);
    const SteeringVector loc = extract_steering_vector(params, loc_pairs, layer);
    r.rows.push_back({layer, perpendicularity(en.values, loc.values)});
  }
  return r;
}

SweepTable layer_sweep(const Parameters& params, const std::vector<PairSet>& pair_sets, const std::vector<int>& layers,
                       const std::vector<SweepDataset>& datasets, double gamma) {
  SweepTable table;
  for (const auto& ds : datasets) {
    table.rows.push_back({0, "none", ds.name, accuracy(params, ds.items).accuracy});
  }
  for (const auto& pairs : pair_sets) {
    const std::string kind = to_string(pairs.kind);
    for (int layer : layers) {
      const SteeringPlan plan = make_plan(extract_steering_vector(params, pairs, layer), gamma);
      for (const auto& ds : datasets) {
        table.rows.push_back({layer, kind, ds.name, accuracy(params, ds.items, &plan).accuracy});
      }
    }
    for (const auto& ds : datasets) {
      SweepArgmax best{kind, ds.name, 0, -1.0};
      for (const auto& row : table.rows) {
        if (row.kind != kind || row.dataset != ds.name) continue;
        if (row.accuracy > best.accuracy || (row.accuracy == best.accuracy && row.layer < best.layer)) {
          best.layer = row.layer;
          best.accuracy = row.accuracy;
        }
      }
      table.argmax.push_back(best);
    }
  }
  return table;
}

double mean_centroid_distance(const PcaResult& pca) {
  const Eigen::Index k = std::min<Eigen::Index>(2, pca.projections.cols());
  std::map<int, std::pair<RowVector, int>> acc;
  for (std::size_t i = 0; i < pca.labels.size(); ++i) {
    auto& [sum, count] = acc[pca.labels[i]];
    if (count == 0) sum = RowVector::Zero(k);
    sum += pca.projections.row(static_cast<Eigen::Index>(i)).head(k);
    count += 1;
  }
  std::vector<RowVector> centroids;
  for (auto& [label, sc] : acc) centroids.push_back(sc.first / static_cast<double>(sc.second));
  if (centroids.size() < 2) fail_data("centroid distance needs at least 2 labels");
  double total = 0.0;
  int pairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      total += (centroids[a] - centroids[b]).norm();
      ++pairs;
    }
  }
  return total / pairs;
}

OverlapReport overlap_from_activations(const std::vector<int>& layers, const std::vector<Matrix>& activations,
                                       const std::vector<int>& labels) {
  if (layers.size() != activations.size()) fail_data("overlap: one activation matrix per layer required");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) fail_data("overlap: at least 2 languages required");
  OverlapReport r;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Matrix& a = activations[i];
    const int k = static_cast<int>(std::min<Eigen::Index>(2, std::min(a.rows(), a.cols())));
    OverlapLayer ol{layers[i], pca_project(a, k, labels), 0.0};
    ol.centroid_distance = mean_centroid_distance(ol.pca);
    r.layers.push_back(std::move(ol));
  }
  return r;
}

OverlapReport language_overlap_report(const Parameters& params, const std::vector<McqItem>& items,
                                      const std::vector<int>& layers) {
  const auto n = static_cast<Eigen::Index>(items.size());
  std::vector<Matrix> acts(layers.size(), Matrix(n, params.config.d_model));
  std::vector<int> labels;
  for (Eigen::Index i = 0; i < n; ++i) {
    const McqItem& it = items[static_cast<std::size_t>(i)];
    labels.push_back(it.lang);
    const ForwardResult fr = forward_with_trace(params, it.query);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Matrix& h = fr.trace.at(layers[l]);
      acts[l].row(i) = h.row(h.rows() - 1);
    }
  }
  return overlap_from_activations(layers, acts, labels);
}

}  // namespace steerlab
