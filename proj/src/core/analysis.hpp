#pragma once

#include <string>
#include <vector>

#include "types.hpp"

namespace dxnet {

struct Pca3 {
  Mat basis;       // 3 x K, orthonormal rows
  Mat projected;   // N x 3
  Vec eigenvalues; // top 3 of the sample covariance
};

// Mean-centered PCA onto the top three principal axes, computed by deflated
// power iteration (tol 1e-10, max 10000 iterations). The largest-magnitude
// component of each basis row is made positive. Throws on a covariance of
// rank < 3.
Pca3 pca3(const std::vector<Vec>& points);

struct StabilityStats {
  Vec centroid;
  double mean_dist = 0.0;
  double max_dist = 0.0;
  double dispersion_ratio = 0.0;  // mean_dist / centroid norm
};

StabilityStats extractor_stability(const std::vector<Vec>& extractors);

struct LabeledPoint {
  std::string label;  // extractor | target_bin | interferer_bin
  Vec p;              // K-dim, projected later
};

// CSV rows (label, pc1, pc2, pc3) after a joint pca3 over all points.
void write_embedding_csv(const std::vector<LabeledPoint>& points,
                         const std::string& path);

}  // namespace dxnet
