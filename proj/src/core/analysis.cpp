#include "analysis.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace dxnet {

namespace {

// Dominant eigenpair of a symmetric PSD matrix by power iteration.
std::pair<double, Vec> dominant_eigenpair(const Mat& c) {
  const int k = int(c.rows());
  Vec v = Vec::Ones(k);
  // A fixed non-uniform perturbation avoids starting orthogonal to the
  // dominant eigenvector in symmetric fixtures.
  for (int i = 0; i < k; ++i) v[i] += 0.01 * double(i + 1) / double(k);
  v.normalize();
  for (int it = 0; it < 10000; ++it) {
    Vec w = c * v;
    const double n = w.norm();
    if (n <= 1e-300) return {0.0, v};
    w /= n;
    const bool converged = (w - v).norm() < 1e-10;
    v = w;
    if (converged) break;
  }
  return {v.dot(c * v), v};
}

}  // namespace

Pca3 pca3(const std::vector<Vec>& points) {
  const int n = int(points.size());
  if (n < 4) throw UsageError("pca3: need at least 4 points");
  const int k = int(points.front().size());
  if (k < 3) throw UsageError("pca3: need dimension >= 3");

  Vec mean = Vec::Zero(k);
  for (const auto& p : points) mean += p;
  mean /= double(n);

  Mat c = Mat::Zero(k, k);
  for (const auto& p : points) {
    const Vec d = p - mean;
    c.noalias() += d * d.transpose();
  }
  c /= double(n - 1);

  Pca3 out;
  out.basis = Mat(3, k);
  out.eigenvalues = Vec(3);
  const double scale = std::max(c.trace(), 1e-300);
  Mat deflated = c;
  for (int j = 0; j < 3; ++j) {
    auto [lambda, v] = dominant_eigenpair(deflated);
    if (lambda <= 1e-12 * scale) throw RuntimeError("degenerate point set");
    // Re-orthogonalize against previous axes to fight deflation drift.
    for (int q = 0; q < j; ++q)
      v -= out.basis.row(q).transpose() * out.basis.row(q).dot(v);
    v.normalize();
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    out.basis.row(j) = v.transpose();
    out.eigenvalues[j] = lambda;
    deflated.noalias() -= lambda * v * v.transpose();
  }

  out.projected = Mat(n, 3);
  for (int i = 0; i < n; ++i)
    out.projected.row(i) = (out.basis * (points[i] - mean)).transpose();
  return out;
}

StabilityStats extractor_stability(const std::vector<Vec>& extractors) {
  if (extractors.size() < 2)
    throw UsageError("extractor_stability: need at least 2 extractors");
  StabilityStats st;
  st.centroid = Vec::Zero(extractors.front().size());
  for (const auto& e : extractors) st.centroid += e;
  st.centroid /= double(extractors.size());
  for (const auto& e : extractors) {
    const double d = (e - st.centroid).norm();
    st.mean_dist += d;
    st.max_dist = std::max(st.max_dist, d);
  }
  st.mean_dist /= double(extractors.size());
  const double cn = st.centroid.norm();
  st.dispersion_ratio = cn > 0.0 ? st.mean_dist / cn
                                 : std::numeric_limits<double>::infinity();
  return st;
}

void write_embedding_csv(const std::vector<LabeledPoint>& points,
                         const std::string& path) {
  std::vector<Vec> raw;
  raw.reserve(points.size());
  for (const auto& p : points) raw.push_back(p.p);
  const Pca3 pca = pca3(raw);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeError("cannot write CSV: " + path);
  out << "label,pc1,pc2,pc3\n";
  out.precision(10);
  for (size_t i = 0; i < points.size(); ++i)
    out << points[i].label << ',' << pca.projected(long(i), 0) << ','
        << pca.projected(long(i), 1) << ',' << pca.projected(long(i), 2) << "\n";
}

}  // namespace dxnet
