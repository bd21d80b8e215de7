#include "extractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsp.hpp"

namespace dxnet {

Vec masked_mean_extractor(const EmbeddingField& v, const Mat& y) {
  if (int(y.rows()) != v.F || int(y.cols()) != v.T)
    throw RuntimeError("extractor: mask shape does not match embedding field");
  const Vec w = flatten_tf(y);
  const double denom = w.sum();
  if (denom <= 0.0) throw RuntimeError("empty anchor presence");
  return (v.v.transpose() * w) / denom;
}

Mat similarity_mask(const Vec& a, const EmbeddingField& v) {
  if (int(a.size()) != v.K)
    throw RuntimeError("similarity_mask: extractor dimension mismatch");
  const Vec q = v.v * a;  // inner products per bin
  Mat m(v.F, v.T);
  // The sigmoid saturates to exactly 0.0/1.0 in double precision for
  // |dot| beyond ~745/37; keep the output strictly inside (0,1).
  const double hi = std::nextafter(1.0, 0.0);
  constexpr double lo = std::numeric_limits<double>::min();
  for (int t = 0; t < v.T; ++t)
    for (int f = 0; f < v.F; ++f)
      m(f, t) = std::clamp(1.0 / (1.0 + std::exp(-q[t * v.F + f])), lo, hi);
  return m;
}

Mat ideal_membership(const Mat& target, const std::vector<Mat>& interferers,
                     double floor_db) {
  if (interferers.empty()) throw RuntimeError("ideal_membership: no interferers");
  for (const auto& i : interferers)
    if (i.rows() != target.rows() || i.cols() != target.cols())
      throw RuntimeError("ideal_membership: shape mismatch");

  Mat imax = interferers.front();
  for (size_t i = 1; i < interferers.size(); ++i)
    imax = imax.cwiseMax(interferers[i]);
  // Mixture magnitude approximated by the magnitude sum of all sources.
  Mat mix_mag = target;
  for (const auto& i : interferers) mix_mag += i;
  const Mat loud = presence_mask(mix_mag, floor_db);

  Mat y = Mat::Zero(target.rows(), target.cols());
  for (int c = 0; c < y.cols(); ++c)
    for (int r = 0; r < y.rows(); ++r)
      if (target(r, c) >= imax(r, c) && loud(r, c) > 0.5) y(r, c) = 1.0;
  return y;
}

Vec preset_extractor(const std::vector<Vec>& extractors) {
  if (extractors.empty()) throw RuntimeError("preset_extractor: empty list");
  Vec acc = Vec::Zero(extractors.front().size());
  for (const auto& e : extractors) {
    if (e.size() != acc.size())
      throw RuntimeError("preset_extractor: dimension mismatch");
    acc += e;
  }
  return acc / double(extractors.size());
}

Vec nearest_attractor(const AttractorPair& pair, const Vec& anchor_a) {
  if (pair.a1.size() != anchor_a.size() || pair.a2.size() != anchor_a.size())
    throw RuntimeError("nearest_attractor: dimension mismatch");
  const double d1 = (pair.a1 - anchor_a).norm();
  const double d2 = (pair.a2 - anchor_a).norm();
  return d2 < d1 ? pair.a2 : pair.a1;
}

std::vector<Vec> danet_attractors(const EmbeddingField& v_mix,
                                  const std::vector<Mat>& memberships) {
  std::vector<Vec> out;
  out.reserve(memberships.size());
  for (const auto& y : memberships) out.push_back(masked_mean_extractor(v_mix, y));
  return out;
}

}  // namespace dxnet
