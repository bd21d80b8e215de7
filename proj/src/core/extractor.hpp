#pragma once

#include "types.hpp"

namespace dxnet {

// Mean of the embeddings selected by a binary F x T mask; used both for the
// anchor extractor and the canonical extractor. Throws on an empty selection.
Vec masked_mean_extractor(const EmbeddingField& v, const Mat& y);

// m[f,t] = sigmoid(<a, v[f,t]>), returned as an F x T matrix.
Mat similarity_mask(const Vec& a, const EmbeddingField& v);

// Binary membership of the target: target magnitude wins (ties to target)
// against every interferer and the mixture-sum magnitude is above the
// -floor_db presence threshold.
Mat ideal_membership(const Mat& target, const std::vector<Mat>& interferers,
                     double floor_db = 40.0);

// Componentwise mean over a nonempty list.
Vec preset_extractor(const std::vector<Vec>& extractors);

// Pair element with the smaller Euclidean distance to anchor_a; ties go to a1.
Vec nearest_attractor(const AttractorPair& pair, const Vec& anchor_a);

// One extractor per source, each via the masked mean over the mixture
// embeddings with that source's membership.
std::vector<Vec> danet_attractors(const EmbeddingField& v_mix,
                                  const std::vector<Mat>& memberships);

}  // namespace dxnet
