#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "types.hpp"

namespace dxnet {

enum class Variant { denet, danet, danet_anchor };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::denet;
  int num_rnn_layers = 2;
  int rnn_hidden = 64;  // per direction
  int embed_dim = 20;   // K
  int ff_hidden = 64;   // canonical mapper hidden width (DENet only)
  int F = 257;
  bool normalize_input = true;
  // Log-compress the encoder input after max-normalization so low-energy
  // harmonics are visible to the recurrent stack. Affects encoder features
  // only; masks and losses always operate on raw magnitudes.
  bool log_input = true;

  void validate() const;
  static ModelConfig preset(const std::string& name, Variant v);
};

struct LstmDirParams {
  Mat Wx;  // 4H x D, gate order i,f,g,o
  Mat Wh;  // 4H x H
  Vec b;   // 4H
};

struct LstmLayerParams {
  LstmDirParams fwd, bwd;
};

struct FfParams {
  Mat W;
  Vec b;
};

// All trainable weights. The same structure doubles as the gradient holder.
struct ModelParams {
  ModelConfig cfg;
  std::vector<LstmLayerParams> lstm;
  FfParams proj;      // (F*K) x 2H
  FfParams ff1, ff2;  // 2K -> ff_hidden -> K (DENet only)

  static ModelParams zeros_like(const ModelParams& p);
  bool all_finite() const;
};

struct NamedTensor {
  std::string name;
  double* data;
  std::vector<uint32_t> dims;  // Eigen column-major storage order
  size_t count() const;
};

// Stable enumeration of every trainable tensor; serialization, init, the
// optimizer and the finite-difference harness all iterate this.
std::vector<NamedTensor> named_tensors(ModelParams& p);

ModelParams init_params(const ModelConfig& cfg, uint64_t seed);

struct LstmDirCache {
  Mat gates;  // 4H x T, post-activation
  Mat c;      // H x T
  Mat h;      // H x T
};

struct EncoderCache {
  Mat x;  // F x T network input (after any normalization)
  std::vector<std::array<LstmDirCache, 2>> layers;
  Mat hcat;  // 2H x T
  Mat E;     // (F*K) x T, post-tanh embedding frames; E(f + k*F, t)
};

// BLSTM stack + per-frame linear projection + tanh.
EmbeddingField encode_primary(const ModelParams& p, const Mat& x,
                              EncoderCache* cache = nullptr);

// Accumulates parameter gradients for dE (same layout as cache.E).
void encode_backward(const ModelParams& p, const EncoderCache& cache,
                     const Mat& dE, ModelParams& grad);

// DENet canonical mapping: every bin embedding is concatenated with the
// broadcast extractor and passed through the two feed-forward layers.
EmbeddingField map_canonical(const ModelParams& p, const Vec& a,
                             const EmbeddingField& v);

// One training example; all matrices are F x T magnitudes (the anchor with
// its own frame count).
struct TrainItem {
  Mat anchor;
  Mat mixture;
  Mat target;
  std::vector<Mat> interferers;
};

// Scalar loss of one item under the configured variant; when grad is non-null
// the exact gradient is accumulated into it.
double item_loss(const ModelParams& p, const TrainItem& item,
                 ModelParams* grad = nullptr);

// Sum-reduced batch loss and gradient.
double compute_gradients(const ModelParams& p, const std::vector<TrainItem>& batch,
                         ModelParams& grad);

// Conversions between the public bin-major field and frame-major layouts.
Mat field_to_bins(const EmbeddingField& v);               // K x (F*T)
EmbeddingField bins_to_field(const Mat& vb, int F, int T);  // from K x (F*T)

}  // namespace dxnet
