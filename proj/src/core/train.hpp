#pragma once

#include <functional>
#include <string>
#include <vector>

#include "data.hpp"
#include "net.hpp"

namespace dxnet {

// L = sum_{f,t} (s - x*m)^2
double reconstruction_loss(const Mat& x, const Mat& s, const Mat& m);

enum class Curriculum { none, frames_100_then_400 };

struct TrainConfig {
  Variant variant = Variant::denet;
  std::string preset = "desk";
  int epochs = 20;
  int batch_size = 4;
  double learning_rate = 1e-3;
  double grad_clip_norm = 5.0;
  Curriculum curriculum = Curriculum::none;
  uint64_t seed = 1;

  StftConfig stft{512, 256};
  ModelConfig model;  // resolved from preset/variant by resolve()

  void resolve();
};

// StftConfig paired with a model preset name.
StftConfig preset_stft(const std::string& preset);

struct AdamState {
  ModelParams m, v;
  int64_t step = 0;
  static AdamState zeros_like(const ModelParams& p);
};

// One Adam update with global gradient-norm clipping; returns the batch loss.
double train_step(ModelParams& p, const std::vector<TrainItem>& batch,
                  const TrainConfig& cfg, AdamState& st);

struct Checkpoint {
  ModelParams params;
  StftConfig stft;
  // Inference constants; which are populated depends on the variant.
  Vec preset_extractor;     // denet: mean canonical extractor
  Mat training_extractors;  // denet: one canonical extractor per training utterance
  AttractorPair fixed_attractor_pair;  // danet; a1 = target-side by convention
  std::string attractor_order = "target_first";
  uint64_t seed = 0;
  int epochs = 0;
  double final_loss = 0.0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

Checkpoint train(const std::vector<SampleManifestEntry>& manifest,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Loads WAVs and converts an entry to magnitudes under the given STFT.
TrainItem load_item(const SampleManifestEntry& e, const StftConfig& stft);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dxnet
