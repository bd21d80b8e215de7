#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "types.hpp"

namespace dxnet {

// Parametric harmonic "speaker": fundamental, harmonic rolloff, a single
// formant-like spectral bump and an amplitude-modulation rate.
struct ToySpeakerSpec {
  std::string speaker_id;
  double f0_hz = 120.0;
  double harmonic_decay = 0.7;
  double formant_center_hz = 1200.0;
  double am_rate_hz = 4.0;
};

// Harmonic tone stack with randomized pause segments; deterministic per seed;
// peak-normalized to 0.5.
Waveform synth_speaker_utterance(const ToySpeakerSpec& spec, double duration_s,
                                 uint64_t seed);

// Rescales the interferer sum so the target/interferer power ratio over the
// overlap (truncated to the shortest source) equals sir_db. Returns the mix;
// scaled_out, when non-null, receives the scaled interferers.
Waveform mix_at_sir(const Waveform& target, const std::vector<Waveform>& interferers,
                    double sir_db, std::vector<Waveform>* scaled_out = nullptr);

struct SampleManifestEntry {
  std::string id;
  std::string anchor_path;
  std::string mixture_path;
  std::string target_path;
  std::vector<std::string> interferer_paths;
  double sir_db = 0.0;
  std::string speaker_id;
};

std::string entry_to_json(const SampleManifestEntry& e);
SampleManifestEntry entry_from_json(const std::string& line);

// JSON lines, one entry per line; paths stored relative to the manifest file.
void write_manifest(const std::string& path,
                    const std::vector<SampleManifestEntry>& entries);
// Entries returned with paths resolved relative to the manifest location.
std::vector<SampleManifestEntry> read_manifest(const std::string& path);

struct CorpusConfig {
  int n_speakers = 8;  // train target speakers
  int utts_per_speaker = 25;
  double sir_min = 0.0;
  double sir_max = 10.0;
  int n_interferers = 1;
  uint64_t seed = 1;
  double anchor_s = 1.6;
  double utterance_s = 1.2;
  double interferer_s = 1.35;
};

struct ToyCorpus {
  std::string train_manifest;
  std::string test_manifest;
};

// Writes WAVs plus train.jsonl/test.jsonl under out_dir. Train and test target
// speakers are disjoint; interferers come from a third, held-out pool.
ToyCorpus build_toy_corpus(const CorpusConfig& cfg, const std::string& out_dir);

}  // namespace dxnet
