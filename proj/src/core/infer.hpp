#pragma once

#include <string>
#include <vector>

#include "train.hpp"
#include "types.hpp"

namespace dxnet {

struct InferInputs {
  const Mat* anchor = nullptr;                    // anchor magnitude
  const Mat* target = nullptr;                    // oracle mode only
  const std::vector<Mat>* interferers = nullptr;  // oracle mode only
};

// Soft masks for the requested inference mode. Every mode yields one mask
// except danet-oracle, which yields one per fixed attractor for downstream
// best-SDR selection.
std::vector<Mat> masks_for_mode(const Checkpoint& ck, const std::string& mode,
                                const Mat& mixture_mag, const InferInputs& in);

// Masked mixture-phase reconstruction, trimmed to out_len samples.
Waveform reconstruct(const CMat& mix_spec, const Mat& mask, const StftConfig& stft,
                     size_t out_len);

// File-level extraction path used by the CLI.
void extract_to_wav(const Checkpoint& ck, const std::string& anchor_path,
                    const std::string& mixture_path, const std::string& mode,
                    const std::string& out_path);

// Canonical-space diagnostics CSV: every mixture T-F bin above the presence
// floor (labeled target_bin/interferer_bin by the ideal membership) plus the
// stored training extractors, projected onto the top three principal axes.
void dump_embeddings(const Checkpoint& ck, const std::string& anchor_path,
                     const std::string& mixture_path,
                     const std::string& target_path,
                     const std::string& interferer_path,
                     const std::string& out_csv);

}  // namespace dxnet
