#pragma once

#include "types.hpp"

namespace dxnet {

// Square-root periodic Hann of length win_len (same analysis and synthesis
// window; COLA holds at 50% overlap).
Vec sqrt_hann(int win_len);

// Forward STFT. F = win_len/2 + 1, T = 1 + ceil((N - win_len)/hop); the final
// partial frame is zero-padded. Throws if the waveform is shorter than one
// window.
CMat stft(const Waveform& w, const StftConfig& cfg);

// Overlap-add inverse with sqrt-Hann synthesis window and window-power
// normalization. Output length = win_len + (T-1)*hop.
Waveform istft(const CMat& s, const StftConfig& cfg, int sample_rate_hz = 16000);

Mat magnitude(const CMat& s);

// y[f,t] = 1 iff m[f,t] > max(m) * 10^(-threshold_db/20); all zeros when the
// input is identically zero.
Mat presence_mask(const Mat& m, double threshold_db = 40.0);

}  // namespace dxnet
