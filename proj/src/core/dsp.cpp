#include "dsp.hpp"

#include <cmath>
#include <complex>
#include <vector>

namespace dxnet {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / double(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

}  // namespace

Vec sqrt_hann(int win_len) {
  Vec w(win_len);
  for (int n = 0; n < win_len; ++n)
    w[n] = std::sqrt(0.5 * (1.0 - std::cos(2.0 * M_PI * n / win_len)));
  return w;
}

CMat stft(const Waveform& w, const StftConfig& cfg) {
  const int N = int(w.samples.size());
  const int win = cfg.win_len;
  const int hop = cfg.hop;
  if (!is_pow2(win)) throw UsageError("stft: win_len must be a power of two");
  if (hop <= 0 || win % hop != 0) throw UsageError("stft: hop must divide win_len");
  if (N < win) throw RuntimeError("input too short");

  const int F = cfg.num_bins();
  const int T = 1 + int(std::ceil(double(N - win) / double(hop)));
  const Vec window = sqrt_hann(win);

  CMat out(F, T);
  std::vector<std::complex<double>> buf(win);
  for (int t = 0; t < T; ++t) {
    const int start = t * hop;
    for (int n = 0; n < win; ++n) {
      double x = (start + n < N) ? w.samples[start + n] : 0.0;
      buf[n] = x * window[n];
    }
    fft_inplace(buf, false);
    for (int f = 0; f < F; ++f) out(f, t) = buf[f];
  }
  return out;
}

Waveform istft(const CMat& s, const StftConfig& cfg, int sample_rate_hz) {
  const int win = cfg.win_len;
  const int hop = cfg.hop;
  const int F = int(s.rows());
  const int T = int(s.cols());
  if (F != cfg.num_bins()) throw RuntimeError("istft: bin count inconsistent with config");

  const Vec window = sqrt_hann(win);
  const int out_len = win + (T - 1) * hop;
  std::vector<double> acc(out_len, 0.0), wsum(out_len, 0.0);
  std::vector<std::complex<double>> buf(win);
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < F; ++f) buf[f] = s(f, t);
    for (int f = F; f < win; ++f) buf[f] = std::conj(s(win - f, t));
    fft_inplace(buf, true);
    const int start = t * hop;
    for (int n = 0; n < win; ++n) {
      acc[start + n] += buf[n].real() * window[n];
      wsum[start + n] += window[n] * window[n];
    }
  }
  Waveform out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.resize(out_len);
  for (int n = 0; n < out_len; ++n)
    out.samples[n] = wsum[n] > 1e-12 ? acc[n] / wsum[n] : 0.0;
  return out;
}

Mat magnitude(const CMat& s) { return s.cwiseAbs(); }

Mat presence_mask(const Mat& m, double threshold_db) {
  if (m.size() == 0) throw RuntimeError("presence_mask: empty spectrogram");
  const double mx = m.maxCoeff();
  Mat y = Mat::Zero(m.rows(), m.cols());
  if (mx <= 0.0) return y;
  const double thr = mx * std::pow(10.0, -threshold_db / 20.0);
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (m(r, c) > thr) y(r, c) = 1.0;
  return y;
}

}  // namespace dxnet
