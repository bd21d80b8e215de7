#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dxnet {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;

// Errors fall into two buckets mirroring the CLI exit codes:
// usage (bad arguments / config) and runtime (bad data, I/O, numerics).
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 16000;
};

struct StftConfig {
  int win_len = 512;   // 32 ms at 16 kHz
  int hop = 256;       // 16 ms
  int num_bins() const { return win_len / 2 + 1; }
};

// F x T x K field of embedding vectors. Rows are T-F bins, flattened as
// bin = t * F + f, so row b corresponds to (f = b % F, t = b / F).
struct EmbeddingField {
  int F = 0;
  int T = 0;
  int K = 0;
  Mat v;  // (F*T) x K

  int bins() const { return F * T; }
};

struct AttractorPair {
  Vec a1;
  Vec a2;
};

// Flatten an F x T matrix to the bin ordering of EmbeddingField (bin = t*F + f).
inline Vec flatten_tf(const Mat& y) {
  const int F = int(y.rows()), T = int(y.cols());
  Vec out(F * T);
  for (int t = 0; t < T; ++t)
    for (int f = 0; f < F; ++f) out[t * F + f] = y(f, t);
  return out;
}

}  // namespace dxnet
