#include "wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dxnet {

namespace {

uint32_t read_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

uint16_t read_u16(const unsigned char* p) {
  return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 44 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0)
    throw RuntimeError("not a RIFF/WAVE file: " + path);

  size_t pos = 12;
  int channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  Waveform w;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* ck = p + pos;
    uint32_t sz = read_u32(ck + 4);
    size_t body = pos + 8;
    if (body + sz > bytes.size()) sz = uint32_t(bytes.size() - body);
    if (std::memcmp(ck, "fmt ", 4) == 0 && sz >= 16) {
      uint16_t fmt = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      if (fmt != 1) throw RuntimeError("unsupported WAV encoding (want PCM): " + path);
      have_fmt = true;
    } else if (std::memcmp(ck, "data", 4) == 0) {
      if (!have_fmt) throw RuntimeError("WAV data chunk before fmt: " + path);
      if (channels != 1)
        throw RuntimeError("unsupported WAV channel count (want mono): " + path);
      if (bits != 16)
        throw RuntimeError("unsupported WAV bit depth (want 16-bit): " + path);
      size_t n = sz / 2;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t s = int16_t(read_u16(p + body + 2 * i));
        w.samples[i] = double(s) / 32768.0;
      }
      w.sample_rate_hz = int(rate);
      return w;
    }
    pos = body + sz + (sz & 1);
  }
  throw RuntimeError("WAV file has no data chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& w) {
  std::string s;
  uint32_t n = uint32_t(w.samples.size());
  s.reserve(44 + 2 * n);
  s.append("RIFF");
  put_u32(s, 36 + 2 * n);
  s.append("WAVEfmt ");
  put_u32(s, 16);
  put_u16(s, 1);  // PCM
  put_u16(s, 1);  // mono
  put_u32(s, uint32_t(w.sample_rate_hz));
  put_u32(s, uint32_t(w.sample_rate_hz) * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s.append("data");
  put_u32(s, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    double x = std::clamp(w.samples[i], -1.0, 1.0);
    auto q = int(std::lrint(x * 32767.0));
    put_u16(s, uint16_t(int16_t(q)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeError("cannot write WAV file: " + path);
  out.write(s.data(), std::streamsize(s.size()));
  if (!out) throw RuntimeError("short write to WAV file: " + path);
}

}  // namespace dxnet
