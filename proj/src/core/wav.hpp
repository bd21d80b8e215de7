#pragma once

#include <string>

#include "types.hpp"

namespace dxnet {

// PCM 16-bit little-endian mono only; anything else is rejected.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

}  // namespace dxnet
