#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afusion/common.hpp"

namespace afusion {

// 16-bit PCM mono WAV. The reader validates format, channel count, and
// sample rate; nothing is ever resampled.
struct WavData {
  int sample_rate = 0;
  std::vector<float> samples;  // int16 / 32768
};

WavData read_wav(const std::filesystem::path& path, int required_rate = 16000);
void write_wav(const std::filesystem::path& path, int sample_rate,
               const std::vector<float>& samples);

}  // namespace afusion
