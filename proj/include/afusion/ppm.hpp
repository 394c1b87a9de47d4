#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afusion/common.hpp"

namespace afusion {

// Binary PPM (P6, maxval 255). Frames are stored one file per frame; pixel
// data returned channel-major [3,H,W].
struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> chw;  // [3,H,W]
};

PpmImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, int width, int height,
               const std::uint8_t* chw);

}  // namespace afusion
