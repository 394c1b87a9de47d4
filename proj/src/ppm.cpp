#include "afusion/ppm.hpp"

#include <fstream>

namespace afusion {

namespace {

int read_pnm_int(std::istream& in) {
  // skips whitespace and '#' comments, then reads one decimal integer
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw ValidationError("ppm: truncated header");
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ValidationError("ppm: malformed header");
  return v;
}

}  // namespace

PpmImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("ppm: cannot open " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6')
    throw ValidationError("ppm: " + path.string() + " is not a P6 file");
  PpmImage img;
  img.width = read_pnm_int(in);
  img.height = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (maxval != 255)
    throw ValidationError("ppm: unsupported maxval " + std::to_string(maxval) + " in " +
                          path.string());
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  std::vector<std::uint8_t> rgb(n * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (static_cast<std::size_t>(in.gcount()) != rgb.size())
    throw ValidationError("ppm: truncated pixel data in " + path.string());
  img.chw.resize(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.chw[c * n + i] = rgb[i * 3 + c];
  return img;
}

void write_ppm(const std::filesystem::path& path, int width, int height,
               const std::uint8_t* chw) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("ppm: cannot write " + path.string());
  out << "P6\n" << width << " " << height << "\n255\n";
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<std::uint8_t> rgb(n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) rgb[i * 3 + c] = chw[c * n + i];
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  if (!out) throw ValidationError("ppm: write failed for " + path.string());
}

}  // namespace afusion
