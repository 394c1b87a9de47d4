#include "afusion/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace afusion {

namespace {

std::uint32_t rd_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void wr_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x & 0xff));
  v.push_back(static_cast<std::uint8_t>((x >> 8) & 0xff));
  v.push_back(static_cast<std::uint8_t>((x >> 16) & 0xff));
  v.push_back(static_cast<std::uint8_t>((x >> 24) & 0xff));
}
void wr_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x & 0xff));
  v.push_back(static_cast<std::uint8_t>((x >> 8) & 0xff));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path, int required_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (raw.size() < 44 || std::memcmp(raw.data(), "RIFF", 4) != 0 ||
      std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
    throw ValidationError("wav: " + path.string() + " is not a RIFF/WAVE file");

  WavData w;
  std::size_t pos = 12;
  bool have_fmt = false, have_data = false;
  int channels = 0, bits = 0;
  while (pos + 8 <= raw.size()) {
    const char* tag = reinterpret_cast<const char*>(raw.data() + pos);
    const std::uint32_t len = rd_u32(raw.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > raw.size())
      throw ValidationError("wav: truncated chunk in " + path.string());
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (len < 16) throw ValidationError("wav: malformed fmt chunk in " + path.string());
      const std::uint16_t fmt = rd_u16(raw.data() + body);
      channels = rd_u16(raw.data() + body + 2);
      w.sample_rate = static_cast<int>(rd_u32(raw.data() + body + 4));
      bits = rd_u16(raw.data() + body + 14);
      if (fmt != 1)
        throw ValidationError("wav: " + path.string() + " is not PCM (format tag " +
                              std::to_string(fmt) + ")");
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw ValidationError("wav: data before fmt in " + path.string());
      if (channels != 1)
        throw ValidationError("wav: " + path.string() + " must be mono, has " +
                              std::to_string(channels) + " channels");
      if (bits != 16)
        throw ValidationError("wav: " + path.string() + " must be 16-bit, has " +
                              std::to_string(bits));
      const std::size_t n = len / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t s = static_cast<std::int16_t>(
            raw[body + 2 * i] | (raw[body + 2 * i + 1] << 8));
        w.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data)
    throw ValidationError("wav: missing fmt/data chunk in " + path.string());
  if (required_rate > 0 && w.sample_rate != required_rate)
    throw ValidationError("wav: " + path.string() + " has sample rate " +
                          std::to_string(w.sample_rate) + ", required " +
                          std::to_string(required_rate) + " (resampling is not performed)");
  return w;
}

void write_wav(const std::filesystem::path& path, int sample_rate,
               const std::vector<float>& samples) {
  std::vector<std::uint8_t> out;
  out.reserve(44 + samples.size() * 2);
  const std::uint32_t data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  wr_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<std::uint32_t>(sample_rate));
  wr_u32(out, static_cast<std::uint32_t>(sample_rate * 2));
  wr_u16(out, 2);
  wr_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  wr_u32(out, data_len);
  for (float s : samples) {
    const float clamped = std::clamp(s, -1.0f, 1.0f);
    const std::int16_t q =
        static_cast<std::int16_t>(std::lrint(clamped * 32767.0f));
    out.push_back(static_cast<std::uint8_t>(q & 0xff));
    out.push_back(static_cast<std::uint8_t>((q >> 8) & 0xff));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("wav: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw ValidationError("wav: write failed for " + path.string());
}

}  // namespace afusion
