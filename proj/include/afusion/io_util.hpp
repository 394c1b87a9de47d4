#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "afusion/common.hpp"

namespace afusion {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

// Write-to-temp-then-rename; partially written files are never observable.
void atomic_write_bytes(const std::filesystem::path& path,
                        const std::vector<std::uint8_t>& bytes);
void atomic_write_text(const std::filesystem::path& path, const std::string& text);

// Little-endian binary encoding helpers shared by the record and checkpoint
// containers.
class ByteWriter {
 public:
  void tag(const char (&t)[5]) { raw(t, 4); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f32_array(const float* p, std::size_t n) { raw(p, n * 4); }
  void u8_array(const std::uint8_t* p, std::size_t n) { raw(p, n); }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string origin)
      : buf_(bytes), origin_(std::move(origin)) {}

  void set_section(std::string name) { section_ = std::move(name); }
  std::size_t offset() const { return pos_; }

  void expect_tag(const char (&t)[5]) {
    char got[5] = {0, 0, 0, 0, 0};
    raw(got, 4);
    if (std::memcmp(got, t, 4) != 0)
      fail("expected section tag '" + std::string(t) + "', found '" + std::string(got, 4) + "'");
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  std::int64_t i64() { return get<std::int64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) fail("string length " + std::to_string(n) + " out of range");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  void f32_array(float* p, std::size_t n) { raw(p, n * 4); }
  void u8_array(std::uint8_t* p, std::size_t n) { raw(p, n); }

  void done() {
    if (pos_ != buf_.size())
      fail(std::to_string(buf_.size() - pos_) + " trailing bytes");
  }

  [[noreturn]] void fail(const std::string& what) {
    throw ValidationError(origin_ + ": " + what +
                          (section_.empty() ? "" : " (section " + section_ + ")") +
                          " at offset " + std::to_string(pos_));
  }

 private:
  template <typename T>
  T get() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (pos_ + n > buf_.size()) fail("truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  const std::vector<std::uint8_t>& buf_;
  std::string origin_;
  std::string section_;
  std::size_t pos_ = 0;
};

}  // namespace afusion
