#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mznav/common.hpp"

namespace mznav::io {

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

// Append-only little-endian byte sink for checkpoint and model files.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  void f32_array(const float* p, std::size_t n) { raw(p, n * 4); }

  const std::vector<char>& data() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

  void append(const Writer& other) {
    buf_.insert(buf_.end(), other.buf_.begin(), other.buf_.end());
  }

 private:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

// Bounds-checked reader over a byte buffer; truncation throws ConfigError.
class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}
  explicit Reader(const std::vector<char>& buf)
      : Reader(buf.data(), buf.size()) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int64_t i64() { return get<std::int64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const std::uint32_t n = u32();
    const char* p = take(n);
    return std::string(p, n);
  }
  void f32_array(float* out, std::size_t n) {
    std::memcpy(out, take(n * 4), n * 4);
  }
  void bytes(void* out, std::size_t n) { std::memcpy(out, take(n), n); }

  std::size_t remaining() const { return size_ - pos_; }
  bool done() const { return pos_ == size_; }

 private:
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (pos_ + n > size_) throw ConfigError("truncated binary stream");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::vector<char>& buf) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw ConfigError("short write: " + path);
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw ConfigError("cannot open: " + path);
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<std::size_t>(n));
  f.read(buf.data(), n);
  if (!f) throw ConfigError("short read: " + path);
  return buf;
}

}  // namespace mznav::io
