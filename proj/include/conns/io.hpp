#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "conns/errors.hpp"

namespace conns {

/// Shortest exact decimal for a double (17 significant digits); every CSV
/// number written this way parses back to the identical bits.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

/// Little-endian binary writer/reader shims. The toolkit only targets
/// little-endian hosts; raw f64/u32 copies are exact.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open for write: " + path, 0);
  }
  void bytes(const void* p, std::size_t len) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
    offset_ += len;
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  void f64s(const double* p, std::size_t count) { bytes(p, count * sizeof(double)); }
  std::size_t offset() const { return offset_; }
  void close() {
    out_.close();
    if (!out_) throw FormatError("write failed", offset_);
  }

 private:
  std::ofstream out_;
  std::size_t offset_ = 0;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open for read: " + path, 0);
  }
  void bytes(void* p, std::size_t len) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    if (in_.gcount() != static_cast<std::streamsize>(len))
      throw FormatError("truncated file", offset_ + static_cast<std::size_t>(in_.gcount()));
    offset_ += len;
  }
  template <class T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void f64s(double* p, std::size_t count) { bytes(p, count * sizeof(double)); }
  std::size_t offset() const { return offset_; }
  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace detail

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for write: " + path, 0);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed: " + path, 0);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open for read: " + path, 0);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

}  // namespace conns
