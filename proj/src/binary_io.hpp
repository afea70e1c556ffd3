#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>

#include "ahcl/common.hpp"

// Little-endian fixed-width readers/writers shared by the on-disk formats.
namespace ahcl::detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw io_error("cannot open '" + path + "' for writing");
  }

  void magic(const char (&tag)[5]) { raw(tag, 4); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }

  template <typename T>
  void span(std::span<const T> values) {
    raw(values.data(), values.size() * sizeof(T));
  }

  void finish() {
    out_.flush();
    if (!out_) throw io_error("write failed on '" + path_ + "'");
  }

 private:
  void raw(const void* data, size_t bytes) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out_) throw io_error("write failed on '" + path_ + "'");
  }

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw io_error("cannot open '" + path + "' for reading");
  }

  size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

  void expect_magic(const char (&tag)[5]) {
    char got[4];
    raw(got, 4, "magic");
    if (std::memcmp(got, tag, 4) != 0) {
      throw parse_error(path_ + ": magic mismatch at byte 0, expected \"" +
                        std::string(tag, 4) + "\"");
    }
  }

  uint8_t u8(const char* what) {
    uint8_t v;
    raw(&v, 1, what);
    return v;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    raw(&v, 4, what);
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t v;
    raw(&v, 8, what);
    return v;
  }
  float f32(const char* what) {
    float v;
    raw(&v, 4, what);
    return v;
  }
  double f64(const char* what) {
    double v;
    raw(&v, 8, what);
    return v;
  }

  template <typename T>
  void span(std::span<T> values, const char* what) {
    raw(values.data(), values.size() * sizeof(T), what);
  }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) {
      throw parse_error(path_ + ": trailing bytes at byte " + std::to_string(offset_));
    }
  }

 private:
  void raw(void* data, size_t bytes, const char* what) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in_.gcount()) != bytes) {
      throw parse_error(path_ + ": truncated " + what + " at byte " +
                        std::to_string(offset_));
    }
    offset_ += bytes;
  }

  std::string path_;
  std::ifstream in_;
  size_t offset_ = 0;
};

}  // namespace ahcl::detail
