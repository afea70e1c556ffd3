#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ahcl/common.hpp"

namespace ahcl {

/// Dense matrix of {-1,+1} hash codes, one row per sample.
struct CodeMatrix {
  int32_t n = 0;
  int32_t bits = 0;
  std::vector<int8_t> codes;  // n x bits, row-major

  CodeMatrix() = default;
  CodeMatrix(int32_t n_, int32_t bits_)
      : n(n_), bits(bits_), codes(static_cast<size_t>(n_) * bits_, int8_t{-1}) {}

  std::span<const int8_t> row(int32_t i) const {
    return {codes.data() + static_cast<size_t>(i) * bits, static_cast<size_t>(bits)};
  }
  std::span<int8_t> row(int32_t i) {
    return {codes.data() + static_cast<size_t>(i) * bits, static_cast<size_t>(bits)};
  }

  /// Throws if any entry is not exactly +1 or -1.
  void validate() const;
};

}  // namespace ahcl
