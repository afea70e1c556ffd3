#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ahcl/codes.hpp"

namespace ahcl {

/// Bit-packed codes: bit b of code j lives in word floor(b/64) at position
/// b mod 64, +1 -> 1 and -1 -> 0. Unused high bits are always zero, so
/// popcount over whole words is exact. Immutable after construction;
/// concurrent queries need no coordination.
struct PackedCodeMatrix {
  int32_t n = 0;
  int32_t bits = 0;
  int32_t words_per_code = 0;
  std::vector<uint64_t> words;  // n x words_per_code

  std::span<const uint64_t> row(int32_t i) const {
    return {words.data() + static_cast<size_t>(i) * words_per_code,
            static_cast<size_t>(words_per_code)};
  }
};

/// One packed code with its bit length; the unit queries are expressed in.
struct PackedCodeRef {
  std::span<const uint64_t> words;
  int32_t bits = 0;
};

PackedCodeMatrix pack(const CodeMatrix& codes);
CodeMatrix unpack(const PackedCodeMatrix& packed);

PackedCodeRef code_ref(const PackedCodeMatrix& m, int32_t i);

/// Number of differing bits. Throws on bit-length mismatch.
int32_t hamming(PackedCodeRef a, PackedCodeRef b);

/// Dot product of the unpacked +-1 vectors: K - 2*hamming(a, b).
int32_t inner_product(PackedCodeRef a, PackedCodeRef b);

struct Hit {
  int32_t index = 0;
  int32_t distance = 0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

/// k smallest distances in ascending order, ties broken by ascending
/// database index. k > n returns all n. Throws on empty database.
std::vector<Hit> rank_topk(PackedCodeRef query, const PackedCodeMatrix& db, int32_t k);

/// All database indices with distance <= radius, ascending index order.
std::vector<int32_t> radius_search(PackedCodeRef query, const PackedCodeMatrix& db,
                                   int32_t radius);

/// One ranking per query row; queries scan the database on distinct threads.
std::vector<std::vector<Hit>> rank_topk_batch(const PackedCodeMatrix& queries,
                                              const PackedCodeMatrix& db, int32_t k);

/// Codes file: "AHC1" | u32 version=1 | u32 n | u32 K | packed words
/// little-endian in row order.
void save_codes(const PackedCodeMatrix& m, const std::string& path);
PackedCodeMatrix load_codes(const std::string& path);

}  // namespace ahcl
