#include "ahcl/hamming.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <queue>
#include <stdexcept>

#include "binary_io.hpp"

namespace ahcl {

namespace {

int32_t words_for(int32_t bits) { return (bits + 63) / 64; }

void check_same_bits(int32_t a, int32_t b) {
  if (a != b) {
    throw std::invalid_argument("code lengths differ: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

int32_t hamming_words(std::span<const uint64_t> a, std::span<const uint64_t> b) {
  int32_t dist = 0;
  for (size_t w = 0; w < a.size(); ++w) dist += std::popcount(a[w] ^ b[w]);
  return dist;
}

}  // namespace

PackedCodeMatrix pack(const CodeMatrix& codes) {
  codes.validate();
  PackedCodeMatrix out;
  out.n = codes.n;
  out.bits = codes.bits;
  out.words_per_code = words_for(codes.bits);
  out.words.assign(static_cast<size_t>(out.n) * out.words_per_code, 0);
  for (int32_t i = 0; i < codes.n; ++i) {
    const int8_t* src = codes.codes.data() + static_cast<size_t>(i) * codes.bits;
    uint64_t* dst = out.words.data() + static_cast<size_t>(i) * out.words_per_code;
    for (int32_t b = 0; b < codes.bits; ++b) {
      if (src[b] == 1) dst[b >> 6] |= uint64_t{1} << (b & 63);
    }
  }
  return out;
}

CodeMatrix unpack(const PackedCodeMatrix& packed) {
  CodeMatrix out(packed.n, packed.bits);
  for (int32_t i = 0; i < packed.n; ++i) {
    const uint64_t* src = packed.words.data() + static_cast<size_t>(i) * packed.words_per_code;
    int8_t* dst = out.codes.data() + static_cast<size_t>(i) * packed.bits;
    for (int32_t b = 0; b < packed.bits; ++b) {
      dst[b] = (src[b >> 6] >> (b & 63)) & 1 ? int8_t{1} : int8_t{-1};
    }
  }
  return out;
}

PackedCodeRef code_ref(const PackedCodeMatrix& m, int32_t i) {
  return {m.row(i), m.bits};
}

int32_t hamming(PackedCodeRef a, PackedCodeRef b) {
  check_same_bits(a.bits, b.bits);
  return hamming_words(a.words, b.words);
}

int32_t inner_product(PackedCodeRef a, PackedCodeRef b) {
  return a.bits - 2 * hamming(a, b);
}

std::vector<Hit> rank_topk(PackedCodeRef query, const PackedCodeMatrix& db, int32_t k) {
  check_same_bits(query.bits, db.bits);
  if (db.n == 0) throw std::invalid_argument("database is empty");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  k = std::min(k, db.n);

  // Bounded selection: max-heap of the k best (distance, index) pairs under
  // lexicographic order, index ascending on equal distance.
  auto closer = [](const Hit& a, const Hit& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  };
  std::vector<Hit> heap;
  heap.reserve(k);
  for (int32_t j = 0; j < db.n; ++j) {
    const int32_t dist = hamming_words(query.words, db.row(j));
    if (static_cast<int32_t>(heap.size()) < k) {
      heap.push_back({j, dist});
      std::push_heap(heap.begin(), heap.end(), closer);
    } else if (dist < heap.front().distance) {
      std::pop_heap(heap.begin(), heap.end(), closer);
      heap.back() = {j, dist};
      std::push_heap(heap.begin(), heap.end(), closer);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

std::vector<int32_t> radius_search(PackedCodeRef query, const PackedCodeMatrix& db,
                                   int32_t radius) {
  check_same_bits(query.bits, db.bits);
  if (radius < 0 || radius > db.bits) {
    throw std::invalid_argument("radius outside [0, K]");
  }
  std::vector<int32_t> hits;
  for (int32_t j = 0; j < db.n; ++j) {
    if (hamming_words(query.words, db.row(j)) <= radius) hits.push_back(j);
  }
  return hits;
}

std::vector<std::vector<Hit>> rank_topk_batch(const PackedCodeMatrix& queries,
                                              const PackedCodeMatrix& db, int32_t k) {
  check_same_bits(queries.bits, db.bits);
  std::vector<std::vector<Hit>> out(queries.n);
#pragma omp parallel for schedule(static)
  for (int32_t i = 0; i < queries.n; ++i) {
    out[i] = rank_topk(code_ref(queries, i), db, k);
  }
  return out;
}

namespace {
constexpr uint32_t kCodesVersion = 1;

void check_padding(const PackedCodeMatrix& m) {
  const int32_t tail_bits = m.bits & 63;
  if (tail_bits == 0) return;
  const uint64_t mask = ~((uint64_t{1} << tail_bits) - 1);
  for (int32_t i = 0; i < m.n; ++i) {
    assert((m.row(i).back() & mask) == 0 && "padding bits must stay zero");
    if ((m.row(i).back() & mask) != 0) {
      throw std::invalid_argument("packed code has nonzero padding bits");
    }
  }
}
}  // namespace

void save_codes(const PackedCodeMatrix& m, const std::string& path) {
  check_padding(m);
  detail::BinaryWriter out(path);
  out.magic("AHC1");
  out.u32(kCodesVersion);
  out.u32(static_cast<uint32_t>(m.n));
  out.u32(static_cast<uint32_t>(m.bits));
  out.span<uint64_t>(m.words);
  out.finish();
}

PackedCodeMatrix load_codes(const std::string& path) {
  detail::BinaryReader in(path);
  in.expect_magic("AHC1");
  const uint32_t version = in.u32("version");
  if (version != kCodesVersion) {
    throw parse_error(path + ": unsupported version " + std::to_string(version) +
                      " at byte 4");
  }
  PackedCodeMatrix m;
  m.n = static_cast<int32_t>(in.u32("code count"));
  m.bits = static_cast<int32_t>(in.u32("code length"));
  if (m.n < 1 || m.bits < 1) throw parse_error(path + ": header declares empty codes");
  m.words_per_code = words_for(m.bits);
  m.words.resize(static_cast<size_t>(m.n) * m.words_per_code);
  const size_t at = in.offset();
  in.span<uint64_t>(m.words, "packed words");
  in.expect_eof();

  const int32_t tail_bits = m.bits & 63;
  if (tail_bits != 0) {
    const uint64_t mask = ~((uint64_t{1} << tail_bits) - 1);
    for (int32_t i = 0; i < m.n; ++i) {
      if ((m.row(i).back() & mask) != 0) {
        throw parse_error(path + ": nonzero padding bits in code " + std::to_string(i) +
                          " near byte " +
                          std::to_string(at + (static_cast<size_t>(i + 1) * m.words_per_code -
                                               1) * sizeof(uint64_t)));
      }
    }
  }
  return m;
}

}  // namespace ahcl
