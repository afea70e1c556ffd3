#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ahcl/hamming.hpp"
#include "ahcl/reference.hpp"

using namespace ahcl;

namespace {

CodeMatrix random_codes(Rng& rng, int32_t n, int32_t bits) {
  CodeMatrix m(n, bits);
  for (int8_t& c : m.codes) c = rng.sign();
  return m;
}

bool rows_equal(std::span<const int8_t> a, std::span<const int8_t> b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

TEST_CASE("pack lays out bits exactly as documented") {
  CodeMatrix m(1, 4);
  m.codes = {1, -1, 1, 1};
  const PackedCodeMatrix packed = pack(m);
  REQUIRE(packed.words_per_code == 1);
  CHECK(packed.words[0] == 13);  // 0b1101
}

TEST_CASE("all minus-one packs to a zero word") {
  CodeMatrix m(1, 64);
  const PackedCodeMatrix packed = pack(m);  // CodeMatrix default-fills with -1
  CHECK(packed.words[0] == 0);
}

TEST_CASE("pack rejects entries that are not +-1") {
  CodeMatrix m(1, 4);
  m.codes = {1, 0, 1, 1};
  CHECK_THROWS_AS(pack(m), std::invalid_argument);
}

TEST_CASE("pack/unpack round-trips across word boundaries") {
  Rng rng(21);
  for (const int32_t bits : {16, 32, 64, 65}) {
    const CodeMatrix m = random_codes(rng, 250, bits);
    const PackedCodeMatrix packed = pack(m);
    // padding stays zero
    const int32_t tail = bits & 63;
    if (tail != 0) {
      const uint64_t mask = ~((uint64_t{1} << tail) - 1);
      for (int32_t i = 0; i < packed.n; ++i) CHECK((packed.row(i).back() & mask) == 0);
    }
    const CodeMatrix back = unpack(packed);
    CHECK(back.codes == m.codes);
  }
}

TEST_CASE("hamming distance matches the per-bit reference on random pairs") {
  Rng rng(5);
  for (const int32_t bits : {16, 32, 64, 65}) {
    const CodeMatrix m = random_codes(rng, 200, bits);
    const PackedCodeMatrix packed = pack(m);
    for (int trial = 0; trial < 2500; ++trial) {
      const int32_t a = static_cast<int32_t>(rng.below(m.n));
      const int32_t b = static_cast<int32_t>(rng.below(m.n));
      const int32_t fast = hamming(code_ref(packed, a), code_ref(packed, b));
      const int32_t slow = reference::hamming(m.row(a), m.row(b));
      REQUIRE(fast == slow);
    }
  }
}

TEST_CASE("hamming basics: identity and complement") {
  CodeMatrix m(2, 16);
  for (int32_t k = 0; k < 16; ++k) {
    m.codes[k] = 1;
    m.codes[16 + k] = -1;
  }
  const PackedCodeMatrix packed = pack(m);
  CHECK(hamming(code_ref(packed, 0), code_ref(packed, 0)) == 0);
  CHECK(hamming(code_ref(packed, 0), code_ref(packed, 1)) == 16);
}

TEST_CASE("inner product identity: <a,b> = K - 2H") {
  Rng rng(31);
  for (const int32_t bits : {16, 32, 64, 65}) {
    const CodeMatrix m = random_codes(rng, 128, bits);
    const PackedCodeMatrix packed = pack(m);
    for (int trial = 0; trial < 2500; ++trial) {
      const int32_t a = static_cast<int32_t>(rng.below(m.n));
      const int32_t b = static_cast<int32_t>(rng.below(m.n));
      const int32_t ip = inner_product(code_ref(packed, a), code_ref(packed, b));
      const int32_t h = hamming(code_ref(packed, a), code_ref(packed, b));
      REQUIRE(ip == bits - 2 * h);
      REQUIRE(ip == reference::inner_product(m.row(a), m.row(b)));
    }
  }
  // identity spot checks
  CodeMatrix same(1, 16);
  const PackedCodeMatrix p = pack(same);
  CHECK(inner_product(code_ref(p, 0), code_ref(p, 0)) == 16);
}

TEST_CASE("hamming rejects mismatched code lengths") {
  CodeMatrix a(1, 16), b(1, 32);
  const PackedCodeMatrix pa = pack(a), pb = pack(b);
  CHECK_THROWS_AS(hamming(code_ref(pa, 0), code_ref(pb, 0)), std::invalid_argument);
}

TEST_CASE("hamming is a metric on random triples") {
  Rng rng(8);
  const CodeMatrix m = random_codes(rng, 64, 33);
  const PackedCodeMatrix packed = pack(m);
  for (int trial = 0; trial < 500; ++trial) {
    const int32_t a = static_cast<int32_t>(rng.below(m.n));
    const int32_t b = static_cast<int32_t>(rng.below(m.n));
    const int32_t c = static_cast<int32_t>(rng.below(m.n));
    const int32_t ab = hamming(code_ref(packed, a), code_ref(packed, b));
    const int32_t ba = hamming(code_ref(packed, b), code_ref(packed, a));
    const int32_t bc = hamming(code_ref(packed, b), code_ref(packed, c));
    const int32_t ac = hamming(code_ref(packed, a), code_ref(packed, c));
    REQUIRE(ab >= 0);
    REQUIRE(ab == ba);
    REQUIRE(ac <= ab + bc);
    if (rows_equal(m.row(a), m.row(b))) {
      REQUIRE(ab == 0);
    } else {
      REQUIRE(ab > 0);
    }
  }
}

TEST_CASE("top-k finds an exact duplicate first") {
  Rng rng(14);
  CodeMatrix m = random_codes(rng, 20, 32);
  // make row 7 unique-by-construction, then query with it
  for (int32_t k = 0; k < 32; ++k) m.codes[7 * 32 + k] = k % 2 ? 1 : -1;
  for (int32_t j = 0; j < 20; ++j) {
    if (j != 7 && rows_equal(m.row(j), m.row(7))) m.codes[j * 32] *= -1;
  }
  const PackedCodeMatrix packed = pack(m);
  const auto hits = rank_topk(code_ref(packed, 7), packed, 1);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].index == 7);
  CHECK(hits[0].distance == 0);
}

TEST_CASE("top-k breaks ties by ascending database index") {
  CodeMatrix m(6, 16);  // all rows identical
  const PackedCodeMatrix packed = pack(m);
  const auto hits = rank_topk(code_ref(packed, 0), packed, 4);
  REQUIRE(hits.size() == 4);
  for (int32_t i = 0; i < 4; ++i) {
    CHECK(hits[i].index == i);
    CHECK(hits[i].distance == 0);
  }
}

TEST_CASE("top-k matches the full-sort reference on random instances") {
  Rng rng(25);
  for (int trial = 0; trial < 500; ++trial) {
    const int32_t n = 1 + static_cast<int32_t>(rng.below(200));
    const int32_t bits = 1 + static_cast<int32_t>(rng.below(70));
    const int32_t k = 1 + static_cast<int32_t>(rng.below(12));
    const CodeMatrix db = random_codes(rng, n, bits);
    const CodeMatrix q = random_codes(rng, 1, bits);
    const PackedCodeMatrix pdb = pack(db);
    const PackedCodeMatrix pq = pack(q);

    const auto fast = rank_topk(code_ref(pq, 0), pdb, k);
    const auto slow = reference::rank_topk(q.row(0), db, k);
    REQUIRE(fast.size() == slow.size());
    for (size_t i = 0; i < fast.size(); ++i) {
      REQUIRE(fast[i] == slow[i]);
    }
    // distances are non-decreasing
    for (size_t i = 1; i < fast.size(); ++i) {
      REQUIRE(fast[i - 1].distance <= fast[i].distance);
    }
  }
}

TEST_CASE("top-k clamps k to the database size and rejects empty databases") {
  Rng rng(2);
  const CodeMatrix db = random_codes(rng, 5, 16);
  const PackedCodeMatrix pdb = pack(db);
  CHECK(rank_topk(code_ref(pdb, 0), pdb, 50).size() == 5);
  PackedCodeMatrix empty;
  empty.bits = 16;
  empty.words_per_code = 1;
  CHECK_THROWS_AS(rank_topk(code_ref(pdb, 0), empty, 1), std::invalid_argument);
}

TEST_CASE("radius search edge radii and reference agreement") {
  Rng rng(19);
  const CodeMatrix db = random_codes(rng, 60, 24);
  const PackedCodeMatrix pdb = pack(db);
  const auto all = radius_search(code_ref(pdb, 0), pdb, 24);
  CHECK(all.size() == 60);

  const auto exact = radius_search(code_ref(pdb, 0), pdb, 0);
  for (const int32_t j : exact) CHECK(rows_equal(db.row(j), db.row(0)));

  for (int trial = 0; trial < 100; ++trial) {
    const int32_t r = static_cast<int32_t>(rng.below(25));
    const int32_t q = static_cast<int32_t>(rng.below(60));
    CHECK(radius_search(code_ref(pdb, q), pdb, r) ==
          reference::radius_search(db.row(q), db, r));
  }
  CHECK_THROWS_AS(radius_search(code_ref(pdb, 0), pdb, 25), std::invalid_argument);
}

TEST_CASE("codes file round-trips and validates") {
  Rng rng(77);
  const CodeMatrix m = random_codes(rng, 40, 65);
  const PackedCodeMatrix packed = pack(m);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ahcl_codes_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "codes.ahc").string();
  save_codes(packed, path);
  const PackedCodeMatrix back = load_codes(path);
  CHECK(back.n == packed.n);
  CHECK(back.bits == packed.bits);
  CHECK(back.words == packed.words);
  std::filesystem::remove_all(dir);
}

TEST_CASE("codes file bytes follow the documented layout exactly") {
  CodeMatrix m(1, 4);
  m.codes = {1, -1, 1, 1};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ahcl_golden_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "g.ahc").string();
  save_codes(pack(m), path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const unsigned char expect[24] = {0x41, 0x48, 0x43, 0x31, 0x01, 0x00, 0x00, 0x00,
                                    0x01, 0x00, 0x00, 0x00, 0x04, 0x00, 0x00, 0x00,
                                    0x0d, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00};
  REQUIRE(bytes.size() == 24);
  CHECK(std::equal(bytes.begin(), bytes.end(), reinterpret_cast<const char*>(expect)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("codes files with nonzero padding bits are rejected on load") {
  Rng rng(3);
  const CodeMatrix m = random_codes(rng, 4, 65);
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ahcl_pad_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "codes.ahc").string();
  save_codes(pack(m), path);
  // set a padding bit in the first code's tail word
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(16 + 8 + 7);  // header, first word, high byte of second word
  const char hi = static_cast<char>(0x80);
  f.write(&hi, 1);
  f.close();
  CHECK_THROWS_WITH_AS(load_codes(path), doctest::Contains("padding"), parse_error);
  std::filesystem::remove_all(dir);
}
