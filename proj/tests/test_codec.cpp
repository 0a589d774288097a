#include <algorithm>
#include <numeric>
#include <random>

#include "casss/codec.hpp"
#include "casss/error.hpp"
#include "doctest.h"

using namespace casss;

namespace {

// Shift-and-add multiplication reduced by x^8+x^4+x^3+x^2+1.
std::uint8_t slow_mul(std::uint8_t a, std::uint8_t b) {
  unsigned acc = 0;
  unsigned x = a;
  for (int i = 0; i < 8; ++i) {
    if (b & (1u << i)) acc ^= x;
    x <<= 1;
    if (x & 0x100) x ^= 0x11d;
  }
  return static_cast<std::uint8_t>(acc);
}

Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

QuorumConfig cfg(std::uint32_t n, std::uint32_t k) {
  QuorumConfig q;
  q.servers.resize(n);
  q.k = k;
  q.variant = Variant::CAS;
  return q;
}

std::size_t ceil_div(std::size_t a, std::size_t b) {
  std::size_t e = 0;
  while (e * b < a) ++e;
  return e;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidConfig;
}

}  // namespace

TEST_CASE("GF(2^8) multiplication matches shift-and-add") {
  for (unsigned a = 0; a < 256; ++a)
    for (unsigned b = 0; b < 256; ++b)
      REQUIRE(gf256::mul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)) ==
              slow_mul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)));
}

TEST_CASE("GF(2^8) inverses and powers") {
  for (unsigned a = 1; a < 256; ++a) {
    const auto x = static_cast<std::uint8_t>(a);
    CHECK(slow_mul(x, gf256::inv(x)) == 1);
    std::uint8_t p = 1;
    for (unsigned e = 0; e < 5; ++e) {
      CHECK(gf256::pow(x, e) == p);
      p = slow_mul(p, x);
    }
  }
}

TEST_CASE("encode splits 6000 bytes into ten 1000-byte elements") {
  std::mt19937_64 rng(1);
  const auto data = random_bytes(rng, 6000);
  const auto els = encode(data, cfg(10, 6));
  REQUIRE(els.size() == 10);
  for (std::uint32_t i = 0; i < 10; ++i) {
    CHECK(els[i].index == i);
    CHECK(els[i].bytes.size() == 1000);
    CHECK(els[i].object_len == 6000);
  }
}

TEST_CASE("with k = N the elements are the data shards") {
  std::mt19937_64 rng(2);
  const auto data = random_bytes(rng, 1001);
  const auto els = encode(data, cfg(4, 4));
  Bytes joined;
  for (const auto& e : els) joined.insert(joined.end(), e.bytes.begin(), e.bytes.end());
  CHECK(joined.size() == 4 * 251);
  joined.resize(data.size());
  CHECK(joined == data);
  CHECK(std::all_of(els[3].bytes.begin() + 248, els[3].bytes.end(), [](auto b) { return b == 0; }));
}

TEST_CASE("systematic shards decode to the data") {
  std::mt19937_64 rng(3);
  const auto data = random_bytes(rng, 777);
  const auto els = encode(data, cfg(9, 5));
  std::vector<CodedElement> first(els.begin(), els.begin() + 5);
  CHECK(decode(first, cfg(9, 5)) == data);
}

TEST_CASE("any k elements decode, over random parameters and subsets") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 250; ++trial) {
    const auto n = static_cast<std::uint32_t>(1 + rng() % 32);
    const auto k = static_cast<std::uint32_t>(1 + rng() % n);
    const auto data = random_bytes(rng, 1 + rng() % 3000);
    const auto els = encode(data, cfg(n, k));
    REQUIRE(els.size() == n);
    for (const auto& e : els) CHECK(e.bytes.size() == ceil_div(data.size(), k));
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::shuffle(idx.begin(), idx.end(), rng);
    // Parity-heavy subsets: the last indices first.
    if (trial % 2 == 0) std::sort(idx.begin(), idx.end(), std::greater<>());
    const auto take = k + rng() % (n - k + 1);
    std::vector<CodedElement> subset;
    for (std::uint32_t i = 0; i < take; ++i) subset.push_back(els[idx[i]]);
    CHECK(decode(subset, cfg(n, k)) == data);
  }
}

TEST_CASE("every k-subset decodes for small codes") {
  std::mt19937_64 rng(5);
  for (std::uint32_t n = 1; n <= 6; ++n) {
    for (std::uint32_t k = 1; k <= n; ++k) {
      const auto data = random_bytes(rng, 37);
      const auto els = encode(data, cfg(n, k));
      for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::uint32_t>(__builtin_popcount(mask)) != k) continue;
        std::vector<CodedElement> subset;
        for (std::uint32_t i = 0; i < n; ++i)
          if (mask & (1u << i)) subset.push_back(els[i]);
        REQUIRE(decode(subset, cfg(n, k)) == data);
      }
    }
  }
}

TEST_CASE("decode errors") {
  std::mt19937_64 rng(6);
  const auto data = random_bytes(rng, 100);
  const auto els = encode(data, cfg(5, 3));
  std::vector<CodedElement> two(els.begin(), els.begin() + 2);
  CHECK(code_of([&] { decode(two, cfg(5, 3)); }) == ErrorCode::InsufficientElements);

  std::vector<CodedElement> dup{els[0], els[0], els[1]};
  CHECK(code_of([&] { decode(dup, cfg(5, 3)); }) == ErrorCode::InsufficientElements);

  auto bad = std::vector<CodedElement>(els.begin(), els.begin() + 3);
  bad[1].bytes.pop_back();
  CHECK(code_of([&] { decode(bad, cfg(5, 3)); }) == ErrorCode::InconsistentElements);

  bad = std::vector<CodedElement>(els.begin(), els.begin() + 3);
  bad[2].object_len = 99;
  CHECK(code_of([&] { decode(bad, cfg(5, 3)); }) == ErrorCode::InconsistentElements);
}

TEST_CASE("codec parameter limits") {
  CHECK(code_of([] { ReedSolomon(33, 1); }) == ErrorCode::CodecParamError);
  CHECK(code_of([] { ReedSolomon(4, 5); }) == ErrorCode::CodecParamError);
  CHECK(code_of([] { ReedSolomon(4, 0); }) == ErrorCode::CodecParamError);
  CHECK_NOTHROW(ReedSolomon(32, 1));
}

TEST_CASE("coded storage is N/k of the object, below full replication") {
  std::mt19937_64 rng(7);
  for (std::uint32_t k = 2; k <= 6; ++k) {
    const auto data = random_bytes(rng, 6000);
    const auto els = encode(data, cfg(10, k));
    std::size_t total = 0;
    for (const auto& e : els) total += e.bytes.size();
    CHECK(total == 10 * ceil_div(6000, k));
    CHECK(total < 10 * data.size());
  }
}
