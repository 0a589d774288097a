#include <random>
#include <tuple>
#include <vector>

#include "casss/error.hpp"
#include "casss/types.hpp"
#include "doctest.h"

using namespace casss;

namespace {

Uid uid(std::uint64_t hw, std::uint64_t inc) { return Uid{HwAddr::from_u64(hw), inc}; }
Tag tag(std::uint64_t seq, std::uint64_t hw, std::uint64_t inc = 0) { return Tag{seq, uid(hw, inc)}; }

QuorumConfig cfg(std::uint32_t n, std::uint32_t f, std::uint32_t k, Variant v) {
  QuorumConfig q;
  for (std::uint32_t i = 0; i < n; ++i) q.servers.push_back("s" + std::to_string(i));
  q.f = f;
  q.k = k;
  q.variant = v;
  return q;
}

// Lexicographic oracle over the raw fields.
Ordering oracle(const Tag& a, const Tag& b) {
  auto ka = std::make_tuple(a.seq, a.writer.inc, a.writer.hw.bytes);
  auto kb = std::make_tuple(b.seq, b.writer.inc, b.writer.hw.bytes);
  if (ka < kb) return Ordering::LT;
  if (kb < ka) return Ordering::GT;
  return Ordering::EQ;
}

}  // namespace

TEST_CASE("compareTags examples") {
  CHECK(compare_tags(tag(2, 1), tag(1, 9)) == Ordering::GT);
  CHECK(compare_tags(tag(3, 0xa, 1), tag(3, 0xa, 1)) == Ordering::EQ);
  CHECK(compare_tags(tag(3, 0xa, 2), tag(3, 0xa, 1)) == Ordering::GT);
  CHECK(compare_tags(tag(3, 0xb, 1), tag(3, 0xa, 2)) == Ordering::LT);
}

TEST_CASE("compareTags agrees with the lexicographic oracle over enumerated fields") {
  std::vector<Tag> tags;
  for (std::uint64_t seq : {0ULL, 1ULL, 2ULL, ~0ULL})
    for (std::uint64_t inc : {0ULL, 1ULL, 7ULL})
      for (std::uint64_t hw : {0ULL, 1ULL, 0x100ULL, 0xff00000000000000ULL}) tags.push_back(tag(seq, hw, inc));
  for (const auto& a : tags)
    for (const auto& b : tags) CHECK(compare_tags(a, b) == oracle(a, b));
}

TEST_CASE("tag order is a strict total order") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> small(0, 3);
  std::vector<Tag> tags;
  for (int i = 0; i < 60; ++i) tags.push_back(tag(small(rng), small(rng), small(rng)));
  for (const auto& a : tags) {
    for (const auto& b : tags) {
      const auto ab = compare_tags(a, b);
      const auto ba = compare_tags(b, a);
      CHECK((ab == Ordering::EQ) == (a == b));
      CHECK((ab == Ordering::LT) == (ba == Ordering::GT));
      for (const auto& c : tags) {
        if (ab == Ordering::LT && compare_tags(b, c) == Ordering::LT) CHECK(compare_tags(a, c) == Ordering::LT);
      }
    }
  }
}

TEST_CASE("nextTag") {
  const auto c1 = uid(1, 0);
  CHECK(next_tag(tag(5, 3), c1, ~0ULL) == Tag{6, c1});
  CHECK(next_tag(kInitialTag, c1, ~0ULL) == Tag{1, c1});
  CHECK_THROWS_AS(next_tag(tag(100, 2), c1, 100), Error);
  try {
    next_tag(tag(~0ULL, 2), c1, ~0ULL);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OverflowDetected);
  }
}

TEST_CASE("nextTag output exceeds its input and every tag with a smaller sequence number") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> any(0, 1000);
  for (int i = 0; i < 1000; ++i) {
    const auto max = tag(any(rng), any(rng), any(rng));
    const auto self = uid(any(rng), any(rng));
    const auto t = next_tag(max, self, ~0ULL);
    CHECK(t > max);
    CHECK(t > tag(max.seq, ~0ULL, ~0ULL));
  }
}

TEST_CASE("quorum sizes") {
  CHECK(quorum_size(cfg(10, 2, 6, Variant::CAS)) == 8);
  CHECK(quorum_size(cfg(5, 0, 5, Variant::CAS)) == 5);
  CHECK(quorum_size(cfg(10, 0, 1, Variant::MWABD)) == 6);
  CHECK(quorum_size(cfg(10, 2, 6, Variant::CASSS), QuorumKind::Majority) == 6);
}

TEST_CASE("quorum size matches direct evaluation of ceil((N+k)/2)") {
  for (std::uint32_t n = 1; n <= 32; ++n) {
    for (std::uint32_t f = 0; 2 * f < n; ++f) {
      for (std::uint32_t k = 1; k <= n - 2 * f; ++k) {
        const auto q = quorum_size(cfg(n, f, k, Variant::CASSS));
        std::uint32_t expect = 0;
        while (2 * expect < n + k) ++expect;
        CHECK(q == expect);
        // Two coded quorums share at least k servers, and f crashes leave one alive.
        CHECK(2 * q - n >= k);
        CHECK(q <= n - f);
      }
    }
  }
}

TEST_CASE("invalid coding parameters are rejected") {
  CHECK_THROWS_AS(quorum_size(cfg(10, 2, 7, Variant::CAS)), Error);
  CHECK_THROWS_AS(quorum_size(cfg(10, 2, 0, Variant::CAS)), Error);
  CHECK_THROWS_AS(quorum_size(cfg(4, 2, 1, Variant::CASSS)), Error);
  CHECK_THROWS_AS(quorum_size(cfg(33, 0, 1, Variant::CASSS)), Error);
  CHECK_THROWS_AS(quorum_size(QuorumConfig{}), Error);
  try {
    validate(cfg(10, 2, 7, Variant::CAS));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidConfig);
  }
}

TEST_CASE("record bound is clients + delta + 3") {
  auto q = cfg(5, 1, 3, Variant::CASSS);
  q.n_clients = 4;
  q.delta = 16;
  CHECK(record_bound(q) == 23);
}

TEST_CASE("hardware addresses round-trip through u64") {
  for (std::uint64_t v : {0ULL, 1ULL, 0x0102030405060708ULL, ~0ULL}) CHECK(HwAddr::from_u64(v).to_u64() == v);
  CHECK(HwAddr::from_u64(0x0102030405060708ULL).bytes[0] == 1);
}

TEST_CASE("variant names parse back") {
  for (auto v : {Variant::MWABD, Variant::CAS, Variant::CASSS}) CHECK(parse_variant(to_string(v)) == v);
  CHECK_FALSE(parse_variant("paxos"));
}
