#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace casss {

using Bytes = std::vector<std::uint8_t>;

/// Globally unique node address. Eight opaque bytes assigned from configuration.
struct HwAddr {
  std::array<std::uint8_t, 8> bytes{};

  static HwAddr from_u64(std::uint64_t v);
  std::uint64_t to_u64() const;
  bool is_null() const { return to_u64() == 0; }

  auto operator<=>(const HwAddr&) const = default;
};

/// Client identity: hardware address plus incarnation number.
/// Ordered by incarnation first so a reincarnated client outranks its past lives.
struct Uid {
  HwAddr hw;
  std::uint64_t inc = 0;

  std::strong_ordering operator<=>(const Uid& o) const {
    if (auto c = inc <=> o.inc; c != 0) return c;
    return hw <=> o.hw;
  }
  bool operator==(const Uid&) const = default;
};

/// Writer id used by the never-written sentinel and by post-reset tags.
inline constexpr Uid kNullWriter{};

/// Version identifier, totally ordered by (seq, writer.inc, writer.hw).
struct Tag {
  std::uint64_t seq = 0;
  Uid writer{};

  std::strong_ordering operator<=>(const Tag& o) const {
    if (auto c = seq <=> o.seq; c != 0) return c;
    return writer <=> o.writer;
  }
  bool operator==(const Tag&) const = default;
};

inline constexpr Tag kInitialTag{0, kNullWriter};
inline constexpr Tag kResetTag{1, kNullWriter};

std::string to_string(const Tag& t);

enum class Ordering { LT, EQ, GT };

Ordering compare_tags(const Tag& a, const Tag& b);

/// (max.seq + 1, self). Throws OverflowDetected when max.seq has reached maxint.
Tag next_tag(const Tag& max, const Uid& self, std::uint64_t maxint);

/// Record label. Labels only advance: pre -> fin -> FIN.
enum class Phase : std::uint8_t { Pre = 0, Fin = 1, FinFin = 2 };

const char* to_string(Phase p);

struct Record {
  Tag tag;
  std::optional<Bytes> element;
  Phase phase = Phase::Pre;

  bool operator==(const Record&) const = default;
};

enum class Variant : std::uint8_t { MWABD = 0, CAS = 1, CASSS = 2 };

const char* to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& s);

enum class QuorumKind { Coded, Majority };

struct QuorumConfig {
  std::vector<std::string> servers;
  std::vector<std::string> clients;  // addresses, only needed by the network back-end
  std::uint32_t n_clients = 0;       // bound used for storage pruning and queue capacity
  std::uint32_t f = 0;
  std::uint32_t k = 1;
  Variant variant = Variant::CASSS;
  std::uint32_t delta = 16;
  std::uint64_t maxint = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t maxinc = std::numeric_limits<std::uint32_t>::max();

  std::uint32_t n() const { return static_cast<std::uint32_t>(servers.size()); }
  std::uint32_t effective_clients() const {
    return n_clients != 0 ? n_clients : static_cast<std::uint32_t>(clients.size());
  }
};

/// Throws InvalidConfig unless the configuration describes a usable quorum system.
void validate(const QuorumConfig& cfg);

std::uint32_t coded_quorum_size(std::uint32_t n, std::uint32_t k);
std::uint32_t majority_quorum_size(std::uint32_t n);

/// Coded quorum for CAS/CASSS, majority for MW-ABD.
std::uint32_t quorum_size(const QuorumConfig& cfg);
std::uint32_t quorum_size(const QuorumConfig& cfg, QuorumKind kind);

/// Record bound for CASSS servers: clients + delta + 3.
std::size_t record_bound(const QuorumConfig& cfg);

}  // namespace casss
