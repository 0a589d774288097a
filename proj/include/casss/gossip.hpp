#pragma once

#include <cstdint>
#include <map>

#include "casss/store.hpp"
#include "casss/wire.hpp"

namespace casss {

/// What a server has learned from its peers' digests in the current epoch.
class GossipView {
 public:
  GossipView(std::uint64_t maxint, std::uint64_t maxinc) : maxint_(maxint), maxinc_(maxinc) {}

  /// Merges a digest. A higher finalized tag is adopted into `store` as a fin
  /// record without element. Digests from another epoch are ignored.
  /// Returns false if the digest was ignored.
  bool merge(const GossipDigest& d, std::uint32_t epoch, std::uint32_t self, ServerStore& store);

  /// Highest pre tag heard of, including our own store.
  Tag max_pre(const ServerStore& store) const { return std::max(max_pre_seen_, store.max_pre()); }
  bool overflow_seen() const;

  /// True when every peer's digest reports overflow and the same max fin tag as ours.
  bool peers_agree(std::uint32_t n, std::uint32_t self, const Tag& my_max_fin) const;

  const std::map<std::uint32_t, GossipDigest>& peers() const { return peers_; }
  void latch_overflow() { latched_ = true; }
  void clear();

 private:
  std::uint64_t maxint_;
  std::uint64_t maxinc_;
  Tag max_pre_seen_ = kInitialTag;
  bool latched_ = false;
  std::map<std::uint32_t, GossipDigest> peers_;
};

GossipDigest make_digest(std::uint32_t self, std::uint32_t epoch, const ServerStore& store, std::uint64_t max_inc_seen,
                         bool blocked);

}  // namespace casss
