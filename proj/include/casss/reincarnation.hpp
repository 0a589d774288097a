#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>

#include "casss/types.hpp"

namespace casss {

/// Server-side FIFO of (hardware address, incarnation number), one entry per
/// address. The head is evicted when the queue is over capacity.
class IncarnationQueue {
 public:
  struct Entry {
    HwAddr hw;
    std::uint64_t inc = 0;
    bool operator==(const Entry&) const = default;
  };

  IncarnationQueue(std::size_t capacity, std::uint64_t maxinc) : capacity_(capacity), maxinc_(maxinc) {}

  /// cntrQry: nothing while some entry holds the maximum incarnation number;
  /// otherwise the stored number (entry moved to the tail) or 0.
  std::optional<std::uint64_t> query(const HwAddr& hw);
  /// incCntr: replaces any entry for hw and appends (hw, inc).
  void update(const HwAddr& hw, std::uint64_t inc);

  bool overflowed() const;
  std::uint64_t max_inc() const;
  const std::deque<Entry>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  void clear() { entries_.clear(); }
  void corrupt(std::mt19937_64& rng, const std::vector<HwAddr>& known, std::uint64_t max_value);

 private:
  std::size_t capacity_;
  std::uint64_t maxinc_;
  std::deque<Entry> entries_;
};

/// Client rule run at boot and periodically. Returns the incarnation number
/// to install, or nothing when the current one is up to date.
std::optional<std::uint64_t> next_incarnation(std::uint64_t quorum_max, std::uint64_t current, bool at_boot);

}  // namespace casss
