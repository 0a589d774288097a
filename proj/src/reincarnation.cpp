#include "casss/reincarnation.hpp"

#include <algorithm>

namespace casss {

std::optional<std::uint64_t> IncarnationQueue::query(const HwAddr& hw) {
  if (overflowed()) return std::nullopt;
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.hw == hw; });
  if (it == entries_.end()) return 0;
  Entry e = *it;
  entries_.erase(it);
  entries_.push_back(e);
  return e.inc;
}

void IncarnationQueue::update(const HwAddr& hw, std::uint64_t inc) {
  std::erase_if(entries_, [&](const Entry& e) { return e.hw == hw; });
  entries_.push_back({hw, inc});
  while (entries_.size() > capacity_) entries_.pop_front();
}

bool IncarnationQueue::overflowed() const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.inc >= maxinc_; });
}

std::uint64_t IncarnationQueue::max_inc() const {
  std::uint64_t m = 0;
  for (const auto& e : entries_) m = std::max(m, e.inc);
  return m;
}

void IncarnationQueue::corrupt(std::mt19937_64& rng, const std::vector<HwAddr>& known, std::uint64_t max_value) {
  entries_.clear();
  std::uniform_int_distribution<std::size_t> count(0, capacity_ + 2);
  std::uniform_int_distribution<std::uint64_t> value(0, max_value);
  std::uniform_int_distribution<std::uint64_t> any(1, ~std::uint64_t{0});
  std::uniform_int_distribution<int> coin(0, 1);
  const auto n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    HwAddr hw = HwAddr::from_u64(any(rng));
    if (!known.empty() && coin(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, known.size() - 1);
      hw = known[pick(rng)];
    }
    entries_.push_back({hw, value(rng)});
  }
}

std::optional<std::uint64_t> next_incarnation(std::uint64_t quorum_max, std::uint64_t current, bool at_boot) {
  if (!at_boot && quorum_max == current) return std::nullopt;
  return std::max(quorum_max, current) + 1;
}

}  // namespace casss
