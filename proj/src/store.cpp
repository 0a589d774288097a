#include "casss/store.hpp"

#include <algorithm>
#include <set>
#include <vector>

namespace casss {

const Record* ServerStore::find(const Tag& t) const {
  auto it = records_.find(t);
  return it == records_.end() ? nullptr : &it->second;
}

Tag ServerStore::max_fin() const {
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->second.phase != Phase::Pre) return it->first;
  }
  return kInitialTag;
}

Tag ServerStore::max_pre() const { return records_.empty() ? kInitialTag : records_.rbegin()->first; }

void ServerStore::put_pre(const Tag& t, Bytes element) {
  auto it = records_.find(t);
  if (it != records_.end()) {
    if (!it->second.element) it->second.element = std::move(element);
    return;
  }
  records_.emplace(t, Record{t, std::move(element), Phase::Pre});
  maybe_prune();
}

void ServerStore::finalize(const Tag& t, Phase phase) {
  auto [it, inserted] = records_.try_emplace(t, Record{t, std::nullopt, phase});
  if (!inserted && it->second.phase < phase) it->second.phase = phase;
  if (phase == Phase::FinFin) {
    prune();
  } else if (inserted) {
    maybe_prune();
  }
}

void ServerStore::maybe_prune() {
  if (bound_ != 0 && records_.size() > bound_) prune();
}

void ServerStore::prune() {
  if (bound_ == 0) return;
  ++audit_.prunes;
  if (records_.size() > bound_) {
    const Tag keep_fin = max_fin();
    std::set<Uid> writers;
    std::vector<Tag> newest;  // newest record of each writer, by descending tag
    std::vector<Tag> rest;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->first == keep_fin && it->second.phase != Phase::Pre) continue;
      if (writers.insert(it->first.writer).second) {
        newest.push_back(it->first);
      } else {
        rest.push_back(it->first);
      }
    }
    newest.insert(newest.end(), rest.begin(), rest.end());
    const bool has_fin = records_.count(keep_fin) && records_.at(keep_fin).phase != Phase::Pre;
    const std::size_t room = bound_ - (has_fin ? 1 : 0);
    for (std::size_t i = room; i < newest.size(); ++i) records_.erase(newest[i]);
    if (has_fin && max_fin() != keep_fin) ++audit_.max_fin_evictions;
  }
  audit_.max_after_prune = std::max(audit_.max_after_prune, records_.size());
  if (records_.size() > bound_) ++audit_.bound_violations;
}

void ServerStore::reset_to(std::optional<Bytes> element) {
  records_.clear();
  records_.emplace(kResetTag, Record{kResetTag, std::move(element), Phase::Fin});
}

}  // namespace casss
