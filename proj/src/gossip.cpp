#include "casss/gossip.hpp"

namespace casss {

bool GossipView::merge(const GossipDigest& d, std::uint32_t epoch, std::uint32_t self, ServerStore& store) {
  if (d.epoch != epoch || d.server == self) return false;
  peers_[d.server] = d;
  if (d.max_fin > store.max_fin()) store.finalize(d.max_fin, Phase::Fin);
  if (d.max_pre > max_pre_seen_) max_pre_seen_ = d.max_pre;
  if (d.overflow_seen || d.max_inc_seen >= maxinc_ || d.max_pre.seq >= maxint_ || d.max_fin.seq >= maxint_) {
    latched_ = true;
  }
  return true;
}

bool GossipView::overflow_seen() const { return latched_ || max_pre_seen_.seq >= maxint_; }

bool GossipView::peers_agree(std::uint32_t n, std::uint32_t self, const Tag& my_max_fin) const {
  for (std::uint32_t k = 0; k < n; ++k) {
    if (k == self) continue;
    auto it = peers_.find(k);
    if (it == peers_.end() || !it->second.overflow_seen || it->second.max_fin != my_max_fin) return false;
  }
  return true;
}

void GossipView::clear() {
  max_pre_seen_ = kInitialTag;
  latched_ = false;
  peers_.clear();
}

GossipDigest make_digest(std::uint32_t self, std::uint32_t epoch, const ServerStore& store, std::uint64_t max_inc_seen,
                         bool blocked) {
  GossipDigest d;
  d.server = self;
  d.epoch = epoch;
  d.max_pre = store.max_pre();
  d.max_fin = store.max_fin();
  d.max_inc_seen = max_inc_seen;
  d.overflow_seen = blocked;
  return d;
}

}  // namespace casss
