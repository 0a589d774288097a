#include "casss/global_reset.hpp"

#include <algorithm>
#include <set>

namespace casss {

namespace {

int mod6(int x) { return ((x % 6) + 6) % 6; }

std::uint8_t succ(std::uint8_t phase) { return static_cast<std::uint8_t>((phase + 1) % 3); }

void write_entry(ByteWriter& w, const PrpEntry& e) {
  w.u8(e ? 0 : 1);
  w.u8(e ? e->phase : 0);
  w.u8(e && e->tag ? 1 : 0);
  w.tag(e && e->tag ? *e->tag : kInitialTag);
}

bool read_entry(ByteReader& r, PrpEntry& e) {
  std::uint8_t bot = 0, phase = 0, has_tag = 0;
  Tag t;
  if (!r.u8(bot) || !r.u8(phase) || !r.u8(has_tag) || !r.tag(t)) return false;
  if (bot > 1 || phase > 2 || has_tag > 1) return false;
  if (bot) {
    e.reset();
  } else {
    e = Proposal{phase, has_tag ? std::optional<Tag>(t) : std::nullopt};
  }
  return true;
}

}  // namespace

void write(ByteWriter& w, const PrpAll& p) {
  write_entry(w, p.prp);
  w.u8(p.all ? 1 : 0);
}

bool read(ByteReader& r, PrpAll& p) {
  std::uint8_t all = 0;
  if (!read_entry(r, p.prp) || !r.u8(all) || all > 1) return false;
  p.all = all == 1;
  return true;
}

bool corr_deg(int a, int b) {
  const int d1 = mod6(b - a);
  const int d2 = mod6(a - b);
  return d1 <= 2 || d2 <= 2;
}

ResetState::ResetState(std::size_t n, std::size_t self)
    : self_(self), prp_(n, kDefaultPrp), all_(n, true), echo_(n, PrpAll{}), seen_(n, true) {}

bool ResetState::enable_reset() const {
  for (std::size_t k = 0; k < prp_.size(); ++k) {
    if (!prp_[k] || *prp_[k] != *kDefaultPrp || !all_[k]) return false;
  }
  return true;
}

bool ResetState::quiescent() const {
  return std::all_of(prp_.begin(), prp_.end(), [](const PrpEntry& e) { return e && *e == *kDefaultPrp; });
}

bool ResetState::propose(const Tag& tag) {
  if (!enable_reset()) return false;
  prp_[self_] = Proposal{1, tag};
  all_[self_] = false;
  return true;
}

void ResetState::on_message(std::size_t from, const PrpAll& theirs, const PrpAll& echo) {
  if (from >= prp_.size() || from == self_) return;
  prp_[from] = theirs.prp;
  all_[from] = theirs.all;
  echo_[from] = echo;
}

bool ResetState::my_all(std::size_t k) const {
  if (all_[k]) return true;
  if (!prp_[k]) return false;
  const auto next = succ(prp_[k]->phase);
  for (std::size_t l = 0; l < prp_.size(); ++l) {
    if (seen_[l] && prp_[l] && prp_[l]->phase == next) return true;
  }
  return false;
}

int ResetState::degree(std::size_t k) const { return prp_[k] ? 2 * prp_[k]->phase + (my_all(k) ? 1 : 0) : -1; }

bool ResetState::greater_or_equal(std::size_t k) const {
  const auto& mine = prp_[self_];
  const auto& theirs = prp_[k];
  if (!mine) return !theirs || *theirs == *kDefaultPrp;  // the default proposal succeeds bottom
  if (!theirs) return false;
  return succ(mine->phase) == theirs->phase || *mine == *theirs;
}

bool ResetState::echo_no_all(std::size_t k) const {
  if (k == self_) return true;
  return echo_[k] && echo_[k]->prp == prp_[self_] && greater_or_equal(k);
}

bool ResetState::echo(std::size_t k) const {
  if (k == self_) return true;
  return echo_[k] && *echo_[k] == own() && greater_or_equal(k);
}

bool ResetState::all_seen() const {
  if (!all_[self_]) return false;
  for (std::size_t k = 0; k < seen_.size(); ++k) {
    if (k != self_ && !seen_[k]) return false;
  }
  return true;
}

void ResetState::prp_set_bottom() {
  std::fill(prp_.begin(), prp_.end(), std::nullopt);
  std::fill(all_.begin(), all_.end(), false);
}

bool ResetState::fault_detected() const {
  const auto n = prp_.size();
  bool any_bottom = false;
  bool any_non_default = false;
  bool any_phase2 = false;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& e = prp_[k];
    if (!e) {
      any_bottom = true;
      continue;
    }
    if (e->phase == 0 && e->tag) return true;
    if (e->phase != 0 && !e->tag) return true;
    if (*e != *kDefaultPrp) any_non_default = true;
    if (e->phase == 2) any_phase2 = true;
  }
  if (any_bottom && any_non_default) return true;

  for (std::size_t a = 0; a < n; ++a) {
    if (!prp_[a]) continue;
    for (std::size_t b = a + 1; b < n; ++b) {
      if (prp_[b] && !corr_deg(degree(a), degree(b))) return true;
    }
  }

  if (const auto& mine = prp_[self_]) {
    const auto next = succ(mine->phase);
    for (std::size_t k = 0; k < n; ++k) {
      if (prp_[k] && prp_[k]->phase == next && !seen_[k]) return true;
    }
  }

  if (any_phase2) {
    std::set<Tag> proposals;
    for (const auto& e : prp_) {
      if (e && e->phase != 0 && e->tag) proposals.insert(*e->tag);
    }
    if (proposals.size() > 1) return true;
  }
  return false;
}

PrpEntry ResetState::max_prp() const {
  const auto& mine = prp_[self_];
  if (!mine) return mine;
  const int d_self = degree(self_);
  std::set<std::uint8_t> phases;
  std::optional<Tag> max_tag;
  for (std::size_t k = 0; k < prp_.size(); ++k) {
    if (!prp_[k]) continue;
    const int diff = mod6(degree(k) - d_self);
    if (diff != 0 && diff != 1) return mine;
    phases.insert(prp_[k]->phase);
    if (prp_[k]->tag && (!max_tag || *prp_[k]->tag > *max_tag)) max_tag = prp_[k]->tag;
  }
  const bool zero_one = phases == std::set<std::uint8_t>{0, 1};
  return Proposal{zero_one ? std::uint8_t{1} : mine->phase, max_tag};
}

ResetState::StepResult ResetState::step() {
  StepResult out;
  const auto before_prp = prp_;
  const auto before_all = all_;
  const auto before_seen = seen_;
  const auto n = prp_.size();

  for (std::size_t k = 0; k < n; ++k) {
    if (all_[k]) seen_[k] = true;
  }

  if (fault_detected()) {
    prp_set_bottom();
    out.fault = true;
  }

  if (!prp_[self_] && all_[self_]) prp_[self_] = kDefaultPrp;

  const auto next = max_prp();
  prp_[self_] = next;
  bool all = true;
  for (std::size_t k = 0; k < n; ++k) all = all && echo_no_all(k);
  all_[self_] = all;

  const bool any_bottom = std::any_of(prp_.begin(), prp_.end(), [](const PrpEntry& e) { return !e; });
  if (!any_bottom && !quiescent()) {
    bool echoed = all_seen();
    for (std::size_t k = 0; echoed && k < n; ++k) echoed = echo(k);
    if (echoed) {
      switch (prp_[self_]->phase) {
        case 1:
          prp_[self_] = Proposal{2, prp_[self_]->tag};
          all_[self_] = false;
          break;
        case 2:
          prp_[self_] = kDefaultPrp;
          all_[self_] = false;
          break;
        default:
          break;
      }
      std::fill(seen_.begin(), seen_.end(), false);
    }
    if (prp_[self_]->phase == 2) out.local_reset = prp_[self_]->tag;
  }

  out.changed = prp_ != before_prp || all_ != before_all || seen_ != before_seen;
  return out;
}

ResetState::StepResult ResetState::run() {
  StepResult total;
  for (int i = 0; i < 16; ++i) {
    auto r = step();
    total.fault = total.fault || r.fault;
    total.changed = total.changed || r.changed;
    total.local_reset = r.local_reset;
    if (!r.changed) break;
  }
  return total;
}

void ResetState::corrupt(std::mt19937_64& rng, const std::vector<Tag>& tag_pool) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> kind(0, 5);
  std::uniform_int_distribution<int> phase(0, 2);
  auto random_tag = [&]() -> std::optional<Tag> {
    if (tag_pool.empty() || coin(rng)) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, tag_pool.size() - 1);
    return tag_pool[pick(rng)];
  };
  auto random_entry = [&]() -> PrpEntry {
    switch (kind(rng)) {
      case 0:
        return std::nullopt;
      case 1:
      case 2:
        return kDefaultPrp;
      default:
        return Proposal{static_cast<std::uint8_t>(phase(rng)), random_tag()};
    }
  };
  for (std::size_t k = 0; k < prp_.size(); ++k) {
    prp_[k] = random_entry();
    all_[k] = coin(rng);
    seen_[k] = coin(rng);
    if (coin(rng)) {
      echo_[k] = PrpAll{random_entry(), coin(rng) == 1};
    } else {
      echo_[k].reset();
    }
  }
}

}  // namespace casss
