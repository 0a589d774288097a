#include "casss/checker.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_set>

#include "casss/error.hpp"

namespace casss {

std::uint64_t value_id(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

// Stands for "not yet bound" under a wildcard initial value.
constexpr std::uint64_t kUnbound = 0;

bool optional_op(const HistoryOp& op) { return op.respond == kPending || op.outcome != OpOutcome::Ok; }

struct Search {
  explicit Search(const History& hist) : h(hist) {}

  const History& h;
  std::vector<std::vector<std::size_t>> lanes;  // per (client, life), ops in program order
  std::vector<std::vector<Micros>> deadline;    // per lane position: earliest respond among the remaining ops
  std::set<std::uint64_t> written;
  std::unordered_set<std::string> failed;
  std::vector<std::size_t> pos;
  std::vector<std::size_t> order;
  std::size_t max_states = 0;
  std::size_t states = 0;
  std::vector<std::size_t> best_pos;
  std::size_t best_placed = 0;

  std::string key(std::uint64_t value) const {
    std::string k(reinterpret_cast<const char*>(pos.data()), pos.size() * sizeof(std::size_t));
    k.append(reinterpret_cast<const char*>(&value), sizeof(value));
    return k;
  }

  bool dfs(std::uint64_t value) {
    std::size_t placed = 0;
    bool done = true;
    for (std::size_t c = 0; c < lanes.size(); ++c) {
      placed += pos[c];
      if (pos[c] < lanes[c].size()) done = false;
    }
    if (done) return true;
    if (++states > max_states) throw Error(ErrorCode::StateSpaceExceeded, "linearizability search budget exhausted");
    if (placed >= best_placed) {
      best_placed = placed;
      best_pos = pos;
    }
    auto k = key(value);
    if (failed.count(k)) return false;

    Micros horizon = kPending;
    for (std::size_t c = 0; c < lanes.size(); ++c) horizon = std::min(horizon, deadline[c][pos[c]]);

    for (std::size_t c = 0; c < lanes.size(); ++c) {
      if (pos[c] >= lanes[c].size()) continue;
      const auto idx = lanes[c][pos[c]];
      const auto& op = h[idx];
      const bool opt = optional_op(op);
      // Linearize op now, unless an unlinearized op finished before it began.
      if (horizon >= op.invoke) {
        bool ok = true;
        std::uint64_t next = value;
        if (op.kind == OpKind::Write) {
          next = op.value;
        } else if (value == kUnbound) {
          ok = !written.count(op.value);
          next = op.value;
        } else {
          ok = op.value == value;
        }
        if (ok) {
          ++pos[c];
          order.push_back(idx);
          if (dfs(next)) return true;
          order.pop_back();
          --pos[c];
        }
      }
      // An optional write may never take effect.
      if (opt) {
        ++pos[c];
        if (dfs(value)) return true;
        --pos[c];
      }
    }
    failed.insert(std::move(k));
    return false;
  }
};

std::optional<std::pair<std::size_t, std::size_t>> find_violation(const History& h,
                                                                  const std::vector<std::size_t>& ops) {
  std::map<std::uint64_t, std::size_t> writer_of;
  for (auto i : ops)
    if (h[i].kind == OpKind::Write) writer_of[h[i].value] = i;
  for (auto r : ops) {
    if (h[r].kind != OpKind::Read) continue;
    auto w = writer_of.find(h[r].value);
    // A read that returned a value before its write began.
    if (w != writer_of.end() && h[r].respond < h[w->second].invoke) return std::make_pair(w->second, r);
    // A read that returned a value overwritten before the read began.
    for (auto w2 : ops) {
      if (h[w2].kind != OpKind::Write || optional_op(h[w2]) || h[w2].value == h[r].value) continue;
      if (h[w2].respond >= h[r].invoke) continue;
      if (w != writer_of.end() && h[w->second].respond < h[w2].invoke) return std::make_pair(w2, r);
    }
  }
  return std::nullopt;
}

}  // namespace

CheckResult check_linearizable(const History& h, const CheckOptions& opt) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i].kind == OpKind::Read && optional_op(h[i])) continue;
    kept.push_back(i);
  }
  if (kept.size() > opt.max_ops) {
    throw Error(ErrorCode::StateSpaceExceeded, std::to_string(kept.size()) + " operations exceed the checker bound");
  }

  Search s(h);
  s.max_states = opt.max_states;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> lane_of;
  for (auto i : kept) {
    auto [it, fresh] = lane_of.try_emplace({h[i].client, h[i].life}, s.lanes.size());
    if (fresh) s.lanes.emplace_back();
    s.lanes[it->second].push_back(i);
    if (h[i].kind == OpKind::Write) s.written.insert(h[i].value);
  }
  for (auto& lane : s.lanes) {
    std::stable_sort(lane.begin(), lane.end(), [&](auto a, auto b) { return h[a].invoke < h[b].invoke; });
    std::vector<Micros> d(lane.size() + 1, kPending);
    for (std::size_t j = lane.size(); j-- > 0;) {
      const auto& op = h[lane[j]];
      d[j] = optional_op(op) ? d[j + 1] : std::min(d[j + 1], op.respond);
    }
    s.deadline.push_back(std::move(d));
  }
  s.pos.assign(s.lanes.size(), 0);

  CheckResult out;
  out.linearizable = s.dfs(opt.wildcard_initial ? kUnbound : opt.initial_value);
  if (out.linearizable) {
    out.witness = s.order;
    return out;
  }
  out.violation = find_violation(h, kept);
  if (!out.violation) {
    // Report the stuck head with the earliest response against the op that blocks it.
    std::optional<std::size_t> stuck;
    for (std::size_t c = 0; c < s.lanes.size(); ++c) {
      if (s.best_pos[c] >= s.lanes[c].size()) continue;
      const auto i = s.lanes[c][s.best_pos[c]];
      if (!stuck || h[i].respond < h[*stuck].respond) stuck = i;
    }
    if (stuck) {
      std::size_t other = *stuck;
      for (std::size_t c = 0; c < s.lanes.size(); ++c) {
        if (s.best_pos[c] >= s.lanes[c].size()) continue;
        const auto i = s.lanes[c][s.best_pos[c]];
        if (i != *stuck) {
          other = i;
          break;
        }
      }
      out.violation = std::make_pair(other, *stuck);
    }
  }
  return out;
}

}  // namespace casss
