#include "casss/server.hpp"

#include <algorithm>

namespace casss {

namespace {

struct ResetMessage {
  std::uint32_t epoch = 0;
  bool steady = false;
  PrpAll own;
  PrpAll echo;
};

Bytes encode(const ResetMessage& m) {
  ByteWriter w;
  w.u64(m.epoch);
  w.u8(m.steady ? 1 : 0);
  write(w, m.own);
  write(w, m.echo);
  return w.take();
}

std::optional<ResetMessage> decode_reset(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  ResetMessage m;
  std::uint64_t epoch = 0;
  std::uint8_t steady = 0;
  if (!r.u64(epoch) || epoch > UINT32_MAX || !r.u8(steady) || steady > 1 || !read(r, m.own) || !read(r, m.echo) ||
      !r.done()) {
    return std::nullopt;
  }
  m.epoch = static_cast<std::uint32_t>(epoch);
  m.steady = steady == 1;
  return m;
}

}  // namespace

ServerNode::ServerNode(Env& env, const NodeOptions& opt, std::uint32_t index, Hooks hooks)
    : env_(env),
      opt_(opt),
      index_(index),
      hooks_(std::move(hooks)),
      transport_(env, *this, Uid{server_hw(index), 0}, opt.transport),
      store_(opt.quorum.variant == Variant::CASSS ? record_bound(opt.quorum) : 0, opt.quorum.maxint),
      gossip_(opt.quorum.maxint, opt.quorum.maxinc),
      queue_(2 * std::max<std::size_t>(1, opt.quorum.effective_clients()), opt.quorum.maxinc),
      reset_(opt.quorum.n(), index) {}

void ServerNode::start() {
  if (!casss()) return;
  env_.set_timer(opt_.gossip_period, [this] { gossip_tick(); });
}

bool ServerNode::blocked() const {
  if (!casss()) return false;
  return store_.has_overflow() || gossip_.overflow_seen() || queue_.overflowed();
}

bool ServerNode::resetting() const { return casss() && !reset_.quiescent(); }

bool ServerNode::reset_pending() const {
  if (!casss()) return false;
  const auto& p = reset_.own().prp;
  return !p || p->phase == 1 || (p->phase == 2 && !reset_applied_);
}

bool ServerNode::must_defer(const WireMessage& m) const {
  if (!casss()) return false;
  ByteReader r(m.payload);
  RequestHeader h;
  if (!read(r, h)) return false;
  // This server is behind: hold the request until it reaches that epoch.
  if (h.epoch > epoch_) return true;
  // A request from an older epoch is answered at once so the client can move on.
  if (h.epoch < epoch_) return false;
  switch (m.type) {
    case MsgType::QUERY:
    case MsgType::CNTRQRY:
    case MsgType::FINWRITE:
    case MsgType::FINFIN:
      return blocked() || reset_pending();
    default:
      return false;
  }
}

std::optional<WireMessage> ServerNode::on_request(NodeId src, const WireMessage& m) {
  auto reply = handle(src, m);
  settle();
  return reply;
}

std::optional<WireMessage> ServerNode::handle(NodeId src, const WireMessage& m) {
  switch (m.type) {
    case MsgType::GOSSIP:
      on_gossip(m);
      return WireMessage{};
    case MsgType::RESETSTATE:
      on_reset_message(src, m);
      return WireMessage{};
    default:
      break;
  }
  if (must_defer(m)) {
    deferred_[{src, m.type}] = m;
    return std::nullopt;
  }
  return handle_client(m);
}

WireMessage ServerNode::handle_client(const WireMessage& m) {
  WireMessage out;
  ByteReader r(m.payload);
  RequestHeader h;
  if (!read(r, h)) return out;
  ByteWriter w;
  if (h.epoch != epoch_) {
    write(w, ReplyHeader{h.phase, epoch_, index_, ReplyStatus::EpochMismatch});
    out.payload = w.take();
    return out;
  }
  write(w, ReplyHeader{h.phase, epoch_, index_, ReplyStatus::Ok});

  switch (m.type) {
    case MsgType::QUERY: {
      std::uint8_t want_data = 0;
      if (!r.u8(want_data)) return WireMessage{};
      if (!coded()) {
        out.tag = abd_.tag;
        if (want_data) out.element = abd_.data;
      } else {
        write(w, QueryResponse{store_.max_fin(), casss() ? gossip_.max_pre(store_) : store_.max_pre()});
      }
      break;
    }
    case MsgType::PREWRITE: {
      if (!m.tag || !m.element) return WireMessage{};
      if (!coded()) {
        abd_.adopt(*m.tag, *m.element);
      } else {
        store_.put_pre(*m.tag, *m.element);
      }
      break;
    }
    case MsgType::FINWRITE: {
      if (!m.tag || !coded()) return WireMessage{};
      store_.finalize(*m.tag, Phase::Fin);
      if (opt_.quorum.variant == Variant::CAS) {
        GossipDigest d;
        d.server = index_;
        d.epoch = epoch_;
        d.max_fin = *m.tag;
        d.max_pre = *m.tag;
        for (std::uint32_t j = 0; j < opt_.quorum.n(); ++j) {
          if (j == index_) continue;
          WireMessage g;
          g.type = MsgType::GOSSIP;
          ByteWriter gw;
          write(gw, d);
          g.payload = gw.take();
          transport_.send_reliable(server_node(j), std::move(g));
        }
      }
      break;
    }
    case MsgType::FINREAD: {
      if (!m.tag || !coded()) return WireMessage{};
      if (*m.tag != kInitialTag) store_.finalize(*m.tag, Phase::Fin);
      if (const auto* rec = store_.find(*m.tag)) out.element = rec->element;
      break;
    }
    case MsgType::FINFIN: {
      if (!m.tag || !coded()) return WireMessage{};
      store_.finalize(*m.tag, casss() ? Phase::FinFin : Phase::Fin);
      break;
    }
    case MsgType::CNTRQRY: {
      auto inc = queue_.query(h.phase.client.hw);
      w.u64(inc.value_or(0));
      break;
    }
    case MsgType::INCCNTR: {
      std::uint64_t inc = 0;
      if (!r.u64(inc)) return WireMessage{};
      queue_.update(h.phase.client.hw, inc);
      break;
    }
    default:
      return WireMessage{};
  }
  out.payload = w.take();
  return out;
}

void ServerNode::on_unreliable(NodeId, const WireMessage& m) {
  if (m.type != MsgType::GOSSIP) return;
  on_gossip(m);
  settle();
}

void ServerNode::on_gossip(const WireMessage& m) {
  ByteReader r(m.payload);
  GossipDigest d;
  if (!read(r, d) || !r.done()) return;
  gossip_.merge(d, epoch_, index_, store_);
}

void ServerNode::on_reset_message(NodeId src, const WireMessage& m) {
  if (!casss() || src >= opt_.quorum.n() || src == index_) return;
  auto msg = decode_reset(m.payload);
  if (!msg) return;
  reset_.on_message(src, msg->own, msg->echo);
  if (msg->steady && msg->epoch > epoch_ && reset_.quiescent()) {
    epoch_ = msg->epoch;
    gossip_.clear();
  }
}

void ServerNode::gossip_tick() {
  ++ticks_;
  WireMessage g;
  g.type = MsgType::GOSSIP;
  ByteWriter w;
  write(w, make_digest(index_, epoch_, store_, queue_.max_inc(), blocked()));
  g.payload = w.take();
  for (std::uint32_t j = 0; j < opt_.quorum.n(); ++j) {
    if (j != index_) transport_.send_unreliable(server_node(j), g);
  }
  const bool refresh = !reset_.enable_reset() || ticks_ % std::max(1u, opt_.reset_refresh_steady) == 0;
  settle();
  push_reset_state(refresh);
  env_.set_timer(opt_.gossip_period, [this] { gossip_tick(); });
}

void ServerNode::settle() {
  if (!casss() || settling_) return;
  settling_ = true;
  if (blocked() && reset_.enable_reset() && gossip_.peers_agree(opt_.quorum.n(), index_, store_.max_fin())) {
    bool echoed = true;
    for (std::size_t k = 0; k < reset_.size(); ++k) {
      if (k != index_ && reset_.echoes()[k] != std::optional<PrpAll>(PrpAll{})) echoed = false;
    }
    if (echoed && reset_.propose(store_.max_fin())) {
      ++proposals_;
      if (hooks_.on_propose) hooks_.on_propose(index_, store_.max_fin());
    }
  }
  auto r = reset_.run();
  if (r.local_reset) {
    apply_local_reset(*r.local_reset);
  } else if (!reset_.own().prp || reset_.own().prp->phase != 2) {
    reset_applied_ = false;
  }
  push_reset_state(false);
  release_deferred();
  settling_ = false;
}

void ServerNode::push_reset_state(bool force) {
  if (!casss()) return;
  for (std::uint32_t j = 0; j < opt_.quorum.n(); ++j) {
    if (j == index_) continue;
    ResetMessage msg{epoch_, reset_.quiescent(), reset_.own(), reset_.view(j)};
    auto payload = encode(msg);
    auto& last = last_reset_sent_[j];
    if (!force && last == payload) continue;
    last = payload;
    WireMessage m;
    m.type = MsgType::RESETSTATE;
    m.payload = std::move(payload);
    transport_.send_reliable(server_node(j), std::move(m));
  }
}

void ServerNode::apply_local_reset(const Tag& t) {
  if (reset_applied_) return;
  reset_applied_ = true;
  std::optional<Bytes> element;
  if (const auto* rec = store_.find(t)) element = rec->element;
  store_.reset_to(std::move(element));
  gossip_.clear();
  queue_.clear();
  ++epoch_;
  if (hooks_.on_local_reset) hooks_.on_local_reset(index_, t);
}

void ServerNode::release_deferred() {
  if (deferred_.empty()) return;
  std::vector<std::pair<NodeId, MsgType>> keys;
  for (const auto& [key, msg] : deferred_) {
    if (!must_defer(msg)) keys.push_back(key);
  }
  for (const auto& key : keys) {
    auto it = deferred_.find(key);
    if (it == deferred_.end()) continue;
    WireMessage m = std::move(it->second);
    deferred_.erase(it);
    auto reply = handle_client(m);
    transport_.reply_deferred(key.first, key.second, m.token, std::move(reply));
  }
}

void ServerNode::inject_record(Record r) {
  if (!coded()) {
    abd_.tag = r.tag;
    abd_.data = r.element.value_or(Bytes{});
  } else {
    store_.insert_raw(std::move(r));
  }
  settle();
}

void ServerNode::corrupt_store(std::mt19937_64& rng, const std::vector<Uid>& writers, std::size_t element_len) {
  std::uniform_int_distribution<std::uint64_t> seq(0, 1000);
  std::uniform_int_distribution<std::uint64_t> any(1, ~std::uint64_t{0});
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> phase(0, 2);
  std::uniform_int_distribution<int> byte(0, 255);
  auto random_uid = [&]() {
    if (!writers.empty() && coin(rng)) {
      std::uniform_int_distribution<std::size_t> pick(0, writers.size() - 1);
      return writers[pick(rng)];
    }
    return Uid{HwAddr::from_u64(any(rng)), seq(rng)};
  };
  auto random_bytes = [&]() {
    Bytes b(element_len);
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    return b;
  };
  if (!coded()) {
    abd_.tag = Tag{seq(rng), random_uid()};
    abd_.data = random_bytes();
    return;
  }
  store_.clear();
  const std::size_t bound = std::max<std::size_t>(store_.bound(), 8);
  std::uniform_int_distribution<std::size_t> count(0, 3 * bound);
  const auto n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    Record rec;
    rec.tag = Tag{seq(rng), random_uid()};
    rec.phase = static_cast<Phase>(phase(rng));
    if (coin(rng) || rec.phase == Phase::Pre) {
      CodedElement e{index_, random_bytes(), element_len * std::max<std::uint32_t>(1, opt_.quorum.k)};
      rec.element = pack_element(e);
    }
    store_.insert_raw(std::move(rec));
  }
  if (casss() && rng() % 8 == 0) {
    // Occasionally a tag at or just below the overflow bound.
    Record rec;
    rec.tag = Tag{opt_.quorum.maxint - rng() % 2, random_uid()};
    rec.phase = static_cast<Phase>(phase(rng));
    store_.insert_raw(std::move(rec));
  }
  if (casss() && coin(rng) && coin(rng)) gossip_.latch_overflow();
  epoch_ = static_cast<std::uint32_t>(rng() % 4) + epoch_;
}

void ServerNode::corrupt_reset_state(std::mt19937_64& rng) {
  std::vector<Tag> pool;
  for (const auto& [t, rec] : store_.records()) pool.push_back(t);
  if (pool.empty()) pool.push_back(store_.max_fin());
  reset_.corrupt(rng, pool);
}

void ServerNode::corrupt_incarnations(std::mt19937_64& rng, const std::vector<HwAddr>& known) {
  queue_.corrupt(rng, known, 1000);
}

}  // namespace casss
