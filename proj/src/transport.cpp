#include "casss/transport.hpp"

#include <numeric>

namespace casss {

std::uint64_t TrafficStats::total_bytes_sent() const {
  return std::accumulate(bytes_sent.begin(), bytes_sent.end(), std::uint64_t{0});
}

Transport::Transport(Env& env, Handler& handler, Uid self, TransportConfig cfg)
    : env_(env), handler_(handler), self_(self), cfg_(cfg) {
  env_.stream_failed = [this](NodeId dst) { on_stream_failed(dst); };
}

Transport::SenderSlot& Transport::sender_slot(NodeId dst, MsgType type) {
  auto it = senders_.find({dst, type});
  if (it == senders_.end()) {
    const auto policy = type == MsgType::GOSSIP ? ChannelSender::Outbox::Fifo : ChannelSender::Outbox::LatestOnly;
    it = senders_.emplace(Key{dst, type}, SenderSlot{ChannelSender(cfg_.cap, policy, cfg_.fifo_limit)}).first;
  }
  return it->second;
}

ChannelSender& Transport::sender(NodeId dst, MsgType type) { return sender_slot(dst, type).chan; }

ChannelReceiver* Transport::receiver(NodeId src, MsgType type) {
  auto it = receivers_.find({src, type});
  return it == receivers_.end() ? nullptr : &it->second;
}

std::size_t Transport::transmit(NodeId dst, FrameKind kind, const WireMessage& m) {
  auto frame = make_frame(kind, m);
  const auto size = frame.size();
  const auto accounted = kind == FrameKind::Ack ? open_ack(m) : std::nullopt;
  const auto type = accounted ? accounted->first.channel : m.type;
  stats_.frames_sent[static_cast<std::size_t>(type)] += 1;
  stats_.bytes_sent[static_cast<std::size_t>(type)] += frame.size();
  if (uses_stream(frame.size())) {
    ++stats_.bulk_transfers;
    env_.send_stream(dst, std::move(frame));
  } else {
    env_.send_datagram(dst, std::move(frame));
  }
  return size;
}

Micros Transport::wait_for(std::size_t frame_size, unsigned backoff) const {
  if (!uses_stream(frame_size)) return cfg_.retransmit_timeout;
  const auto transfer = static_cast<Micros>(2e6 * static_cast<double>(frame_size) / cfg_.stream_bandwidth);
  return (cfg_.retransmit_timeout + transfer) << std::min(backoff, 5u);
}

void Transport::arm(NodeId dst, MsgType type, std::size_t frame_size) {
  auto& slot = sender_slot(dst, type);
  const auto gen = ++slot.generation;
  env_.set_timer(wait_for(frame_size, slot.backoff), [this, dst, type, gen] {
    auto& s = sender_slot(dst, type);
    if (s.generation != gen) return;
    if (auto again = s.chan.on_timeout()) {
      ++stats_.retransmissions;
      const auto size = transmit(dst, FrameKind::Data, *again);
      s.backoff = uses_stream(size) ? s.backoff + 1 : 0;
      arm(dst, type, size);
    }
  });
}

void Transport::send_reliable(NodeId dst, WireMessage m) {
  const auto type = m.type;
  m.sender = self_;
  ++stats_.messages_sent[static_cast<std::size_t>(type)];
  auto& slot = sender_slot(dst, type);
  if (auto now = slot.chan.submit(std::move(m))) {
    slot.backoff = 0;
    arm(dst, type, transmit(dst, FrameKind::Data, *now));
  }
}

void Transport::send_unreliable(NodeId dst, WireMessage m) {
  m.sender = self_;
  ++stats_.messages_sent[static_cast<std::size_t>(m.type)];
  auto [seq, fresh] = unreliable_seq_.try_emplace({dst, m.type}, 0);
  // A random start keeps a restarted node clear of the numbers its past life used.
  if (fresh) seq->second = env_.rng()();
  m.token = seq->second++;
  transmit(dst, FrameKind::Unreliable, m);
}

bool Transport::reply_deferred(NodeId src, MsgType channel, std::uint64_t token, WireMessage reply) {
  auto* rx = receiver(src, channel);
  if (!rx) return false;
  reply.type = channel;
  reply.sender = self_;
  auto ack = rx->respond(token, reply, self_);
  if (!ack) return false;
  send_ack(src, channel, *ack, false);
  return true;
}

void Transport::send_ack(NodeId src, MsgType channel, const WireMessage& ack, bool repeat) {
  auto& pacing = ack_pacing_[{src, channel}];
  if (!repeat) pacing = AckPacing{};
  const auto wait = pacing.next - env_.now();
  if (repeat && wait > 0 && wait <= wait_for(pacing.size, 5)) return;
  const auto size = transmit(src, FrameKind::Ack, ack);
  if (!uses_stream(size)) return;
  pacing.size = size;
  pacing.next = env_.now() + wait_for(size, pacing.backoff);
  pacing.backoff = std::min(pacing.backoff + (repeat ? 1u : 0u), 5u);
}

void Transport::on_frame(NodeId src, std::span<const std::uint8_t> frame) {
  stats_.bytes_received += frame.size();
  auto parsed = parse_frame(frame);
  if (!parsed) return;
  auto& [kind, msg] = *parsed;
  switch (kind) {
    case FrameKind::Unreliable: {
      auto& slot = slots_[{src, msg.type}];
      const auto behind = slot.token - msg.token;
      if (behind != 0 && behind <= kReorderWindow && slot.sender.hw == msg.sender.hw) {
        ++stats_.superseded;
        return;
      }
      slot = std::move(msg);
      handler_.on_unreliable(src, slot);
      break;
    }
    case FrameKind::Data: {
      if (msg.type == MsgType::ACK || msg.token > cfg_.cap) return;
      auto it = receivers_.find({src, msg.type});
      if (it == receivers_.end()) {
        // First contact: start one step behind so the arriving token is fresh.
        it = receivers_.emplace(Key{src, msg.type}, ChannelReceiver(cfg_.cap, msg.token + cfg_.cap)).first;
      }
      auto arrival = it->second.on_data(msg, self_);
      if (arrival.ack) send_ack(src, msg.type, *arrival.ack, !arrival.deliver);
      if (!arrival.deliver) return;
      ++stats_.delivered;
      const auto type = msg.type;
      const auto token = msg.token;
      if (auto reply = handler_.on_request(src, msg)) reply_deferred(src, type, token, std::move(*reply));
      break;
    }
    case FrameKind::Ack: {
      auto opened = open_ack(msg);
      if (!opened) return;
      const auto channel = opened->first.channel;
      auto it = senders_.find({src, channel});
      if (it == senders_.end()) return;
      auto result = it->second.chan.on_ack(msg);
      if (result.send) {
        auto& slot = sender_slot(src, channel);
        slot.backoff = 0;
        arm(src, channel, transmit(src, FrameKind::Data, *result.send));
      }
      if (result.reply) handler_.on_reply(src, *result.reply);
      break;
    }
  }
}

void Transport::on_stream_failed(NodeId dst) {
  ++stats_.bulk_timeouts;
  handler_.on_bulk_timeout(dst);
}

const WireMessage* Transport::slot(NodeId src, MsgType type) const {
  auto it = slots_.find({src, type});
  return it == slots_.end() ? nullptr : &it->second;
}

void Transport::corrupt_channels(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> pick(0, cfg_.cap);
  for (auto& [key, slot] : senders_) slot.chan.corrupt(pick(rng));
  for (auto& [key, rx] : receivers_) rx.corrupt(pick(rng));
}

}  // namespace casss
