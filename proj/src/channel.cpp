#include "casss/channel.hpp"

namespace casss {

ChannelSender::ChannelSender(std::uint64_t cap, Outbox policy, std::size_t fifo_limit)
    : cap_(cap), policy_(policy), fifo_limit_(fifo_limit) {}

std::optional<WireMessage> ChannelSender::submit(WireMessage m) {
  if (policy_ == Outbox::LatestOnly) outbox_.clear();
  if (policy_ == Outbox::Fifo && outbox_.size() >= fifo_limit_) outbox_.pop_front();
  outbox_.push_back(std::move(m));
  if (current_) return std::nullopt;
  return start_next();
}

std::optional<WireMessage> ChannelSender::start_next() {
  if (outbox_.empty()) return std::nullopt;
  current_ = std::move(outbox_.front());
  outbox_.pop_front();
  current_->token = counter_;
  return current_;
}

ChannelSender::AckResult ChannelSender::on_ack(const WireMessage& ack) {
  AckResult out;
  if (!current_ || ack.token != counter_) return out;
  auto opened = open_ack(ack);
  if (!opened || opened->first.channel != current_->type) return out;
  const auto& [hdr, reply] = *opened;
  if (hdr.status == AckStatus::Stale) {
    // Our counter sits behind the receiver's: skip past it and resend.
    counter_ = (hdr.receiver_counter + 1) % (cap_ + 1);
    current_->token = counter_;
    out.send = current_;
    return out;
  }
  out.reply = reply;
  current_.reset();
  counter_ = (counter_ + 1) % (cap_ + 1);
  out.send = start_next();
  return out;
}

std::optional<WireMessage> ChannelSender::on_timeout() {
  // Re-stamp so a corrupted token cannot outlive the counter it came from.
  if (current_) current_->token = counter_;
  return current_;
}

ChannelReceiver::Verdict ChannelReceiver::classify(std::uint64_t token) const {
  const auto m = cap_ + 1;
  const auto d = (token % m + m - counter_) % m;
  if (d == 0) return Verdict::Duplicate;
  if (d <= window()) return Verdict::Fresh;
  return Verdict::Stale;
}

ChannelReceiver::Arrival ChannelReceiver::on_data(const WireMessage& m, const Uid& self) {
  Arrival out;
  if (m.token > cap_) return out;
  switch (classify(m.token)) {
    case Verdict::Fresh:
      counter_ = m.token;
      last_ack_.reset();
      awaiting_ = true;
      out.deliver = true;
      break;
    case Verdict::Duplicate:
      if (last_ack_) {
        out.ack = last_ack_;
      } else if (!awaiting_) {
        // Nothing was delivered under this counter (corrupted start): push the sender past it.
        out.ack = make_ack(m.type, AckStatus::Stale, m.token, counter_, nullptr, self);
      }
      break;
    case Verdict::Stale:
      out.ack = make_ack(m.type, AckStatus::Stale, m.token, counter_, nullptr, self);
      break;
  }
  return out;
}

std::optional<WireMessage> ChannelReceiver::respond(std::uint64_t token, const WireMessage& reply, const Uid& self) {
  if (token != counter_ || last_ack_ || !awaiting_) return std::nullopt;
  awaiting_ = false;
  last_ack_ = make_ack(reply.type, AckStatus::Delivered, token, counter_, &reply, self);
  return last_ack_;
}

WireMessage make_ack(MsgType channel, AckStatus status, std::uint64_t token, std::uint64_t receiver_counter,
                     const WireMessage* reply, const Uid& self) {
  WireMessage ack;
  ack.type = MsgType::ACK;
  ack.token = token;
  ack.sender = self;
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(channel));
  w.u64(static_cast<std::uint64_t>(status));
  w.u64(receiver_counter);
  if (reply) {
    ack.tag = reply->tag;
    ack.phase = reply->phase;
    ack.element = reply->element;
    w.bytes(reply->payload);
  } else {
    w.bytes({});
  }
  ack.payload = w.take();
  return ack;
}

std::optional<std::pair<AckHeader, WireMessage>> open_ack(const WireMessage& ack) {
  if (ack.type != MsgType::ACK) return std::nullopt;
  ByteReader r(ack.payload);
  std::uint64_t channel = 0, status = 0;
  AckHeader h;
  WireMessage reply;
  if (!r.u64(channel) || channel >= kMsgTypeCount || channel == static_cast<std::uint64_t>(MsgType::ACK) ||
      !r.u64(status) || status > 1 || !r.u64(h.receiver_counter) || !r.bytes(reply.payload) || !r.done()) {
    return std::nullopt;
  }
  h.channel = static_cast<MsgType>(channel);
  h.status = static_cast<AckStatus>(status);
  reply.type = h.channel;
  reply.token = ack.token;
  reply.tag = ack.tag;
  reply.phase = ack.phase;
  reply.element = ack.element;
  reply.sender = ack.sender;
  return std::make_pair(h, std::move(reply));
}

}  // namespace casss
