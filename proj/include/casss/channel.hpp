#pragma once

#include <cstdint>
#include <deque>
#include <optional>

#include "casss/wire.hpp"

namespace casss {

/// Stop-and-wait token passing over a lossy, duplicating, reordering link.
///
/// The sender owns a counter in [0, cap] and attaches it to the message it
/// holds. The receiver remembers the last counter it accepted. A counter up
/// to ceil(cap/2) steps ahead of it is fresh and delivered once; the current
/// counter is a duplicate and re-acknowledged; anything behind is stale and
/// answered with the receiver's counter, letting a sender whose counter was
/// corrupted into the stale zone jump ahead. The sender advances modulo cap+1
/// only when its own counter comes back acknowledged. There is no resend on
/// arbitrary arrivals: retransmission happens on timeout only.
class ChannelSender {
 public:
  enum class Outbox { LatestOnly, Fifo };

  ChannelSender(std::uint64_t cap, Outbox policy, std::size_t fifo_limit = 64);

  /// Queues `m`. Returns the frame to transmit now if the channel was idle.
  std::optional<WireMessage> submit(WireMessage m);

  struct AckResult {
    std::optional<WireMessage> reply;  // the receiver's response, on token arrival
    std::optional<WireMessage> send;   // next (or re-synchronised) frame to transmit
  };
  AckResult on_ack(const WireMessage& ack);

  /// Retransmission of the held message, if any, carrying the current counter.
  std::optional<WireMessage> on_timeout();

  bool busy() const { return current_.has_value(); }
  std::uint64_t counter() const { return counter_; }
  std::uint64_t cap() const { return cap_; }
  std::size_t queued() const { return outbox_.size(); }

  void corrupt(std::uint64_t counter) { counter_ = counter % (cap_ + 1); }

 private:
  std::optional<WireMessage> start_next();

  std::uint64_t cap_;
  Outbox policy_;
  std::size_t fifo_limit_;
  std::uint64_t counter_ = 0;
  std::optional<WireMessage> current_;
  std::deque<WireMessage> outbox_;
};

class ChannelReceiver {
 public:
  ChannelReceiver(std::uint64_t cap, std::uint64_t counter) : cap_(cap), counter_(counter % (cap + 1)) {}

  enum class Verdict { Fresh, Duplicate, Stale };
  Verdict classify(std::uint64_t token) const;

  struct Arrival {
    bool deliver = false;              // hand the message to the application
    std::optional<WireMessage> ack;    // frame to send back immediately
  };
  Arrival on_data(const WireMessage& m, const Uid& self);

  /// Completes the current token with `reply`. Returns the ACK to send, or
  /// nothing if the token has moved on since the message was delivered.
  std::optional<WireMessage> respond(std::uint64_t token, const WireMessage& reply, const Uid& self);

  std::uint64_t counter() const { return counter_; }
  std::uint64_t window() const { return (cap_ + 1) / 2; }
  /// Delivered and still waiting for the application's reply.
  bool awaiting() const { return awaiting_; }
  bool holds_ack() const { return last_ack_.has_value(); }
  void corrupt(std::uint64_t counter) {
    counter_ = counter % (cap_ + 1);
    last_ack_.reset();
    awaiting_ = false;
  }

 private:
  std::uint64_t cap_;
  std::uint64_t counter_;
  std::optional<WireMessage> last_ack_;
  bool awaiting_ = false;
};

WireMessage make_ack(MsgType channel, AckStatus status, std::uint64_t token, std::uint64_t receiver_counter,
                     const WireMessage* reply, const Uid& self);

/// Splits an ACK into its header and the embedded reply (typed as the channel's message type).
std::optional<std::pair<AckHeader, WireMessage>> open_ack(const WireMessage& ack);

}  // namespace casss
