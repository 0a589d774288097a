#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>

#include "casss/channel.hpp"
#include "casss/wire.hpp"

namespace casss {

using NodeId = std::uint32_t;
using Micros = std::int64_t;

inline constexpr Micros kMillis = 1000;

/// What a node needs from its back-end: a clock, two ways to move frames, and timers.
/// Callbacks run on the node's single event loop.
class Env {
 public:
  virtual ~Env() = default;
  virtual Micros now() const = 0;
  virtual void send_datagram(NodeId dst, Bytes frame) = 0;
  /// Reliable, ordered delivery of one frame over a per-transfer stream.
  virtual void send_stream(NodeId dst, Bytes frame) = 0;
  virtual void set_timer(Micros delay, std::function<void()> fn) = 0;
  virtual std::mt19937_64& rng() = 0;

  /// Installed by the transport; the back-end calls it when a stream transfer fails.
  std::function<void(NodeId)> stream_failed;
};

inline constexpr std::uint64_t kReorderWindow = 64;

struct TransportConfig {
  std::uint64_t cap = 8;
  Micros retransmit_timeout = 100 * kMillis;
  std::size_t bulk_threshold = 8 * 1024;
  std::size_t fifo_limit = 64;
  /// Expected stream throughput in bytes per second. A frame sent over a stream
  /// waits twice its transfer time on top of retransmit_timeout, and the wait
  /// doubles on each repeat, so large frames are not resent while still in transit.
  double stream_bandwidth = 10e6;
};

struct TrafficStats {
  /// Messages handed to send_reliable / send_unreliable, before retransmission.
  std::array<std::uint64_t, kMsgTypeCount> messages_sent{};
  std::array<std::uint64_t, kMsgTypeCount> frames_sent{};
  std::array<std::uint64_t, kMsgTypeCount> bytes_sent{};
  std::uint64_t bytes_received = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t bulk_transfers = 0;
  std::uint64_t bulk_timeouts = 0;
  std::uint64_t delivered = 0;
  std::uint64_t superseded = 0;  // unreliable arrivals older than the held slot

  std::uint64_t total_bytes_sent() const;
};

/// Per-node messaging: one token-passing channel per (peer, message type) in
/// each direction, a single overwrite slot per (peer, type) for unreliable
/// traffic, and size-based routing of large frames onto streams.
class Transport {
 public:
  class Handler {
   public:
    virtual ~Handler() = default;
    /// A reliable message delivered once per token. Returning nothing defers the
    /// reply; complete it later with reply_deferred(src, m.type, m.token, ...).
    virtual std::optional<WireMessage> on_request(NodeId src, const WireMessage& m) = 0;
    virtual void on_reply(NodeId src, const WireMessage& reply) = 0;
    virtual void on_unreliable(NodeId src, const WireMessage& m) = 0;
    virtual void on_bulk_timeout(NodeId) {}
  };

  Transport(Env& env, Handler& handler, Uid self, TransportConfig cfg);

  void send_reliable(NodeId dst, WireMessage m);
  void send_unreliable(NodeId dst, WireMessage m);
  bool reply_deferred(NodeId src, MsgType channel, std::uint64_t token, WireMessage reply);

  void on_frame(NodeId src, std::span<const std::uint8_t> frame);
  void on_stream_failed(NodeId dst);

  /// Latest unreliable message of `type` received from `src`. Unreliable frames
  /// carry a per-destination sequence number in `token`; an arrival up to
  /// kReorderWindow behind the held one is older and does not overwrite it.
  const WireMessage* slot(NodeId src, MsgType type) const;

  bool uses_stream(std::size_t frame_size) const { return frame_size > cfg_.bulk_threshold; }

  const TrafficStats& stats() const { return stats_; }
  const TransportConfig& config() const { return cfg_; }
  void set_self(const Uid& u) { self_ = u; }

  ChannelSender& sender(NodeId dst, MsgType type);
  ChannelReceiver* receiver(NodeId src, MsgType type);
  void corrupt_channels(std::mt19937_64& rng);

 private:
  using Key = std::pair<NodeId, MsgType>;

  struct SenderSlot {
    ChannelSender chan;
    /// Bumped on every transmission; a timer only fires for the generation that armed it.
    std::uint64_t generation = 0;
    /// Retransmissions of the current frame over a stream.
    unsigned backoff = 0;
  };

  SenderSlot& sender_slot(NodeId dst, MsgType type);
  /// Returns the frame size.
  std::size_t transmit(NodeId dst, FrameKind kind, const WireMessage& m);
  void arm(NodeId dst, MsgType type, std::size_t frame_size);
  Micros wait_for(std::size_t frame_size, unsigned backoff) const;
  void send_ack(NodeId src, MsgType channel, const WireMessage& ack, bool repeat);

  Env& env_;
  Handler& handler_;
  Uid self_;
  TransportConfig cfg_;
  std::map<Key, SenderSlot> senders_;
  std::map<Key, ChannelReceiver> receivers_;
  std::map<Key, WireMessage> slots_;
  std::map<Key, std::uint64_t> unreliable_seq_;
  struct AckPacing {
    Micros next = 0;
    unsigned backoff = 0;
    std::size_t size = 0;
  };
  /// Stream-sized acks are repeated for duplicates only once their transfer had time to finish.
  std::map<Key, AckPacing> ack_pacing_;
  TrafficStats stats_;
};

}  // namespace casss
