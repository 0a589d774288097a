#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <span>
#include <vector>

#include "casss/transport.hpp"

namespace casss {

/// Per-link fault and delay model. One-way latency is triangular(min, mode, max)
/// plus size / bandwidth; frames on one link share its bandwidth in FIFO order.
struct LinkModel {
  double loss = 0.0;
  double dup = 0.0;
  /// Probability that a datagram is held back by up to reorder_window.
  double reorder = 0.0;
  Micros reorder_window = 30 * kMillis;
  Micros lat_min = 15 * kMillis;
  Micros lat_mode = 25 * kMillis;
  Micros lat_max = 40 * kMillis;
  double bandwidth = 10e6;  // bytes per second
  Micros bulk_timeout = 1000 * kMillis;
};

/// Throws ConfigError for probabilities outside their ranges (loss must stay below 1).
void validate(const LinkModel& link);

/// Deterministic discrete-event network simulator. Single-threaded; the
/// event order is a function of the seed alone.
class Simulator {
 public:
  using FrameHandler = std::function<void(NodeId src, std::span<const std::uint8_t> frame)>;

  Simulator(std::uint64_t seed, LinkModel link);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  NodeId add_node();
  Env& env(NodeId id);
  void attach(NodeId id, FrameHandler handler);

  /// Stops delivering events to the node and invalidates its timers.
  void crash(NodeId id);
  /// Brings the node back with a new boot count. The caller attaches a fresh handler.
  void restart(NodeId id);
  bool up(NodeId id) const;
  std::uint64_t boots(NodeId id) const;

  /// Frames addressed to a crashed node are kept and delivered after its restart.
  void hold_frames_while_down(bool on) { hold_while_down_ = on; }

  void schedule(Micros at, std::function<void()> fn);
  Micros now() const { return now_; }
  bool step();
  void run_until(Micros t);
  /// Runs while `keep_going` holds and events remain, up to time `limit`.
  void run_while(const std::function<bool()>& keep_going, Micros limit);

  std::mt19937_64& rng() { return rng_; }
  const LinkModel& link() const { return link_; }

  struct Stats {
    std::uint64_t frames = 0;
    std::uint64_t bytes = 0;
    std::uint64_t lost = 0;
    std::uint64_t duplicated = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_down = 0;
    std::uint64_t held = 0;
    std::uint64_t streams = 0;
    std::uint64_t events = 0;
  };
  const Stats& stats() const { return stats_; }

 private:
  class NodeEnv;
  struct Event {
    Micros at;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }
  };
  struct Node {
    std::unique_ptr<NodeEnv> env;
    FrameHandler handler;
    bool up = true;
    std::uint64_t boot = 0;
    std::vector<std::pair<NodeId, Bytes>> held;
  };

  void transmit(NodeId src, NodeId dst, Bytes frame, bool stream);
  void deliver(NodeId src, NodeId dst, const Bytes& frame);
  Micros sample_latency();

  std::mt19937_64 rng_;
  LinkModel link_;
  Micros now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<Node> nodes_;
  std::map<std::pair<NodeId, NodeId>, Micros> link_free_;
  std::map<std::pair<NodeId, NodeId>, Micros> link_last_;
  bool hold_while_down_ = false;
  Stats stats_;
};

}  // namespace casss
