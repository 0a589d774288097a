#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "casss/config.hpp"
#include "casss/node.hpp"
#include "casss/transport.hpp"

namespace casss {

struct NetAddress {
  std::string host;
  std::uint16_t port = 0;
};

/// "host:port" with a dotted IPv4 host. Throws ConfigError.
NetAddress parse_address(const std::string& s);

/// Microseconds on the host's monotonic clock; comparable across processes.
Micros monotonic_micros();

/// Env over real sockets. Datagrams go over UDP and each stream frame over its
/// own TCP connection, both on the node's configured port. Frames are prefixed
/// with the sender's node id. Single-threaded except for outgoing streams, which
/// run on short-lived threads and report failures back through post().
class NetEnv : public Env {
 public:
  using FrameHandler = std::function<void(NodeId src, std::span<const std::uint8_t> frame)>;

  /// `peers` lists servers then clients, indexed by NodeId. Throws BindError.
  NetEnv(std::vector<NetAddress> peers, NodeId self, std::uint64_t seed);
  ~NetEnv() override;
  NetEnv(const NetEnv&) = delete;
  NetEnv& operator=(const NetEnv&) = delete;

  Micros now() const override { return monotonic_micros(); }
  void send_datagram(NodeId dst, Bytes frame) override;
  void send_stream(NodeId dst, Bytes frame) override;
  void set_timer(Micros delay, std::function<void()> fn) override;
  std::mt19937_64& rng() override { return rng_; }

  void attach(FrameHandler h) { handler_ = std::move(h); }
  /// Thread-safe; `fn` runs on the loop.
  void post(std::function<void()> fn);
  /// Processes sockets and timers until `stop` becomes true or `until` returns true.
  void run(const std::atomic<bool>& stop, const std::function<bool()>& until = nullptr);

  Micros stream_timeout = 2000 * kMillis;

 private:
  struct Timer {
    Micros at;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Timer& a, const Timer& b) const { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }
  };
  struct Incoming {
    int fd;
    Bytes buf;
  };

  void read_datagrams();
  void accept_streams();
  bool read_stream(Incoming& in);
  void drain_posted();
  void dispatch(std::span<const std::uint8_t> data);

  std::vector<NetAddress> peers_;
  NodeId self_;
  std::mt19937_64 rng_;
  int udp_ = -1;
  int listener_ = -1;
  int wake_[2] = {-1, -1};
  std::vector<Incoming> incoming_;
  std::priority_queue<Timer, std::vector<Timer>, Later> timers_;
  std::uint64_t timer_seq_ = 0;
  FrameHandler handler_;
  /// Shared with outgoing stream threads, which may outlive the loop.
  struct Inbox {
    std::mutex mu;
    bool open = true;
    int wake_fd = -1;
    std::vector<std::function<void()>> posted;
  };
  std::shared_ptr<Inbox> inbox_;
};

/// Long-running node process over the network back-end. Servers run until `stop`;
/// clients run the scripted workload from the config (`scenario.*` keys), write
/// their operation log to `out_path` and return. A stop request makes a client
/// write what it has so far. Returns 0 on success.
struct NodeProcessOptions {
  std::string role;  // server | client
  std::uint32_t index = 0;
  ConfigFile config;
  std::string out_path;
  /// Client workload mode: "ops" (scripted reads/writes) or "reset" (the
  /// writer forces an overflow tag after `warmup` writes; the reader reads
  /// until a query completes in a new epoch).
  std::string mode = "ops";
};
int serve_node(const NodeProcessOptions& opt, const std::atomic<bool>& stop);

/// Node options used over real links.
NodeOptions net_node_options(const QuorumConfig& q);

}  // namespace casss
