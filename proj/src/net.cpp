#include "casss/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <thread>

#include "casss/client.hpp"
#include "casss/error.hpp"
#include "casss/scenario.hpp"
#include "casss/server.hpp"

namespace casss {

namespace {

constexpr std::size_t kMaxDatagram = 65507;
constexpr std::size_t kIdPrefix = 4;
constexpr std::size_t kMaxStream = 64u << 20;

sockaddr_in to_sockaddr(const NetAddress& a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(a.port);
  if (inet_pton(AF_INET, a.host.c_str(), &sa.sin_addr) != 1)
    throw Error(ErrorCode::ConfigError, "bad IPv4 address: " + a.host);
  return sa;
}

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL, 0) | O_NONBLOCK); }

Bytes with_prefix(NodeId self, const Bytes& frame) {
  Bytes out(kIdPrefix + frame.size());
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(self >> (24 - 8 * i));
  std::memcpy(out.data() + kIdPrefix, frame.data(), frame.size());
  return out;
}

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const auto w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace

NetAddress parse_address(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "address without port: " + s);
  NetAddress a;
  a.host = s.substr(0, colon);
  unsigned port = 0;
  const auto* b = s.data() + colon + 1;
  const auto* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, port);
  if (ec != std::errc{} || ptr != e || port == 0 || port > 65535) throw Error(ErrorCode::ConfigError, "bad port in: " + s);
  a.port = static_cast<std::uint16_t>(port);
  to_sockaddr(a);
  return a;
}

Micros monotonic_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

NetEnv::NetEnv(std::vector<NetAddress> peers, NodeId self, std::uint64_t seed)
    : peers_(std::move(peers)), self_(self), rng_(seed), inbox_(std::make_shared<Inbox>()) {
  if (self_ >= peers_.size()) throw Error(ErrorCode::ConfigError, "node id outside the peer list");
  const auto sa = to_sockaddr(peers_[self_]);
  const auto where = peers_[self_].host + ":" + std::to_string(peers_[self_].port);
  udp_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  listener_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (udp_ < 0 || listener_ < 0 || ::pipe(wake_) != 0)
    throw Error(ErrorCode::BackendUnavailable, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listener_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  int buf = 4 << 20;
  ::setsockopt(udp_, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  if (::bind(udp_, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0)
    throw Error(ErrorCode::BindError, "udp " + where + ": " + std::strerror(errno));
  if (::bind(listener_, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listener_, 64) != 0)
    throw Error(ErrorCode::BindError, "tcp " + where + ": " + std::strerror(errno));
  set_nonblocking(udp_);
  set_nonblocking(listener_);
  set_nonblocking(wake_[0]);
  set_nonblocking(wake_[1]);
  inbox_->wake_fd = wake_[1];
}

NetEnv::~NetEnv() {
  {
    std::lock_guard lock(inbox_->mu);
    inbox_->open = false;
  }
  for (auto& in : incoming_) ::close(in.fd);
  for (int fd : {udp_, listener_, wake_[0], wake_[1]})
    if (fd >= 0) ::close(fd);
}

void NetEnv::send_datagram(NodeId dst, Bytes frame) {
  if (dst >= peers_.size() || frame.size() + kIdPrefix > kMaxDatagram) return;
  const auto sa = to_sockaddr(peers_[dst]);
  const auto out = with_prefix(self_, frame);
  ::sendto(udp_, out.data(), out.size(), 0, reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
}

void NetEnv::send_stream(NodeId dst, Bytes frame) {
  if (dst >= peers_.size()) return;
  const auto sa = to_sockaddr(peers_[dst]);
  auto data = std::make_shared<Bytes>(with_prefix(self_, frame));
  const auto timeout = stream_timeout;
  // The thread only touches the shared inbox, never the loop itself.
  std::thread([this, inbox = inbox_, sa, data, timeout, dst] {
    bool ok = false;
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd >= 0) {
      timeval tv{static_cast<time_t>(timeout / 1'000'000), static_cast<suseconds_t>(timeout % 1'000'000)};
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      ok = ::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) == 0 && write_all(fd, data->data(), data->size());
      ::shutdown(fd, SHUT_WR);
      ::close(fd);
    }
    if (!ok) {
      std::lock_guard lock(inbox->mu);
      if (!inbox->open) return;
      inbox->posted.push_back([this, dst] {
        if (stream_failed) stream_failed(dst);
      });
      const char c = 1;
      [[maybe_unused]] auto r = ::write(inbox->wake_fd, &c, 1);
    }
  }).detach();
}

void NetEnv::set_timer(Micros delay, std::function<void()> fn) {
  timers_.push(Timer{now() + std::max<Micros>(delay, 0), timer_seq_++, std::move(fn)});
}

void NetEnv::post(std::function<void()> fn) {
  std::lock_guard lock(inbox_->mu);
  inbox_->posted.push_back(std::move(fn));
  const char c = 1;
  [[maybe_unused]] auto r = ::write(wake_[1], &c, 1);
}

void NetEnv::drain_posted() {
  char sink[64];
  while (::read(wake_[0], sink, sizeof sink) > 0) {
  }
  std::vector<std::function<void()>> batch;
  {
    std::lock_guard lock(inbox_->mu);
    batch.swap(inbox_->posted);
  }
  for (auto& fn : batch) fn();
}

void NetEnv::dispatch(std::span<const std::uint8_t> data) {
  if (data.size() < kIdPrefix || !handler_) return;
  const NodeId src = static_cast<NodeId>(data[0]) << 24 | static_cast<NodeId>(data[1]) << 16 |
                     static_cast<NodeId>(data[2]) << 8 | data[3];
  if (src >= peers_.size()) return;
  handler_(src, data.subspan(kIdPrefix));
}

void NetEnv::read_datagrams() {
  std::vector<std::uint8_t> buf(kMaxDatagram + 1);
  while (true) {
    const auto n = ::recv(udp_, buf.data(), buf.size(), 0);
    if (n < 0) return;
    dispatch(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
  }
}

void NetEnv::accept_streams() {
  while (true) {
    const int fd = ::accept(listener_, nullptr, nullptr);
    if (fd < 0) return;
    set_nonblocking(fd);
    incoming_.push_back(Incoming{fd, {}});
  }
}

bool NetEnv::read_stream(Incoming& in) {
  std::uint8_t chunk[64 * 1024];
  while (true) {
    const auto n = ::recv(in.fd, chunk, sizeof chunk, 0);
    if (n > 0) {
      in.buf.insert(in.buf.end(), chunk, chunk + n);
      if (in.buf.size() > kMaxStream) return true;
      continue;
    }
    if (n == 0) {
      dispatch(in.buf);
      return true;
    }
    return errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR;
  }
}

void NetEnv::run(const std::atomic<bool>& stop, const std::function<bool()>& until) {
  std::vector<pollfd> fds;
  while (!stop.load() && !(until && until())) {
    Micros wait = 50 * kMillis;
    if (!timers_.empty()) wait = std::clamp<Micros>(timers_.top().at - now(), 0, wait);
    fds.clear();
    fds.push_back({udp_, POLLIN, 0});
    fds.push_back({listener_, POLLIN, 0});
    fds.push_back({wake_[0], POLLIN, 0});
    for (const auto& in : incoming_) fds.push_back({in.fd, POLLIN, 0});
    const int ready = ::poll(fds.data(), fds.size(), static_cast<int>((wait + 999) / 1000));
    if (ready > 0) {
      if (fds[0].revents) read_datagrams();
      if (fds[1].revents) accept_streams();
      if (fds[2].revents) drain_posted();
      std::vector<Incoming> keep;
      for (std::size_t i = 0; i < incoming_.size(); ++i) {
        auto& in = incoming_[i];
        if (i + 3 < fds.size() && fds[i + 3].revents && read_stream(in)) {
          ::close(in.fd);
        } else {
          keep.push_back(std::move(in));
        }
      }
      incoming_ = std::move(keep);
    }
    const auto t = now();
    while (!timers_.empty() && timers_.top().at <= t) {
      auto fn = timers_.top().fn;
      timers_.pop();
      fn();
    }
  }
}

NodeOptions net_node_options(const QuorumConfig& q) {
  NodeOptions o;
  o.quorum = q;
  o.transport.retransmit_timeout = 200 * kMillis;
  o.transport.stream_bandwidth = 200e6;
  o.gossip_period = 100 * kMillis;
  o.initial_rtt = 20 * kMillis;
  o.incarnation_period = 50;
  return o;
}

namespace {

std::vector<NetAddress> peer_list(const QuorumConfig& q) {
  std::vector<NetAddress> out;
  for (const auto& s : q.servers) out.push_back(parse_address(s));
  for (const auto& c : q.clients) out.push_back(parse_address(c));
  return out;
}

Bytes make_value(std::mt19937_64& rng, std::size_t size, std::uint32_t client, std::uint64_t counter) {
  Bytes v(std::max<std::size_t>(size, 16));
  for (int b = 0; b < 8; ++b) {
    v[b] = static_cast<std::uint8_t>(counter >> (8 * b));
    v[8 + b] = static_cast<std::uint8_t>(static_cast<std::uint64_t>(client) >> (8 * b));
  }
  for (std::size_t i = 16; i < v.size(); ++i) v[i] = static_cast<std::uint8_t>(rng());
  return v;
}

/// Scripted client over the network: sequential operations separated by a delay
/// drawn from uniform(0, 2 x the running mean latency).
class NetClient {
 public:
  NetClient(NetEnv& env, const ScenarioConfig& sc, const NodeOptions& opt, std::uint32_t index, std::string mode)
      : env_(env), sc_(sc), index_(index), mode_(std::move(mode)), rng_(sc.seed * 1'000'003 + index) {
    ClientNode::Hooks h;
    h.on_query_done = [this](Micros at, std::uint32_t epoch) {
      if (epoch > boot_epoch_ && !new_epoch_at_) new_epoch_at_ = at;
    };
    node_ = std::make_unique<ClientNode>(env_, opt, index, std::move(h));
    env_.attach([this](NodeId src, std::span<const std::uint8_t> f) { node_->on_frame(src, f); });
  }

  void start() {
    node_->boot([this] {
      boot_epoch_ = node_->epoch();
      if (index_ == 0 && mode_ == "ops") {
        node_->write(make_value(rng_, sc_.object_size, index_, ++counter_), [this](const OpResult&) { next(); });
      } else {
        env_.set_timer(index_ == 0 ? 0 : 500 * kMillis, [this] { next(); });
      }
    });
  }

  bool done() const { return done_; }

  void write_log(const std::string& path) const {
    Metrics m;
    m.ops = ops_;
    std::ofstream out(path);
    out << m.ops_csv();
    if (new_epoch_at_) std::ofstream(path + ".events") << "new_epoch_query_us," << *new_epoch_at_ << '\n';
  }

 private:
  void next() {
    if (mode_ == "reset") return next_reset();
    if (issued_ >= sc_.ops_per_client) {
      done_ = true;
      return;
    }
    ++issued_;
    OpKind kind = OpKind::Read;
    if (index_ < sc_.writers) {
      kind = OpKind::Write;
    } else if (index_ >= sc_.writers + sc_.readers) {
      kind = rng_() % 2 == 0 ? OpKind::Write : OpKind::Read;
    }
    run(kind, std::nullopt, [this] { pause_then_next(); });
  }

  void next_reset() {
    // Client 0 writes `ops_per_client` times, then forces the overflow; others read until a new epoch shows.
    if (index_ == 0) {
      if (issued_ < sc_.ops_per_client) {
        ++issued_;
        return run(OpKind::Write, std::nullopt, [this] { next(); });
      }
      run(OpKind::Write, sc_.quorum.maxint, [this] { done_ = true; });
      return;
    }
    if (new_epoch_at_) {
      done_ = true;
      return;
    }
    run(OpKind::Read, std::nullopt, [this] { env_.set_timer(5 * kMillis, [this] { next(); }); });
  }

  void pause_then_next() {
    const double mean = total_latency_ / static_cast<double>(std::max<std::size_t>(ops_.size(), 1));
    const auto delay = std::uniform_int_distribution<Micros>(0, static_cast<Micros>(2 * mean))(rng_);
    env_.set_timer(delay, [this] { next(); });
  }

  void run(OpKind kind, std::optional<std::uint64_t> seq, std::function<void()> then) {
    auto cb = [this, seq, then = std::move(then)](const OpResult& r) {
      OpMetrics m;
      m.client = index_;
      m.life = 1;
      m.kind = r.kind;
      m.outcome = r.outcome;
      m.invoke = r.invoked;
      m.respond = r.responded;
      m.rounds = r.rounds;
      m.restarts = r.restarts;
      m.timeouts = r.timeouts;
      m.bytes = r.bytes;
      m.tag = r.tag;
      m.forced = seq.has_value();
      ops_.push_back(m);
      total_latency_ += static_cast<double>(r.responded - r.invoked);
      then();
    };
    if (kind == OpKind::Read) {
      node_->read(std::move(cb));
    } else if (seq) {
      node_->write_with_seq(make_value(rng_, sc_.object_size, index_, ++counter_), *seq, std::move(cb));
    } else {
      node_->write(make_value(rng_, sc_.object_size, index_, ++counter_), std::move(cb));
    }
  }

  NetEnv& env_;
  ScenarioConfig sc_;
  std::uint32_t index_;
  std::string mode_;
  std::mt19937_64 rng_;
  std::unique_ptr<ClientNode> node_;
  std::uint32_t boot_epoch_ = 0;
  std::optional<Micros> new_epoch_at_;
  std::uint32_t issued_ = 0;
  std::uint64_t counter_ = 0;
  double total_latency_ = 0;
  std::vector<OpMetrics> ops_;
  bool done_ = false;
};

}  // namespace

int serve_node(const NodeProcessOptions& opt, const std::atomic<bool>& stop) {
  const auto sc = scenario_from_config(opt.config);
  auto q = opt.config.quorum;
  if (q.n_clients == 0) q.n_clients = static_cast<std::uint32_t>(q.clients.size());
  validate(q);
  const auto node_opt = net_node_options(q);
  const auto peers = peer_list(q);
  if (opt.role == "server") {
    if (opt.index >= q.n()) throw Error(ErrorCode::ConfigError, "server index out of range");
    NetEnv env(peers, server_node(opt.index), sc.seed + opt.index);
    ServerNode server(env, node_opt, opt.index);
    env.attach([&](NodeId src, std::span<const std::uint8_t> f) { server.on_frame(src, f); });
    server.start();
    env.run(stop);
    return 0;
  }
  if (opt.role == "client") {
    if (opt.index >= q.clients.size()) throw Error(ErrorCode::ConfigError, "client index out of range");
    if (opt.mode != "ops" && opt.mode != "reset") throw Error(ErrorCode::ConfigError, "unknown client mode " + opt.mode);
    NetEnv env(peers, client_node(q, opt.index), sc.seed + 1000 + opt.index);
    NetClient client(env, sc, node_opt, opt.index, opt.mode);
    client.start();
    env.run(stop, [&] { return client.done(); });
    if (!opt.out_path.empty()) client.write_log(opt.out_path);
    return client.done() ? 0 : 2;
  }
  throw Error(ErrorCode::ConfigError, "role must be server or client");
}

}  // namespace casss
