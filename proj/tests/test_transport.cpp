#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "casss/error.hpp"
#include "casss/sim.hpp"
#include "casss/transport.hpp"
#include "doctest.h"

using namespace casss;

namespace {

// Records every request delivered to it and answers with the same payload.
struct Echo : Transport::Handler {
  std::map<std::uint64_t, int> delivered;  // message id -> deliveries
  std::vector<std::uint64_t> order;
  std::vector<std::uint64_t> replies;
  std::vector<WireMessage> unreliable;
  std::vector<NodeId> bulk_timeouts;

  static std::uint64_t id(const WireMessage& m) {
    ByteReader r(m.payload);
    std::uint64_t v = 0;
    r.u64(v);
    return v;
  }

  std::optional<WireMessage> on_request(NodeId, const WireMessage& m) override {
    ++delivered[id(m)];
    order.push_back(id(m));
    WireMessage reply;
    reply.payload = m.payload;
    return reply;
  }
  void on_reply(NodeId, const WireMessage& r) override { replies.push_back(id(r)); }
  void on_unreliable(NodeId, const WireMessage& m) override { unreliable.push_back(m); }
  void on_bulk_timeout(NodeId dst) override { bulk_timeouts.push_back(dst); }
};

WireMessage numbered(std::uint64_t id, MsgType type = MsgType::PREWRITE) {
  WireMessage m;
  m.type = type;
  ByteWriter w;
  w.u64(id);
  m.payload = w.take();
  return m;
}

struct Pair {
  Simulator sim;
  Echo ha, hb;
  std::unique_ptr<Transport> a, b;

  Pair(std::uint64_t seed, LinkModel link, TransportConfig tc = {}) : sim(seed, link) {
    const auto na = sim.add_node();
    const auto nb = sim.add_node();
    a = std::make_unique<Transport>(sim.env(na), ha, Uid{HwAddr::from_u64(1), 0}, tc);
    b = std::make_unique<Transport>(sim.env(nb), hb, Uid{HwAddr::from_u64(2), 0}, tc);
    sim.attach(na, [this](NodeId src, std::span<const std::uint8_t> f) { a->on_frame(src, f); });
    sim.attach(nb, [this](NodeId src, std::span<const std::uint8_t> f) { b->on_frame(src, f); });
  }
};

// A back-end that only records what it is asked to do.
struct FakeEnv : Env {
  Micros t = 0;
  std::vector<std::pair<NodeId, Bytes>> datagrams;
  std::vector<std::pair<NodeId, Bytes>> streams;
  std::mt19937_64 gen{5};
  Micros now() const override { return t; }
  void send_datagram(NodeId dst, Bytes f) override { datagrams.emplace_back(dst, std::move(f)); }
  void send_stream(NodeId dst, Bytes f) override { streams.emplace_back(dst, std::move(f)); }
  void set_timer(Micros, std::function<void()>) override {}
  std::mt19937_64& rng() override { return gen; }
};

std::uint64_t fnv(const Bytes& b) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto x : b) h = (h ^ x) * 1099511628211ULL;
  return h;
}

}  // namespace

TEST_CASE("lossless reliable send takes one round trip") {
  LinkModel link;
  link.lat_min = link.lat_mode = link.lat_max = 20 * kMillis;
  Pair p(1, link);
  p.a->send_reliable(1, numbered(7));
  p.sim.run_until(10'000 * kMillis);
  CHECK(p.hb.delivered[7] == 1);
  CHECK(p.ha.replies == std::vector<std::uint64_t>{7});
  CHECK(p.sim.stats().frames == 2);
  CHECK(p.a->sender(1, MsgType::PREWRITE).counter() == 1);
  CHECK(p.a->stats().retransmissions == 0);
}

TEST_CASE("reliable delivery is exactly once under heavy loss, duplication and reordering") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LinkModel link;
    link.loss = 0.5;
    link.dup = 0.2;
    link.reorder = 0.5;
    Pair p(seed, link);
    constexpr std::uint64_t kCount = 150;
    std::uint64_t next = 1;
    p.a->send_reliable(1, numbered(next));
    while (p.sim.step()) {
      if (p.ha.replies.size() == next && next < kCount) p.a->send_reliable(1, numbered(++next));
      if (p.ha.replies.size() == kCount) break;
    }
    REQUIRE(p.ha.replies.size() == kCount);
    for (std::uint64_t i = 1; i <= kCount; ++i) {
      CHECK(p.hb.delivered[i] == 1);
      CHECK(p.ha.replies[i - 1] == i);
    }
    CHECK(std::is_sorted(p.hb.order.begin(), p.hb.order.end()));
    CHECK(p.sim.stats().lost > 0);
    CHECK(p.sim.stats().duplicated > 0);
    CHECK(p.a->stats().retransmissions > 0);
  }
}

TEST_CASE("channels of different message types are independent") {
  Pair p(2, LinkModel{});
  p.a->send_reliable(1, numbered(1, MsgType::QUERY));
  p.a->send_reliable(1, numbered(2, MsgType::GOSSIP));
  p.a->send_reliable(1, numbered(3, MsgType::FINREAD));
  p.sim.run_until(10'000 * kMillis);
  CHECK(p.hb.delivered.size() == 3);
  CHECK(p.ha.replies.size() == 3);
}

TEST_CASE("unreliable slot keeps the later of two reordered messages") {
  FakeEnv env_a, env_b;
  Echo ha, hb;
  Transport a(env_a, ha, Uid{HwAddr::from_u64(1), 0}, {});
  Transport b(env_b, hb, Uid{HwAddr::from_u64(2), 0}, {});
  a.send_unreliable(1, numbered(1, MsgType::GOSSIP));
  a.send_unreliable(1, numbered(2, MsgType::GOSSIP));
  REQUIRE(env_a.datagrams.size() == 2);
  b.on_frame(0, env_a.datagrams[1].second);
  b.on_frame(0, env_a.datagrams[0].second);  // the first one, delayed
  REQUIRE(b.slot(0, MsgType::GOSSIP));
  CHECK(Echo::id(*b.slot(0, MsgType::GOSSIP)) == 2);
  CHECK(hb.unreliable.size() == 1);
  CHECK(b.stats().superseded == 1);
}

TEST_CASE("unreliable slot is empty without traffic and idempotent under duplication") {
  FakeEnv env_a, env_b;
  Echo ha, hb;
  Transport a(env_a, ha, Uid{HwAddr::from_u64(1), 0}, {});
  Transport b(env_b, hb, Uid{HwAddr::from_u64(2), 0}, {});
  CHECK(b.slot(0, MsgType::GOSSIP) == nullptr);
  a.send_unreliable(1, numbered(4, MsgType::GOSSIP));
  b.on_frame(0, env_a.datagrams[0].second);
  b.on_frame(0, env_a.datagrams[0].second);
  REQUIRE(b.slot(0, MsgType::GOSSIP));
  CHECK(Echo::id(*b.slot(0, MsgType::GOSSIP)) == 4);
}

TEST_CASE("a corrupted slot blocks at most the reorder window") {
  FakeEnv env_a, env_b;
  Echo ha, hb;
  Transport a(env_a, ha, Uid{HwAddr::from_u64(1), 0}, {});
  Transport b(env_b, hb, Uid{HwAddr::from_u64(2), 0}, {});
  // Prime the slot with a message far ahead of what `a` will send next.
  auto ahead = numbered(0, MsgType::GOSSIP);
  ahead.sender = Uid{HwAddr::from_u64(1), 0};
  for (std::uint64_t i = 0; i < 200; ++i) a.send_unreliable(1, numbered(i, MsgType::GOSSIP));
  auto first = parse_frame(env_a.datagrams.front().second)->second;
  ahead.token = first.token + kReorderWindow;
  b.on_frame(0, make_frame(FrameKind::Unreliable, ahead));
  for (const auto& [dst, f] : env_a.datagrams) b.on_frame(0, f);
  CHECK(Echo::id(*b.slot(0, MsgType::GOSSIP)) == 199);
  CHECK(b.stats().superseded <= kReorderWindow);
}

TEST_CASE("large frames go over streams and arrive intact") {
  LinkModel link;
  link.loss = 0.3;
  Pair p(3, link);
  std::mt19937_64 rng(9);
  auto m = numbered(1);
  Bytes element(1 << 20);
  for (auto& x : element) x = static_cast<std::uint8_t>(rng());
  m.element = element;
  Bytes got;
  struct Capture : Echo {
    Bytes* out;
    std::optional<WireMessage> on_request(NodeId src, const WireMessage& msg) override {
      *out = msg.element.value_or(Bytes{});
      return Echo::on_request(src, msg);
    }
  };
  Capture cap;
  cap.out = &got;
  Transport b2(p.sim.env(1), cap, Uid{HwAddr::from_u64(2), 0}, {});
  p.sim.attach(1, [&](NodeId src, std::span<const std::uint8_t> f) { b2.on_frame(src, f); });
  p.a->send_reliable(1, m);
  p.sim.run_until(60'000 * kMillis);
  CHECK(fnv(got) == fnv(element));
  CHECK(p.a->stats().bulk_transfers >= 1);
  CHECK(p.sim.stats().streams >= 1);
  CHECK(p.ha.replies.size() == 1);
}

TEST_CASE("frames below the threshold use datagrams") {
  FakeEnv env;
  Echo h;
  Transport t(env, h, Uid{HwAddr::from_u64(1), 0}, {});
  auto m = numbered(1);
  m.element = Bytes(1000);
  t.send_reliable(1, m);
  CHECK(env.datagrams.size() == 1);
  CHECK(env.streams.empty());
  CHECK_FALSE(t.uses_stream(8 * 1024));
  CHECK(t.uses_stream(8 * 1024 + 1));
  m.element = Bytes(9000);
  t.send_reliable(2, m);
  CHECK(env.streams.size() == 1);
}

TEST_CASE("a stream to a crashed peer reports a bulk timeout") {
  LinkModel link;
  Pair p(4, link);
  p.sim.crash(1);
  auto m = numbered(1);
  m.element = Bytes(64 * 1024);
  p.a->send_reliable(1, m);
  p.sim.run_until(link.bulk_timeout + 500 * kMillis);
  CHECK_FALSE(p.ha.bulk_timeouts.empty());
  CHECK(p.ha.bulk_timeouts.front() == 1);
  CHECK(p.a->stats().bulk_timeouts >= 1);
  CHECK(p.hb.delivered.empty());
}

TEST_CASE("crashed nodes receive nothing and their timers stop") {
  Pair p(5, LinkModel{});
  p.sim.crash(1);
  p.a->send_reliable(1, numbered(1));
  int fired = 0;
  p.sim.env(1).set_timer(10, [&] { ++fired; });
  p.sim.run_until(1'000 * kMillis);
  CHECK(p.hb.delivered.empty());
  CHECK(fired == 0);
  CHECK(p.sim.stats().dropped_down > 0);
  p.sim.restart(1);
  p.sim.run_until(5'000 * kMillis);
  CHECK(p.hb.delivered[1] == 1);
}

TEST_CASE("simulator is deterministic under a seed") {
  auto run = [](std::uint64_t seed) {
    LinkModel link;
    link.loss = 0.2;
    link.dup = 0.1;
    link.reorder = 0.3;
    Pair p(seed, link);
    for (std::uint64_t i = 1; i <= 20; ++i) p.a->send_reliable(1, numbered(i, static_cast<MsgType>(i % 5)));
    p.sim.run_until(20'000 * kMillis);
    return std::make_tuple(p.sim.stats().events, p.sim.stats().lost, p.hb.order, p.ha.replies);
  };
  CHECK(run(8) == run(8));
  CHECK(run(8) != run(9));
}

TEST_CASE("link validation enforces communication fairness") {
  LinkModel link;
  link.loss = 1.0;
  CHECK_THROWS_AS(validate(link), Error);
  link.loss = 0.99;
  CHECK_NOTHROW(validate(link));
  link.dup = 1.5;
  CHECK_THROWS_AS(validate(link), Error);
  LinkModel lat;
  lat.lat_min = 50 * kMillis;
  CHECK_THROWS_AS(validate(lat), Error);
}

TEST_CASE("triangular latency stays in range with the configured mode") {
  LinkModel link;
  Simulator sim(6, link);
  const auto a = sim.add_node();
  const auto b = sim.add_node();
  std::vector<Micros> arrivals;
  sim.attach(b, [&](NodeId, std::span<const std::uint8_t>) { arrivals.push_back(sim.now()); });
  sim.attach(a, [](NodeId, std::span<const std::uint8_t>) {});
  const Bytes frame(10);
  constexpr int kN = 20000;
  // Separate sends by more than the link's serialization so latency is all that varies.
  for (int i = 0; i < kN; ++i) {
    sim.schedule(static_cast<Micros>(i) * 1000 * kMillis, [&] { sim.env(a).send_datagram(b, frame); });
  }
  sim.run_until(static_cast<Micros>(kN + 1) * 1000 * kMillis);
  REQUIRE(arrivals.size() == kN);
  double sum = 0;
  for (int i = 0; i < kN; ++i) {
    const auto lat = arrivals[static_cast<std::size_t>(i)] - static_cast<Micros>(i) * 1000 * kMillis;
    CHECK(lat >= link.lat_min);
    CHECK(lat <= link.lat_max + 1);
    sum += static_cast<double>(lat);
  }
  // Mean of triangular(15, 25, 40) ms is 26.67 ms, plus 1 us of serialization.
  CHECK(sum / kN == doctest::Approx((15.0 + 25.0 + 40.0) / 3.0 * 1000).epsilon(0.01));
}

TEST_CASE("stream-sized frames are not resent while their transfer is under way") {
  LinkModel link;
  link.lat_min = link.lat_mode = link.lat_max = 10 * kMillis;
  link.bandwidth = 1e6;  // one MiB takes about a second
  TransportConfig tc;
  tc.stream_bandwidth = link.bandwidth;
  Pair p(3, link, tc);
  WireMessage big = numbered(1);
  big.payload.resize(1 << 20, 0xab);
  p.a->send_reliable(1, big);
  p.sim.run_until(30'000 * kMillis);
  CHECK(p.hb.delivered[1] == 1);
  REQUIRE(p.ha.replies.size() == 1);
  // One stream each way: the request and the echoed reply.
  CHECK(p.sim.stats().streams == 2);
  CHECK(p.a->stats().retransmissions == 0);
}

TEST_CASE("a large reply is not repeated for every duplicate of a small request") {
  struct BigReply : Echo {
    std::optional<WireMessage> on_request(NodeId n, const WireMessage& m) override {
      auto r = Echo::on_request(n, m);
      r->payload.resize(1 << 20, 0xcd);
      return r;
    }
  };
  LinkModel link;
  link.lat_min = link.lat_mode = link.lat_max = 10 * kMillis;
  link.bandwidth = 1e6;
  TransportConfig tc;
  tc.stream_bandwidth = link.bandwidth;
  Simulator sim(4, link);
  Echo ha;
  BigReply hb;
  const auto na = sim.add_node(), nb = sim.add_node();
  Transport a(sim.env(na), ha, Uid{HwAddr::from_u64(1), 0}, tc);
  Transport b(sim.env(nb), hb, Uid{HwAddr::from_u64(2), 0}, tc);
  sim.attach(na, [&](NodeId s, std::span<const std::uint8_t> f) { a.on_frame(s, f); });
  sim.attach(nb, [&](NodeId s, std::span<const std::uint8_t> f) { b.on_frame(s, f); });
  a.send_reliable(nb, numbered(9));
  sim.run_until(30'000 * kMillis);
  REQUIRE(ha.replies == std::vector<std::uint64_t>{9});
  // The small request is resent every 100 ms during the one-second transfer,
  // but the reply goes out once.
  CHECK(a.stats().retransmissions >= 5);
  CHECK(sim.stats().streams == 1);
}
