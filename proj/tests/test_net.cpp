#include <sys/socket.h>
#include <netinet/in.h>
#include <unistd.h>

#include <atomic>

#include "casss/error.hpp"
#include "casss/net.hpp"
#include "doctest.h"

using namespace casss;

namespace {

// Ports well away from the benchmark defaults.
constexpr std::uint16_t kBase = 23400;

std::vector<NetAddress> local_peers(std::uint16_t base, int n) {
  std::vector<NetAddress> out;
  for (int i = 0; i < n; ++i) out.push_back({"127.0.0.1", static_cast<std::uint16_t>(base + i)});
  return out;
}

}  // namespace

TEST_CASE("addresses parse as IPv4 host and port") {
  const auto a = parse_address("127.0.0.1:7000");
  CHECK(a.host == "127.0.0.1");
  CHECK(a.port == 7000);
  CHECK_THROWS_AS(parse_address("127.0.0.1"), Error);
  CHECK_THROWS_AS(parse_address("127.0.0.1:0"), Error);
  CHECK_THROWS_AS(parse_address("127.0.0.1:70000"), Error);
  CHECK_THROWS_AS(parse_address("localhost:7000"), Error);
}

TEST_CASE("datagrams, streams and timers over localhost") {
  const auto peers = local_peers(kBase, 2);
  NetEnv a(peers, 0, 1), b(peers, 1, 2);
  std::vector<std::pair<NodeId, Bytes>> got;
  b.attach([&](NodeId src, std::span<const std::uint8_t> f) { got.emplace_back(src, Bytes(f.begin(), f.end())); });
  a.attach([](NodeId, std::span<const std::uint8_t>) {});
  Bytes big(3 << 20);
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = static_cast<std::uint8_t>(i * 31 + 7);
  a.send_datagram(1, Bytes{1, 2, 3});
  a.send_stream(1, big);
  bool fired = false;
  const auto t0 = b.now();
  Micros fired_at = 0;
  b.set_timer(20 * kMillis, [&] { fired = true, fired_at = b.now(); });
  std::atomic<bool> stop{false};
  b.run(stop, [&] { return got.size() == 2 && fired; });
  REQUIRE(got.size() == 2);
  CHECK(got[0].first == 0);
  CHECK(got[1].first == 0);
  const bool first_small = got[0].second.size() == 3;
  CHECK(got[first_small ? 0 : 1].second == Bytes{1, 2, 3});
  CHECK(got[first_small ? 1 : 0].second == big);
  CHECK(fired_at - t0 >= 20 * kMillis);
}

TEST_CASE("a stream to a closed port reports failure on the loop") {
  const auto peers = local_peers(kBase + 10, 2);
  NetEnv a(peers, 0, 1);
  std::vector<NodeId> failed;
  a.stream_failed = [&](NodeId d) { failed.push_back(d); };
  a.send_stream(1, Bytes(100, 1));
  std::atomic<bool> stop{false};
  a.run(stop, [&] { return !failed.empty(); });
  CHECK(failed == std::vector<NodeId>{1});
}

TEST_CASE("binding a port in use is a BindError") {
  const auto peers = local_peers(kBase + 20, 1);
  NetEnv first(peers, 0, 1);
  try {
    NetEnv second(peers, 0, 1);
    FAIL("second bind succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BindError);
  }
}

TEST_CASE("node processes reject bad roles and indices") {
  auto file = parse_config("server 127.0.0.1:23440\nclient 127.0.0.1:23441\nf 0\n");
  std::atomic<bool> stop{true};
  NodeProcessOptions opt;
  opt.config = file;
  opt.role = "observer";
  CHECK_THROWS_AS(serve_node(opt, stop), Error);
  opt.role = "server";
  opt.index = 3;
  CHECK_THROWS_AS(serve_node(opt, stop), Error);
  opt.index = 0;
  CHECK(serve_node(opt, stop) == 0);  // stops at once
}
