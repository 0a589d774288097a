#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "casss/channel.hpp"
#include "doctest.h"

using namespace casss;

namespace {

const Uid kSender{HwAddr::from_u64(1), 0};
const Uid kReceiver{HwAddr::from_u64(2), 0};

WireMessage msg(std::uint8_t id) {
  WireMessage m;
  m.type = MsgType::PREWRITE;
  m.payload = {id};
  return m;
}

std::uint8_t id_of(const WireMessage& m) { return m.payload.empty() ? 0 : m.payload[0]; }

}  // namespace

TEST_CASE("fault-free exchange advances the counter by one") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(8, 8);
  auto frame = tx.submit(msg(1));
  REQUIRE(frame);
  CHECK(frame->token == 0);
  auto arrival = rx.on_data(*frame, kReceiver);
  CHECK(arrival.deliver);
  CHECK_FALSE(arrival.ack);
  auto ack = rx.respond(frame->token, msg(9), kReceiver);
  REQUIRE(ack);
  auto res = tx.on_ack(*ack);
  REQUIRE(res.reply);
  CHECK(id_of(*res.reply) == 9);
  CHECK_FALSE(res.send);
  CHECK(tx.counter() == 1);
  CHECK_FALSE(tx.busy());
}

TEST_CASE("counter wraps modulo cap+1") {
  ChannelSender tx(3, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(3, 3);
  for (int i = 0; i < 10; ++i) {
    auto frame = tx.submit(msg(1));
    REQUIRE(frame);
    CHECK(frame->token == static_cast<std::uint64_t>(i % 4));
    REQUIRE(rx.on_data(*frame, kReceiver).deliver);
    REQUIRE(tx.on_ack(*rx.respond(frame->token, msg(2), kReceiver)).reply);
  }
}

TEST_CASE("duplicate data is re-acknowledged, not redelivered") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(8, 8);
  auto frame = *tx.submit(msg(1));
  REQUIRE(rx.on_data(frame, kReceiver).deliver);
  auto ack = rx.respond(frame.token, msg(2), kReceiver);
  auto again = rx.on_data(frame, kReceiver);
  CHECK_FALSE(again.deliver);
  REQUIRE(again.ack);
  CHECK(*again.ack == *ack);
}

TEST_CASE("duplicate while the reply is deferred gets no ack") {
  ChannelReceiver rx(8, 8);
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  auto frame = *tx.submit(msg(1));
  REQUIRE(rx.on_data(frame, kReceiver).deliver);
  CHECK(rx.awaiting());
  auto again = rx.on_data(frame, kReceiver);
  CHECK_FALSE(again.deliver);
  CHECK_FALSE(again.ack);
}

TEST_CASE("latest-only outbox keeps only the newest queued message") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  REQUIRE(tx.submit(msg(1)));
  CHECK_FALSE(tx.submit(msg(2)));
  CHECK_FALSE(tx.submit(msg(3)));
  CHECK(tx.queued() == 1);
  ChannelReceiver rx(8, 8);
  auto first = *tx.on_timeout();
  REQUIRE(rx.on_data(first, kReceiver).deliver);
  auto res = tx.on_ack(*rx.respond(first.token, msg(0), kReceiver));
  REQUIRE(res.send);
  CHECK(id_of(*res.send) == 3);
}

TEST_CASE("fifo outbox keeps order and drops the oldest past its limit") {
  ChannelSender tx(8, ChannelSender::Outbox::Fifo, 2);
  REQUIRE(tx.submit(msg(1)));
  tx.submit(msg(2));
  tx.submit(msg(3));
  tx.submit(msg(4));
  CHECK(tx.queued() == 2);
  ChannelReceiver rx(8, 8);
  std::vector<int> got;
  auto frame = tx.on_timeout();
  while (frame) {
    REQUIRE(rx.on_data(*frame, kReceiver).deliver);
    got.push_back(id_of(*frame));
    frame = tx.on_ack(*rx.respond(frame->token, msg(0), kReceiver)).send;
  }
  CHECK(got == std::vector<int>{1, 3, 4});
}

TEST_CASE("retransmission re-stamps a corrupted token") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  auto frame = *tx.submit(msg(1));
  CHECK(frame.token == 0);
  tx.corrupt(5);
  auto again = tx.on_timeout();
  REQUIRE(again);
  CHECK(again->token == 5);
}

TEST_CASE("a sender behind the receiver is pushed forward by a stale ack") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(8, 2);
  auto frame = *tx.submit(msg(1));  // token 0 is behind 2
  auto arrival = rx.on_data(frame, kReceiver);
  CHECK_FALSE(arrival.deliver);
  REQUIRE(arrival.ack);
  auto res = tx.on_ack(*arrival.ack);
  CHECK_FALSE(res.reply);
  REQUIRE(res.send);
  CHECK(res.send->token == 3);
  CHECK(rx.on_data(*res.send, kReceiver).deliver);
}

TEST_CASE("a sender level with a corrupted receiver is pushed forward") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(8, 0);
  auto frame = *tx.submit(msg(1));  // token 0 equals the receiver's counter
  auto arrival = rx.on_data(frame, kReceiver);
  CHECK_FALSE(arrival.deliver);
  REQUIRE(arrival.ack);
  auto res = tx.on_ack(*arrival.ack);
  REQUIRE(res.send);
  CHECK(rx.on_data(*res.send, kReceiver).deliver);
}

TEST_CASE("acks for another token or channel are ignored") {
  ChannelSender tx(8, ChannelSender::Outbox::LatestOnly);
  ChannelReceiver rx(8, 8);
  auto frame = *tx.submit(msg(1));
  REQUIRE(rx.on_data(frame, kReceiver).deliver);
  auto ack = *rx.respond(frame.token, msg(2), kReceiver);
  auto wrong_token = ack;
  wrong_token.token = 3;
  CHECK_FALSE(tx.on_ack(wrong_token).reply);
  auto wrong_channel = make_ack(MsgType::QUERY, AckStatus::Delivered, 0, 0, nullptr, kReceiver);
  CHECK_FALSE(tx.on_ack(wrong_channel).reply);
  CHECK(tx.busy());
  CHECK(tx.on_ack(ack).reply);
}

// Exhaustive exploration of one sender/receiver pair over bounded-capacity
// links that lose and duplicate frames. Every start state combines arbitrary
// counters, an arbitrary stored ack and arbitrary frames already in flight.
// The sender submits messages 1..kMessages, each once the previous one is
// acknowledged. Checked over the whole reachable graph:
//  - from every state, all messages can still complete (no livelock);
//  - no cycle contains a delivery error, so errors stop after finitely many
//    steps (no permanent duplicate stream);
//  - the number of errors on any path is bounded by the initial garbage.
// Links are FIFO here: with unbounded reordering no bounded counter can tell
// an ancient frame from a fresh one. Bounded reordering is covered by the
// simulator soak in test_transport.cpp.
namespace {

constexpr std::uint8_t kMessages = 2;
constexpr std::size_t kLinkCapacity = 2;

struct Model {
  ChannelSender tx;
  ChannelReceiver rx;
  std::uint8_t current = 0;       // message held by the sender, 0 if idle
  std::uint8_t next = 1;          // next message to submit
  std::uint8_t delivered = 0;     // in-order prefix delivered to the receiver's application
  std::uint8_t rx_last = 0;       // message whose reply the receiver's stored ack carries
  std::deque<WireMessage> data;   // sender -> receiver
  std::deque<WireMessage> acks;   // receiver -> sender

  explicit Model(std::uint64_t cap) : tx(cap, ChannelSender::Outbox::LatestOnly), rx(cap, 0) {}

  std::string key() const {
    std::string k;
    k += static_cast<char>(tx.counter());
    k += static_cast<char>(current);
    k += static_cast<char>(next);
    k += static_cast<char>(delivered);
    k += static_cast<char>(rx.counter());
    k += static_cast<char>(rx.holds_ack() ? rx_last + 1 : 0);
    k += static_cast<char>(rx.awaiting());
    k += '|';
    for (const auto& m : data) {
      k += static_cast<char>(m.token);
      k += static_cast<char>(id_of(m));
    }
    k += '|';
    for (const auto& a : acks) {
      auto opened = open_ack(a);
      k += static_cast<char>(a.token);
      k += static_cast<char>(opened->first.status);
      k += static_cast<char>(opened->first.receiver_counter);
      k += static_cast<char>(id_of(opened->second));
    }
    return k;
  }

  bool done() const { return current == 0 && next > kMessages; }

  void push_data(const WireMessage& m) {
    if (data.size() < kLinkCapacity) data.push_back(m);
  }
  void push_ack(const WireMessage& m) {
    if (acks.size() < kLinkCapacity) acks.push_back(m);
  }

  void submit_next() {
    if (current != 0 || next > kMessages) return;
    current = next++;
    if (auto f = tx.submit(msg(current))) push_data(*f);
  }
};

struct Edge {
  std::size_t to;
  int errors;
};

struct Explorer {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Model> states;
  std::vector<std::vector<Edge>> edges;
  std::vector<bool> initial;

  std::size_t intern(const Model& m, bool is_initial) {
    auto [it, fresh] = index.emplace(m.key(), states.size());
    if (fresh) {
      states.push_back(m);
      edges.emplace_back();
      initial.push_back(is_initial);
    } else if (is_initial) {
      initial[it->second] = true;
    }
    return it->second;
  }

  void expand(std::size_t s) {
    const Model base = states[s];
    auto add = [&](const Model& m, int errors) {
      const auto to = intern(m, false);
      edges[s].push_back({to, errors});
    };
    if (!base.data.empty()) {
      Model m = base;
      auto frame = m.data.front();
      m.data.pop_front();
      add(m, 0);  // lost
      int errors = 0;
      auto arrival = m.rx.on_data(frame, kReceiver);
      if (arrival.ack) m.push_ack(*arrival.ack);
      if (arrival.deliver) {
        const auto id = id_of(frame);
        if (id == m.delivered + 1) {
          m.delivered = id;
        } else {
          ++errors;
        }
        m.rx_last = id;
        if (auto ack = m.rx.respond(frame.token, msg(id), kReceiver)) m.push_ack(*ack);
      }
      add(m, errors);
    }
    if (!base.acks.empty()) {
      Model m = base;
      auto ack = m.acks.front();
      m.acks.pop_front();
      add(m, 0);  // lost
      int errors = 0;
      auto res = m.tx.on_ack(ack);
      if (res.reply) {
        // The sender takes this as delivery of its current message.
        if (id_of(*res.reply) != m.current || m.delivered < m.current) ++errors;
        if (m.delivered < m.current) m.delivered = m.current;
        m.current = 0;
      }
      if (res.send) m.push_data(*res.send);
      m.submit_next();
      add(m, errors);
    }
    if (base.current != 0 && base.data.size() < kLinkCapacity) {
      Model m = base;
      if (auto f = m.tx.on_timeout()) m.push_data(*f);
      add(m, 0);
    }
  }

  void explore() {
    for (std::size_t s = 0; s < states.size(); ++s) expand(s);
  }
};

void seed_initial_states(Explorer& ex, std::uint64_t cap) {
  const auto vals = cap + 1;
  std::vector<WireMessage> garbage_data;
  for (std::uint64_t t = 0; t < vals; ++t) {
    auto m = msg(0);
    m.token = t;
    m.sender = kSender;
    garbage_data.push_back(m);
  }
  std::vector<WireMessage> garbage_acks;
  for (std::uint64_t t = 0; t < vals; ++t) {
    auto reply = msg(0);
    garbage_acks.push_back(make_ack(MsgType::PREWRITE, AckStatus::Delivered, t, t, &reply, kReceiver));
    for (std::uint64_t rc = 0; rc < vals; ++rc)
      garbage_acks.push_back(make_ack(MsgType::PREWRITE, AckStatus::Stale, t, rc, nullptr, kReceiver));
  }
  std::vector<std::deque<WireMessage>> data_links{{}};
  for (const auto& a : garbage_data) {
    data_links.push_back({a});
    for (const auto& b : garbage_data) data_links.push_back({a, b});
  }
  std::vector<std::deque<WireMessage>> ack_links{{}};
  for (const auto& a : garbage_acks) {
    ack_links.push_back({a});
    for (const auto& b : garbage_acks) ack_links.push_back({a, b});
  }
  for (std::uint64_t s = 0; s < vals; ++s) {
    for (std::uint64_t r = 0; r < vals; ++r) {
      for (int stored = 0; stored < 2; ++stored) {
        Model base(cap);
        base.tx.corrupt(s);
        base.submit_next();
        base.data.clear();
        base.rx.corrupt(r);
        if (stored) {
          // Leave a stored ack for a garbage message under counter r.
          base.rx.corrupt(r + cap);
          auto g = msg(0);
          g.token = r;
          REQUIRE(base.rx.on_data(g, kReceiver).deliver);
          REQUIRE(base.rx.respond(r, msg(0), kReceiver));
          base.rx_last = 0;
        }
        for (const auto& d : data_links) {
          for (const auto& a : ack_links) {
            Model m = base;
            m.data = d;
            m.acks = a;
            ex.intern(m, true);
          }
        }
      }
    }
  }
}

// Iterative Tarjan; returns the component id of every state.
std::vector<std::size_t> components(const Explorer& ex, std::size_t& count) {
  const auto n = ex.states.size();
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> idx(n, kUnset), low(n, 0), comp(n, kUnset);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::size_t counter = 0;
  count = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (idx[root] != kUnset) continue;
    std::vector<std::pair<std::size_t, std::size_t>> work{{root, 0}};
    idx[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!work.empty()) {
      auto& [v, e] = work.back();
      if (e < ex.edges[v].size()) {
        const auto w = ex.edges[v][e++].to;
        if (idx[w] == kUnset) {
          idx[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          work.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], idx[w]);
        }
        continue;
      }
      if (low[v] == idx[v]) {
        while (true) {
          const auto w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = count;
          if (w == v) break;
        }
        ++count;
      }
      const auto finished = v;
      work.pop_back();
      if (!work.empty()) low[work.back().first] = std::min(low[work.back().first], low[finished]);
    }
  }
  return comp;
}

struct Verdict {
  std::size_t states = 0;
  std::size_t livelocked = 0;
  std::size_t error_cycles = 0;
  int max_errors = 0;
};

Verdict check(std::uint64_t cap) {
  Explorer ex;
  seed_initial_states(ex, cap);
  ex.explore();
  Verdict v;
  v.states = ex.states.size();

  // Completion must stay reachable: backward search from the done states.
  const auto n = ex.states.size();
  std::vector<std::vector<std::size_t>> rev(n);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& e : ex.edges[s]) rev[e.to].push_back(s);
  std::vector<bool> can_finish(n, false);
  std::vector<std::size_t> frontier;
  for (std::size_t s = 0; s < n; ++s)
    if (ex.states[s].done()) {
      can_finish[s] = true;
      frontier.push_back(s);
    }
  while (!frontier.empty()) {
    const auto s = frontier.back();
    frontier.pop_back();
    for (auto p : rev[s])
      if (!can_finish[p]) {
        can_finish[p] = true;
        frontier.push_back(p);
      }
  }
  for (std::size_t s = 0; s < n; ++s) v.livelocked += can_finish[s] ? 0 : 1;

  std::size_t ncomp = 0;
  const auto comp = components(ex, ncomp);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& e : ex.edges[s])
      if (e.errors > 0 && comp[s] == comp[e.to]) ++v.error_cycles;

  // Longest error path over the condensation. Tarjan numbers components in
  // reverse topological order, so successors have smaller ids.
  std::vector<std::vector<std::size_t>> members(ncomp);
  for (std::size_t s = 0; s < n; ++s) members[comp[s]].push_back(s);
  std::vector<int> best(ncomp, 0);
  for (std::size_t c = 0; c < ncomp; ++c)
    for (auto s : members[c])
      for (const auto& e : ex.edges[s])
        if (comp[e.to] != c) best[c] = std::max(best[c], best[comp[e.to]] + e.errors);
  for (std::size_t s = 0; s < n; ++s)
    if (ex.initial[s]) v.max_errors = std::max(v.max_errors, best[comp[s]]);
  return v;
}

}  // namespace

TEST_CASE("channel stabilizes from every corrupted configuration for cap <= 3") {
  for (std::uint64_t cap = 1; cap <= 3; ++cap) {
    CAPTURE(cap);
    const auto v = check(cap);
    MESSAGE("cap " << cap << ": " << v.states << " states, at most " << v.max_errors << " errors per run");
    CHECK(v.states > 0);
    CHECK(v.livelocked == 0);
    CHECK(v.error_cycles == 0);
    // A garbage data frame costs a wrong delivery plus the ack it leaves
    // stored; a garbage ack and the initially stored ack cost one each.
    CHECK(v.max_errors <= static_cast<int>(3 * kLinkCapacity + 1));
  }
}
