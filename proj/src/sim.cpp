#include "casss/sim.hpp"

#include <cmath>

#include "casss/error.hpp"

namespace casss {

void validate(const LinkModel& link) {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(link.loss >= 0.0 && link.loss < 1.0)) throw Error(ErrorCode::ConfigError, "loss probability must be in [0, 1)");
  if (!prob(link.dup) || !prob(link.reorder)) throw Error(ErrorCode::ConfigError, "probabilities must be in [0, 1]");
  if (!(link.lat_min <= link.lat_mode && link.lat_mode <= link.lat_max) || link.lat_min < 0) {
    throw Error(ErrorCode::ConfigError, "latency must satisfy 0 <= min <= mode <= max");
  }
  if (!(link.bandwidth > 0.0)) throw Error(ErrorCode::ConfigError, "bandwidth must be positive");
}

class Simulator::NodeEnv : public Env {
 public:
  NodeEnv(Simulator& sim, NodeId id, std::uint64_t seed) : sim_(sim), id_(id), rng_(seed) {}

  Micros now() const override { return sim_.now_; }
  void send_datagram(NodeId dst, Bytes frame) override { sim_.transmit(id_, dst, std::move(frame), false); }
  void send_stream(NodeId dst, Bytes frame) override { sim_.transmit(id_, dst, std::move(frame), true); }
  void set_timer(Micros delay, std::function<void()> fn) override {
    const auto boot = sim_.nodes_[id_].boot;
    sim_.schedule(sim_.now_ + std::max<Micros>(delay, 0), [this, boot, fn = std::move(fn)] {
      const auto& n = sim_.nodes_[id_];
      if (n.up && n.boot == boot) fn();
    });
  }
  std::mt19937_64& rng() override { return rng_; }

 private:
  Simulator& sim_;
  NodeId id_;
  std::mt19937_64 rng_;
};

Simulator::Simulator(std::uint64_t seed, LinkModel link) : rng_(seed), link_(link) { validate(link_); }

Simulator::~Simulator() = default;

NodeId Simulator::add_node() {
  const auto id = static_cast<NodeId>(nodes_.size());
  Node n;
  n.env = std::make_unique<NodeEnv>(*this, id, rng_() ^ (0x9e3779b97f4a7c15ULL * (id + 1)));
  nodes_.push_back(std::move(n));
  return id;
}

Env& Simulator::env(NodeId id) { return *nodes_.at(id).env; }

void Simulator::attach(NodeId id, FrameHandler handler) { nodes_.at(id).handler = std::move(handler); }

void Simulator::crash(NodeId id) {
  auto& n = nodes_.at(id);
  n.up = false;
  ++n.boot;
}

void Simulator::restart(NodeId id) {
  auto& n = nodes_.at(id);
  n.up = true;
  ++n.boot;
  auto held = std::move(n.held);
  n.held.clear();
  for (auto& [src, frame] : held) {
    const auto at = now_ + sample_latency();
    schedule(at, [this, src = src, id, frame = std::move(frame)] { deliver(src, id, frame); });
  }
}

bool Simulator::up(NodeId id) const { return nodes_.at(id).up; }

std::uint64_t Simulator::boots(NodeId id) const { return nodes_.at(id).boot; }

void Simulator::schedule(Micros at, std::function<void()> fn) { queue_.push(Event{at, seq_++, std::move(fn)}); }

Micros Simulator::sample_latency() {
  const double a = static_cast<double>(link_.lat_min);
  const double c = static_cast<double>(link_.lat_mode);
  const double b = static_cast<double>(link_.lat_max);
  if (b <= a) return link_.lat_min;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const double fc = (c - a) / (b - a);
  const double x = u < fc ? a + std::sqrt(u * (b - a) * (c - a)) : b - std::sqrt((1 - u) * (b - a) * (b - c));
  return static_cast<Micros>(std::llround(x));
}

void Simulator::transmit(NodeId src, NodeId dst, Bytes frame, bool stream) {
  if (dst >= nodes_.size()) return;
  ++stats_.frames;
  stats_.bytes += frame.size();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto key = std::make_pair(src, dst);
  const auto tx = static_cast<Micros>(std::ceil(static_cast<double>(frame.size()) / link_.bandwidth * 1e6));

  auto& free = link_free_[key];
  const Micros departure = std::max(now_, free);
  free = departure + tx;

  if (stream) {
    ++stats_.streams;
    auto& last = link_last_[key];
    const Micros at = std::max(free + sample_latency(), last);
    last = at;
    if (!nodes_[dst].up && !hold_while_down_) {
      const auto src_boot = nodes_[src].boot;
      schedule(now_ + link_.bulk_timeout, [this, src, dst, src_boot] {
        auto& s = nodes_[src];
        if (s.up && s.boot == src_boot && s.env->stream_failed) s.env->stream_failed(dst);
      });
      return;
    }
    schedule(at, [this, src, dst, frame = std::move(frame)] { deliver(src, dst, frame); });
    return;
  }

  if (coin(rng_) < link_.loss) {
    ++stats_.lost;
    return;
  }
  const int copies = coin(rng_) < link_.dup ? 2 : 1;
  if (copies == 2) ++stats_.duplicated;
  for (int c = 0; c < copies; ++c) {
    Micros at = free + sample_latency();
    if (link_.reorder > 0.0) {
      if (coin(rng_) < link_.reorder) {
        at += std::uniform_int_distribution<Micros>(0, link_.reorder_window)(rng_);
      }
    } else {
      auto& last = link_last_[key];
      at = std::max(at, last);
      last = at;
    }
    if (c + 1 == copies) {
      schedule(at, [this, src, dst, frame = std::move(frame)] { deliver(src, dst, frame); });
    } else {
      schedule(at, [this, src, dst, frame] { deliver(src, dst, frame); });
    }
  }
}

void Simulator::deliver(NodeId src, NodeId dst, const Bytes& frame) {
  auto& n = nodes_[dst];
  if (!n.up) {
    if (hold_while_down_) {
      ++stats_.held;
      n.held.emplace_back(src, frame);
    } else {
      ++stats_.dropped_down;
    }
    return;
  }
  ++stats_.delivered;
  if (n.handler) n.handler(src, frame);
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  Event e = std::move(const_cast<Event&>(queue_.top()));
  queue_.pop();
  now_ = e.at;
  ++stats_.events;
  e.fn();
  return true;
}

void Simulator::run_until(Micros t) {
  while (!queue_.empty() && queue_.top().at <= t) step();
  if (now_ < t) now_ = t;
}

void Simulator::run_while(const std::function<bool()>& keep_going, Micros limit) {
  while (keep_going() && !queue_.empty() && queue_.top().at <= limit) step();
}

}  // namespace casss
