#include "casss/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "casss/codec.hpp"
#include "casss/error.hpp"

namespace casss {

namespace {

constexpr std::pair<FaultKind, const char*> kFaultNames[] = {
    {FaultKind::Crash, "crash"},
    {FaultKind::Restart, "restart"},
    {FaultKind::CorruptStore, "corruptStore"},
    {FaultKind::CorruptChannel, "corruptChannel"},
    {FaultKind::CorruptResetState, "corruptResetState"},
    {FaultKind::CorruptIncarnations, "corruptIncarnations"},
    {FaultKind::InjectOverflowTag, "injectOverflowTag"},
};

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) config_error("bad integer for '" + key + "': " + v);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    config_error("bad number for '" + key + "': " + v);
  }
}

void add_stats(std::map<std::string, std::uint64_t>& out, const std::string& prefix, const TrafficStats& s) {
  for (std::size_t t = 0; t < kMsgTypeCount; ++t) {
    const std::string name = to_string(static_cast<MsgType>(t));
    out[prefix + "messages." + name] += s.messages_sent[t];
    out[prefix + "frames." + name] += s.frames_sent[t];
    out[prefix + "bytes." + name] += s.bytes_sent[t];
  }
  out[prefix + "bytes_received"] += s.bytes_received;
  out[prefix + "retransmissions"] += s.retransmissions;
  out[prefix + "bulk_transfers"] += s.bulk_transfers;
  out[prefix + "bulk_timeouts"] += s.bulk_timeouts;
  out[prefix + "delivered"] += s.delivered;
}

void add_all(std::map<std::string, std::uint64_t>& out, bool client, const TrafficStats& s) {
  add_stats(out, "", s);
  add_stats(out, client ? "client." : "server.", s);
}

}  // namespace

const char* to_string(FaultKind k) {
  for (const auto& [kind, name] : kFaultNames)
    if (kind == k) return name;
  return "?";
}

std::optional<FaultKind> parse_fault_kind(const std::string& s) {
  for (const auto& [kind, name] : kFaultNames)
    if (s == name) return kind;
  return std::nullopt;
}

QuorumConfig make_quorum(std::uint32_t n, std::uint32_t f, Variant v, std::optional<std::uint32_t> k) {
  QuorumConfig q;
  for (std::uint32_t i = 0; i < n; ++i) q.servers.push_back("sim:" + std::to_string(i));
  q.f = f;
  q.k = k.value_or(n > 2 * f ? n - 2 * f : 1);
  q.variant = v;
  return q;
}

namespace {

void apply_scenario_key(ScenarioConfig& cfg, const std::string& key, const std::string& v) {
  const auto name = key.substr(9);
  if (name == "seed") {
    cfg.seed = to_uint(key, v);
  } else if (name == "writers") {
    cfg.writers = static_cast<std::uint32_t>(to_uint(key, v));
  } else if (name == "readers") {
    cfg.readers = static_cast<std::uint32_t>(to_uint(key, v));
  } else if (name == "mixed") {
    cfg.mixed = static_cast<std::uint32_t>(to_uint(key, v));
  } else if (name == "object_size") {
    cfg.object_size = to_uint(key, v);
  } else if (name == "ops_per_client") {
    cfg.ops_per_client = static_cast<std::uint32_t>(to_uint(key, v));
  } else if (name == "loss") {
    cfg.link.loss = to_double(key, v);
  } else if (name == "dup") {
    cfg.link.dup = to_double(key, v);
  } else if (name == "reorder") {
    cfg.link.reorder = to_double(key, v);
  } else if (name == "lat_min_ms") {
    cfg.link.lat_min = static_cast<Micros>(to_double(key, v) * kMillis);
  } else if (name == "lat_mode_ms") {
    cfg.link.lat_mode = static_cast<Micros>(to_double(key, v) * kMillis);
  } else if (name == "lat_max_ms") {
    cfg.link.lat_max = static_cast<Micros>(to_double(key, v) * kMillis);
  } else if (name == "bandwidth") {
    cfg.link.bandwidth = to_double(key, v);
  } else if (name == "inter_op_min_ms") {
    cfg.inter_op_min = static_cast<Micros>(to_double(key, v) * kMillis);
  } else if (name == "inter_op_max_ms") {
    cfg.inter_op_max = static_cast<Micros>(to_double(key, v) * kMillis);
  } else if (name == "time_limit_s") {
    cfg.time_limit = static_cast<Micros>(to_double(key, v) * 1000 * kMillis);
  } else if (name == "hold_frames") {
    cfg.hold_frames_while_down = to_uint(key, v) != 0;
  } else if (name == "faults") {
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto a = item.find(':');
      const auto b = item.find(':', a == std::string::npos ? a : a + 1);
      if (a == std::string::npos || b == std::string::npos) config_error("bad fault '" + item + "'");
      FaultInjection f;
      f.at = static_cast<Micros>(to_double(key, item.substr(0, a)) * kMillis);
      auto kind = parse_fault_kind(item.substr(a + 1, b - a - 1));
      if (!kind) config_error("unknown fault kind in '" + item + "'");
      f.kind = *kind;
      f.node = static_cast<NodeId>(to_uint(key, item.substr(b + 1)));
      cfg.faults.push_back(f);
    }
  } else {
    config_error("unknown scenario key '" + key + "'");
  }
}

}  // namespace

ScenarioConfig scenario_from_config(const ConfigFile& file) {
  ScenarioConfig cfg;
  cfg.quorum = file.quorum;
  for (const auto& [key, v] : file.extra) {
    if (key.rfind("scenario.", 0) != 0) continue;
    try {
      apply_scenario_key(cfg, key, v);
    } catch (const Error& e) {
      auto it = file.lines.find(key);
      if (it == file.lines.end()) throw;
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(ErrorCode::ConfigError)) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
      config_error("line " + std::to_string(it->second) + ": " + msg);
    }
  }
  if (cfg.quorum.n_clients == 0 && cfg.quorum.clients.empty()) cfg.quorum.n_clients = cfg.n_clients();
  validate(cfg);
  return cfg;
}

void validate(const ScenarioConfig& cfg) {
  validate(cfg.link);
  try {
    validate(cfg.quorum);
  } catch (const Error& e) {
    config_error(e.what());
  }
  if (cfg.n_clients() == 0) config_error("scenario needs at least one client");
  if (cfg.object_size == 0) config_error("object_size must be positive");
  if (cfg.inter_op_min < 0 || cfg.inter_op_max < cfg.inter_op_min) config_error("bad inter-op delay range");
  const auto n = cfg.quorum.n();
  std::set<NodeId> crashed_servers;
  bool overflow = false;
  for (const auto& f : cfg.faults) {
    if (f.node >= n + cfg.n_clients()) config_error("fault targets unknown node " + std::to_string(f.node));
    if (f.kind == FaultKind::InjectOverflowTag) {
      if (f.node < n) config_error("injectOverflowTag must target a client");
      overflow = true;
    }
    if (f.kind == FaultKind::Crash && f.node < n) crashed_servers.insert(f.node);
  }
  if (crashed_servers.size() > cfg.quorum.f) config_error("more than f server crashes");
  if (overflow && !crashed_servers.empty()) config_error("reset scenarios require every server to stay up");
}

std::string Metrics::ops_csv() const {
  std::ostringstream os;
  os << "client,life,kind,outcome,invoke_us,respond_us,latency_us,rounds,restarts,timeouts,bytes,tag,forced\n";
  for (const auto& o : ops) {
    os << o.client << ',' << o.life << ',' << to_string(o.kind) << ',' << to_string(o.outcome) << ',' << o.invoke << ','
       << (o.respond == kPending ? -1 : o.respond) << ',' << (o.respond == kPending ? -1 : o.respond - o.invoke) << ','
       << o.rounds << ',' << o.restarts << ',' << o.timeouts << ',' << o.bytes << ',' << to_string(o.tag) << ','
       << (o.forced ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string Metrics::counters_csv() const {
  std::ostringstream os;
  os << "counter,value\n";
  for (const auto& [k, v] : counters) os << k << ',' << v << '\n';
  for (std::size_t i = 0; i < reset_durations.size(); ++i) os << "reset_duration_us." << i << ',' << reset_durations[i] << '\n';
  os << "end_time_us," << end_time << '\n' << "completed," << (completed ? 1 : 0) << '\n';
  return os.str();
}

std::uint64_t Metrics::hash() const {
  const auto text = ops_csv() + counters_csv();
  return value_id(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string history_csv(const History& h) {
  struct Row {
    Micros at;
    std::size_t idx;
    bool respond;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < h.size(); ++i) {
    rows.push_back({h[i].invoke, i, false});
    if (h[i].respond != kPending) rows.push_back({h[i].respond, i, true});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.at != b.at ? a.at < b.at : a.idx < b.idx;
  });
  std::ostringstream os;
  os << "time_us,op,client,life,kind,event,outcome,value,tag\n";
  for (const auto& r : rows) {
    const auto& o = h[r.idx];
    os << r.at << ',' << r.idx << ',' << o.client << ',' << o.life << ',' << to_string(o.kind) << ','
       << (r.respond ? "respond" : "invoke") << ',' << (r.respond ? to_string(o.outcome) : "") << ',';
    if (r.respond || o.kind == OpKind::Write) os << std::hex << o.value << std::dec;
    os << ',' << (r.respond ? to_string(o.tag) : "") << '\n';
  }
  return os.str();
}

Cluster::Cluster(ScenarioConfig cfg, Hooks hooks)
    : cfg_(std::move(cfg)), hooks_(std::move(hooks)), sim_(cfg_.seed, cfg_.link), rng_(cfg_.seed ^ 0x5ca1ab1e0ddba11ULL) {
  if (cfg_.quorum.n_clients == 0 && cfg_.quorum.clients.empty()) cfg_.quorum.n_clients = cfg_.n_clients();
  validate(cfg_);
  cfg_.node.quorum = cfg_.quorum;
  cfg_.node.transport.stream_bandwidth = cfg_.link.bandwidth;
  sim_.hold_frames_while_down(cfg_.hold_frames_while_down);
  const auto n = cfg_.quorum.n();
  for (std::uint32_t i = 0; i < n + cfg_.n_clients(); ++i) sim_.add_node();
  servers_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) build_server(i);
  clients_.resize(cfg_.n_clients());
  for (std::uint32_t c = 0; c < clients_.size(); ++c) build_client(c);
  for (auto& s : servers_) s->start();
  for (const auto& f : cfg_.faults) schedule_fault(f);
}

Cluster::~Cluster() = default;

void Cluster::build_server(std::uint32_t i) {
  if (servers_[i]) add_all(retired_counters_, false, servers_[i]->transport().stats());
  ServerNode::Hooks h;
  h.on_local_reset = [this](std::uint32_t s, const Tag& t) {
    if (hooks_.on_local_reset) hooks_.on_local_reset(s, t);
  };
  const auto id = server_node(i);
  servers_[i] = std::make_unique<ServerNode>(sim_.env(id), cfg_.node, i, std::move(h));
  sim_.attach(id, [this, i](NodeId src, std::span<const std::uint8_t> frame) { servers_[i]->on_frame(src, frame); });
}

void Cluster::build_client(std::uint32_t c) {
  auto& slot = clients_[c];
  if (slot.node) add_all(retired_counters_, true, slot.node->transport().stats());
  ClientNode::Hooks h;
  h.on_issue = [this, c](const PhaseId& id) {
    if (hooks_.on_issue) hooks_.on_issue(c, id);
  };
  h.on_consume = [this, c](NodeId s, const PhaseId& id) {
    if (hooks_.on_consume) hooks_.on_consume(c, s, id);
  };
  h.on_incarnation = [this, c](const Uid& u) {
    if (hooks_.on_incarnation) hooks_.on_incarnation(c, u);
  };
  h.on_query_done = [this, c](Micros at, std::uint32_t epoch) {
    if (reset_started_ && epoch > reset_epoch_) {
      reset_durations_.push_back(at - *reset_started_);
      reset_started_.reset();
    }
    if (hooks_.on_query_done) hooks_.on_query_done(c, at, epoch);
  };
  const auto id = client_node(cfg_.quorum, c);
  slot.node = std::make_unique<ClientNode>(sim_.env(id), cfg_.node, c, std::move(h));
  slot.ready = false;
  slot.in_op = false;
  sim_.attach(id, [this, c](NodeId src, std::span<const std::uint8_t> frame) { clients_[c].node->on_frame(src, frame); });
}

void Cluster::boot_client(std::uint32_t c) {
  const auto life = clients_[c].life;
  clients_[c].node->boot([this, c, life] {
    auto& slot = clients_[c];
    if (slot.life != life) return;
    slot.ready = true;
    if (slot.scripted) next_scripted(c);
  });
}

void Cluster::boot_clients() {
  for (std::uint32_t c = 0; c < clients_.size(); ++c) boot_client(c);
}

void Cluster::start_workload() {
  for (std::uint32_t c = 0; c < clients_.size(); ++c) {
    clients_[c].scripted = true;
    clients_[c].remaining = cfg_.ops_per_client;
  }
  boot_clients();
}

void Cluster::begin_scripted() {
  for (std::uint32_t c = 0; c < clients_.size(); ++c) {
    clients_[c].scripted = true;
    clients_[c].remaining = cfg_.ops_per_client;
    next_scripted(c);
  }
}

bool Cluster::idle() const {
  if (faults_outstanding_ > 0) return false;
  for (std::uint32_t c = 0; c < clients_.size(); ++c) {
    const auto& s = clients_[c];
    if (!sim_.up(client_node(cfg_.quorum, c))) continue;
    if (!s.ready || s.in_op || s.forced_pending > 0 || (s.scripted && s.remaining > 0)) return false;
  }
  return true;
}

bool Cluster::run_workload() {
  return run_until([this] { return idle(); }, cfg_.time_limit);
}

bool Cluster::run_until(const std::function<bool()>& pred, Micros limit) {
  sim_.run_while([&] { return !pred(); }, limit);
  return pred();
}

Bytes Cluster::make_value(std::uint32_t c) {
  Bytes v(std::max<std::size_t>(cfg_.object_size, 16));
  const std::uint64_t id = ++value_counter_;
  for (int b = 0; b < 8; ++b) {
    v[b] = static_cast<std::uint8_t>(id >> (8 * b));
    v[8 + b] = static_cast<std::uint8_t>((static_cast<std::uint64_t>(c) << 32 | clients_[c].life) >> (8 * b));
  }
  for (std::size_t i = 16; i < v.size(); i += 8) {
    const auto r = rng_();
    for (std::size_t b = 0; b < 8 && i + b < v.size(); ++b) v[i + b] = static_cast<std::uint8_t>(r >> (8 * b));
  }
  v.resize(cfg_.object_size < 16 ? 16 : cfg_.object_size);
  return v;
}

void Cluster::run_op(std::uint32_t c, OpKind kind, std::optional<std::uint64_t> seq,
                     std::function<void(const OpResult&)> done) {
  auto& slot = clients_[c];
  if (slot.in_op) throw std::logic_error("client " + std::to_string(c) + " is busy");
  slot.in_op = true;
  const auto idx = history_.size();
  HistoryOp h;
  h.client = c;
  h.life = slot.life;
  h.kind = kind;
  h.invoke = sim_.now();
  OpMetrics m;
  m.client = c;
  m.life = slot.life;
  m.kind = kind;
  m.invoke = h.invoke;
  m.forced = seq.has_value();
  Bytes value;
  if (kind == OpKind::Write) {
    value = make_value(c);
    h.value = value_id(value);
  }
  history_.push_back(h);
  op_metrics_.push_back(m);
  const auto life = slot.life;
  auto cb = [this, c, idx, life, done = std::move(done)](const OpResult& r) {
    auto& s = clients_[c];
    if (s.life != life) return;
    s.in_op = false;
    auto& ho = history_[idx];
    ho.respond = r.responded;
    ho.outcome = r.outcome;
    ho.tag = r.tag;
    if (r.kind == OpKind::Read) ho.value = value_id(r.value);
    auto& mo = op_metrics_[idx];
    // Latency excludes a preceding incarnation task; the history keeps the call time.
    mo.invoke = r.invoked;
    mo.respond = r.responded;
    mo.outcome = r.outcome;
    mo.rounds = r.rounds;
    mo.restarts = r.restarts;
    mo.timeouts = r.timeouts;
    mo.bytes = r.bytes;
    mo.tag = r.tag;
    if (done) done(r);
    if (s.scripted) schedule_next(c);
  };
  if (kind == OpKind::Read) {
    slot.node->read(std::move(cb));
  } else if (seq) {
    reset_started_ = sim_.now();
    reset_epoch_ = 0;
    for (const auto& s : servers_) reset_epoch_ = std::max(reset_epoch_, s->epoch());
    slot.node->write_with_seq(std::move(value), *seq, std::move(cb));
  } else {
    slot.node->write(std::move(value), std::move(cb));
  }
}

void Cluster::write(std::uint32_t c, std::function<void(const OpResult&)> done) {
  run_op(c, OpKind::Write, std::nullopt, std::move(done));
}

void Cluster::write_with_seq(std::uint32_t c, std::uint64_t seq, std::function<void(const OpResult&)> done) {
  run_op(c, OpKind::Write, seq, std::move(done));
}

void Cluster::read(std::uint32_t c, std::function<void(const OpResult&)> done) {
  run_op(c, OpKind::Read, std::nullopt, std::move(done));
}

void Cluster::schedule_next(std::uint32_t c) {
  const auto delay = std::uniform_int_distribution<Micros>(cfg_.inter_op_min, cfg_.inter_op_max)(rng_);
  const auto life = clients_[c].life;
  sim_.env(client_node(cfg_.quorum, c)).set_timer(delay, [this, c, life] {
    if (clients_[c].life == life) next_scripted(c);
  });
}

void Cluster::next_scripted(std::uint32_t c) {
  auto& s = clients_[c];
  if (!s.ready || s.in_op) return;
  if (s.forced_pending > 0) {
    --s.forced_pending;
    write_with_seq(c, cfg_.quorum.maxint);
    return;
  }
  if (s.remaining == 0) return;
  --s.remaining;
  OpKind kind = OpKind::Read;
  if (c < cfg_.writers) {
    kind = OpKind::Write;
  } else if (c >= cfg_.writers + cfg_.readers) {
    kind = rng_() % 2 == 0 ? OpKind::Write : OpKind::Read;
  }
  run_op(c, kind, std::nullopt, nullptr);
}

std::vector<Uid> Cluster::writer_uids() const {
  std::vector<Uid> out;
  for (const auto& s : clients_) out.push_back(s.node->uid());
  return out;
}

void Cluster::schedule_fault(const FaultInjection& f) {
  ++faults_outstanding_;
  sim_.schedule(std::max(f.at, sim_.now()), [this, f] {
    --faults_outstanding_;
    apply(f.kind, f.node);
  });
}

void Cluster::apply(FaultKind kind, NodeId node) {
  const auto n = cfg_.quorum.n();
  const bool is_server = node < n;
  const std::uint32_t c = node - n;
  switch (kind) {
    case FaultKind::Crash:
      if (!sim_.up(node)) return;
      sim_.crash(node);
      if (!is_server) clients_[c].ready = false;
      break;
    case FaultKind::Restart:
      if (sim_.up(node)) return;
      if (is_server) {
        // A restarted server comes back with empty state.
        build_server(node);
        sim_.restart(node);
        servers_[node]->start();
      } else {
        auto& s = clients_[c];
        build_client(c);
        ++s.life;
        if (s.scripted) s.remaining = std::max<std::uint32_t>(s.remaining, 1);
        sim_.restart(node);
        boot_client(c);
      }
      break;
    case FaultKind::CorruptStore:
      if (is_server) {
        const auto elen = element_size(cfg_.object_size, cfg_.quorum.variant == Variant::MWABD ? 1 : cfg_.quorum.k);
        servers_[node]->corrupt_store(rng_, writer_uids(), elen);
      }
      break;
    case FaultKind::CorruptChannel:
      if (is_server) {
        servers_[node]->corrupt_channels(rng_);
      } else {
        clients_[c].node->transport().corrupt_channels(rng_);
      }
      break;
    case FaultKind::CorruptResetState:
      if (is_server) servers_[node]->corrupt_reset_state(rng_);
      break;
    case FaultKind::CorruptIncarnations:
      if (is_server) {
        std::vector<HwAddr> known;
        for (std::uint32_t i = 0; i < clients_.size(); ++i) known.push_back(client_hw(i));
        servers_[node]->corrupt_incarnations(rng_, known);
      }
      break;
    case FaultKind::InjectOverflowTag:
      if (is_server) return;
      ++clients_[c].forced_pending;
      if (clients_[c].ready && !clients_[c].in_op) next_scripted(c);
      break;
  }
}

Metrics Cluster::metrics() const {
  Metrics m;
  m.ops = op_metrics_;
  m.counters = retired_counters_;
  for (const auto& s : servers_) add_all(m.counters, false, s->transport().stats());
  for (const auto& s : clients_) add_all(m.counters, true, s.node->transport().stats());
  std::uint64_t proposals = 0;
  for (const auto& s : servers_) {
    proposals += s->proposals();
    m.counters["server." + std::to_string(s->index()) + ".epoch"] = s->epoch();
    m.counters["server." + std::to_string(s->index()) + ".records"] = s->store().size();
  }
  m.counters["reset.proposals"] = proposals;
  const auto& st = sim_.stats();
  m.counters["sim.frames"] = st.frames;
  m.counters["sim.bytes"] = st.bytes;
  m.counters["sim.lost"] = st.lost;
  m.counters["sim.duplicated"] = st.duplicated;
  m.counters["sim.delivered"] = st.delivered;
  m.counters["sim.dropped_down"] = st.dropped_down;
  m.counters["sim.held"] = st.held;
  m.counters["sim.streams"] = st.streams;
  m.counters["sim.events"] = st.events;
  m.reset_durations = reset_durations_;
  m.end_time = sim_.now();
  m.completed = idle();
  return m;
}

std::pair<History, Metrics> run_scenario(const ScenarioConfig& cfg) {
  Cluster cluster(cfg);
  cluster.start_workload();
  cluster.run_workload();
  return {cluster.history(), cluster.metrics()};
}

}  // namespace casss
