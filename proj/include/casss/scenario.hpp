#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "casss/checker.hpp"
#include "casss/client.hpp"
#include "casss/config.hpp"
#include "casss/server.hpp"
#include "casss/sim.hpp"

namespace casss {

enum class FaultKind : std::uint8_t {
  Crash,
  Restart,
  CorruptStore,
  CorruptChannel,
  CorruptResetState,
  CorruptIncarnations,
  /// Targets a client: it writes with sequence number maxint, which blocks the servers.
  InjectOverflowTag,
};

const char* to_string(FaultKind k);
std::optional<FaultKind> parse_fault_kind(const std::string& s);

struct FaultInjection {
  Micros at = 0;
  FaultKind kind = FaultKind::Crash;
  NodeId node = 0;  // servers are 0..N-1, clients follow
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  QuorumConfig quorum;
  /// Client roles: writers only write, readers only read, mixed clients flip a coin.
  std::uint32_t writers = 0;
  std::uint32_t readers = 0;
  std::uint32_t mixed = 3;
  std::size_t object_size = 1024;
  LinkModel link;
  std::uint32_t ops_per_client = 10;
  Micros inter_op_min = 0;
  Micros inter_op_max = 50 * kMillis;
  std::vector<FaultInjection> faults;
  NodeOptions node;
  bool hold_frames_while_down = false;
  Micros time_limit = 3600LL * 1000 * kMillis;

  std::uint32_t n_clients() const { return writers + readers + mixed; }
};

/// N servers named "sim:<i>"; k defaults to N - 2f.
QuorumConfig make_quorum(std::uint32_t n, std::uint32_t f, Variant v, std::optional<std::uint32_t> k = std::nullopt);

/// Reads `scenario.*` keys on top of the quorum from the config file:
///   scenario.seed, scenario.writers, scenario.readers, scenario.mixed,
///   scenario.object_size, scenario.ops_per_client, scenario.loss, scenario.dup,
///   scenario.reorder, scenario.lat_min_ms, scenario.lat_mode_ms, scenario.lat_max_ms,
///   scenario.bandwidth, scenario.inter_op_min_ms, scenario.inter_op_max_ms,
///   scenario.time_limit_s, scenario.hold_frames (0|1),
///   scenario.faults (comma list of <ms>:<kind>:<node>).
/// Throws ConfigError.
ScenarioConfig scenario_from_config(const ConfigFile& file);

/// Throws ConfigError on invalid link probabilities, unknown nodes, more than f
/// server crashes, or server crashes in a scenario that injects an overflow tag.
void validate(const ScenarioConfig& cfg);

/// Per-operation measurements, in history order.
struct OpMetrics {
  std::uint32_t client = 0;
  std::uint32_t life = 0;
  OpKind kind = OpKind::Read;
  OpOutcome outcome = OpOutcome::Ok;
  Micros invoke = 0;
  Micros respond = kPending;
  unsigned rounds = 0;
  unsigned restarts = 0;
  unsigned timeouts = 0;
  std::uint64_t bytes = 0;
  Tag tag;
  bool forced = false;
};

struct Metrics {
  std::vector<OpMetrics> ops;
  /// Message and byte counts: frames.<TYPE>, bytes.<TYPE>, client_frames.<TYPE>,
  /// retransmissions, sim.* and so on.
  std::map<std::string, std::uint64_t> counters;
  /// Overflow injection to the first query completed in a newer epoch.
  std::vector<Micros> reset_durations;
  Micros end_time = 0;
  bool completed = false;

  std::string ops_csv() const;
  std::string counters_csv() const;
  /// FNV-1a over both CSV tables.
  std::uint64_t hash() const;
};

/// One row per invoke and per respond event.
std::string history_csv(const History& h);

/// A simulated deployment: servers, clients, the simulator, and history recording.
/// Scenario code and tests drive it directly; run_scenario wraps the common case.
class Cluster {
 public:
  struct Hooks {
    std::function<void(std::uint32_t client, const PhaseId&)> on_issue;
    std::function<void(std::uint32_t client, NodeId server, const PhaseId&)> on_consume;
    std::function<void(std::uint32_t client, const Uid&)> on_incarnation;
    std::function<void(std::uint32_t server, const Tag&)> on_local_reset;
    std::function<void(std::uint32_t client, Micros at, std::uint32_t epoch)> on_query_done;
  };

  explicit Cluster(ScenarioConfig cfg, Hooks hooks = {});
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  const ScenarioConfig& config() const { return cfg_; }
  Simulator& sim() { return sim_; }
  std::uint32_t n_servers() const { return cfg_.quorum.n(); }
  std::uint32_t n_clients() const { return static_cast<std::uint32_t>(clients_.size()); }
  ServerNode& server(std::uint32_t i) { return *servers_.at(i); }
  ClientNode& client(std::uint32_t i) { return *clients_.at(i).node; }
  std::uint32_t life(std::uint32_t i) const { return clients_.at(i).life; }
  bool client_ready(std::uint32_t i) const { return clients_.at(i).ready; }

  /// Boots every client and starts the scripted workload.
  void start_workload();
  /// Runs until the workload and all scheduled faults are done, or the time limit.
  bool run_workload();

  /// Starts the scripted workload on clients that are already booted.
  void begin_scripted();
  /// Boots clients without a workload; ops are then issued with the calls below.
  void boot_clients();
  void write(std::uint32_t c, std::function<void(const OpResult&)> done = nullptr);
  void write_with_seq(std::uint32_t c, std::uint64_t seq, std::function<void(const OpResult&)> done = nullptr);
  void read(std::uint32_t c, std::function<void(const OpResult&)> done = nullptr);
  /// Steps the simulator until pred holds or `limit` virtual time passes. Returns pred().
  bool run_until(const std::function<bool()>& pred, Micros limit);
  bool idle() const;

  void apply(FaultKind kind, NodeId node);
  void schedule_fault(const FaultInjection& f);

  const History& history() const { return history_; }
  Metrics metrics() const;

  /// Fresh unique register content of the configured size.
  Bytes make_value(std::uint32_t c);

 private:
  struct ClientSlot {
    std::unique_ptr<ClientNode> node;
    std::uint32_t life = 0;
    bool ready = false;
    bool in_op = false;
    std::uint32_t remaining = 0;
    std::uint32_t forced_pending = 0;
    bool scripted = false;
  };

  void build_server(std::uint32_t i);
  void build_client(std::uint32_t c);
  void boot_client(std::uint32_t c);
  void next_scripted(std::uint32_t c);
  void schedule_next(std::uint32_t c);
  void run_op(std::uint32_t c, OpKind kind, std::optional<std::uint64_t> seq, std::function<void(const OpResult&)> done);
  std::vector<Uid> writer_uids() const;

  ScenarioConfig cfg_;
  Hooks hooks_;
  Simulator sim_;
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<ServerNode>> servers_;
  std::vector<ClientSlot> clients_;
  History history_;
  std::vector<OpMetrics> op_metrics_;
  std::uint64_t value_counter_ = 0;
  std::size_t faults_outstanding_ = 0;
  std::optional<Micros> reset_started_;
  std::uint32_t reset_epoch_ = 0;
  std::vector<Micros> reset_durations_;
  std::map<std::string, std::uint64_t> retired_counters_;
};

/// Runs the scripted workload with the configured faults. Deterministic in cfg.
std::pair<History, Metrics> run_scenario(const ScenarioConfig& cfg);

}  // namespace casss
