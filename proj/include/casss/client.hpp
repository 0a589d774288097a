#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>

#include "casss/node.hpp"
#include "casss/transport.hpp"

namespace casss {

enum class OpKind : std::uint8_t { Read = 0, Write = 1 };
enum class OpOutcome : std::uint8_t { Ok = 0, Unsuccessful = 1, Aborted = 2 };

const char* to_string(OpKind k);
const char* to_string(OpOutcome o);

struct OpResult {
  OpKind kind = OpKind::Read;
  OpOutcome outcome = OpOutcome::Ok;
  Bytes value;
  Tag tag;
  unsigned rounds = 0;
  unsigned restarts = 0;
  unsigned timeouts = 0;
  std::uint64_t bytes = 0;
  Micros invoked = 0;
  Micros responded = 0;
};

/// A register client. Operations are sequential: at most one is in flight,
/// and a CASSS client never overlaps its incarnation task with an operation.
class ClientNode : public Transport::Handler {
 public:
  using Done = std::function<void(const OpResult&)>;

  struct Hooks {
    std::function<void(const PhaseId&)> on_issue;
    /// A reply counted toward a quorum.
    std::function<void(NodeId server, const PhaseId&)> on_consume;
    /// A query phase completed in the given epoch.
    std::function<void(Micros at, std::uint32_t epoch)> on_query_done;
    std::function<void(const Uid&)> on_incarnation;
  };

  ClientNode(Env& env, const NodeOptions& opt, std::uint32_t index, Hooks hooks = {});

  /// Runs the incarnation task (CASSS) and then calls `ready`.
  void boot(std::function<void()> ready);
  void write(Bytes value, Done done);
  /// A write that skips the query and uses tag (seq, uid); aborted by a reset.
  void write_with_seq(Bytes value, std::uint64_t seq, Done done);
  void read(Done done);

  void on_frame(NodeId src, std::span<const std::uint8_t> frame) { transport_.on_frame(src, frame); }

  std::optional<WireMessage> on_request(NodeId, const WireMessage&) override { return WireMessage{}; }
  void on_reply(NodeId src, const WireMessage& reply) override;
  void on_unreliable(NodeId, const WireMessage&) override {}

  const Uid& uid() const { return uid_; }
  std::uint32_t epoch() const { return epoch_; }
  std::uint32_t nonce() const { return nonce_; }
  bool busy() const { return activity_ != Activity::Idle; }
  const Transport& transport() const { return transport_; }
  Transport& transport() { return transport_; }
  std::uint64_t stale_replies() const { return stale_replies_; }
  Micros phase_timeout() const;

 private:
  enum class Activity { Idle, Incarnation, Operation };

  struct Op {
    OpKind kind = OpKind::Read;
    Bytes value;
    std::optional<std::uint64_t> force_seq;
    Tag tag;
    Done done;
    OpResult result;
    std::uint64_t bytes_at_start = 0;
  };

  struct Collector {
    PhaseId id;
    Stage stage = Stage::Query;
    std::uint32_t needed = 0;
    std::map<NodeId, WireMessage> replies;
    Micros started = 0;
    bool active = false;
    std::uint64_t generation = 0;
  };

  void start_op(Op op);
  void begin_incarnation(bool at_boot, std::function<void()> then);
  void issue(Stage stage);
  WireMessage build_request(Stage stage, std::uint32_t server) const;
  void phase_complete();
  void op_phase_complete();
  void incarnation_phase_complete();
  void finish(OpOutcome outcome);
  void restart_current();
  void arm_timeout();
  std::uint64_t traffic() const;
  bool incarnation_due() const;

  Env& env_;
  NodeOptions opt_;
  std::uint32_t index_;
  Hooks hooks_;
  Uid uid_;
  Transport transport_;
  std::uint32_t nonce_;
  std::uint16_t counter_ = 0;
  std::uint32_t epoch_ = 0;
  Activity activity_ = Activity::Idle;
  std::optional<Op> op_;
  std::optional<Op> queued_;
  Collector phase_;
  double rtt_estimate_;
  Micros next_incarnation_ = 0;
  bool inc_at_boot_ = false;
  std::uint64_t new_inc_ = 0;
  std::function<void()> after_incarnation_;
  std::uint64_t stale_replies_ = 0;
  std::vector<CodedElement> elements_;
};

}  // namespace casss
