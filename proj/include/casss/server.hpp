#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>

#include "casss/global_reset.hpp"
#include "casss/gossip.hpp"
#include "casss/mwabd.hpp"
#include "casss/node.hpp"
#include "casss/reincarnation.hpp"
#include "casss/store.hpp"
#include "casss/transport.hpp"

namespace casss {

/// One storage server. Runs the register handlers of the configured variant
/// and, for CASSS, periodic gossip, overflow blocking and the global reset.
class ServerNode : public Transport::Handler {
 public:
  struct Hooks {
    std::function<void(std::uint32_t server, const Tag& agreed)> on_local_reset;
    std::function<void(std::uint32_t server, const Tag& proposed)> on_propose;
  };

  ServerNode(Env& env, const NodeOptions& opt, std::uint32_t index, Hooks hooks = {});

  void start();
  void on_frame(NodeId src, std::span<const std::uint8_t> frame) { transport_.on_frame(src, frame); }

  std::optional<WireMessage> on_request(NodeId src, const WireMessage& m) override;
  void on_reply(NodeId, const WireMessage&) override {}
  void on_unreliable(NodeId src, const WireMessage& m) override;

  std::uint32_t index() const { return index_; }
  std::uint32_t epoch() const { return epoch_; }
  bool blocked() const;
  bool resetting() const;
  /// A reset is under way and this server has not applied its local reset yet.
  bool reset_pending() const;
  const ServerStore& store() const { return store_; }
  const AbdServerState& abd() const { return abd_; }
  const ResetState& reset_state() const { return reset_; }
  const IncarnationQueue& incarnations() const { return queue_; }
  const GossipView& gossip() const { return gossip_; }
  const Transport& transport() const { return transport_; }
  std::size_t deferred() const { return deferred_.size(); }
  std::uint64_t proposals() const { return proposals_; }

  // Transient-fault injection.
  void inject_record(Record r);
  void corrupt_store(std::mt19937_64& rng, const std::vector<Uid>& writers, std::size_t element_len);
  void corrupt_reset_state(std::mt19937_64& rng);
  void corrupt_incarnations(std::mt19937_64& rng, const std::vector<HwAddr>& known);
  void corrupt_channels(std::mt19937_64& rng) { transport_.corrupt_channels(rng); }

 private:
  bool coded() const { return opt_.quorum.variant != Variant::MWABD; }
  bool casss() const { return opt_.quorum.variant == Variant::CASSS; }
  bool must_defer(const WireMessage& m) const;
  std::optional<WireMessage> handle(NodeId src, const WireMessage& m);
  WireMessage handle_client(const WireMessage& m);
  void on_gossip(const WireMessage& m);
  void on_reset_message(NodeId src, const WireMessage& m);
  void gossip_tick();
  void settle();
  void push_reset_state(bool force);
  void apply_local_reset(const Tag& t);
  void release_deferred();

  Env& env_;
  NodeOptions opt_;
  std::uint32_t index_;
  Hooks hooks_;
  Transport transport_;
  std::uint32_t epoch_ = 0;
  ServerStore store_;
  AbdServerState abd_;
  GossipView gossip_;
  IncarnationQueue queue_;
  ResetState reset_;
  bool reset_applied_ = false;
  bool settling_ = false;
  std::uint64_t ticks_ = 0;
  std::uint64_t proposals_ = 0;
  std::map<std::pair<NodeId, MsgType>, WireMessage> deferred_;
  std::map<NodeId, Bytes> last_reset_sent_;
};

}  // namespace casss
