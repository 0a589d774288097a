#include "casss/client.hpp"

#include <algorithm>
#include <stdexcept>

#include "casss/codec.hpp"
#include "casss/error.hpp"
#include "casss/reincarnation.hpp"

namespace casss {

const char* to_string(OpKind k) { return k == OpKind::Read ? "read" : "write"; }

const char* to_string(OpOutcome o) {
  switch (o) {
    case OpOutcome::Ok:
      return "ok";
    case OpOutcome::Unsuccessful:
      return "unsuccessful";
    case OpOutcome::Aborted:
      return "aborted";
  }
  return "?";
}

ClientNode::ClientNode(Env& env, const NodeOptions& opt, std::uint32_t index, Hooks hooks)
    : env_(env),
      opt_(opt),
      index_(index),
      hooks_(std::move(hooks)),
      uid_{client_hw(index), 0},
      transport_(env, *this, uid_, opt.transport),
      nonce_(static_cast<std::uint32_t>(env.rng()())),
      rtt_estimate_(static_cast<double>(opt.initial_rtt)) {}

Micros ClientNode::phase_timeout() const {
  return static_cast<Micros>(rtt_estimate_ * std::max(1u, opt_.phase_timeout_factor));
}

std::uint64_t ClientNode::traffic() const {
  return transport_.stats().total_bytes_sent() + transport_.stats().bytes_received;
}

bool ClientNode::incarnation_due() const {
  return opt_.quorum.variant == Variant::CASSS && env_.now() >= next_incarnation_;
}

void ClientNode::boot(std::function<void()> ready) {
  if (opt_.quorum.variant != Variant::CASSS) {
    if (ready) ready();
    return;
  }
  begin_incarnation(true, std::move(ready));
}

void ClientNode::write(Bytes value, Done done) {
  if (value.empty()) throw std::invalid_argument("register values must be non-empty");
  Op op;
  op.kind = OpKind::Write;
  op.value = std::move(value);
  op.done = std::move(done);
  start_op(std::move(op));
}

void ClientNode::write_with_seq(Bytes value, std::uint64_t seq, Done done) {
  if (value.empty()) throw std::invalid_argument("register values must be non-empty");
  Op op;
  op.kind = OpKind::Write;
  op.value = std::move(value);
  op.force_seq = seq;
  op.done = std::move(done);
  start_op(std::move(op));
}

void ClientNode::read(Done done) {
  Op op;
  op.kind = OpKind::Read;
  op.done = std::move(done);
  start_op(std::move(op));
}

void ClientNode::start_op(Op op) {
  if (activity_ == Activity::Operation || queued_) throw std::logic_error("client operations are sequential");
  if (activity_ == Activity::Incarnation) {
    queued_ = std::move(op);
    return;
  }
  if (incarnation_due()) {
    queued_ = std::move(op);
    begin_incarnation(false, nullptr);
    return;
  }
  activity_ = Activity::Operation;
  op.result.kind = op.kind;
  op.result.invoked = env_.now();
  op.bytes_at_start = traffic();
  op_ = std::move(op);
  if (op_->force_seq) {
    op_->tag = Tag{*op_->force_seq, uid_};
    elements_ = encode(op_->value, opt_.quorum);
    issue(Stage::PreWrite);
  } else {
    issue(Stage::Query);
  }
}

void ClientNode::begin_incarnation(bool at_boot, std::function<void()> then) {
  activity_ = Activity::Incarnation;
  inc_at_boot_ = at_boot;
  after_incarnation_ = std::move(then);
  issue(Stage::CntrQry);
}

void ClientNode::issue(Stage stage) {
  const auto& q = opt_.quorum;
  phase_.id = PhaseId{uid_, nonce_, ++counter_, static_cast<std::uint8_t>(stage)};
  phase_.stage = stage;
  const bool majority = q.variant == Variant::MWABD || stage == Stage::CntrQry || stage == Stage::IncCntr;
  phase_.needed = quorum_size(q, majority ? QuorumKind::Majority : QuorumKind::Coded);
  phase_.replies.clear();
  phase_.started = env_.now();
  phase_.active = true;
  ++phase_.generation;
  if (op_ && activity_ == Activity::Operation) ++op_->result.rounds;
  if (hooks_.on_issue) hooks_.on_issue(phase_.id);
  for (std::uint32_t j = 0; j < q.n(); ++j) transport_.send_reliable(server_node(j), build_request(stage, j));
  arm_timeout();
}

WireMessage ClientNode::build_request(Stage stage, std::uint32_t server) const {
  WireMessage m;
  ByteWriter w;
  casss::write(w, RequestHeader{phase_.id, epoch_});
  const bool coded = opt_.quorum.variant != Variant::MWABD;
  switch (stage) {
    case Stage::Query:
      m.type = MsgType::QUERY;
      w.u8(!coded && op_ && op_->kind == OpKind::Read ? 1 : 0);
      break;
    case Stage::PreWrite:
      m.type = MsgType::PREWRITE;
      m.tag = op_->tag;
      m.phase = Phase::Pre;
      m.element = coded ? pack_element(elements_[server]) : op_->value;
      break;
    case Stage::Propagate:
      m.type = MsgType::PREWRITE;
      m.tag = op_->tag;
      m.phase = Phase::Pre;
      m.element = op_->value;
      break;
    case Stage::FinWrite:
      m.type = MsgType::FINWRITE;
      m.tag = op_->tag;
      m.phase = Phase::Fin;
      break;
    case Stage::FinRead:
      m.type = MsgType::FINREAD;
      m.tag = op_->tag;
      m.phase = Phase::Fin;
      break;
    case Stage::FinFin:
      m.type = MsgType::FINFIN;
      m.tag = op_->tag;
      m.phase = Phase::FinFin;
      break;
    case Stage::CntrQry:
      m.type = MsgType::CNTRQRY;
      break;
    case Stage::IncCntr:
      m.type = MsgType::INCCNTR;
      w.u64(new_inc_);
      break;
  }
  m.payload = w.take();
  return m;
}

void ClientNode::arm_timeout() {
  const auto gen = phase_.generation;
  env_.set_timer(phase_timeout(), [this, gen] {
    if (!phase_.active || phase_.generation != gen) return;
    if (op_ && activity_ == Activity::Operation) ++op_->result.timeouts;
    issue(phase_.stage);
  });
}

void ClientNode::on_reply(NodeId src, const WireMessage& reply) {
  ByteReader r(reply.payload);
  ReplyHeader h;
  if (!casss::read(r, h) || !phase_.active || !(h.phase == phase_.id)) {
    ++stale_replies_;
    return;
  }
  if (h.status == ReplyStatus::EpochMismatch) {
    if (h.epoch > epoch_) {
      epoch_ = h.epoch;
      restart_current();
    }
    return;
  }
  if (h.epoch != epoch_ || phase_.replies.count(src)) return;
  phase_.replies.emplace(src, reply);
  if (hooks_.on_consume) hooks_.on_consume(src, h.phase);
  if (phase_.replies.size() >= phase_.needed) {
    phase_.active = false;
    const auto sample = static_cast<double>(env_.now() - phase_.started);
    rtt_estimate_ = 0.8 * rtt_estimate_ + 0.2 * std::max(sample, 1000.0);
    if (activity_ == Activity::Operation) {
      op_phase_complete();
    } else if (activity_ == Activity::Incarnation) {
      incarnation_phase_complete();
    }
  }
}

void ClientNode::restart_current() {
  if (activity_ == Activity::Operation) {
    if (op_->force_seq) {
      finish(OpOutcome::Aborted);
      return;
    }
    ++op_->result.restarts;
    issue(Stage::Query);
  } else if (activity_ == Activity::Incarnation) {
    issue(Stage::CntrQry);
  }
}

namespace {

// Strips the reply header; the reader is left at the variant-specific part.
ByteReader body(const WireMessage& m) {
  ByteReader r(m.payload);
  ReplyHeader h;
  read(r, h);
  return r;
}

}  // namespace

void ClientNode::op_phase_complete() {
  const auto& q = opt_.quorum;
  const bool coded = q.variant != Variant::MWABD;
  Op& op = *op_;
  switch (phase_.stage) {
    case Stage::Query: {
      if (hooks_.on_query_done) hooks_.on_query_done(env_.now(), epoch_);
      Tag max_fin = kInitialTag;
      Tag max_pre = kInitialTag;
      const WireMessage* best = nullptr;
      for (const auto& [src, m] : phase_.replies) {
        if (coded) {
          auto r = body(m);
          QueryResponse qr;
          if (!casss::read(r, qr)) continue;
          max_fin = std::max(max_fin, qr.max_fin);
          max_pre = std::max(max_pre, qr.max_pre);
        } else if (m.tag && (!best || *m.tag > max_fin)) {
          max_fin = *m.tag;
          best = &m;
        }
      }
      if (op.kind == OpKind::Write) {
        const Tag base = q.variant == Variant::CASSS ? std::max(max_fin, max_pre) : max_fin;
        try {
          op.tag = next_tag(base, uid_, q.maxint);
        } catch (const Error&) {
          finish(OpOutcome::Aborted);
          return;
        }
        if (coded) elements_ = encode(op.value, q);
        issue(Stage::PreWrite);
      } else {
        op.tag = max_fin;
        if (coded) {
          issue(Stage::FinRead);
        } else {
          op.value = best && best->element ? *best->element : Bytes{};
          issue(Stage::Propagate);
        }
      }
      break;
    }
    case Stage::PreWrite:
      if (coded) {
        issue(Stage::FinWrite);
      } else {
        finish(OpOutcome::Ok);
      }
      break;
    case Stage::FinWrite:
      if (q.variant == Variant::CASSS) {
        issue(Stage::FinFin);
      } else {
        finish(OpOutcome::Ok);
      }
      break;
    case Stage::FinFin:
    case Stage::Propagate:
      finish(OpOutcome::Ok);
      break;
    case Stage::FinRead: {
      if (op.tag == kInitialTag) {
        op.value.clear();
        finish(OpOutcome::Ok);
        return;
      }
      std::vector<CodedElement> elems;
      for (const auto& [src, m] : phase_.replies) {
        if (!m.element) continue;
        if (auto e = unpack_element(*m.element)) elems.push_back(std::move(*e));
      }
      if (elems.size() < q.k) {
        finish(OpOutcome::Unsuccessful);
        return;
      }
      try {
        op.value = decode(elems, q);
        finish(OpOutcome::Ok);
      } catch (const Error&) {
        finish(OpOutcome::Unsuccessful);
      }
      break;
    }
    default:
      break;
  }
}

void ClientNode::incarnation_phase_complete() {
  if (phase_.stage == Stage::CntrQry) {
    std::uint64_t m = 0;
    for (const auto& [src, reply] : phase_.replies) {
      auto r = body(reply);
      std::uint64_t inc = 0;
      if (r.u64(inc)) m = std::max(m, inc);
    }
    auto next = next_incarnation(m, uid_.inc, inc_at_boot_);
    if (next && *next <= opt_.quorum.maxinc) {
      new_inc_ = *next;
      issue(Stage::IncCntr);
      return;
    }
    if (next) {
      // Incarnation space exhausted: wait for the servers to reset, then retry.
      env_.set_timer(opt_.gossip_period * 10, [this] {
        if (activity_ == Activity::Incarnation && !phase_.active) issue(Stage::CntrQry);
      });
      return;
    }
  } else {
    uid_.inc = new_inc_;
    transport_.set_self(uid_);
    if (hooks_.on_incarnation) hooks_.on_incarnation(uid_);
  }
  activity_ = Activity::Idle;
  next_incarnation_ = env_.now() + opt_.gossip_period * opt_.incarnation_period;
  auto then = std::move(after_incarnation_);
  after_incarnation_ = nullptr;
  if (queued_) {
    Op op = std::move(*queued_);
    queued_.reset();
    start_op(std::move(op));
  }
  if (then) then();
}

void ClientNode::finish(OpOutcome outcome) {
  phase_.active = false;
  Op op = std::move(*op_);
  op_.reset();
  activity_ = Activity::Idle;
  op.result.outcome = outcome;
  op.result.responded = env_.now();
  op.result.bytes = traffic() - op.bytes_at_start;
  op.result.tag = op.tag;
  if (op.kind == OpKind::Read && outcome == OpOutcome::Ok) op.result.value = std::move(op.value);
  if (op.kind == OpKind::Write) op.result.value = std::move(op.value);
  if (op.done) op.done(op.result);
}

}  // namespace casss
