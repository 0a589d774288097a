#include "casss/wire.hpp"

namespace casss {

const char* to_string(MsgType t) {
  switch (t) {
    case MsgType::QUERY: return "QUERY";
    case MsgType::PREWRITE: return "PREWRITE";
    case MsgType::FINWRITE: return "FINWRITE";
    case MsgType::FINREAD: return "FINREAD";
    case MsgType::FINFIN: return "FINFIN";
    case MsgType::ACK: return "ACK";
    case MsgType::GOSSIP: return "GOSSIP";
    case MsgType::CNTRQRY: return "CNTRQRY";
    case MsgType::INCCNTR: return "INCCNTR";
    case MsgType::RESETSTATE: return "RESETSTATE";
  }
  return "?";
}

void ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::bytes(std::span<const std::uint8_t> b) {
  u64(b.size());
  out_.insert(out_.end(), b.begin(), b.end());
}

void ByteWriter::tag(const Tag& t) {
  u64(t.seq);
  uid(t.writer);
}

void ByteWriter::uid(const Uid& u) {
  u64(u.hw.to_u64());
  u64(u.inc);
}

bool ByteReader::u8(std::uint8_t& v) {
  if (remaining() < 1) return false;
  v = in_[pos_++];
  return true;
}

bool ByteReader::u64(std::uint64_t& v) {
  if (remaining() < 8) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
  return true;
}

bool ByteReader::bytes(Bytes& b) {
  std::uint64_t len = 0;
  if (!u64(len) || len > remaining()) return false;
  b.assign(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
  pos_ += len;
  return true;
}

bool ByteReader::tag(Tag& t) { return u64(t.seq) && uid(t.writer); }

bool ByteReader::uid(Uid& u) {
  std::uint64_t hw = 0;
  if (!u64(hw) || !u64(u.inc)) return false;
  u.hw = HwAddr::from_u64(hw);
  return true;
}

Bytes serialize(const WireMessage& m) {
  ByteWriter w;
  w.u64(static_cast<std::uint64_t>(m.type));
  w.u64(m.token);
  w.u8(m.tag ? 1 : 0);
  if (m.tag) w.tag(*m.tag);
  w.u8(m.phase ? 1 : 0);
  if (m.phase) w.u64(static_cast<std::uint64_t>(*m.phase));
  w.u8(m.element ? 1 : 0);
  if (m.element) w.bytes(*m.element);
  w.uid(m.sender);
  w.bytes(m.payload);
  return w.take();
}

std::optional<WireMessage> deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  WireMessage m;
  std::uint64_t type = 0;
  std::uint8_t flag = 0;
  if (!r.u64(type) || type >= kMsgTypeCount) return std::nullopt;
  m.type = static_cast<MsgType>(type);
  if (!r.u64(m.token) || !r.u8(flag) || flag > 1) return std::nullopt;
  if (flag) {
    Tag t;
    if (!r.tag(t)) return std::nullopt;
    m.tag = t;
  }
  if (!r.u8(flag) || flag > 1) return std::nullopt;
  if (flag) {
    std::uint64_t p = 0;
    if (!r.u64(p) || p > 2) return std::nullopt;
    m.phase = static_cast<Phase>(p);
  }
  if (!r.u8(flag) || flag > 1) return std::nullopt;
  if (flag) {
    Bytes e;
    if (!r.bytes(e)) return std::nullopt;
    m.element = std::move(e);
  }
  if (!r.uid(m.sender) || !r.bytes(m.payload) || !r.done()) return std::nullopt;
  return m;
}

Bytes pack_element(const CodedElement& e) {
  ByteWriter w;
  w.u64(e.index);
  w.u64(e.object_len);
  w.bytes(e.bytes);
  return w.take();
}

std::optional<CodedElement> unpack_element(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  CodedElement e;
  std::uint64_t index = 0;
  if (!r.u64(index) || index >= kMaxCodeLength || !r.u64(e.object_len) || !r.bytes(e.bytes) || !r.done()) {
    return std::nullopt;
  }
  e.index = static_cast<std::uint32_t>(index);
  return e;
}

void write(ByteWriter& w, const PhaseId& p) {
  w.uid(p.client);
  w.u64(p.nonce);
  w.u64(p.counter);
  w.u64(p.stage);
}

bool read(ByteReader& r, PhaseId& p) {
  std::uint64_t nonce = 0, counter = 0, stage = 0;
  if (!r.uid(p.client) || !r.u64(nonce) || !r.u64(counter) || !r.u64(stage)) return false;
  if (nonce > 0xffffffffu || counter > 0xffffu || stage > 0xffu) return false;
  p.nonce = static_cast<std::uint32_t>(nonce);
  p.counter = static_cast<std::uint16_t>(counter);
  p.stage = static_cast<std::uint8_t>(stage);
  return true;
}

void write(ByteWriter& w, const RequestHeader& h) {
  write(w, h.phase);
  w.u64(h.epoch);
}

bool read(ByteReader& r, RequestHeader& h) {
  std::uint64_t epoch = 0;
  if (!read(r, h.phase) || !r.u64(epoch) || epoch > 0xffffffffu) return false;
  h.epoch = static_cast<std::uint32_t>(epoch);
  return true;
}

void write(ByteWriter& w, const ReplyHeader& h) {
  write(w, h.phase);
  w.u64(h.epoch);
  w.u64(h.server);
  w.u64(static_cast<std::uint64_t>(h.status));
}

bool read(ByteReader& r, ReplyHeader& h) {
  std::uint64_t epoch = 0, server = 0, status = 0;
  if (!read(r, h.phase) || !r.u64(epoch) || !r.u64(server) || !r.u64(status)) return false;
  if (epoch > 0xffffffffu || server > 0xffffffffu || status > 1) return false;
  h.epoch = static_cast<std::uint32_t>(epoch);
  h.server = static_cast<std::uint32_t>(server);
  h.status = static_cast<ReplyStatus>(status);
  return true;
}

void write(ByteWriter& w, const QueryResponse& q) {
  w.tag(q.max_fin);
  w.tag(q.max_pre);
}

bool read(ByteReader& r, QueryResponse& q) { return r.tag(q.max_fin) && r.tag(q.max_pre); }

void write(ByteWriter& w, const GossipDigest& d) {
  w.u64(d.server);
  w.u64(d.epoch);
  w.tag(d.max_pre);
  w.tag(d.max_fin);
  w.u64(d.max_inc_seen);
  w.u64(d.overflow_seen ? 1 : 0);
}

bool read(ByteReader& r, GossipDigest& d) {
  std::uint64_t server = 0, epoch = 0, overflow = 0;
  if (!r.u64(server) || !r.u64(epoch) || !r.tag(d.max_pre) || !r.tag(d.max_fin) || !r.u64(d.max_inc_seen) ||
      !r.u64(overflow)) {
    return false;
  }
  if (server > 0xffffffffu || epoch > 0xffffffffu || overflow > 1) return false;
  d.server = static_cast<std::uint32_t>(server);
  d.epoch = static_cast<std::uint32_t>(epoch);
  d.overflow_seen = overflow == 1;
  return true;
}

Bytes make_frame(FrameKind kind, const WireMessage& m) {
  Bytes body = serialize(m);
  Bytes out;
  out.reserve(body.size() + 1);
  out.push_back(static_cast<std::uint8_t>(kind));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::optional<std::pair<FrameKind, WireMessage>> parse_frame(std::span<const std::uint8_t> frame) {
  if (frame.empty() || frame[0] > 2) return std::nullopt;
  auto m = deserialize(frame.subspan(1));
  if (!m) return std::nullopt;
  return std::make_pair(static_cast<FrameKind>(frame[0]), std::move(*m));
}

}  // namespace casss
