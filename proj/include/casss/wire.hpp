#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "casss/codec.hpp"
#include "casss/types.hpp"

namespace casss {

enum class MsgType : std::uint8_t {
  QUERY = 0,
  PREWRITE = 1,
  FINWRITE = 2,
  FINREAD = 3,
  FINFIN = 4,
  ACK = 5,
  GOSSIP = 6,
  CNTRQRY = 7,
  INCCNTR = 8,
  RESETSTATE = 9,
};

inline constexpr std::size_t kMsgTypeCount = 10;

const char* to_string(MsgType t);

/// Big-endian writer: 64-bit integers, length-prefixed byte strings.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u64(std::uint64_t v);
  void bytes(std::span<const std::uint8_t> b);
  void tag(const Tag& t);
  void uid(const Uid& u);
  Bytes take() { return std::move(out_); }
  const Bytes& view() const { return out_; }

 private:
  Bytes out_;
};

/// Reader counterpart. Every accessor returns false on truncation so malformed
/// input can be dropped without throwing.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  bool u8(std::uint8_t& v);
  bool u64(std::uint64_t& v);
  bool bytes(Bytes& b);
  bool tag(Tag& t);
  bool uid(Uid& u);
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

struct WireMessage {
  MsgType type = MsgType::QUERY;
  std::uint64_t token = 0;
  std::optional<Tag> tag;
  std::optional<Phase> phase;
  std::optional<Bytes> element;
  Uid sender;
  Bytes payload;

  bool operator==(const WireMessage&) const = default;
};

/// Canonical form: equal messages serialize to identical bytes.
Bytes serialize(const WireMessage& m);
std::optional<WireMessage> deserialize(std::span<const std::uint8_t> bytes);

/// Coded elements travel as [index][object_len][bytes] inside WireMessage::element.
Bytes pack_element(const CodedElement& e);
std::optional<CodedElement> unpack_element(std::span<const std::uint8_t> b);

/// Identifies one quorum phase of one client operation. Bounded: the counter
/// wraps inside a 2^16 window and the nonce is drawn once per boot.
struct PhaseId {
  Uid client;
  std::uint32_t nonce = 0;
  std::uint16_t counter = 0;
  std::uint8_t stage = 0;

  bool operator==(const PhaseId&) const = default;
};

void write(ByteWriter& w, const PhaseId& p);
bool read(ByteReader& r, PhaseId& p);

enum class ReplyStatus : std::uint8_t { Ok = 0, EpochMismatch = 1 };

/// Prefix of every client request payload.
struct RequestHeader {
  PhaseId phase;
  std::uint32_t epoch = 0;
};

/// Prefix of every server reply payload.
struct ReplyHeader {
  PhaseId phase;
  std::uint32_t epoch = 0;
  std::uint32_t server = 0;
  ReplyStatus status = ReplyStatus::Ok;
};

void write(ByteWriter& w, const RequestHeader& h);
bool read(ByteReader& r, RequestHeader& h);
void write(ByteWriter& w, const ReplyHeader& h);
bool read(ByteReader& r, ReplyHeader& h);

/// Coded-variant query reply: both maxima always travel, the client selects.
struct QueryResponse {
  Tag max_fin;
  Tag max_pre;
};

void write(ByteWriter& w, const QueryResponse& q);
bool read(ByteReader& r, QueryResponse& q);

struct GossipDigest {
  std::uint32_t server = 0;
  std::uint32_t epoch = 0;
  Tag max_pre;
  Tag max_fin;
  std::uint64_t max_inc_seen = 0;
  bool overflow_seen = false;

  bool operator==(const GossipDigest&) const = default;
};

void write(ByteWriter& w, const GossipDigest& d);
bool read(ByteReader& r, GossipDigest& d);

/// Channel-level acknowledgement carried in an ACK message's payload.
enum class AckStatus : std::uint8_t { Delivered = 0, Stale = 1 };

struct AckHeader {
  MsgType channel = MsgType::QUERY;
  AckStatus status = AckStatus::Delivered;
  std::uint64_t receiver_counter = 0;
};

/// Transport frame: one kind byte followed by a serialized WireMessage.
enum class FrameKind : std::uint8_t { Unreliable = 0, Data = 1, Ack = 2 };

Bytes make_frame(FrameKind kind, const WireMessage& m);
std::optional<std::pair<FrameKind, WireMessage>> parse_frame(std::span<const std::uint8_t> frame);

}  // namespace casss
