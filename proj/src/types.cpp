#include "casss/types.hpp"

#include <sstream>

#include "casss/error.hpp"

namespace casss {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OverflowDetected: return "OverflowDetected";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CodecParamError: return "CodecParamError";
    case ErrorCode::InsufficientElements: return "InsufficientElements";
    case ErrorCode::InconsistentElements: return "InconsistentElements";
    case ErrorCode::PhaseTimeout: return "PhaseTimeout";
    case ErrorCode::BulkTimeout: return "BulkTimeout";
    case ErrorCode::StateSpaceExceeded: return "StateSpaceExceeded";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BindError: return "BindError";
  }
  return "Unknown";
}

HwAddr HwAddr::from_u64(std::uint64_t v) {
  HwAddr a;
  for (int i = 7; i >= 0; --i) {
    a.bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v & 0xff);
    v >>= 8;
  }
  return a;
}

std::uint64_t HwAddr::to_u64() const {
  std::uint64_t v = 0;
  for (auto b : bytes) v = (v << 8) | b;
  return v;
}

std::string to_string(const Tag& t) {
  std::ostringstream os;
  os << '(' << t.seq << ',';
  if (t.writer == kNullWriter) {
    os << "null";
  } else {
    os << std::hex << t.writer.hw.to_u64() << std::dec << '/' << t.writer.inc;
  }
  os << ')';
  return os.str();
}

Ordering compare_tags(const Tag& a, const Tag& b) {
  auto c = a <=> b;
  if (c < 0) return Ordering::LT;
  if (c > 0) return Ordering::GT;
  return Ordering::EQ;
}

Tag next_tag(const Tag& max, const Uid& self, std::uint64_t maxint) {
  if (max.seq >= maxint) {
    throw Error(ErrorCode::OverflowDetected, "tag " + to_string(max) + " reached the overflow bound");
  }
  return Tag{max.seq + 1, self};
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::Pre: return "pre";
    case Phase::Fin: return "fin";
    case Phase::FinFin: return "FIN";
  }
  return "?";
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::MWABD: return "MWABD";
    case Variant::CAS: return "CAS";
    case Variant::CASSS: return "CASSS";
  }
  return "?";
}

std::optional<Variant> parse_variant(const std::string& s) {
  if (s == "MWABD" || s == "mwabd" || s == "MW-ABD") return Variant::MWABD;
  if (s == "CAS" || s == "cas") return Variant::CAS;
  if (s == "CASSS" || s == "casss") return Variant::CASSS;
  return std::nullopt;
}

std::uint32_t coded_quorum_size(std::uint32_t n, std::uint32_t k) { return (n + k + 1) / 2; }

std::uint32_t majority_quorum_size(std::uint32_t n) { return n / 2 + 1; }

void validate(const QuorumConfig& cfg) {
  const auto n = cfg.n();
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "no servers configured");
  if (cfg.variant == Variant::MWABD) {
    if (2 * cfg.f >= n) throw Error(ErrorCode::InvalidConfig, "f must be below N/2");
    return;
  }
  if (2 * cfg.f >= n) throw Error(ErrorCode::InvalidConfig, "f must be below N/2");
  if (cfg.k < 1 || cfg.k > n - 2 * cfg.f) {
    throw Error(ErrorCode::InvalidConfig,
                "k=" + std::to_string(cfg.k) + " outside [1, N-2f=" + std::to_string(n - 2 * cfg.f) + "]");
  }
  if (n > 32) throw Error(ErrorCode::InvalidConfig, "coded variants support at most 32 servers");
}

std::uint32_t quorum_size(const QuorumConfig& cfg) {
  validate(cfg);
  return cfg.variant == Variant::MWABD ? majority_quorum_size(cfg.n()) : coded_quorum_size(cfg.n(), cfg.k);
}

std::uint32_t quorum_size(const QuorumConfig& cfg, QuorumKind kind) {
  return kind == QuorumKind::Majority ? majority_quorum_size(cfg.n()) : quorum_size(cfg);
}

std::size_t record_bound(const QuorumConfig& cfg) {
  return static_cast<std::size_t>(cfg.effective_clients()) + cfg.delta + 3;
}

}  // namespace casss
