#pragma once

#include <cstdint>

#include "casss/transport.hpp"
#include "casss/types.hpp"

namespace casss {

struct NodeOptions {
  QuorumConfig quorum;
  TransportConfig transport;
  Micros gossip_period = 25 * kMillis;
  /// Phase deadline is this many times the running mean phase latency.
  unsigned phase_timeout_factor = 10;
  Micros initial_rtt = 60 * kMillis;
  /// Clients re-run the incarnation task every this many gossip periods.
  unsigned incarnation_period = 50;
  /// In steady state servers refresh reset state every this many gossip periods.
  unsigned reset_refresh_steady = 8;
};

/// Servers are nodes 0..N-1; clients follow.
inline NodeId server_node(std::uint32_t index) { return index; }
inline NodeId client_node(const QuorumConfig& cfg, std::uint32_t index) { return cfg.n() + index; }
inline HwAddr client_hw(std::uint32_t index) { return HwAddr::from_u64(0x434c000000000000ULL + index + 1); }
inline HwAddr server_hw(std::uint32_t index) { return HwAddr::from_u64(0x5356000000000000ULL + index + 1); }

/// Stage byte of a PhaseId.
enum class Stage : std::uint8_t {
  Query = 1,
  PreWrite = 2,
  FinWrite = 3,
  FinFin = 4,
  FinRead = 5,
  Propagate = 6,
  CntrQry = 7,
  IncCntr = 8,
};

}  // namespace casss
