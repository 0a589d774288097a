#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "casss/client.hpp"

namespace casss {

inline constexpr Micros kPending = std::numeric_limits<Micros>::max();

/// One register operation as seen by its client. `value` identifies the
/// written or returned bytes (see value_id); pending operations have
/// respond == kPending.
struct HistoryOp {
  std::uint32_t client = 0;
  /// Incremented each time the client restarts; each life is sequential on its own.
  std::uint32_t life = 0;
  OpKind kind = OpKind::Read;
  OpOutcome outcome = OpOutcome::Ok;
  std::uint64_t value = 0;
  Micros invoke = 0;
  Micros respond = kPending;
  Tag tag;
};

using History = std::vector<HistoryOp>;

/// FNV-1a over the bytes.
std::uint64_t value_id(std::span<const std::uint8_t> bytes);

struct CheckOptions {
  /// Value held before the first operation. Ignored when wildcard_initial is set.
  std::uint64_t initial_value = value_id({});
  /// The register may start with any value not written within the history.
  bool wildcard_initial = false;
  std::size_t max_ops = 1000;
  std::size_t max_states = 5'000'000;
};

struct CheckResult {
  bool linearizable = false;
  /// Indices into the history in linearization order (completed reads and writes,
  /// plus the pending writes that took effect).
  std::vector<std::size_t> witness;
  /// On failure: two operations that cannot be ordered consistently.
  std::optional<std::pair<std::size_t, std::size_t>> violation;
};

/// Decides whether the completed operations admit a linearization as a
/// read/write register. Unsuccessful and pending reads are dropped; pending
/// and aborted writes may take effect at any point after their invocation, or
/// never. Throws StateSpaceExceeded
/// above opt.max_ops operations or opt.max_states explored states.
CheckResult check_linearizable(const History& h, const CheckOptions& opt = {});

}  // namespace casss
