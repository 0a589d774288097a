#pragma once

#include "casss/types.hpp"

namespace casss {

/// Full-replication server state: one (tag, value) pair.
struct AbdServerState {
  Tag tag = kInitialTag;
  Bytes data;

  /// Adopts (t, value) only for a strictly greater tag, so duplicates are no-ops.
  bool adopt(const Tag& t, Bytes value) {
    if (!(t > tag)) return false;
    tag = t;
    data = std::move(value);
    return true;
  }
};

}  // namespace casss
