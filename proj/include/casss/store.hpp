#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "casss/types.hpp"

namespace casss {

/// Record store of a CAS/CASSS server, keyed by tag. With a non-zero bound
/// (CASSS) the store is pruned back to that many records; the record holding
/// the maximum fin/FIN tag always survives.
class ServerStore {
 public:
  ServerStore(std::size_t bound, std::uint64_t maxint) : bound_(bound), maxint_(maxint) {}

  const std::map<Tag, Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  std::size_t bound() const { return bound_; }
  const Record* find(const Tag& t) const;

  /// Max tag over fin/FIN records; the initial tag if there are none.
  Tag max_fin() const;
  /// Max tag over all records; the initial tag if empty.
  Tag max_pre() const;

  /// Inserts (t, e, pre) unless t is present; fills a missing element otherwise.
  void put_pre(const Tag& t, Bytes element);
  /// Raises t's label to `phase`, inserting (t, NULL, phase) if t is unknown.
  void finalize(const Tag& t, Phase phase);
  void prune();

  bool has_overflow() const { return !records_.empty() && records_.rbegin()->first.seq >= maxint_; }

  /// Leaves exactly one record: (reset tag, element, fin).
  void reset_to(std::optional<Bytes> element);
  void insert_raw(Record r) { records_[r.tag] = std::move(r); }
  void clear() { records_.clear(); }

  struct Audit {
    std::uint64_t prunes = 0;
    std::uint64_t bound_violations = 0;
    std::uint64_t max_fin_evictions = 0;
    std::size_t max_after_prune = 0;
  };
  const Audit& audit() const { return audit_; }

 private:
  void maybe_prune();

  std::size_t bound_;
  std::uint64_t maxint_;
  std::map<Tag, Record> records_;
  Audit audit_;
};

}  // namespace casss
