#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "casss/types.hpp"
#include "casss/wire.hpp"

namespace casss {

/// A reset proposal: phase 0, 1 or 2 and an optional tag. The default
/// proposal is phase 0 without a tag.
struct Proposal {
  std::uint8_t phase = 0;
  std::optional<Tag> tag;

  bool operator==(const Proposal&) const = default;
};

/// An entry of prp[]; nullopt stands for bottom.
using PrpEntry = std::optional<Proposal>;

inline const PrpEntry kDefaultPrp = Proposal{};

struct PrpAll {
  PrpEntry prp = kDefaultPrp;
  bool all = true;

  bool operator==(const PrpAll&) const = default;
};

void write(ByteWriter& w, const PrpAll& p);
bool read(ByteReader& r, PrpAll& p);

/// Server-side state of the agreement-based global reset, for server `self`
/// among `n` servers. Pure state machine: the owner feeds it peer messages,
/// runs it, and applies the local reset it asks for.
class ResetState {
 public:
  ResetState(std::size_t n, std::size_t self);

  std::size_t size() const { return prp_.size(); }
  std::size_t self() const { return self_; }

  /// Installs (<1, tag>, false) if the reset is enabled; returns whether it did.
  bool propose(const Tag& tag);

  /// Every entry is the default proposal and every all[] flag is set.
  bool enable_reset() const;
  /// Every entry is the default proposal (no reset in progress).
  bool quiescent() const;

  /// Stores what peer `from` reports: its own entry and its copy of ours.
  void on_message(std::size_t from, const PrpAll& theirs, const PrpAll& echo);

  struct StepResult {
    bool changed = false;
    bool fault = false;
    std::optional<Tag> local_reset;  // set while our own entry is in phase 2
  };
  /// One pass of the loop body.
  StepResult step();
  /// Repeats step() until nothing changes (bounded).
  StepResult run();

  PrpAll own() const { return {prp_[self_], all_[self_]}; }
  /// Our copy of server k's entry, sent back to k as its echo.
  PrpAll view(std::size_t k) const { return {prp_[k], all_[k]}; }

  const std::vector<PrpEntry>& prp() const { return prp_; }
  const std::vector<bool>& all() const { return all_; }
  const std::vector<bool>& seen() const { return seen_; }
  const std::vector<std::optional<PrpAll>>& echoes() const { return echo_; }

  /// Overwrites everything with random values of the right types.
  void corrupt(std::mt19937_64& rng, const std::vector<Tag>& tag_pool);

  // Macros of the algorithm, exposed for tests.
  bool fault_detected() const;
  int degree(std::size_t k) const;
  PrpEntry max_prp() const;

 private:
  bool my_all(std::size_t k) const;
  bool greater_or_equal(std::size_t k) const;
  bool echo_no_all(std::size_t k) const;
  bool echo(std::size_t k) const;
  bool all_seen() const;
  void prp_set_bottom();

  std::size_t self_;
  std::vector<PrpEntry> prp_;
  std::vector<bool> all_;
  std::vector<std::optional<PrpAll>> echo_;
  std::vector<bool> seen_;
};

bool corr_deg(int a, int b);

}  // namespace casss
