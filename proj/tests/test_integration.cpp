#include "casss/scenario.hpp"
#include "doctest.h"

using namespace casss;

namespace {

ScenarioConfig base(Variant v, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.quorum = make_quorum(5, 1, v);
  cfg.mixed = 3;
  cfg.ops_per_client = 10;
  cfg.object_size = 1024;
  return cfg;
}

}  // namespace

TEST_CASE("integration: fault-free runs complete with exact round counts") {
  for (auto v : {Variant::MWABD, Variant::CAS, Variant::CASSS}) {
    CAPTURE(to_string(v));
    auto [h, m] = run_scenario(base(v, 7));
    CHECK(m.completed);
    REQUIRE(h.size() == 30);
    for (const auto& o : m.ops) {
      CHECK(o.outcome == OpOutcome::Ok);
      unsigned want = 2;
      if (o.kind == OpKind::Write && v == Variant::CAS) want = 3;
      if (o.kind == OpKind::Write && v == Variant::CASSS) want = 4;
      CHECK(o.rounds == want);
    }
    auto r = check_linearizable(h);
    CHECK(r.linearizable);
  }
}
