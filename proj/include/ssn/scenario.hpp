#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ssn/netsim.hpp"
#include "ssn/proto.hpp"

// Line-oriented scenario files: a topology block (node/link directives) and a
// timed directive list (arrive/depart/pir/pirgen/battery). '#' starts a
// comment; blank lines are ignored.
namespace ssn::scn {

struct ScenarioNode {
  int id = -1;
  net::NodeRole role = net::NodeRole::Router;
  std::optional<int> parent;
  std::optional<proto::FirmwareId> firmware;             // pre-provisioned image
  std::map<proto::AppKind, uint32_t> intervals;          // temp=/hum=/ldr= overrides
  uint32_t listen_min = 1;

  // Admitted application set implied by the provisioned firmware: one config
  // per firmware bit, periodic intervals from the overrides (default 60 s).
  std::vector<proto::AppConfig> configs() const;
};

struct Directive {
  enum class Kind { Arrive, Depart, Pir, Battery } kind = Kind::Arrive;
  int64_t time_ms = 0;
  proto::AppKind app = proto::AppKind::Temperature;  // arrive/depart
  std::optional<uint32_t> interval_s;                // arrive (periodic apps)
  std::optional<uint32_t> activity_s;                // arrive: departs after this long
  int node_id = -1;                                  // pir/battery
  int battery_pct = 100;                             // battery
};

// Seeded uniform presence triggers: `count` PIR events on `node_id`, drawn
// uniformly over [start_ms, end_ms) from the run seed.
struct PirGen {
  int node_id = -1;
  int count = 0;
  int64_t start_ms = 0;
  int64_t end_ms = 0;
};

struct Scenario {
  std::vector<ScenarioNode> nodes;
  std::vector<std::pair<int, int>> links;
  std::vector<Directive> directives;  // ascending time, file order within a tick
  std::vector<PirGen> pirgens;

  net::Topology topology() const;  // builds and validates
  const ScenarioNode* node(int id) const;
};

// Throws ScenarioParseError with the offending line number.
Scenario parse_scenario(std::istream& in);
Scenario load_scenario(const std::string& path);

}  // namespace ssn::scn
