#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlight/geometry.hpp"

namespace xlight {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Approach {
  std::optional<int> in_link;   // index into ScenarioSpec::links
  std::optional<int> out_link;  // index into ScenarioSpec::links
  double angle_deg = 0.0;       // bearing of the arm, clockwise from north
};

struct RawIntersection {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  std::vector<Approach> approaches;  // 2..5 arms
  bool controlled = true;
};

struct Link {
  std::string id;
  int from_node = -1;  // index into ScenarioSpec::intersections, -1 = boundary
  int to_node = -1;
  std::string from_id;
  std::string to_id;
  double length_m = 0.0;
  double speed_mps = 0.0;
  int lanes = 1;

  double travel_time_s() const { return length_m / speed_mps; }
  // per-lane storage capacity of the point queue
  int capacity_per_lane() const { return static_cast<int>(length_m / 7.5); }
  int capacity() const { return capacity_per_lane() * lanes; }
};

struct FlowSpec {
  std::string origin;       // node id (boundary or intersection)
  std::string destination;  // node id
  double rate_veh_h = 0.0;
  double start_s = 0.0;
  double end_s = 3600.0;
};

struct ScenarioSpec {
  std::string name;
  double horizon_s = 3600.0;
  std::vector<RawIntersection> intersections;  // all declared nodes
  std::vector<Link> links;
  std::vector<FlowSpec> flows;

  int node_index(const std::string& id) const;
  std::vector<int> controlled_nodes() const;
};

// Parses and validates a scenario file (JSON, see docs/scenario-format.md).
// Throws ScenarioError naming the offending field or invariant.
ScenarioSpec load_scenario(const std::string& path);
ScenarioSpec parse_scenario(const std::string& json_text,
                            const std::string& origin_name);

// The 8 canonical phases: two non-conflicting controlled movements each.
// Right turns are never controlled and flow with every phase.
struct PhaseDef {
  std::array<int, 2> arms;
  std::array<Turn, 2> turns;
};
const std::array<PhaseDef, 8>& phase_table();

constexpr int kNumPhases = 8;

}  // namespace xlight
