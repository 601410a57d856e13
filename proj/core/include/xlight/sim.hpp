#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "xlight/rng.hpp"
#include "xlight/scenario.hpp"

namespace xlight {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VehicleRecord {
  int id = -1;
  double entry_s = -1.0;          // admission onto the first link
  double exit_s = -1.0;           // negative while still in the network
  double free_flow_s = 0.0;       // route traversal time with no stops
  double stopped_s = 0.0;         // cumulative seconds at speed zero
  bool stopped_now = false;
  std::vector<int> route;         // link indices, origin to destination
  int route_pos = 0;
};

struct StepLog {
  std::vector<int> entered;
  std::vector<int> exited;
  // (link, out-link) -> vehicles discharged through that movement
  std::map<std::pair<int, int>, int> discharged;

  int total_discharged() const {
    int n = 0;
    for (const auto& [k, v] : discharged) n += v;
    return n;
  }
};

// A turning movement at the downstream end of a link.
struct SimMovement {
  int in_link = -1;
  int out_link = -1;
  int node = -1;
  int arm = -1;       // compass arm of the incoming approach
  Turn turn = Turn::Through;
  int lanes = 1;
};

// Deterministic discrete-time point-queue microsimulator. Vehicles traverse
// links in free-flow time, then wait in a per-movement queue at the stop
// line until their movement is green and saturation-flow credit allows
// discharge. Single writer per instance; distinct instances are independent.
class Sim {
 public:
  static constexpr double kSaturationVehPerSecLane = 0.5;  // 1800 veh/h/lane
  static constexpr int kYellowSeconds = 3;

  Sim(const ScenarioSpec& spec, std::uint64_t seed);

  // Phase selection for the next interval. A change schedules 3 s of yellow
  // before the new phase activates; re-selecting the active phase is a no-op.
  void apply_actions(const std::map<int, int>& joint_action);

  StepLog advance(int seconds);

  bool episode_done() const { return clock_s_ >= spec_.horizon_s; }
  double clock_s() const { return clock_s_; }
  const ScenarioSpec& spec() const { return spec_; }

  int active_phase(int node) const { return signals_.at(node).active; }
  int yellow_left(int node) const { return signals_.at(node).yellow_left; }

  const std::vector<SimMovement>& movements(int node) const;
  int movement_queue_size(const SimMovement& m) const;
  // all queued vehicles at the downstream end of a link, any movement
  int link_queue_total(int link) const;
  int link_occupancy(int link) const { return links_[link].occupancy; }
  int total_queued() const;

  // vehicles discharged through (in_link, out_link) since the last call to
  // reset_interval_counters(); feeds the flow observation feature
  int interval_discharged(int in_link, int out_link) const;
  void reset_interval_counters();

  // cumulative queued vehicle-seconds at a controlled node; delay adds
  // boundary spillback seconds attributed to the first signal on the route
  double node_wait_s(int node) const;
  double node_delay_s(int node) const;

  const std::vector<VehicleRecord>& vehicles() const { return vehicles_; }
  long long entered_count() const { return entered_count_; }
  long long exited_count() const { return exited_count_; }
  long long in_network_count() const { return entered_count_ - exited_count_; }
  long long waiting_at_boundary() const;

  // Places one vehicle in the boundary queue of the route's first link.
  // Returns the vehicle id. Intended for tests and hand-built episodes.
  int inject_vehicle(const std::string& origin, const std::string& destination);

  // Text serialization of the full mutable state, for determinism checks.
  std::string digest() const;

 private:
  struct LinkState {
    std::deque<std::pair<int, double>> in_transit;  // (vehicle, arrival time)
    std::map<int, std::deque<int>> queues;          // out-link -> vehicle ids
    std::deque<int> boundary_wait;                  // blocked from entering
    int occupancy = 0;                              // in transit + queued
  };
  struct SignalState {
    int active = 0;
    int pending = 0;
    int yellow_left = 0;
  };
  struct MovementState {
    double credit = 0.0;
    long long discharged_total = 0;
    long long discharged_interval = 0;
  };

  void tick();
  void spawn_arrivals();
  void admit_boundary();
  void settle_transit(StepLog& log);
  void discharge(StepLog& log);
  void accrue_stopped_time();
  bool movement_green(const SimMovement& m) const;
  void enter_link(int vehicle, int link);
  void exit_vehicle(int vehicle, StepLog& log);
  std::vector<int> route_between(int origin_node, int dest_node) const;

  ScenarioSpec spec_;
  double clock_s_ = 0.0;
  std::vector<LinkState> links_;
  std::map<int, SignalState> signals_;  // controlled node -> state
  std::vector<VehicleRecord> vehicles_;
  std::vector<Rng> flow_rngs_;
  std::vector<std::vector<int>> flow_routes_;
  // per node: movements in deterministic order; parallel movement state
  std::map<int, std::vector<SimMovement>> node_movements_;
  std::map<std::pair<int, int>, MovementState> movement_state_;
  std::map<int, double> node_wait_s_;
  std::map<int, double> node_delay_s_;
  long long entered_count_ = 0;
  long long exited_count_ = 0;
  StepLog* current_log_ = nullptr;
};

}  // namespace xlight
