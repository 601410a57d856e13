#include "xlight/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

namespace xlight {

namespace {

// arm angle of the approach whose in-link is `link`, or -1
const Approach* find_in_approach(const RawIntersection& node, int link) {
  for (const auto& ap : node.approaches)
    if (ap.in_link && *ap.in_link == link) return &ap;
  return nullptr;
}

const Approach* find_out_approach(const RawIntersection& node, int link) {
  for (const auto& ap : node.approaches)
    if (ap.out_link && *ap.out_link == link) return &ap;
  return nullptr;
}

}  // namespace

Sim::Sim(const ScenarioSpec& spec, std::uint64_t seed) : spec_(spec) {
  links_.resize(spec_.links.size());

  for (int n : spec_.controlled_nodes()) signals_[n] = SignalState{};

  // enumerate movements: for every link, every out-link at its end node
  for (size_t li = 0; li < spec_.links.size(); ++li) {
    const Link& link = spec_.links[li];
    int node = link.to_node;
    const RawIntersection& raw = spec_.intersections[node];
    for (size_t lo = 0; lo < spec_.links.size(); ++lo) {
      if (spec_.links[lo].from_node != node) continue;
      SimMovement m;
      m.in_link = static_cast<int>(li);
      m.out_link = static_cast<int>(lo);
      m.node = node;
      m.lanes = link.lanes;
      if (raw.controlled) {
        const Approach* in_ap = find_in_approach(raw, m.in_link);
        const Approach* out_ap = find_out_approach(raw, m.out_link);
        if (!in_ap)
          throw SimError("link '" + link.id +
                         "' enters controlled node '" + raw.id +
                         "' but is not listed as an approach in-link");
        if (!out_ap)
          throw SimError("link '" + spec_.links[lo].id +
                         "' leaves controlled node '" + raw.id +
                         "' but is not listed as an approach out-link");
        m.arm = compass_arm(in_ap->angle_deg);
        m.turn = turn_type(in_ap->angle_deg, out_ap->angle_deg);
      }
      node_movements_[node].push_back(m);
      movement_state_[{m.in_link, m.out_link}] = MovementState{};
    }
  }

  Rng root(seed);
  for (size_t f = 0; f < spec_.flows.size(); ++f)
    flow_rngs_.push_back(root.fork(f));

  for (const auto& flow : spec_.flows) {
    int o = spec_.node_index(flow.origin);
    int d = spec_.node_index(flow.destination);
    flow_routes_.push_back(route_between(o, d));
  }
}

std::vector<int> Sim::route_between(int origin_node, int dest_node) const {
  // Dijkstra over directed links by free-flow time
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(spec_.intersections.size(), inf);
  std::vector<int> via_link(spec_.intersections.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[origin_node] = 0.0;
  heap.push({0.0, origin_node});
  while (!heap.empty()) {
    auto [d, n] = heap.top();
    heap.pop();
    if (d > dist[n]) continue;
    for (size_t li = 0; li < spec_.links.size(); ++li) {
      const Link& link = spec_.links[li];
      if (link.from_node != n) continue;
      double nd = d + link.travel_time_s();
      if (nd < dist[link.to_node]) {
        dist[link.to_node] = nd;
        via_link[link.to_node] = static_cast<int>(li);
        heap.push({nd, link.to_node});
      }
    }
  }
  if (dist[dest_node] == inf)
    throw SimError("no route from '" + spec_.intersections[origin_node].id +
                   "' to '" + spec_.intersections[dest_node].id + "'");
  std::vector<int> route;
  for (int n = dest_node; n != origin_node;) {
    int li = via_link[n];
    route.push_back(li);
    n = spec_.links[li].from_node;
  }
  std::reverse(route.begin(), route.end());
  return route;
}

void Sim::apply_actions(const std::map<int, int>& joint_action) {
  for (const auto& [node, phase] : joint_action) {
    auto it = signals_.find(node);
    if (it == signals_.end())
      throw SimError("apply_actions: node index " + std::to_string(node) +
                     " is not a controlled intersection");
    if (phase < 0 || phase >= kNumPhases)
      throw SimError("apply_actions: phase index " + std::to_string(phase) +
                     " out of range 0..7");
    SignalState& sig = it->second;
    if (sig.yellow_left > 0)
      throw SimError("apply_actions: intersection mid-yellow");
    if (phase != sig.active) {
      sig.pending = phase;
      sig.yellow_left = kYellowSeconds;
    }
  }
}

bool Sim::movement_green(const SimMovement& m) const {
  auto it = signals_.find(m.node);
  if (it == signals_.end()) return true;  // unsignalized node
  const SignalState& sig = it->second;
  if (sig.yellow_left > 0) return false;
  if (m.turn == Turn::Right) return true;  // right turns are uncontrolled
  const PhaseDef& phase = phase_table()[sig.active];
  for (int k = 0; k < 2; ++k)
    if (phase.arms[k] == m.arm && phase.turns[k] == m.turn) return true;
  return false;
}

int Sim::inject_vehicle(const std::string& origin,
                        const std::string& destination) {
  int o = spec_.node_index(origin);
  int d = spec_.node_index(destination);
  if (o < 0 || d < 0) throw SimError("inject_vehicle: unknown node id");
  VehicleRecord v;
  v.id = static_cast<int>(vehicles_.size());
  v.route = route_between(o, d);
  for (int li : v.route) v.free_flow_s += spec_.links[li].travel_time_s();
  vehicles_.push_back(v);
  links_[v.route.front()].boundary_wait.push_back(v.id);
  return v.id;
}

void Sim::enter_link(int vehicle, int link) {
  VehicleRecord& v = vehicles_[vehicle];
  double arrival = clock_s_ + spec_.links[link].travel_time_s();
  links_[link].in_transit.push_back({vehicle, arrival});
  links_[link].occupancy += 1;
  v.stopped_now = false;
}

void Sim::exit_vehicle(int vehicle, StepLog& log) {
  VehicleRecord& v = vehicles_[vehicle];
  v.exit_s = clock_s_;
  v.stopped_now = false;
  exited_count_ += 1;
  log.exited.push_back(vehicle);
}

void Sim::spawn_arrivals() {
  for (size_t f = 0; f < spec_.flows.size(); ++f) {
    const FlowSpec& flow = spec_.flows[f];
    if (clock_s_ < flow.start_s || clock_s_ >= flow.end_s) continue;
    int n = flow_rngs_[f].poisson(flow.rate_veh_h / 3600.0);
    for (int k = 0; k < n; ++k) {
      VehicleRecord v;
      v.id = static_cast<int>(vehicles_.size());
      v.route = flow_routes_[f];
      for (int li : v.route) v.free_flow_s += spec_.links[li].travel_time_s();
      vehicles_.push_back(v);
      links_[v.route.front()].boundary_wait.push_back(v.id);
    }
  }
}

void Sim::admit_boundary() {
  for (size_t li = 0; li < links_.size(); ++li) {
    LinkState& ls = links_[li];
    while (!ls.boundary_wait.empty() &&
           ls.occupancy < spec_.links[li].capacity()) {
      int vid = ls.boundary_wait.front();
      ls.boundary_wait.pop_front();
      VehicleRecord& v = vehicles_[vid];
      v.entry_s = clock_s_;
      entered_count_ += 1;
      current_log_->entered.push_back(vid);
      enter_link(vid, static_cast<int>(li));
    }
  }
}

void Sim::settle_transit(StepLog& log) {
  for (size_t li = 0; li < links_.size(); ++li) {
    LinkState& ls = links_[li];
    while (!ls.in_transit.empty() &&
           ls.in_transit.front().second <= clock_s_ + 1e-9) {
      int vid = ls.in_transit.front().first;
      ls.in_transit.pop_front();
      VehicleRecord& v = vehicles_[vid];
      if (v.route_pos + 1 >= static_cast<int>(v.route.size())) {
        // last route link: leave the network at its downstream node
        ls.occupancy -= 1;
        exit_vehicle(vid, log);
      } else {
        int next = v.route[v.route_pos + 1];
        ls.queues[next].push_back(vid);
      }
    }
  }
}

void Sim::discharge(StepLog& log) {
  for (auto& [node, movements] : node_movements_) {
    (void)node;
    for (const SimMovement& m : movements) {
      MovementState& ms = movement_state_[{m.in_link, m.out_link}];
      auto qit = links_[m.in_link].queues.find(m.out_link);
      bool empty = qit == links_[m.in_link].queues.end() || qit->second.empty();
      if (!movement_green(m)) {
        ms.credit = 0.0;
        continue;
      }
      if (empty) {
        ms.credit = 0.0;
        continue;
      }
      ms.credit += kSaturationVehPerSecLane * m.lanes;
      auto& q = qit->second;
      while (ms.credit >= 1.0 && !q.empty()) {
        LinkState& out_ls = links_[m.out_link];
        if (out_ls.occupancy >= spec_.links[m.out_link].capacity()) break;
        int vid = q.front();
        q.pop_front();
        links_[m.in_link].occupancy -= 1;
        VehicleRecord& v = vehicles_[vid];
        v.route_pos += 1;
        enter_link(vid, m.out_link);
        ms.credit -= 1.0;
        ms.discharged_total += 1;
        ms.discharged_interval += 1;
        log.discharged[{m.in_link, m.out_link}] += 1;
      }
    }
  }
}

void Sim::accrue_stopped_time() {
  for (size_t li = 0; li < links_.size(); ++li) {
    LinkState& ls = links_[li];
    int node = spec_.links[li].to_node;
    for (auto& [out, q] : ls.queues) {
      (void)out;
      for (int vid : q) {
        vehicles_[vid].stopped_s += 1.0;
        vehicles_[vid].stopped_now = true;
      }
      if (signals_.count(node)) {
        node_wait_s_[node] += static_cast<double>(q.size());
        node_delay_s_[node] += static_cast<double>(q.size());
      }
    }
    for (int vid : ls.boundary_wait) {
      vehicles_[vid].stopped_s += 1.0;
      vehicles_[vid].stopped_now = true;
    }
    // spillback at the boundary counts as delay at the first signal met
    if (!ls.boundary_wait.empty() && signals_.count(node))
      node_delay_s_[node] += static_cast<double>(ls.boundary_wait.size());
  }
}

void Sim::tick() {
  // yellow countdown; the pending phase activates after 3 blocked seconds
  std::vector<int> activate;
  for (auto& [node, sig] : signals_) {
    if (sig.yellow_left > 0) {
      sig.yellow_left -= 1;
      if (sig.yellow_left == 0) activate.push_back(node);
    }
  }

  spawn_arrivals();
  admit_boundary();
  settle_transit(*current_log_);
  discharge(*current_log_);
  accrue_stopped_time();

  for (int node : activate) {
    SignalState& sig = signals_[node];
    sig.active = sig.pending;
  }
  clock_s_ += 1.0;
}

StepLog Sim::advance(int seconds) {
  if (seconds < 1) throw SimError("advance: seconds must be >= 1");
  StepLog log;
  current_log_ = &log;
  for (int s = 0; s < seconds; ++s) tick();
  current_log_ = nullptr;
  return log;
}

const std::vector<SimMovement>& Sim::movements(int node) const {
  static const std::vector<SimMovement> empty;
  auto it = node_movements_.find(node);
  return it == node_movements_.end() ? empty : it->second;
}

int Sim::movement_queue_size(const SimMovement& m) const {
  const auto& qs = links_[m.in_link].queues;
  auto it = qs.find(m.out_link);
  return it == qs.end() ? 0 : static_cast<int>(it->second.size());
}

int Sim::link_queue_total(int link) const {
  int n = 0;
  for (const auto& [out, q] : links_[link].queues) {
    (void)out;
    n += static_cast<int>(q.size());
  }
  return n;
}

int Sim::total_queued() const {
  int n = 0;
  for (size_t li = 0; li < links_.size(); ++li)
    n += link_queue_total(static_cast<int>(li));
  return n;
}

long long Sim::waiting_at_boundary() const {
  long long n = 0;
  for (const LinkState& ls : links_) n += static_cast<long long>(ls.boundary_wait.size());
  return n;
}

double Sim::node_wait_s(int node) const {
  auto it = node_wait_s_.find(node);
  return it == node_wait_s_.end() ? 0.0 : it->second;
}

double Sim::node_delay_s(int node) const {
  auto it = node_delay_s_.find(node);
  return it == node_delay_s_.end() ? 0.0 : it->second;
}

int Sim::interval_discharged(int in_link, int out_link) const {
  auto it = movement_state_.find({in_link, out_link});
  return it == movement_state_.end()
             ? 0
             : static_cast<int>(it->second.discharged_interval);
}

void Sim::reset_interval_counters() {
  for (auto& [k, ms] : movement_state_) {
    (void)k;
    ms.discharged_interval = 0;
  }
}

std::string Sim::digest() const {
  std::ostringstream os;
  os.precision(17);
  os << clock_s_ << '|' << entered_count_ << '|' << exited_count_ << '|';
  for (const auto& [node, sig] : signals_)
    os << node << ':' << sig.active << ',' << sig.pending << ','
       << sig.yellow_left << ';';
  for (size_t li = 0; li < links_.size(); ++li) {
    const LinkState& ls = links_[li];
    os << 'L' << li << '[';
    for (const auto& [vid, t] : ls.in_transit) os << vid << '@' << t << ' ';
    for (const auto& [out, q] : ls.queues) {
      os << 'q' << out << '(';
      for (int vid : q) os << vid << ' ';
      os << ')';
    }
    os << 'b' << '(';
    for (int vid : ls.boundary_wait) os << vid << ' ';
    os << ")]";
  }
  for (const VehicleRecord& v : vehicles_)
    os << 'V' << v.id << ':' << v.entry_s << ',' << v.exit_s << ','
       << v.stopped_s << ',' << v.route_pos << ';';
  return os.str();
}

}  // namespace xlight
