#include "xlight/gpi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xlight {

UnifiedLayout unify_intersection(const RawIntersection& raw) {
  if (raw.approaches.size() < 2 || raw.approaches.size() > 5)
    throw GpiError("intersection '" + raw.id + "' has " +
                   std::to_string(raw.approaches.size()) +
                   " approaches, expected 2-5");

  UnifiedLayout layout;
  layout.arm_of_approach_slot.fill(-1);

  for (size_t a = 0; a < raw.approaches.size(); ++a) {
    int arm = compass_arm(raw.approaches[a].angle_deg);
    if (layout.arm_of_approach_slot[arm] >= 0) {
      const Approach& other =
          raw.approaches[layout.arm_of_approach_slot[arm]];
      std::ostringstream os;
      os << "ambiguous arm mapping at '" << raw.id << "': approaches at "
         << other.angle_deg << " and " << raw.approaches[a].angle_deg
         << " degrees both bin to compass arm " << arm;
      throw GpiError(os.str());
    }
    layout.arm_of_approach_slot[arm] = static_cast<int>(a);
  }

  for (int arm = 0; arm < kNumArms; ++arm) {
    int ai = layout.arm_of_approach_slot[arm];
    if (ai < 0) continue;
    const Approach& in_ap = raw.approaches[ai];
    if (!in_ap.in_link) continue;
    for (Turn turn : {Turn::Left, Turn::Through, Turn::Right}) {
      int dest_arm = 0;
      switch (turn) {
        case Turn::Left: dest_arm = (arm + 1) % kNumArms; break;
        case Turn::Through: dest_arm = (arm + 2) % kNumArms; break;
        case Turn::Right: dest_arm = (arm + 3) % kNumArms; break;
      }
      int di = layout.arm_of_approach_slot[dest_arm];
      if (di < 0 || !raw.approaches[di].out_link) continue;
      MovementSlot& slot = layout.slots[slot_index(arm, turn)];
      slot.exists = true;
      slot.controlled = turn != Turn::Right;
      slot.in_link = *in_ap.in_link;
      slot.out_link = *raw.approaches[di].out_link;
    }
  }
  return layout;
}

NeighborSet nearest_neighbors(const ScenarioSpec& spec, int i, int n) {
  if (!spec.intersections[i].controlled)
    throw GpiError("nearest_neighbors: node '" + spec.intersections[i].id +
                   "' is not controlled");
  const double xi = spec.intersections[i].x;
  const double yi = spec.intersections[i].y;
  std::vector<std::pair<double, int>> dist;
  for (int j : spec.controlled_nodes()) {
    if (j == i) continue;
    double dx = spec.intersections[j].x - xi;
    double dy = spec.intersections[j].y - yi;
    dist.push_back({std::hypot(dx, dy), j});
  }
  std::sort(dist.begin(), dist.end());
  NeighborSet out;
  for (size_t k = 0; k < dist.size() && static_cast<int>(k) < n; ++k)
    out.ids.push_back(dist[k].second);
  return out;
}

std::string layout_csv(const UnifiedLayout& layout, const ScenarioSpec& spec) {
  static const char* arm_names[] = {"N", "E", "S", "W"};
  static const char* turn_names[] = {"left", "through", "right"};
  std::ostringstream os;
  os << "slot,arm,turn,exists,controlled,in_link,out_link\n";
  for (int s = 0; s < kNumSlots; ++s) {
    const MovementSlot& slot = layout.slots[s];
    os << s << ',' << arm_names[s / kNumTurns] << ',' << turn_names[s % kNumTurns]
       << ',' << (slot.exists ? 1 : 0) << ',' << (slot.controlled ? 1 : 0) << ','
       << (slot.in_link >= 0 ? spec.links[slot.in_link].id : std::string("-"))
       << ','
       << (slot.out_link >= 0 ? spec.links[slot.out_link].id : std::string("-"))
       << '\n';
  }
  return os.str();
}

}  // namespace xlight
