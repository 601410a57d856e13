#pragma once

#include <array>
#include <string>
#include <vector>

#include "xlight/scenario.hpp"

namespace xlight {

struct GpiError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One entry of the unified 4-leg, 12-movement layout.
// Slots are ordered arm-major: N-left, N-through, N-right, E-left, ...
struct MovementSlot {
  bool exists = false;
  bool controlled = false;  // right-turn slots are never controlled
  int in_link = -1;
  int out_link = -1;
};

struct UnifiedLayout {
  std::array<MovementSlot, kNumSlots> slots;
  std::array<int, kNumArms> arm_of_approach_slot;  // arm -> approach idx or -1

  std::array<bool, kNumSlots> existence_mask() const {
    std::array<bool, kNumSlots> m{};
    for (int s = 0; s < kNumSlots; ++s) m[s] = slots[s].exists;
    return m;
  }
};

struct NeighborSet {
  std::vector<int> ids;  // controlled node indices, ascending distance
};

// Maps an arbitrary 2-5 arm intersection onto the unified layout. Each arm
// is assigned the compass slot nearest its angle; two arms binning to the
// same slot is an error naming both angles.
UnifiedLayout unify_intersection(const RawIntersection& raw);

// Up to n nearest controlled intersections of i by centroid Euclidean
// distance; ties broken by ascending node index. Fewer than n available
// yields a shorter set (consumers zero-pad).
NeighborSet nearest_neighbors(const ScenarioSpec& spec, int i, int n);

// Slot table as CSV (one row per slot) for the debug CLI.
std::string layout_csv(const UnifiedLayout& layout, const ScenarioSpec& spec);

}  // namespace xlight
