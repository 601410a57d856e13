#pragma once

#include <cmath>

namespace xlight {

// Compass arms: 0 = North (bearing 0 deg), 1 = East (90), 2 = South (180),
// 3 = West (270). Bearings are clockwise from north.
enum class Arm : int { North = 0, East = 1, South = 2, West = 3 };

enum class Turn : int { Left = 0, Through = 1, Right = 2 };

constexpr int kNumArms = 4;
constexpr int kNumTurns = 3;
constexpr int kNumSlots = kNumArms * kNumTurns;  // unified 12-movement layout

inline int slot_index(int arm, Turn turn) {
  return arm * kNumTurns + static_cast<int>(turn);
}

inline double angular_distance(double a, double b) {
  double d = std::fabs(std::fmod(a - b + 540.0, 360.0) - 180.0);
  return d;
}

// Nearest compass arm for an approach bearing; ties go to the lower index.
inline int compass_arm(double angle_deg) {
  int best = 0;
  double best_d = angular_distance(angle_deg, 0.0);
  for (int arm = 1; arm < kNumArms; ++arm) {
    double d = angular_distance(angle_deg, 90.0 * arm);
    if (d < best_d - 1e-12) {
      best = arm;
      best_d = d;
    }
  }
  return best;
}

// Turn type for a vehicle arriving from the arm at `in_deg` and leaving via
// the arm at `out_deg` (right-hand traffic). A u-turn is treated as a left.
inline Turn turn_type(double in_deg, double out_deg) {
  double rel = std::fmod(out_deg - in_deg + 720.0, 360.0);
  if (rel > 135.0 && rel <= 225.0) return Turn::Through;
  if (rel > 45.0 && rel <= 135.0) return Turn::Left;
  if (rel > 225.0 && rel <= 315.0) return Turn::Right;
  return Turn::Left;
}

}  // namespace xlight
