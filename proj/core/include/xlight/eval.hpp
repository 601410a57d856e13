#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlight/train.hpp"

namespace xlight {

struct EpisodeMetrics {
  double avg_trip_time = 0.0;
  double avg_delay_time = 0.0;
  double avg_wait_time = 0.0;
  long long completed = 0;
  long long in_network = 0;
};

// Per-vehicle trip/delay/wait averaged over every vehicle that entered;
// vehicles still in the network at the horizon contribute truncated trips.
EpisodeMetrics metrics_from_log(const std::vector<VehicleRecord>& vehicles,
                                double horizon_s);

// Fixed-time control: every intersection cycles all 8 phases, each green
// phase_duration seconds, with a seeded random cycle offset per node.
EpisodeMetrics run_ftc(const ScenarioSpec& spec, double phase_duration,
                       std::uint64_t seed, int interval_s = 15);

// Greedy highest-pressure phase each interval; ties -> lower phase index.
EpisodeMetrics run_max_pressure(const ScenarioSpec& spec, std::uint64_t seed,
                                int interval_s = 15);

// pressure of one candidate phase at a node (sum over its movements of
// upstream minus downstream queue); exposed for the brute-force oracle test
double phase_pressure(const Sim& sim, const UnifiedLayout& layout, int phase);
int max_pressure_choice(const Sim& sim, const UnifiedLayout& layout);

// One greedy episode with trained parameters; no updates.
EpisodeMetrics run_policy(const ScenarioSpec& spec,
                          const nn::ParamStore& params,
                          const ModelConfig& model, std::uint64_t seed,
                          const RewardWeights& reward = {},
                          int interval_s = 15);

std::string metrics_csv(const EpisodeMetrics& m);

}  // namespace xlight
