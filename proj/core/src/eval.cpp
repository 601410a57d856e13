#include "xlight/eval.hpp"

#include <cmath>
#include <sstream>

#include "xlight/obsrew.hpp"

namespace xlight {

EpisodeMetrics metrics_from_log(const std::vector<VehicleRecord>& vehicles,
                                double horizon_s) {
  EpisodeMetrics m;
  double trip = 0.0, delay = 0.0, wait = 0.0;
  long long entered = 0;
  for (const VehicleRecord& v : vehicles) {
    if (v.entry_s < 0.0) continue;  // never admitted
    entered += 1;
    double t = (v.exit_s >= 0.0 ? v.exit_s : horizon_s) - v.entry_s;
    trip += t;
    delay += t - v.free_flow_s;
    wait += v.stopped_s;
    if (v.exit_s >= 0.0)
      m.completed += 1;
    else
      m.in_network += 1;
  }
  if (entered > 0) {
    m.avg_trip_time = trip / entered;
    m.avg_delay_time = delay / entered;
    m.avg_wait_time = wait / entered;
  }
  return m;
}

namespace {

// drives a full episode with a per-interval phase chooser
template <typename ChoosePhase>
EpisodeMetrics run_rule(const ScenarioSpec& spec, std::uint64_t seed,
                        int interval_s, ChoosePhase choose) {
  Sim sim(spec, seed);
  std::vector<int> nodes = spec.controlled_nodes();
  std::vector<UnifiedLayout> layouts;
  for (int n : nodes) layouts.push_back(unify_intersection(spec.intersections[n]));
  const int steps = static_cast<int>(spec.horizon_s / interval_s);
  for (int t = 0; t < steps; ++t) {
    std::map<int, int> joint;
    for (size_t b = 0; b < nodes.size(); ++b)
      joint[nodes[b]] = choose(sim, static_cast<int>(b), layouts[b],
                               t * interval_s);
    sim.apply_actions(joint);
    sim.advance(interval_s);
  }
  return metrics_from_log(sim.vehicles(), spec.horizon_s);
}

}  // namespace

EpisodeMetrics run_ftc(const ScenarioSpec& spec, double phase_duration,
                       std::uint64_t seed, int interval_s) {
  const double cycle = phase_duration * kNumPhases;
  Rng rng(seed);
  std::vector<double> offsets;
  for (size_t b = 0; b < spec.controlled_nodes().size(); ++b)
    offsets.push_back(rng.uniform(0.0, cycle));
  return run_rule(spec, seed, interval_s,
                  [&](const Sim&, int b, const UnifiedLayout&, double t) {
                    double phase_time = std::fmod(t + offsets[b], cycle);
                    return static_cast<int>(phase_time / phase_duration) %
                           kNumPhases;
                  });
}

double phase_pressure(const Sim& sim, const UnifiedLayout& layout, int phase) {
  const PhaseDef& def = phase_table()[phase];
  double p = 0.0;
  for (int k = 0; k < 2; ++k) {
    const MovementSlot& slot =
        layout.slots[slot_index(def.arms[k], def.turns[k])];
    if (!slot.exists) continue;
    SimMovement key;
    key.in_link = slot.in_link;
    key.out_link = slot.out_link;
    p += sim.movement_queue_size(key) - sim.link_queue_total(slot.out_link);
  }
  return p;
}

int max_pressure_choice(const Sim& sim, const UnifiedLayout& layout) {
  int best = 0;
  double best_p = phase_pressure(sim, layout, 0);
  for (int ph = 1; ph < kNumPhases; ++ph) {
    double p = phase_pressure(sim, layout, ph);
    if (p > best_p) {
      best_p = p;
      best = ph;
    }
  }
  return best;
}

EpisodeMetrics run_max_pressure(const ScenarioSpec& spec, std::uint64_t seed,
                                int interval_s) {
  return run_rule(spec, seed, interval_s,
                  [](const Sim& sim, int, const UnifiedLayout& layout, double) {
                    return max_pressure_choice(sim, layout);
                  });
}

EpisodeMetrics run_policy(const ScenarioSpec& spec,
                          const nn::ParamStore& params,
                          const ModelConfig& model, std::uint64_t seed,
                          const RewardWeights& reward, int interval_s) {
  EpisodeRollout ep(spec, seed, model, reward, interval_s);
  ep.run(params, nullptr, nullptr, 0);
  return metrics_from_log(ep.sim().vehicles(), spec.horizon_s);
}

std::string metrics_csv(const EpisodeMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n"
     << "avg_trip_time," << m.avg_trip_time << '\n'
     << "avg_delay_time," << m.avg_delay_time << '\n'
     << "avg_wait_time," << m.avg_wait_time << '\n'
     << "completed," << m.completed << '\n'
     << "in_network," << m.in_network << '\n';
  return os.str();
}

}  // namespace xlight
