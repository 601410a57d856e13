#pragma once

#include <array>
#include <string>
#include <vector>

#include "xlight/gpi.hpp"
#include "xlight/nn.hpp"
#include "xlight/sim.hpp"

namespace xlight {

// Raw per-intersection features over the unified 12-slot layout.
// flat() order: queue(12), phase one-hot(8), occupancy(12), flow(12),
// stopping(12) = 56 values, matching the five per-feature embedders.
struct RawFeatures {
  std::array<double, kNumSlots> queue{};
  std::array<double, kNumPhases> phase_onehot{};
  std::array<double, kNumSlots> occupancy{};
  std::array<double, kNumSlots> flow{};      // veh/s discharged last interval
  std::array<double, kNumSlots> stopping{};  // stationary vehicles

  std::vector<double> flat() const;
};

constexpr int kRawFeatureDim = 2 * kNumSlots /*queue+occ*/ + kNumPhases +
                               2 * kNumSlots /*flow+stopping*/;

// widths of the five feature groups inside flat(), in order
inline const std::array<int, 5>& feature_widths() {
  static const std::array<int, 5> w = {kNumSlots, kNumPhases, kNumSlots,
                                       kNumSlots, kNumSlots};
  return w;
}

// Features of intersection `node` from the current simulator state; masked
// slots stay zero. `interval_s` converts interval discharge counts to flow.
RawFeatures observe(const Sim& sim, int node, const UnifiedLayout& layout,
                    double interval_s);

// Sum over controlled, existing movements of upstream minus downstream queue.
double pressure(const Sim& sim, int node, const UnifiedLayout& layout);

struct RewardWeights {
  double queue = -1e-3;
  double wait = -1e-3;
  double delay = -1e-5;
  double pressure = -5e-3;
};

// Cumulative quantities of one intersection; two snapshots bracketing an
// action interval feed reward().
struct IntersectionSnapshot {
  double queue = 0.0;     // instantaneous queued vehicles
  double wait_s = 0.0;    // cumulative, interval value is post - pre
  double delay_s = 0.0;   // cumulative, interval value is post - pre
  double pressure = 0.0;  // instantaneous
};

IntersectionSnapshot snapshot(const Sim& sim, int node,
                              const UnifiedLayout& layout);

double reward(const IntersectionSnapshot& pre, const IntersectionSnapshot& post,
              const RewardWeights& w);

// Observation embedder: one small MLP per feature group squashing into
// (0,1), concatenated and linearly lifted to the model dimension.
struct EmbedConfig {
  int hidden = 32;
  int out = 22;
  int dim = 114;  // must equal the encoder dimension
};

// registers obs.<f>.w1/b1/w2/b2 for f in 0..4 plus obs.lift.w/b
void add_embed_params(nn::ParamStore& params, const EmbedConfig& cfg, Rng& rng);

// raw: [B, 56] rows of RawFeatures::flat(); returns [B, cfg.dim]
nn::Tensor embed_observation(const nn::Tensor& raw, const nn::ParamStore& params,
                             const EmbedConfig& cfg);

}  // namespace xlight
