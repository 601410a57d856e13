#include "xlight/obsrew.hpp"

#include <cmath>

namespace xlight {

std::vector<double> RawFeatures::flat() const {
  std::vector<double> v;
  v.reserve(kRawFeatureDim);
  v.insert(v.end(), queue.begin(), queue.end());
  v.insert(v.end(), phase_onehot.begin(), phase_onehot.end());
  v.insert(v.end(), occupancy.begin(), occupancy.end());
  v.insert(v.end(), flow.begin(), flow.end());
  v.insert(v.end(), stopping.begin(), stopping.end());
  return v;
}

RawFeatures observe(const Sim& sim, int node, const UnifiedLayout& layout,
                    double interval_s) {
  RawFeatures f;
  f.phase_onehot[sim.active_phase(node)] = 1.0;
  const auto& spec = sim.spec();
  for (int s = 0; s < kNumSlots; ++s) {
    const MovementSlot& slot = layout.slots[s];
    if (!slot.exists) continue;
    SimMovement key;
    key.in_link = slot.in_link;
    key.out_link = slot.out_link;
    int q = sim.movement_queue_size(key);
    f.queue[s] = q;
    int cap = spec.links[slot.in_link].capacity();
    f.occupancy[s] = cap > 0 ? static_cast<double>(q) / cap : 0.0;
    f.flow[s] =
        sim.interval_discharged(slot.in_link, slot.out_link) / interval_s;
    f.stopping[s] = q;  // point-queue: every queued vehicle is stationary
  }
  return f;
}

double pressure(const Sim& sim, int node, const UnifiedLayout& layout) {
  (void)node;
  double p = 0.0;
  for (int s = 0; s < kNumSlots; ++s) {
    const MovementSlot& slot = layout.slots[s];
    if (!slot.exists || !slot.controlled) continue;
    SimMovement key;
    key.in_link = slot.in_link;
    key.out_link = slot.out_link;
    // vehicles leaving at the out-link's end never queue, so exit movements
    // naturally see a zero downstream term
    p += sim.movement_queue_size(key) - sim.link_queue_total(slot.out_link);
  }
  return p;
}

IntersectionSnapshot snapshot(const Sim& sim, int node,
                              const UnifiedLayout& layout) {
  IntersectionSnapshot s;
  for (int k = 0; k < kNumSlots; ++k) {
    const MovementSlot& slot = layout.slots[k];
    if (!slot.exists) continue;
    SimMovement key;
    key.in_link = slot.in_link;
    key.out_link = slot.out_link;
    s.queue += sim.movement_queue_size(key);
  }
  s.wait_s = sim.node_wait_s(node);
  s.delay_s = sim.node_delay_s(node);
  s.pressure = pressure(sim, node, layout);
  return s;
}

double reward(const IntersectionSnapshot& pre, const IntersectionSnapshot& post,
              const RewardWeights& w) {
  return w.queue * post.queue + w.wait * (post.wait_s - pre.wait_s) +
         w.delay * (post.delay_s - pre.delay_s) + w.pressure * post.pressure;
}

void add_embed_params(nn::ParamStore& params, const EmbedConfig& cfg,
                      Rng& rng) {
  const auto& widths = feature_widths();
  for (size_t f = 0; f < widths.size(); ++f) {
    std::string p = "obs." + std::to_string(f) + ".";
    params.add(p + "w1", widths[f], cfg.hidden, rng);
    params.add(p + "b1", 1, cfg.hidden, rng, 0.0);
    params.add(p + "w2", cfg.hidden, cfg.out, rng);
    params.add(p + "b2", 1, cfg.out, rng, 0.0);
  }
  params.add("obs.lift.w", static_cast<int>(widths.size()) * cfg.out, cfg.dim,
             rng);
  params.add("obs.lift.b", 1, cfg.dim, rng, 0.0);
}

nn::Tensor embed_observation(const nn::Tensor& raw,
                             const nn::ParamStore& params,
                             const EmbedConfig& cfg) {
  if (raw.cols() != kRawFeatureDim)
    throw nn::NnError("embed_observation: expected " +
                      std::to_string(kRawFeatureDim) + " raw columns, got " +
                      std::to_string(raw.cols()));
  const auto& widths = feature_widths();
  std::vector<nn::Tensor> parts;
  int off = 0;
  for (size_t f = 0; f < widths.size(); ++f) {
    std::string p = "obs." + std::to_string(f) + ".";
    nn::Tensor x = nn::slice_cols(raw, off, off + widths[f]);
    off += widths[f];
    nn::Tensor h =
        nn::sigmoid(nn::linear(x, params.get(p + "w1"), params.get(p + "b1")));
    parts.push_back(nn::sigmoid(
        nn::linear(h, params.get(p + "w2"), params.get(p + "b2"))));
  }
  nn::Tensor out = nn::linear(nn::concat_cols(parts), params.get("obs.lift.w"),
                              params.get("obs.lift.b"));
  if (out.cols() != cfg.dim)
    throw nn::NnError("embed_observation: lift width does not match config");
  for (double v : out.values())
    if (!std::isfinite(v)) throw nn::NnError("numeric overflow in feature MLP");
  return out;
}

}  // namespace xlight
