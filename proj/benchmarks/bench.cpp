#include <benchmark/benchmark.h>

#include <map>

#include "xlight/agent.hpp"
#include "xlight/eval.hpp"
#include "xlight/train.hpp"

using namespace xlight;

#ifndef XLIGHT_SCENARIO_DIR
#define XLIGHT_SCENARIO_DIR "scenarios"
#endif

namespace {

ScenarioSpec grid2x2() {
  static ScenarioSpec spec =
      load_scenario(std::string(XLIGHT_SCENARIO_DIR) + "/grid2x2.scn");
  return spec;
}

ModelConfig small_model() {
  ModelConfig m;
  m.dim = 24;
  m.heads = 6;
  m.lower_layers = 2;
  m.upper_layers = 2;
  m.k_history = 5;
  m.neighbors = 2;
  m.ffn_hidden = 48;
  m.predictor_hidden = 64;
  m.head_hidden = 64;
  m.embed.hidden = 16;
  m.embed.out = 4;
  m.embed.dim = m.dim;
  return m;
}

StepGroup random_group(Rng& rng, int units) {
  StepGroup g;
  for (int u = 0; u < units; ++u) {
    StepFeature f;
    f.raw_o.resize(kRawFeatureDim);
    for (double& v : f.raw_o) v = rng.uniform(0.0, 1.0);
    f.a_prev = static_cast<int>(rng.uniform_int(kNumPhases));
    f.r_prev = rng.uniform(-1.0, 0.0);
    g.push_back(f);
  }
  return g;
}

void bm_sim_interval(benchmark::State& state) {
  ScenarioSpec spec = grid2x2();
  Sim sim(spec, 1);
  Rng rng(2);
  for (auto _ : state) {
    if (sim.episode_done()) {
      state.PauseTiming();
      sim = Sim(spec, 1);
      state.ResumeTiming();
    }
    std::map<int, int> actions;
    for (int n : spec.controlled_nodes())
      actions[n] = static_cast<int>(rng.uniform_int(8));
    sim.apply_actions(actions);
    benchmark::DoNotOptimize(sim.advance(15));
  }
  state.SetItemsProcessed(state.iterations() * 15);  // simulated seconds
}
BENCHMARK(bm_sim_interval);

void bm_lower_step(benchmark::State& state) {
  ModelConfig cfg = small_model();
  Rng rng(3);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  Rng data(4);
  std::vector<StepGroup> groups;
  for (int r = 0; r < 4; ++r)
    groups.push_back(random_group(data, 1 + cfg.neighbors));
  for (auto _ : state) {
    LowerStepResult low = lower_step(groups, params, cfg);
    benchmark::DoNotOptimize(low.c.values().data());
  }
}
BENCHMARK(bm_lower_step);

void bm_encode_batch(benchmark::State& state) {
  ModelConfig cfg = small_model();
  Rng rng(5);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  Rng data(6);
  std::vector<EncodeRecord> records;
  for (int b = 0; b < static_cast<int>(state.range(0)); ++b) {
    EncodeRecord r;
    for (int k = 0; k < cfg.k_history; ++k) {
      r.steps.push_back(random_group(data, 1 + cfg.neighbors));
      r.valid.push_back(1);
    }
    records.push_back(r);
  }
  for (auto _ : state) {
    EncodeResult enc = encode_batch(records, params, cfg);
    benchmark::DoNotOptimize(enc.z.values().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_encode_batch)->Arg(8)->Arg(32);

void bm_encode_backward(benchmark::State& state) {
  ModelConfig cfg = small_model();
  Rng rng(7);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  add_agent_params(params, cfg, rng);
  Rng data(8);
  std::vector<EncodeRecord> records;
  for (int b = 0; b < 8; ++b) {
    EncodeRecord r;
    for (int k = 0; k < cfg.k_history; ++k) {
      r.steps.push_back(random_group(data, 1 + cfg.neighbors));
      r.valid.push_back(1);
    }
    records.push_back(r);
  }
  for (auto _ : state) {
    EncodeResult enc = encode_batch(records, params, cfg);
    nn::Tensor loss = nn::mean_all(nn::mul(enc.z, enc.z));
    params.zero_grad();
    nn::backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(bm_encode_backward);

}  // namespace

BENCHMARK_MAIN();
