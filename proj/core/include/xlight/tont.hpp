#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlight/nn.hpp"
#include "xlight/obsrew.hpp"

namespace xlight {

// Model hyperparameters shared by the encoder and the policy heads.
struct ModelConfig {
  int dim = 114;  // token width of both stages (d = d')
  int heads = 6;
  int lower_layers = 3;
  int upper_layers = 3;
  int k_history = 20;  // K, Upper-stage window
  int neighbors = 4;   // n
  int ffn_hidden = 0;  // 0 -> 2*dim
  int predictor_hidden = 256;
  int head_hidden = 128;  // actor/critic hidden width
  EmbedConfig embed;      // embed.dim kept equal to dim

  // ablation toggles
  bool no_lower = false;
  bool gru_upper = false;
  bool no_residual = false;
  bool no_predictor = false;
  bool gnn_lower = false;

  int tokens() const { return 3 * (1 + neighbors) + 1; }
  int ffn() const { return ffn_hidden > 0 ? ffn_hidden : 2 * dim; }
  // predictor input: [z_{t-1}; (1+n) action one-hots; (1+n) rewards]
  int predictor_input() const {
    return dim + (1 + neighbors) * (kNumPhases + 1);
  }
};

// One intersection (target or neighbor) at one step: raw observation plus
// the previous interval's action/reward. Absent units stay zero.
struct StepFeature {
  std::vector<double> raw_o;  // kRawFeatureDim, empty treated as zeros
  int a_prev = -1;            // -1 -> zero one-hot (episode start)
  double r_prev = 0.0;
  bool present = true;
};

// target followed by up to n neighbors; missing tail slots count as absent
using StepGroup = std::vector<StepFeature>;

// K-step history of one intersection; steps[k] is oldest-first, valid[k]
// flags slots inside the episode.
struct EncodeRecord {
  std::vector<StepGroup> steps;      // size K
  std::vector<std::uint8_t> valid;   // size K
};

void add_tont_params(nn::ParamStore& params, const ModelConfig& cfg, Rng& rng);

// Token matrix for R step-groups: [R * tokens(), dim], assembled as
// [decision, (o a r) per unit] with positional and absence offsets.
nn::Tensor assemble_tokens(const std::vector<StepGroup>& groups,
                           const nn::ParamStore& params, const ModelConfig& cfg,
                           nn::Tensor* o_embed_out = nullptr);

struct LowerStepResult {
  nn::Tensor c;        // [R, dim] decision-token outputs
  nn::Tensor o_embed;  // [R, dim] target observation embeddings
  std::vector<nn::AttnCapture> attn;  // per layer, when captured
};

// Lower stage over R independent step-groups (also dispatches the
// no_lower / gnn_lower ablation paths).
LowerStepResult lower_step(const std::vector<StepGroup>& groups,
                           const nn::ParamStore& params, const ModelConfig& cfg,
                           bool capture_attn = false);

// Upper stage over B windows of K cached step embeddings stacked as
// [B*K, dim]; invalid slots are zeroed and masked out of attention.
// Returns one output row per window position (gru_upper replaces the
// attention stack with a gated recurrent cell).
nn::Tensor upper_from_window(const nn::Tensor& c_window,
                             const std::vector<std::uint8_t>& valid,
                             const nn::ParamStore& params,
                             const ModelConfig& cfg);

struct EncodeResult {
  nn::Tensor z;        // [B, dim] Upper output at the current step
  nn::Tensor o_embed;  // [B, dim] current target observation embedding
  nn::Tensor z_seq;    // [B*K, dim] Upper outputs at every window position
};

// Full differentiable encode of B records (training path).
EncodeResult encode_batch(const std::vector<EncodeRecord>& records,
                          const nn::ParamStore& params, const ModelConfig& cfg);

// Two-layer MLP mapping [P, predictor_input()] -> [P, dim].
nn::Tensor predict_dynamics(const nn::Tensor& input,
                            const nn::ParamStore& params,
                            const ModelConfig& cfg);

// Mean squared error of next-step predictions against detached targets over
// all consecutive valid window pairs; zero scalar when no pair exists.
nn::Tensor predictor_loss(const std::vector<EncodeRecord>& records,
                          const nn::Tensor& z_seq, const nn::ParamStore& params,
                          const ModelConfig& cfg);

// fixed sinusoidal positional table [len, dim]
nn::Tensor positional_embedding(int len, int dim);

// row labels (decision / o0 / a0 / r0 / ...) for attention export
std::vector<std::string> token_labels(const ModelConfig& cfg);

}  // namespace xlight
