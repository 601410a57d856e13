#pragma once

#include <vector>

#include "xlight/tont.hpp"

namespace xlight {

struct PpoConfig {
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double entropy_coef = 1e-2;
  double alpha = 1.0;         // actor-loss weight
  double beta = 1.0;          // critic-loss weight
  double predictor_coef = 1e-2;
  double lr = 5e-4;
  int epochs = 4;
  int minibatch = 256;
};

void add_agent_params(nn::ParamStore& params, const ModelConfig& cfg, Rng& rng);

struct PolicyOutput {
  nn::Tensor logits;  // [B, 8]
  nn::Tensor value;   // [B, 1]
};

// Two-layer actor/critic heads on z + o (z alone under no_residual).
PolicyOutput policy_forward(const nn::Tensor& z, const nn::Tensor& o,
                            const nn::ParamStore& params,
                            const ModelConfig& cfg);

// probabilities of one logits row (softmax)
std::vector<double> action_probs(const std::vector<double>& logits);
int sample_action(const std::vector<double>& logits, Rng& rng);
int greedy_action(const std::vector<double>& logits);

struct PpoLosses {
  nn::Tensor actor;    // scalar
  nn::Tensor critic;   // scalar
  nn::Tensor entropy;  // scalar, mean policy entropy
};

// Clipped-surrogate PPO losses over one minibatch. advantages/returns and
// the behavior policy's log-probs are constants.
PpoLosses ppo_losses(const PolicyOutput& out, const std::vector<int>& actions,
                     const std::vector<double>& old_logp,
                     const std::vector<double>& advantages,
                     const std::vector<double>& returns, double clip);

nn::Tensor total_loss(const PpoLosses& l, const nn::Tensor& l_pred,
                      const PpoConfig& cfg);

}  // namespace xlight
