#include "xlight/agent.hpp"

#include <algorithm>
#include <cmath>

namespace xlight {

using nn::Tensor;

void add_agent_params(nn::ParamStore& params, const ModelConfig& cfg,
                      Rng& rng) {
  const int d = cfg.dim, h = cfg.head_hidden;
  params.add("actor.w1", d, h, rng);
  params.add("actor.b1", 1, h, rng, 0.0);
  params.add("actor.w2", h, kNumPhases, rng);
  params.add("actor.b2", 1, kNumPhases, rng, 0.0);
  params.add("critic.w1", d, h, rng);
  params.add("critic.b1", 1, h, rng, 0.0);
  params.add("critic.w2", h, 1, rng);
  params.add("critic.b2", 1, 1, rng, 0.0);
}

PolicyOutput policy_forward(const Tensor& z, const Tensor& o,
                            const nn::ParamStore& params,
                            const ModelConfig& cfg) {
  if (z.cols() != cfg.dim || (!cfg.no_residual && o.cols() != cfg.dim))
    throw nn::NnError("policy_forward: dimension mismatch");
  Tensor x = cfg.no_residual ? z : nn::add(z, o);
  PolicyOutput out;
  out.logits = nn::linear(
      nn::tanh_t(nn::linear(x, params.get("actor.w1"), params.get("actor.b1"))),
      params.get("actor.w2"), params.get("actor.b2"));
  out.value = nn::linear(
      nn::tanh_t(
          nn::linear(x, params.get("critic.w1"), params.get("critic.b1"))),
      params.get("critic.w2"), params.get("critic.b2"));
  return out;
}

std::vector<double> action_probs(const std::vector<double>& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  return p;
}

int sample_action(const std::vector<double>& logits, Rng& rng) {
  std::vector<double> p = action_probs(logits);
  double u = rng.uniform();
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

int greedy_action(const std::vector<double>& logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

PpoLosses ppo_losses(const PolicyOutput& out, const std::vector<int>& actions,
                     const std::vector<double>& old_logp,
                     const std::vector<double>& advantages,
                     const std::vector<double>& returns, double clip) {
  const int B = out.logits.rows();
  const int A = out.logits.cols();
  if (static_cast<int>(actions.size()) != B ||
      static_cast<int>(old_logp.size()) != B ||
      static_cast<int>(advantages.size()) != B ||
      static_cast<int>(returns.size()) != B)
    throw nn::NnError("ppo_losses: batch length mismatch");

  Tensor logp_all = nn::log_softmax_rows(out.logits);
  std::vector<double> onehot(static_cast<size_t>(B) * A, 0.0);
  for (int b = 0; b < B; ++b) onehot[b * A + actions[b]] = 1.0;
  Tensor ones_col = Tensor::constant(std::vector<double>(A, 1.0), A, 1);
  Tensor logp_a = nn::matmul(
      nn::mul(logp_all, Tensor::constant(std::move(onehot), B, A)), ones_col);

  std::vector<double> neg_old(B);
  for (int b = 0; b < B; ++b) neg_old[b] = -old_logp[b];
  Tensor ratio = nn::exp_t(
      nn::add(logp_a, Tensor::constant(std::move(neg_old), B, 1)));
  Tensor adv = Tensor::constant(advantages, B, 1);
  Tensor surr1 = nn::mul(ratio, adv);
  Tensor surr2 = nn::mul(nn::clamp(ratio, 1.0 - clip, 1.0 + clip), adv);

  PpoLosses l;
  l.actor = nn::neg(nn::mean_all(nn::minimum(surr1, surr2)));
  l.critic = nn::mse(out.value, Tensor::constant(returns, B, 1));
  Tensor probs = nn::softmax_rows(out.logits);
  l.entropy = nn::scale(nn::neg(nn::sum_all(nn::mul(probs, logp_all))),
                        1.0 / B);
  return l;
}

Tensor total_loss(const PpoLosses& l, const Tensor& l_pred,
                  const PpoConfig& cfg) {
  Tensor t = nn::add(nn::scale(l.actor, cfg.alpha),
                     nn::scale(l.critic, cfg.beta));
  if (l_pred.defined()) t = nn::add(t, nn::scale(l_pred, cfg.predictor_coef));
  return nn::sub(t, nn::scale(l.entropy, cfg.entropy_coef));
}

}  // namespace xlight
