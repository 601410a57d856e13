#include "xlight/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "xlight/checkpoint.hpp"
#include "xlight/eval.hpp"
#include "xlight/obsrew.hpp"

namespace xlight {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^
                    (b * 0xbf58476d1ce4e5b9ULL) ^ 0x94d049bb133111ebULL;
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& dones, double gamma, double lambda) {
  const size_t T = rewards.size();
  if (values.size() != T + 1 || dones.size() != T)
    throw std::invalid_argument("compute_gae: length mismatch");
  std::vector<double> adv(T), ret(T);
  double acc = 0.0;
  for (size_t t = T; t-- > 0;) {
    double nonterm = dones[t] ? 0.0 : 1.0;
    double delta = rewards[t] + gamma * values[t + 1] * nonterm - values[t];
    acc = delta + gamma * lambda * nonterm * acc;
    adv[t] = acc;
    ret[t] = acc + values[t];
  }
  return {adv, ret};
}

EpisodeRollout::EpisodeRollout(const ScenarioSpec& spec, std::uint64_t sim_seed,
                               const ModelConfig& model,
                               const RewardWeights& reward, int interval_s)
    : model_(model),
      reward_(reward),
      interval_s_(interval_s),
      sim_(spec, sim_seed),
      nodes_(spec.controlled_nodes()) {
  for (int node : nodes_)
    layouts_.push_back(unify_intersection(spec.intersections[node]));
  for (int node : nodes_) {
    NeighborSet ns = nearest_neighbors(spec, node, model_.neighbors);
    std::vector<int> pos;
    for (int id : ns.ids) {
      auto it = std::find(nodes_.begin(), nodes_.end(), id);
      pos.push_back(static_cast<int>(it - nodes_.begin()));
    }
    neighbor_pos_.push_back(pos);
  }
}

void EpisodeRollout::run(const nn::ParamStore& params, Rng* action_rng,
                         RolloutBuffer* buffer, int scenario_index) {
  const int B = static_cast<int>(nodes_.size());
  const int K = model_.k_history;
  const int d = model_.dim;
  const int steps_total =
      static_cast<int>(sim_.spec().horizon_s / interval_s_);

  std::vector<int> prev_action(B, -1);
  std::vector<double> prev_reward(B, 0.0);
  std::vector<std::vector<StepGroup>> step_groups;      // [t][node]
  std::vector<std::vector<std::vector<double>>> c_hist; // [t][node][d]

  for (int t = 0; t < steps_total; ++t) {
    std::vector<StepFeature> feats(B);
    for (int b = 0; b < B; ++b) {
      feats[b].raw_o =
          observe(sim_, nodes_[b], layouts_[b], interval_s_).flat();
      feats[b].a_prev = prev_action[b];
      feats[b].r_prev = prev_reward[b];
    }
    std::vector<StepGroup> groups(B);
    for (int b = 0; b < B; ++b) {
      groups[b].push_back(feats[b]);
      for (int nb : neighbor_pos_[b]) groups[b].push_back(feats[nb]);
    }

    LowerStepResult low = lower_step(groups, params, model_);
    std::vector<std::vector<double>> c_rows(B, std::vector<double>(d));
    for (int b = 0; b < B; ++b)
      std::copy(low.c.data() + b * d, low.c.data() + (b + 1) * d,
                c_rows[b].begin());
    c_hist.push_back(std::move(c_rows));
    step_groups.push_back(groups);

    std::vector<double> cw(static_cast<size_t>(B) * K * d, 0.0);
    std::vector<std::uint8_t> valid(static_cast<size_t>(B) * K, 0);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k) {
        int step = t - K + 1 + k;
        if (step < 0) continue;
        valid[b * K + k] = 1;
        std::copy(c_hist[step][b].begin(), c_hist[step][b].end(),
                  cw.begin() + (static_cast<size_t>(b) * K + k) * d);
      }
    nn::Tensor z_seq = upper_from_window(
        nn::Tensor::constant(std::move(cw), B * K, d), valid, params, model_);
    std::vector<int> last(B);
    for (int b = 0; b < B; ++b) last[b] = b * K + K - 1;
    nn::Tensor z = nn::gather_rows(z_seq, last);
    PolicyOutput pol = policy_forward(z, low.o_embed, params, model_);

    std::map<int, int> joint;
    std::vector<int> actions(B);
    std::vector<double> logps(B);
    for (int b = 0; b < B; ++b) {
      std::vector<double> logits(pol.logits.data() + b * kNumPhases,
                                 pol.logits.data() + (b + 1) * kNumPhases);
      int a = action_rng ? sample_action(logits, *action_rng)
                         : greedy_action(logits);
      actions[b] = a;
      logps[b] = std::log(action_probs(logits)[a]);
      joint[nodes_[b]] = a;
    }

    std::vector<IntersectionSnapshot> pre(B);
    for (int b = 0; b < B; ++b)
      pre[b] = snapshot(sim_, nodes_[b], layouts_[b]);
    sim_.reset_interval_counters();
    sim_.apply_actions(joint);
    sim_.advance(interval_s_);
    for (int b = 0; b < B; ++b) {
      IntersectionSnapshot post = snapshot(sim_, nodes_[b], layouts_[b]);
      double r = reward(pre[b], post, reward_);
      prev_reward[b] = r;
      prev_action[b] = actions[b];
      reward_sum_ += r;
      steps_ += 1;
      if (buffer) {
        RolloutRecord rec;
        rec.scenario = scenario_index;
        rec.node = nodes_[b];
        rec.step = t;
        rec.window.resize(K);
        rec.valid.assign(K, 0);
        for (int k = 0; k < K; ++k) {
          int step = t - K + 1 + k;
          if (step < 0) continue;
          rec.window[k] = step_groups[step][b];
          rec.valid[k] = 1;
        }
        rec.action = actions[b];
        rec.logp = logps[b];
        rec.reward = r;
        rec.value = pol.value.at(b, 0);
        rec.done = t == steps_total - 1;
        buffer->records.push_back(std::move(rec));
      }
    }
  }
}

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)),
      opt_(nn::AdamConfig{cfg_.ppo.lr, 0.9, 0.999, 1e-8}),
      shuffle_rng_(mix_seed(cfg_.seed, 0x5EED, 0)) {
  for (const auto& path : cfg_.scenario_paths)
    specs_.push_back(load_scenario(path));
  if (specs_.empty()) throw std::invalid_argument("no training scenarios");
  Rng prng(cfg_.seed);
  add_tont_params(params_, cfg_.model, prng);
  add_agent_params(params_, cfg_.model, prng);
  csv_ << "episode,scenario,l_actor,l_critic,l_pred,entropy,mean_reward,"
          "mean_trip\n";
}

UpdateStats Trainer::run_episode(int episode_index) {
  const int S = static_cast<int>(specs_.size());
  std::vector<RolloutBuffer> buffers(S);
  std::vector<double> mean_reward(S, 0.0), mean_trip(S, 0.0);

  auto roll = [&](int s) {
    EpisodeRollout ep(specs_[s],
                      mix_seed(cfg_.seed, episode_index + 1, s + 1),
                      cfg_.model, cfg_.reward, cfg_.interval_s);
    Rng arng(mix_seed(cfg_.seed, episode_index + 1, s + 101));
    ep.run(params_, &arng, &buffers[s], s);
    mean_reward[s] = ep.mean_reward();
    mean_trip[s] =
        metrics_from_log(ep.sim().vehicles(), specs_[s].horizon_s)
            .avg_trip_time;
  };
  if (cfg_.jobs > 1 && S > 1) {
    std::vector<std::thread> workers;
    for (int s = 0; s < S; ++s) workers.emplace_back(roll, s);
    for (auto& w : workers) w.join();
  } else {
    for (int s = 0; s < S; ++s) roll(s);
  }

  RolloutBuffer merged;
  for (int s = 0; s < S; ++s)
    for (auto& rec : buffers[s].records)
      merged.records.push_back(std::move(rec));

  UpdateStats stats = update(merged);
  stats.mean_reward = mean_reward;
  stats.mean_trip = mean_trip;
  return stats;
}

UpdateStats Trainer::update(RolloutBuffer& buffer) {
  // GAE per (scenario, intersection) series in recorded step order
  std::map<std::pair<int, int>, std::vector<size_t>> series;
  for (size_t i = 0; i < buffer.records.size(); ++i) {
    const RolloutRecord& r = buffer.records[i];
    series[{r.scenario, r.node}].push_back(i);
  }
  for (auto& [key, idx] : series) {
    (void)key;
    std::vector<double> rewards, values{};
    std::vector<std::uint8_t> dones;
    for (size_t i : idx) {
      rewards.push_back(buffer.records[i].reward);
      values.push_back(buffer.records[i].value);
      dones.push_back(buffer.records[i].done ? 1 : 0);
    }
    values.push_back(0.0);  // bootstrap past the horizon
    auto [adv, ret] =
        compute_gae(rewards, values, dones, cfg_.ppo.gamma, cfg_.ppo.lambda);
    for (size_t k = 0; k < idx.size(); ++k) {
      buffer.records[idx[k]].advantage = adv[k];
      buffer.records[idx[k]].ret = ret[k];
    }
  }

  UpdateStats stats;
  const size_t N = buffer.records.size();
  std::vector<size_t> perm(N);
  long batches = 0;
  for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
    for (size_t i = 0; i < N; ++i) perm[i] = i;
    for (size_t i = N; i-- > 1;)
      std::swap(perm[i], perm[shuffle_rng_.uniform_int(i + 1)]);
    for (size_t start = 0; start < N; start += cfg_.ppo.minibatch) {
      size_t end = std::min(N, start + cfg_.ppo.minibatch);
      const int B = static_cast<int>(end - start);
      std::vector<EncodeRecord> recs(B);
      std::vector<int> actions(B);
      std::vector<double> old_logp(B), adv(B), ret(B);
      for (int b = 0; b < B; ++b) {
        const RolloutRecord& r = buffer.records[perm[start + b]];
        recs[b].steps = r.window;
        recs[b].valid = r.valid;
        actions[b] = r.action;
        old_logp[b] = r.logp;
        adv[b] = r.advantage;
        ret[b] = r.ret;
      }
      // advantage normalization per minibatch
      double mu = 0.0;
      for (double a : adv) mu += a;
      mu /= B;
      double var = 0.0;
      for (double a : adv) var += (a - mu) * (a - mu);
      double sd = std::sqrt(var / B) + 1e-8;
      for (double& a : adv) a = (a - mu) / sd;

      EncodeResult enc = encode_batch(recs, params_, cfg_.model);
      PolicyOutput pol =
          policy_forward(enc.z, enc.o_embed, params_, cfg_.model);
      PpoLosses losses =
          ppo_losses(pol, actions, old_logp, adv, ret, cfg_.ppo.clip);
      nn::Tensor l_pred;
      if (!cfg_.model.no_predictor)
        l_pred = predictor_loss(recs, enc.z_seq, params_, cfg_.model);
      nn::Tensor loss = total_loss(losses, l_pred, cfg_.ppo);
      if (!std::isfinite(loss.item()))
        throw std::runtime_error(
            "non-finite loss (actor=" + std::to_string(losses.actor.item()) +
            " critic=" + std::to_string(losses.critic.item()) + ")");
      params_.zero_grad();
      nn::backward(loss);
      opt_.step(params_);

      stats.l_actor += losses.actor.item();
      stats.l_critic += losses.critic.item();
      stats.l_pred += l_pred.defined() ? l_pred.item() : 0.0;
      stats.entropy += losses.entropy.item();
      batches += 1;
    }
  }
  if (batches > 0) {
    stats.l_actor /= batches;
    stats.l_critic /= batches;
    stats.l_pred /= batches;
    stats.entropy /= batches;
  }
  return stats;
}

void Trainer::train() {
  namespace fs = std::filesystem;
  const bool emit = !cfg_.out_dir.empty();
  if (emit) fs::create_directories(cfg_.out_dir);

  for (int ep = 0; ep < cfg_.episodes; ++ep) {
    UpdateStats stats = run_episode(ep);
    csv_.precision(17);
    for (size_t s = 0; s < specs_.size(); ++s)
      csv_ << ep << ',' << specs_[s].name << ',' << stats.l_actor << ','
           << stats.l_critic << ',' << stats.l_pred << ',' << stats.entropy
           << ',' << stats.mean_reward[s] << ',' << stats.mean_trip[s] << '\n';
    if (emit) {
      std::ofstream(cfg_.out_dir + "/training_log.csv", std::ios::trunc)
          << csv_.str();
      if (cfg_.ckpt_every > 0 && (ep + 1) % cfg_.ckpt_every == 0)
        save_checkpoint(
            cfg_.out_dir + "/ckpt_ep" + std::to_string(ep + 1) + ".bin",
            params_);
    }
  }
  if (emit) save_checkpoint(cfg_.out_dir + "/final.bin", params_);
}

}  // namespace xlight
