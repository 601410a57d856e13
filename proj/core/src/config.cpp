#include "xlight/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace xlight {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  apply_json(ss.str(), path);
}

void RunConfig::apply_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + origin + "': " + e.what());
  }
  read(j, "scenarios", train.scenario_paths);
  read(j, "episodes", train.episodes);
  read(j, "seed", train.seed);
  read(j, "interval_s", train.interval_s);
  read(j, "out_dir", train.out_dir);
  read(j, "ckpt_every", train.ckpt_every);
  read(j, "jobs", train.jobs);
  read(j, "ftc_phase_duration", ftc_phase_duration);
  if (j.contains("model")) {
    const json& m = j.at("model");
    ModelConfig& mc = train.model;
    read(m, "dim", mc.dim);
    read(m, "heads", mc.heads);
    read(m, "lower_layers", mc.lower_layers);
    read(m, "upper_layers", mc.upper_layers);
    read(m, "k_history", mc.k_history);
    read(m, "neighbors", mc.neighbors);
    read(m, "ffn_hidden", mc.ffn_hidden);
    read(m, "predictor_hidden", mc.predictor_hidden);
    read(m, "head_hidden", mc.head_hidden);
    read(m, "embed_hidden", mc.embed.hidden);
    read(m, "embed_out", mc.embed.out);
    read(m, "no_lower", mc.no_lower);
    read(m, "gru_upper", mc.gru_upper);
    read(m, "no_residual", mc.no_residual);
    read(m, "no_predictor", mc.no_predictor);
    read(m, "gnn_lower", mc.gnn_lower);
    mc.embed.dim = mc.dim;
  }
  if (j.contains("ppo")) {
    const json& p = j.at("ppo");
    PpoConfig& pc = train.ppo;
    read(p, "clip", pc.clip);
    read(p, "gamma", pc.gamma);
    read(p, "lambda", pc.lambda);
    read(p, "entropy_coef", pc.entropy_coef);
    read(p, "alpha", pc.alpha);
    read(p, "beta", pc.beta);
    read(p, "predictor_coef", pc.predictor_coef);
    read(p, "lr", pc.lr);
    read(p, "epochs", pc.epochs);
    read(p, "minibatch", pc.minibatch);
  }
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    read(r, "queue", train.reward.queue);
    read(r, "wait", train.reward.wait);
    read(r, "delay", train.reward.delay);
    read(r, "pressure", train.reward.pressure);
  }
}

std::string RunConfig::to_json() const {
  const ModelConfig& mc = train.model;
  const PpoConfig& pc = train.ppo;
  json j{
      {"scenarios", train.scenario_paths},
      {"episodes", train.episodes},
      {"seed", train.seed},
      {"interval_s", train.interval_s},
      {"out_dir", train.out_dir},
      {"ckpt_every", train.ckpt_every},
      {"jobs", train.jobs},
      {"ftc_phase_duration", ftc_phase_duration},
      {"model",
       {{"dim", mc.dim},
        {"heads", mc.heads},
        {"lower_layers", mc.lower_layers},
        {"upper_layers", mc.upper_layers},
        {"k_history", mc.k_history},
        {"neighbors", mc.neighbors},
        {"ffn_hidden", mc.ffn_hidden},
        {"predictor_hidden", mc.predictor_hidden},
        {"head_hidden", mc.head_hidden},
        {"embed_hidden", mc.embed.hidden},
        {"embed_out", mc.embed.out},
        {"no_lower", mc.no_lower},
        {"gru_upper", mc.gru_upper},
        {"no_residual", mc.no_residual},
        {"no_predictor", mc.no_predictor},
        {"gnn_lower", mc.gnn_lower}}},
      {"ppo",
       {{"clip", pc.clip},
        {"gamma", pc.gamma},
        {"lambda", pc.lambda},
        {"entropy_coef", pc.entropy_coef},
        {"alpha", pc.alpha},
        {"beta", pc.beta},
        {"predictor_coef", pc.predictor_coef},
        {"lr", pc.lr},
        {"epochs", pc.epochs},
        {"minibatch", pc.minibatch}}},
      {"reward",
       {{"queue", train.reward.queue},
        {"wait", train.reward.wait},
        {"delay", train.reward.delay},
        {"pressure", train.reward.pressure}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace xlight
