#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "xlight/checkpoint.hpp"
#include "xlight/config.hpp"
#include "xlight/eval.hpp"
#include "xlight/train.hpp"

namespace fs = std::filesystem;
using namespace xlight;

namespace {

std::string git_describe() {
  FILE* p = popen("git describe --always --dirty 2>/dev/null", "r");
  if (!p) return "unknown";
  char buf[128] = {0};
  std::string out;
  while (fgets(buf, sizeof buf, p)) out += buf;
  pclose(p);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r'))
    out.pop_back();
  return out.empty() ? "unknown" : out;
}

void write_run_manifest(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream(dir + "/config.json") << cfg.to_json();
  std::ofstream(dir + "/run.txt") << "seed=" << cfg.train.seed << "\n"
                                  << "git=" << git_describe() << "\n";
}

struct Cli {
  CLI::App app{"transformer-on-transformer traffic signal control"};
  RunConfig cfg;
  std::string config_path;

  // shared option state
  std::vector<std::string> scenarios, train_scenarios;
  std::string test_scenario, scenario, method = "maxpressure", ckpt, out_dir;
  std::string ablate;
  std::uint64_t seed = 0;
  bool seed_set = false;

  void apply_common(CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    auto* s = sub->add_option("--seed", seed, "RNG seed");
    s->each([this](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_dir, "output directory");
  }

  void resolve(CLI::App* sub) {
    if (!config_path.empty()) cfg.apply_file(config_path);
    if (seed_set) {
      cfg.train.seed = seed;
    } else if (const char* env = std::getenv("XLIGHT_SEED")) {
      cfg.train.seed = std::strtoull(env, nullptr, 10);
    }
    if (!out_dir.empty()) cfg.train.out_dir = out_dir;
    auto set_if = [&](const char* name, auto& dst) {
      const CLI::Option* opt = sub->get_option_no_throw(name);
      if (opt && opt->count()) {
        using T = std::decay_t<decltype(dst)>;
        dst = opt->as<T>();
      }
    };
    set_if("--episodes", cfg.train.episodes);
    set_if("--k-history", cfg.train.model.k_history);
    set_if("--neighbors", cfg.train.model.neighbors);
    set_if("--lr", cfg.train.ppo.lr);
    set_if("--ckpt-every", cfg.train.ckpt_every);
    set_if("--jobs", cfg.train.jobs);
    if (!ablate.empty()) {
      ModelConfig& m = cfg.train.model;
      if (ablate == "no_lower") m.no_lower = true;
      else if (ablate == "gru_upper") m.gru_upper = true;
      else if (ablate == "no_residual") m.no_residual = true;
      else if (ablate == "no_predictor") m.no_predictor = true;
      else if (ablate == "gnn_lower") m.gnn_lower = true;
      else throw CLI::ValidationError("--ablate", "unknown variant " + ablate);
    }
    cfg.train.model.embed.dim = cfg.train.model.dim;
  }

  void add_train_opts(CLI::App* sub) {
    sub->add_option("--episodes", "training episodes");
    sub->add_option("--k-history", "history window K");
    sub->add_option("--neighbors", "neighbor count n");
    sub->add_option("--lr", "learning rate");
    sub->add_option("--ckpt-every", "checkpoint interval in episodes");
    sub->add_option("--jobs", "parallel rollout workers");
    sub->add_option("--ablate", ablate,
                    "no_lower|gru_upper|no_residual|no_predictor|gnn_lower");
  }
};

nn::ParamStore load_params(const RunConfig& cfg, const std::string& ckpt) {
  nn::ParamStore params;
  Rng prng(cfg.train.seed);
  add_tont_params(params, cfg.train.model, prng);
  add_agent_params(params, cfg.train.model, prng);
  if (!ckpt.empty()) load_checkpoint(ckpt, params);
  return params;
}

void emit_metrics(const EpisodeMetrics& m, const std::string& out_dir,
                  const std::string& name) {
  std::string csv = metrics_csv(m);
  std::cout << name << "\n" << csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir + "/" + name + ".csv") << csv;
  }
}

int run(int argc, char** argv) {
  Cli c;
  c.app.require_subcommand(1);

  auto* validate = c.app.add_subcommand("validate-scenario",
                                        "parse and check scenario files");
  validate->add_option("files", c.scenarios, "scenario files")->required();

  auto* baseline = c.app.add_subcommand("baseline", "run a rule-based policy");
  baseline->add_option("--method", c.method, "ftc|maxpressure");
  baseline->add_option("--scenario", c.scenario, "scenario file")->required();
  c.apply_common(baseline);

  auto* train = c.app.add_subcommand("train", "train on one or more scenarios");
  train->add_option("--scenarios", c.scenarios, "scenario files")
      ->delimiter(',');
  c.apply_common(train);
  c.add_train_opts(train);

  auto* eval = c.app.add_subcommand("eval", "evaluate a trained checkpoint");
  eval->add_option("--scenario", c.scenario, "scenario file")->required();
  eval->add_option("--ckpt", c.ckpt, "checkpoint file")->required();
  c.apply_common(eval);
  c.add_train_opts(eval);

  auto* transfer =
      c.app.add_subcommand("transfer", "train, then zero-shot eval");
  transfer->add_option("--train", c.train_scenarios, "training scenario files")
      ->delimiter(',')
      ->required();
  transfer->add_option("--test", c.test_scenario, "held-out scenario file")
      ->required();
  c.apply_common(transfer);
  c.add_train_opts(transfer);

  auto* exp = c.app.add_subcommand("export-attention",
                                   "dump first-stage attention maps as CSV");
  exp->add_option("--scenario", c.scenario, "scenario file")->required();
  exp->add_option("--ckpt", c.ckpt, "checkpoint file");
  c.apply_common(exp);
  c.add_train_opts(exp);

  try {
    c.app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << c.app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  CLI::App* sub = c.app.get_subcommands().front();
  c.resolve(sub);

  if (sub == validate) {
    for (const auto& f : c.scenarios) {
      ScenarioSpec spec = load_scenario(f);
      std::cout << f << ": ok (" << spec.controlled_nodes().size()
                << " signalized, " << spec.links.size() << " links, "
                << spec.flows.size() << " flows)\n";
      for (int n : spec.controlled_nodes())
        unify_intersection(spec.intersections[n]);
    }
    return 0;
  }

  if (sub == baseline) {
    if (c.method != "ftc" && c.method != "maxpressure")
      throw std::runtime_error("unknown baseline method '" + c.method + "'");
    ScenarioSpec spec = load_scenario(c.scenario);
    EpisodeMetrics m =
        c.method == "ftc"
            ? run_ftc(spec, c.cfg.ftc_phase_duration, c.cfg.train.seed,
                      c.cfg.train.interval_s)
            : run_max_pressure(spec, c.cfg.train.seed, c.cfg.train.interval_s);
    emit_metrics(m, c.cfg.train.out_dir, c.method + "_" + spec.name);
    return 0;
  }

  if (sub == train) {
    if (!c.scenarios.empty()) c.cfg.train.scenario_paths = c.scenarios;
    if (!c.cfg.train.out_dir.empty()) write_run_manifest(c.cfg, c.cfg.train.out_dir);
    Trainer t(c.cfg.train);
    t.train();
    std::cout << "trained " << c.cfg.train.episodes << " episodes on "
              << t.scenarios().size() << " scenario(s)\n";
    return 0;
  }

  if (sub == eval) {
    ScenarioSpec spec = load_scenario(c.scenario);
    nn::ParamStore params = load_params(c.cfg, c.ckpt);
    EpisodeMetrics m = run_policy(spec, params, c.cfg.train.model,
                                  c.cfg.train.seed, c.cfg.train.reward,
                                  c.cfg.train.interval_s);
    emit_metrics(m, c.cfg.train.out_dir, "policy_" + spec.name);
    return 0;
  }

  if (sub == transfer) {
    c.cfg.train.scenario_paths = c.train_scenarios;
    std::string dir = c.cfg.train.out_dir;
    std::ofstream log;
    if (!dir.empty()) {
      write_run_manifest(c.cfg, dir);
      log.open(dir + "/run.log");
    }
    auto note = [&](const std::string& s) {
      std::cout << s << "\n";
      if (log) log << s << "\n";
    };
    note("training on: " + std::to_string(c.train_scenarios.size()) +
         " scenario(s); test scenario not loaded");
    Trainer t(c.cfg.train);
    t.train();
    note("training complete; loading test scenario " + c.test_scenario);
    ScenarioSpec test = load_scenario(c.test_scenario);
    EpisodeMetrics m = run_policy(test, t.params(), c.cfg.train.model,
                                  c.cfg.train.seed, c.cfg.train.reward,
                                  c.cfg.train.interval_s);
    emit_metrics(m, dir, "transfer_" + test.name);
    return 0;
  }

  if (sub == exp) {
    ScenarioSpec spec = load_scenario(c.scenario);
    nn::ParamStore params = load_params(c.cfg, c.ckpt);
    EpisodeRollout ep(spec, c.cfg.train.seed, c.cfg.train.model,
                      c.cfg.train.reward, c.cfg.train.interval_s);
    // one decision step against the initial state, capturing attention
    std::vector<int> nodes = spec.controlled_nodes();
    std::vector<StepGroup> groups;
    for (int node : nodes) {
      StepGroup g;
      StepFeature f;
      f.raw_o = observe(ep.sim(), node,
                        unify_intersection(spec.intersections[node]),
                        c.cfg.train.interval_s)
                    .flat();
      g.push_back(f);
      groups.push_back(g);
    }
    LowerStepResult low =
        lower_step(groups, params, c.cfg.train.model, /*capture_attn=*/true);
    std::vector<std::string> labels = token_labels(c.cfg.train.model);
    std::ostringstream os;
    os << "node,layer,head,query";
    for (const auto& l : labels) os << ',' << l;
    os << '\n';
    for (size_t l = 0; l < low.attn.size(); ++l) {
      const nn::AttnCapture& cap = low.attn[l];
      for (int b = 0; b < cap.batch; ++b)
        for (int h = 0; h < cap.heads; ++h)
          for (int i = 0; i < cap.len; ++i) {
            os << spec.intersections[nodes[b]].id << ',' << l << ',' << h
               << ',' << labels[i];
            const auto& p = cap.probs[b * cap.heads + h];
            for (int j = 0; j < cap.len; ++j) os << ',' << p[i * cap.len + j];
            os << '\n';
          }
    }
    std::cout << os.str();
    if (!c.cfg.train.out_dir.empty()) {
      fs::create_directories(c.cfg.train.out_dir);
      std::ofstream(c.cfg.train.out_dir + "/attention_" + spec.name + ".csv")
          << os.str();
    }
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::Error& e) {
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
