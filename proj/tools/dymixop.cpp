#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dymixop/commands.hpp"

using namespace dymixop;

namespace {

struct Globals {
  std::optional<std::string> seed;
  std::optional<std::string> precision;
  std::optional<std::string> threads;
  bool json = false;
};

/// One `--key` option per registry entry; values stay text until applied.
struct RunFlags {
  std::string config;
  std::map<std::string, std::string> values;
};

bool is_global(const std::string& key) { return key == "seed" || key == "precision" || key == "threads"; }

void add_run_flags(CLI::App* cmd, RunFlags& flags) {
  cmd->add_option("--config", flags.config, "key = value configuration file");
  for (const auto& key : run_keys()) {
    if (is_global(key.name)) continue;
    std::string names = "--" + key.name;
    if (key.name.find('_') != std::string::npos) {
      std::string dashed = key.name;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      names += ",--" + dashed;
    }
    cmd->add_option_function<std::string>(names, [&flags, name = key.name](const std::string& v) { flags.values[name] = v; },
                                          key.help);
  }
}

/// File values first, then flags, then the global flags.
RunConfig resolve(const RunFlags& flags, const Globals& g) {
  RunConfig cfg;
  if (!flags.config.empty()) apply_values(cfg, run_keys(), read_key_values(flags.config));
  apply_values(cfg, run_keys(), flags.values);
  if (g.seed) find_key(run_keys(), "seed").set(cfg, *g.seed);
  if (g.precision) find_key(run_keys(), "precision").set(cfg, *g.precision);
  if (g.threads) find_key(run_keys(), "threads").set(cfg, *g.threads);
  set_num_threads(static_cast<int>(cfg.threads));
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Dynamics-mixing neural operators: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::string>("--seed", [&](const std::string& v) { g.seed = v; }, "random seed");
  app.add_option_function<std::string>("--precision", [&](const std::string& v) { g.precision = v; }, "f32 or f64");
  app.add_option_function<std::string>("--threads", [&](const std::string& v) { g.threads = v; },
                                       "worker threads; results do not depend on it");
  app.add_flag("--json", g.json, "machine-readable output");

  auto* gen = app.add_subcommand("gen", "simulate trajectories into a dataset file");
  std::string spec_path, gen_output = "data.dmxd";
  gen->add_option("spec", spec_path, "generator spec file (key = value)")->required();
  gen->add_option("-o,--output", gen_output, "dataset file to write");

  RunFlags train_flags, eval_flags, predict_flags, grad_flags, ablate_flags;
  add_run_flags(app.add_subcommand("train", "train a model and write a checkpoint"), train_flags);
  add_run_flags(app.add_subcommand("eval", "report metrics of a checkpoint on a dataset"), eval_flags);
  add_run_flags(app.add_subcommand("predict", "roll a checkpoint forward from a dataset window"), predict_flags);
  add_run_flags(app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients"), grad_flags);
  add_run_flags(app.add_subcommand("ablate", "train every ablation variant and compare"), ablate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  if (name == "gen") {
    std::map<std::string, std::string> overrides;
    if (g.seed) overrides["seed"] = *g.seed;
    if (g.threads) set_num_threads(static_cast<int>(parse::to_size("threads", *g.threads)));
    cli::cmd_gen(spec_path, gen_output, overrides, std::cout);
  } else if (name == "train") {
    cli::cmd_train(resolve(train_flags, g), std::cout);
  } else if (name == "eval") {
    cli::cmd_eval(resolve(eval_flags, g), g.json, std::cout);
  } else if (name == "predict") {
    cli::cmd_predict(resolve(predict_flags, g), std::cout);
  } else if (name == "gradcheck") {
    const auto report = cli::cmd_gradcheck(resolve(grad_flags, g), g.json, std::cout);
    if (!report.passed()) {
      fail(ErrorKind::numeric, std::to_string(report.failures().size()) + " parameters exceed gradient tolerance; worst " +
                                   cli::sci(report.worst()));
    }
  } else if (name == "ablate") {
    cli::cmd_ablate(resolve(ablate_flags, g), g.json, std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
  }
  return 1;
}
