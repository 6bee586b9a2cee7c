#include <iostream>

#include <CLI11.hpp>

#include "layerlens/cli.h"
#include "layerlens/error.h"

namespace layerlens::cli {

namespace {

struct Verb {
  const char* name;
  const char* help;
  int (*command)(const RunConfig&);
};

constexpr Verb kVerbs[] = {
    {"train", "train a model and write one checkpoint per epoch", cmd_train},
    {"sid", "pixel-level SID for the configured layers and inputs", cmd_sid},
    {"ru", "train decoders, then pixel-level RU (and SID)", cmd_ru},
    {"concentration", "background minus foreground SID over masks", cmd_concentration},
    {"coherency", "rescale neighbouring layers and compare SID", cmd_coherency},
    {"damage", "insert a plain block between residual blocks and compare layerwise SID", cmd_damage},
    {"sweep", "layerwise SID over a list of checkpoints", cmd_sweep},
    {"report", "layerwise report over one or more models", cmd_report},
};

int fail(ExitCode code, const std::string& message) {
  std::cerr << "layerlens: error: " << message << "\n";
  return static_cast<int>(code);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"layerlens: how much input information each layer of a network discards"};
  app.set_version_flag("--version", LAYERLENS_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::string out;
  std::size_t jobs = 0;
  std::vector<CLI::App*> subs;
  for (const auto& verb : kVerbs) {
    CLI::App* sub = app.add_subcommand(verb.name, verb.help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--alpha", alpha, "overrides estimator.alpha");
    sub->add_option("--out", out, "overrides the output directory");
    sub->add_option("--jobs", jobs, "concurrent estimation cells")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  std::size_t chosen = 0;
  while (!subs[chosen]->parsed()) ++chosen;
  CLI::App& sub = *subs[chosen];
  if (sub.count("--seed") > 0) overrides.seed = seed;
  if (sub.count("--alpha") > 0) overrides.alpha = alpha;
  if (sub.count("--out") > 0) overrides.out = out;
  if (sub.count("--jobs") > 0) overrides.jobs = jobs;

  try {
    const RunConfig cfg = load_run_config(config_path, overrides);
    return kVerbs[chosen].command(cfg);
  } catch (const ConfigError& e) {
    return fail(ExitCode::config, e.what());
  } catch (const IoError& e) {
    return fail(ExitCode::io, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ExitCode::io, e.what());
  } catch (const std::exception& e) {
    return fail(ExitCode::failure, e.what());
  }
}

}  // namespace layerlens::cli
