#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "safees/safees.h"

int main(int argc, char** argv) {
  CLI::App app{"Safe extremum-seeking simulation and verification"};
  app.set_version_flag("--version", safees_version());
  app.require_subcommand(1);

  std::string config, out;
  std::size_t workers = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config, "Experiment config (JSON)");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--workers", workers, "Parallel initial conditions")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed for random gradient cross-check points");
    sub->add_option("--set", overrides, "Override a config field, e.g. es.k=0.001")->take_all();
  };
  add_common(app.add_subcommand("simulate", "Simulate the ES loop for every initial condition"), true);
  add_common(app.add_subcommand("exact", "Simulate the exact safety-filtered gradient flow"), true);
  add_common(app.add_subcommand("check", "Run the diagnostics suite"), true);
  add_common(app.add_subcommand("paper-example", "Run the built-in two-lobe scenarios (a), (b), (c)"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  std::vector<const char*> raw;
  for (const auto& o : overrides) raw.push_back(o.c_str());
  safees_command_options opt{};
  opt.config_path = config.empty() ? nullptr : config.c_str();
  opt.out_dir = out.empty() ? nullptr : out.c_str();
  opt.workers = workers;
  opt.seed = seed;
  opt.has_seed = sub->count("--seed") > 0;
  opt.overrides = raw.data();
  opt.override_count = raw.size();
  return safees_run_command(sub->get_name().c_str(), &opt);
}
