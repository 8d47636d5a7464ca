#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "spdesmc/commands.hpp"
#include "spdesmc/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Guided particle filtering, MCMC smoothing and parameter estimation "
               "for semilinear SPDEs with the stochastic Amari equation built in"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_dir = ".";
  spdesmc::CliOverrides ovr;
  std::uint64_t seed_value = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    if (needs_data) sub->add_option("--data", data_path, "dataset file (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_value, "seed override")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--workers", ovr.workers, "worker thread cap");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(simulate, false);
  CLI::App* filter = app.add_subcommand("filter", "run a filtering method");
  add_common(filter, true);
  filter->add_option("--flavor", ovr.flavor, "gpf1|gpf2|bootstrap|ukf");
  CLI::App* smooth = app.add_subcommand("smooth", "pCN smoothing with fixed parameters");
  add_common(smooth, true);
  CLI::App* infer = app.add_subcommand("infer", "smoothing plus parameter estimation");
  add_common(infer, true);
  CLI::App* compare = app.add_subcommand("compare", "run several flavors on one dataset");
  add_common(compare, true);

  CLI11_PARSE(app, argc, argv);
  if (seed_set) ovr.seed = seed_value;

  try {
    const nlohmann::json cfg = spdesmc::load_run_config(config_path);
    if (simulate->parsed()) return spdesmc::cmd_simulate(cfg, out_dir, ovr);
    if (filter->parsed()) return spdesmc::cmd_filter(cfg, data_path, out_dir, ovr);
    if (smooth->parsed()) return spdesmc::cmd_smooth(cfg, data_path, out_dir, ovr);
    if (infer->parsed()) return spdesmc::cmd_infer(cfg, data_path, out_dir, ovr);
    if (compare->parsed()) return spdesmc::cmd_compare(cfg, data_path, out_dir, ovr);
  } catch (const spdesmc::SchemaError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
