#include "exset/exset.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

// Command-line overrides; each maps onto one config field.
struct Overrides
{
  std::string config;
  std::optional<std::string> testbed, method, output, cache;
  std::optional<double> alpha, threshold;
  std::optional<long long> n_init, budget, n_mcs, n_rea, repetitions, workers;
  std::optional<std::uint64_t> seed, mc_seed;
  bool no_oracle = false;
};

void add_overrides(CLI::App* app, Overrides& o)
{
  app->add_option("-c,--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  app->add_option("--testbed", o.testbed, "testbed name (sand-piles, smoke-1d)");
  app->add_option("--method", o.method, "maxmin, lhs or kde-pce");
  app->add_option("-o,--output", o.output, "output directory");
  app->add_option("--cache-dir", o.cache, "reference cache directory");
  app->add_option("--alpha", o.alpha, "confidence level");
  app->add_option("--threshold", o.threshold, "target interval is [threshold, inf)");
  app->add_option("--n-init", o.n_init, "initial design size");
  app->add_option("--budget", o.budget, "number of acquisitions");
  app->add_option("--n-mcs", o.n_mcs, "Monte Carlo population size");
  app->add_option("--n-rea", o.n_rea, "surrogate realizations per iteration");
  app->add_option("--repetitions", o.repetitions, "independent repetitions");
  app->add_option("-j,--workers", o.workers, "worker threads (0: all cores)");
  app->add_option("--seed", o.seed, "base seed of the repetitions");
  app->add_option("--mc-seed", o.mc_seed, "seed of the Monte Carlo population");
  app->add_flag("--no-oracle", o.no_oracle, "skip the reference solution and metrics");
}

exset::ExperimentConfig resolve(const Overrides& o)
{
  exset::ExperimentConfig c;
  if (!o.config.empty()) c = exset::load_config(o.config);
  exset::json j = exset::json::object();
  if (o.testbed) j["testbed"] = *o.testbed;
  if (o.method) j["method"] = *o.method;
  if (o.output) j["output_dir"] = *o.output;
  if (o.cache) j["cache_dir"] = *o.cache;
  if (o.alpha) j["alpha"] = *o.alpha;
  if (o.threshold) j["target"] = {{"low", *o.threshold}, {"high", nullptr}};
  if (o.n_init) j["n_init"] = *o.n_init;
  if (o.budget) j["budget"] = *o.budget;
  if (o.n_mcs) j["n_mcs"] = *o.n_mcs;
  if (o.n_rea) j["n_rea"] = *o.n_rea;
  if (o.repetitions) j["repetitions"] = *o.repetitions;
  if (o.workers) j["workers"] = *o.workers;
  if (o.seed) j["seeds"]["base"] = *o.seed;
  if (o.mc_seed) j["seeds"]["mc"] = *o.mc_seed;
  if (o.no_oracle) j["oracle"] = false;
  exset::apply_json(c, j);
  exset::validate(c);
  return c;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Excursion-set confidence regions with PCA + GP surrogates"};
  app.require_subcommand(1);

  Overrides run_o, ref_o;
  auto* run = app.add_subcommand("run", "run the repetitions of an experiment");
  add_overrides(run, run_o);
  auto* ref = app.add_subcommand("reference", "compute and cache the Monte Carlo reference solution");
  add_overrides(ref, ref_o);

  std::string metrics_dir, chimap_dir;
  std::optional<std::string> metrics_cache, chimap_cache;
  long long resolution = 101;
  auto* met = app.add_subcommand("metrics", "recompute metrics.json of a finished run");
  met->add_option("run_dir", metrics_dir, "output directory of `exset run`")->required()->check(CLI::ExistingDirectory);
  met->add_option("--cache-dir", metrics_cache, "reference cache directory");
  auto* chi = app.add_subcommand("chimap", "chi maps of the true simulator and the median surrogate");
  chi->add_option("run_dir", chimap_dir, "output directory of `exset run`")->required()->check(CLI::ExistingDirectory);
  chi->add_option("-r,--resolution", resolution, "grid points per axis")->check(CLI::Range(2, 2001));
  chi->add_option("--cache-dir", chimap_cache, "reference cache directory");

  CLI11_PARSE(app, argc, argv);

  auto opt_path = [](const std::optional<std::string>& s) -> std::optional<std::filesystem::path> {
    if (s) return std::filesystem::path(*s);
    return std::nullopt;
  };
  try {
    if (*run) {
      const auto res = exset::cmd_run(resolve(run_o));
      if (res.metrics) std::cout << res.metrics->at("summary").dump(2) << '\n';
      std::cout << "artifacts written to " << res.output_dir.string() << '\n';
    } else if (*ref) {
      std::cout << exset::cmd_reference(resolve(ref_o)).dump(2) << '\n';
    } else if (*met) {
      std::cout << exset::cmd_metrics(metrics_dir, opt_path(metrics_cache)).at("summary").dump(2) << '\n';
    } else if (*chi) {
      std::cout << exset::cmd_chimap(chimap_dir, resolution, opt_path(chimap_cache)).dump(2) << '\n';
    }
  } catch (const exset::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
