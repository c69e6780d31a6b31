#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tcsim/cli.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, model_error = 3, io_error = 4 };

struct RunArgs {
  std::string config;
  std::string experiment;
  std::optional<std::uint64_t> shots;
  std::optional<std::uint64_t> seed;
  std::string out;
  int workers = 1;
};

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("TCSIM_SEED");
  if (!s) return std::nullopt;
  const std::string v(s);
  std::uint64_t seed = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), seed);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw tcsim::config::ConfigError(fmt::format("TCSIM_SEED='{}' is not a non-negative integer", v), 0, "TCSIM_SEED");
  return seed;
}

int run(const RunArgs& a) {
  using namespace tcsim;
  config::Document doc;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw cli::IoError(fmt::format("cannot read config {}", a.config));
    doc = config::Document::parse(in);
  }
  std::optional<cli::Experiment> exp;
  if (!a.experiment.empty()) exp = cli::parse_experiment(a.experiment);
  auto cfg = cli::load_config(doc, exp);
  if (a.shots) cfg.shots = *a.shots;
  if (a.seed)
    cfg.seed = *a.seed;
  else if (const auto s = env_seed())
    cfg.seed = *s;
  if (!a.out.empty()) cfg.output = a.out;

  const auto out = cli::run(cfg, a.workers);
  for (const auto& path : cli::write_outputs(out, cfg.output)) std::cout << path << '\n';
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-module spin-photon network simulator"};
  app.require_subcommand(1);

  RunArgs args;
  auto* run_cmd = app.add_subcommand("run", "run one experiment and write its JSON summary and CSV tables");
  run_cmd->add_option("--config", args.config, "config file");
  run_cmd->add_option("--experiment", args.experiment, "hom | bk | tcnot | spin | ssro | forecast");
  run_cmd->add_option("--shots", args.shots, "shots per simulated run")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", args.seed, "root seed (overrides TCSIM_SEED and the config)");
  run_cmd->add_option("--out", args.out, "output prefix");
  run_cmd->add_option("--workers", args.workers, "worker threads")->check(CLI::Range(1, 1024));

  std::string default_exp;
  auto* def_cmd = app.add_subcommand("default-config", "print the default config of an experiment");
  def_cmd->add_option("experiment", default_exp, "hom | bk | tcnot | spin | ssro | forecast")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : config_error;
  }

  try {
    if (*def_cmd) {
      std::cout << tcsim::cli::render_config(tcsim::cli::default_config(tcsim::cli::parse_experiment(default_exp)));
      return ok;
    }
    return run(args);
  } catch (const tcsim::config::ConfigError& e) {
    std::cerr << "config error: " << e.what();
    if (!e.key().empty()) std::cerr << " [key: " << e.key() << "]";
    std::cerr << '\n';
    return config_error;
  } catch (const tcsim::cli::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return io_error;
  } catch (const std::exception& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return model_error;
  }
}
