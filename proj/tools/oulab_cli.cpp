// Batch front end: oulab_cli --config run.json [--seed N] [--out DIR] [--threads N] [--quiet]

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "oulab/config.hpp"
#include "oulab/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo and spectral experiments for OU-type processes driven by Levy noise"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned threads = 1;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads for path loops")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", quiet, "print nothing on success");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : oulab::exit_config;
  }

  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "config error: cannot read " << config_path << '\n';
    return oulab::exit_config;
  }
  std::ostringstream text;
  text << in.rdbuf();

  oulab::ExperimentConfig cfg;
  try {
    cfg = oulab::parse_config(text.str(), config_path);
  } catch (const oulab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return oulab::exit_config;
  }
  if (seed) cfg.seed = *seed;
  if (!out_dir.empty()) cfg.output = out_dir;
  return oulab::run(cfg, cfg.output, threads, std::cout, std::cerr, quiet);
}
