// Command-line front end: mvsim <simulate|converge|validate|moments|probe> --config run.json

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "mvsim/commands.hpp"
#include "mvsim/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Particle simulation of McKean-Vlasov SDEs with taming Milstein schemes"};
  app.set_version_flag("--version", std::string(mvsim::library_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int threads = 0;

  for (const auto& name : mvsim::subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configuration seed");
    sub->add_option("--out", out_dir, "Output directory (overrides MVSIM_OUTPUT_DIR and io.output_dir)");
    sub->add_option("--threads", threads, "OpenMP thread count (0 keeps the runtime default)")
        ->check(CLI::NonNegativeNumber);
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  mvsim::RunConfig config;
  try {
    config = mvsim::parse_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"type", "config"}, {"subcommand", subcommand}, {"message", e.what()}}}}
                     .dump()
              << '\n';
    return mvsim::kExitError;
  }
  if (seed) config.seed = *seed;
  if (!out_dir.empty()) {
    config.output_dir = out_dir;
  } else if (const char* env = std::getenv("MVSIM_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    config.output_dir = env;
  }
  if (threads > 0) omp_set_num_threads(threads);

  return mvsim::execute_command(subcommand, config, std::cerr);
}
