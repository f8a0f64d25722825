#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvsim/engine.hpp"
#include "mvsim/models.hpp"

namespace mvsim {

struct ConvergeSettings {
  /// Schemes compared on the grid; empty means the scheme block alone.
  std::vector<SchemeConfig> schemes;
  double ref_dt = 1.0 / 4096.0;
  /// Seeds of the independent studies pooled by the fit; empty means {seed}.
  std::vector<std::uint64_t> seeds;
  /// Optional acceptance window for every fitted slope.
  std::optional<std::pair<double, double>> slope_window;
  std::optional<double> max_residual;
  /// "terminal" (error at T) or "sup" (largest error over the coarse grid).
  std::string error_mode = "terminal";
};

struct ValidateSettings {
  std::vector<TamingKind> kinds{TamingKind::tanh, TamingKind::sine, TamingKind::tamed};
  std::size_t samples = 100000;
  std::vector<double> dt_grid{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512, 1.0 / 1024};
  double magnitude_range = 1e6;
  std::vector<std::string> models{"double_well", "cucker_smale", "fitzhugh_nagumo"};
  std::size_t derivative_trials = 100;
  double derivative_tolerance = 1e-5;
};

struct MomentSettings {
  double p = 4.0;
  /// Largest admissible ratio between suprema over the dt grid.
  std::optional<double> ratio_limit = 2.0;
};

struct ProbeSettings {
  std::vector<double> targets{1.0, -1.0};
  double radius = 0.5;
  std::optional<double> min_blown_up_fraction;
  std::optional<double> max_blown_up_fraction;
  std::optional<double> min_near_fraction;
};

struct ExperimentSettings {
  /// Names of the sub-blocks present in the file; empty means any subcommand.
  std::vector<std::string> declared;
  ConvergeSettings converge;
  ValidateSettings validate;
  MomentSettings moments;
  ProbeSettings probe;
};

struct RunConfig {
  std::uint64_t seed = 1;
  ModelPreset model;
  SchemeConfig scheme;
  std::size_t particles = 100;
  /// Step grid for converge and moments; empty means {scheme.dt}.
  std::vector<double> dt_grid;
  ExperimentSettings experiment;
  std::filesystem::path output_dir = "mvsim_out";
  std::vector<double> snapshot_times;
};

/// Parses and validates a configuration. Every error is a
/// std::invalid_argument whose message starts with the offending key path.
RunConfig parse_config(const nlohmann::json& document);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Fully resolved configuration with every default materialized. Parsing
/// the echo yields the same RunConfig.
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const InitialLaw& law);
nlohmann::json to_json(const TamingSpec& spec);
nlohmann::json to_json(const SchemeConfig& scheme);

}  // namespace mvsim
