#include "mvsim/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <tuple>

#include <fmt/core.h>

#include "mvsim/experiments.hpp"

namespace mvsim {

using nlohmann::json;

namespace {

/// An acceptance-relevant check that did not hold; reported with exit status 1.
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path.string()));
}

void write_json(const std::filesystem::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

json metadata(const RunConfig& config, const char* kind, const json& columns) {
  return {{"schema_version", kSchemaVersion},
          {"kind", kind},
          {"library_version", library_version()},
          {"seed", config.seed},
          {"columns", columns},
          {"config", to_json(config)}};
}

std::unique_ptr<Model> build_model(const RunConfig& config) { return make_model(config.model); }

std::vector<double> step_grid(const RunConfig& config) {
  return config.dt_grid.empty() ? std::vector<double>{config.scheme.dt} : config.dt_grid;
}

void run_simulate(const RunConfig& config) {
  const auto model = build_model(config);
  SimulationOptions options;
  options.snapshot_times = config.snapshot_times;
  const auto result = run_simulation(*model, config.scheme, config.particles, config.seed, options);

  const std::size_t d = model->state_dim();
  std::ofstream csv(config.output_dir / "snapshots.csv", std::ios::binary | std::ios::trunc);
  write_snapshot_csv(csv, result.snapshots, d);
  if (!csv) throw std::runtime_error("write failed for snapshots.csv");
  json columns = json::array({"time", "particle"});
  for (std::size_t c = 0; c < d; ++c) columns.push_back(fmt::format("coord_{}", c));
  columns.push_back("blown_up");
  write_json(config.output_dir / "snapshots.meta.json", metadata(config, "snapshots", columns));
  write_json(config.output_dir / "simulate_summary.json",
             {{"steps_taken", result.steps_taken},
              {"terminated_early", result.terminated_early},
              {"blown_up", result.blown_up_count},
              {"blow_up_times", result.blow_up_times}});
  if (result.terminated_early)
    throw CheckFailure(fmt::format("every particle blew up after {} steps", result.steps_taken));
}

using CellKey = std::tuple<std::string, std::string, double, std::uint64_t>;

CellKey cell_key(const ConvergenceRecord& r) { return {r.scheme, r.taming, r.dt, r.seed}; }

void run_converge(const RunConfig& config) {
  const auto model = build_model(config);
  const auto& settings = config.experiment.converge;
  const auto schemes = settings.schemes.empty() ? std::vector<SchemeConfig>{config.scheme} : settings.schemes;
  const auto seeds = settings.seeds.empty() ? std::vector<std::uint64_t>{config.seed} : settings.seeds;
  const auto grid = step_grid(config);
  for (double dt : grid) {
    const double ratio = dt / settings.ref_dt;
    if (ratio < 1.0 - 1e-12 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
      throw std::invalid_argument(fmt::format("experiment.converge.ref_dt: does not divide dt = {}", dt));
  }

  const auto csv_path = config.output_dir / "convergence.csv";
  std::vector<ConvergenceRecord> records;
  if (std::filesystem::exists(csv_path)) {
    std::ifstream in(csv_path, std::ios::binary);
    records = read_convergence_csv(in);
    for (const auto& r : records)
      if (r.model != model->name() || r.particles != config.particles || r.ref_dt != settings.ref_dt)
        throw std::runtime_error("existing convergence.csv belongs to a different study");
  }
  std::set<CellKey> done;
  for (const auto& r : records) done.insert(cell_key(r));

  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::app);
    if (records.empty()) write_convergence_csv(out, {}, true);
    for (auto seed : seeds) {
      for (const auto& scheme : schemes) {
        const auto label = scheme.effective_taming().label;
        const auto name = std::string(to_string(scheme.kind));
        const bool complete = std::all_of(grid.begin(), grid.end(), [&](double dt) {
          return done.contains(CellKey{name, label, dt, seed});
        });
        if (complete) continue;
        StudyOptions options;
        options.sup_over_grid = settings.error_mode == "sup";
        auto fresh = run_convergence_study(*model, std::span(&scheme, 1), grid, settings.ref_dt,
                                           config.particles, seed, options);
        std::erase_if(fresh, [&](const ConvergenceRecord& r) { return done.contains(cell_key(r)); });
        write_convergence_csv(out, fresh, false);
        out.flush();
        if (!out) throw std::runtime_error("write failed for convergence.csv");
        for (auto& r : fresh) {
          done.insert(cell_key(r));
          records.push_back(std::move(r));
        }
      }
    }
  }

  sort_records(records);
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    write_convergence_csv(out, records, true);
    if (!out) throw std::runtime_error("write failed for convergence.csv");
  }
  write_json(config.output_dir / "convergence.meta.json",
             metadata(config, "convergence",
                      {"model", "scheme", "taming", "dt", "ref_dt", "N", "seed", "mse", "diverged", "wallclock_s"}));

  json fits = json::array();
  std::vector<std::string> failures;
  for (const auto& scheme : schemes) {
    const auto label = scheme.effective_taming().label;
    const auto name = std::string(to_string(scheme.kind));
    std::vector<ConvergenceRecord> subset;
    for (const auto& r : records)
      if (r.scheme == name && r.taming == label) subset.push_back(r);
    json entry = {{"scheme", name}, {"taming", label}};
    try {
      const auto fit = fit_order(subset);
      bool ok = true;
      if (settings.slope_window)
        ok = ok && fit.slope >= settings.slope_window->first && fit.slope <= settings.slope_window->second;
      if (settings.max_residual) ok = ok && fit.residual_norm < *settings.max_residual;
      entry.update({{"slope", fit.slope},
                    {"intercept", fit.intercept},
                    {"residual_norm", fit.residual_norm},
                    {"points", fit.points},
                    {"excluded", fit.excluded},
                    {"passed", ok}});
      if (!ok) failures.push_back(fmt::format("{}/{} slope {:.4f} residual {:.4f}", name, label, fit.slope,
                                              fit.residual_norm));
    } catch (const std::invalid_argument& e) {
      entry.update({{"error", e.what()}, {"passed", false}});
      failures.push_back(fmt::format("{}/{}: {}", name, label, e.what()));
    }
    fits.push_back(entry);
  }
  json window = settings.slope_window ? json::array({settings.slope_window->first, settings.slope_window->second})
                                      : json(nullptr);
  write_json(config.output_dir / "fit_summary.json",
             {{"fits", fits},
              {"slope_window", window},
              {"max_residual", settings.max_residual ? json(*settings.max_residual) : json(nullptr)},
              {"passed", failures.empty()}});
  if (!failures.empty()) {
    std::string msg = "order fit outside the acceptance window:";
    for (const auto& f : failures) msg += " " + f + ";";
    throw CheckFailure(msg);
  }
}

void run_validate(const RunConfig& config) {
  const auto& settings = config.experiment.validate;
  json taming = json::array();
  json derivatives = json::array();
  std::vector<std::string> failures;
  for (auto kind : settings.kinds) {
    const auto report =
        verify_taming_assumptions(TamingSlot{kind}, settings.samples, settings.dt_grid, settings.magnitude_range,
                                  config.seed);
    taming.push_back({{"kind", to_string(kind)},
                      {"bounded", report.bounded},
                      {"samples", report.samples},
                      {"checks", report.checks},
                      {"bound_violations", report.bound_violations},
                      {"difference_violations", report.difference_violations},
                      {"saturated_components", report.saturated_components},
                      {"worst_bound_ratio", report.worst_bound_ratio},
                      {"worst_difference_ratio", report.worst_difference_ratio},
                      {"diagnostic", report.diagnostic},
                      {"passed", report.passed()}});
    if (!report.passed()) failures.push_back(fmt::format("taming {}", to_string(kind)));
  }
  for (const auto& name : settings.models) {
    const auto model = make_model(name);
    const auto report =
        check_derivatives_fd(*model, settings.derivative_trials, config.seed, settings.derivative_tolerance);
    derivatives.push_back({{"model", report.model},
                           {"trials", report.trials},
                           {"skipped", report.skipped},
                           {"entries_checked", report.entries_checked},
                           {"max_error_state", report.max_error_state},
                           {"max_error_measure", report.max_error_measure},
                           {"tolerance", report.tolerance},
                           {"passed", report.passed()}});
    if (!report.passed()) failures.push_back(fmt::format("derivatives {}", name));
  }
  write_json(config.output_dir / "validate.json",
             {{"schema_version", kSchemaVersion},
              {"library_version", library_version()},
              {"seed", config.seed},
              {"taming", taming},
              {"derivatives", derivatives},
              {"passed", failures.empty()}});
  if (!failures.empty()) {
    std::string msg = "validation failed:";
    for (const auto& f : failures) msg += " " + f + ";";
    throw CheckFailure(msg);
  }
}

void run_moments(const RunConfig& config) {
  const auto model = build_model(config);
  const auto& settings = config.experiment.moments;
  std::ofstream csv(config.output_dir / "moments.csv", std::ios::binary | std::ios::trunc);
  csv << "dt,time,moment,excluded\n";
  json suprema = json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double dt : step_grid(config)) {
    SchemeConfig scheme = config.scheme;
    scheme.dt = dt;
    const auto series = moment_monitor(*model, scheme, config.particles, config.seed, settings.p);
    for (std::size_t k = 0; k < series.times.size(); ++k)
      csv << format_real(dt) << ',' << format_real(series.times[k]) << ',' << format_real(series.moments[k])
          << ',' << series.excluded[k] << '\n';
    suprema.push_back({{"dt", dt}, {"supremum", series.supremum}, {"max_excluded", series.max_excluded}});
    lo = std::min(lo, series.supremum);
    hi = std::max(hi, series.supremum);
  }
  if (!csv) throw std::runtime_error("write failed for moments.csv");
  write_json(config.output_dir / "moments.meta.json",
             metadata(config, "moments", {"dt", "time", "moment", "excluded"}));
  const double ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  const bool ok = !settings.ratio_limit || ratio <= *settings.ratio_limit;
  write_json(config.output_dir / "moments.json",
             {{"p", settings.p},
              {"suprema", suprema},
              {"ratio", std::isfinite(ratio) ? json(ratio) : json(nullptr)},
              {"ratio_limit", settings.ratio_limit ? json(*settings.ratio_limit) : json(nullptr)},
              {"passed", ok}});
  if (!ok) throw CheckFailure(fmt::format("moment suprema differ by a factor {:.4f}", ratio));
}

void run_probe(const RunConfig& config) {
  const auto model = build_model(config);
  const auto& settings = config.experiment.probe;
  const auto stats = divergence_probe(*model, config.scheme, config.particles, config.seed, settings.targets,
                                      settings.radius);
  std::vector<std::string> failures;
  if (settings.min_blown_up_fraction && !(stats.blown_up_fraction > *settings.min_blown_up_fraction))
    failures.push_back(fmt::format("blown-up fraction {} not above {}", stats.blown_up_fraction,
                                   *settings.min_blown_up_fraction));
  if (settings.max_blown_up_fraction && stats.blown_up_fraction > *settings.max_blown_up_fraction)
    failures.push_back(fmt::format("blown-up fraction {} above {}", stats.blown_up_fraction,
                                   *settings.max_blown_up_fraction));
  if (settings.min_near_fraction && stats.near_target_fraction < *settings.min_near_fraction)
    failures.push_back(fmt::format("near-target fraction {} below {}", stats.near_target_fraction,
                                   *settings.min_near_fraction));
  write_json(config.output_dir / "probe.json",
             {{"schema_version", kSchemaVersion},
              {"library_version", library_version()},
              {"seed", config.seed},
              {"scheme", to_string(config.scheme.kind)},
              {"taming", config.scheme.effective_taming().label},
              {"particles", stats.particles},
              {"blown_up", stats.blown_up},
              {"blown_up_fraction", stats.blown_up_fraction},
              {"near_target_fraction", stats.near_target_fraction},
              {"first_blow_up_times", stats.first_blow_up_times},
              {"passed", failures.empty()}});
  if (!failures.empty()) {
    std::string msg = "probe expectation failed:";
    for (const auto& f : failures) msg += " " + f + ";";
    throw CheckFailure(msg);
  }
}

void report(std::ostream& err, const char* type, const std::string& subcommand, const std::string& message) {
  err << json{{"error", {{"type", type}, {"subcommand", subcommand}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

std::string_view library_version() noexcept { return MVSIM_VERSION; }

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"simulate", "converge", "validate", "moments", "probe"};
  return names;
}

int execute_command(std::string_view subcommand, const RunConfig& config, std::ostream& err) {
  const std::string name(subcommand);
  try {
    const auto& names = subcommand_names();
    if (std::find(names.begin(), names.end(), name) == names.end())
      throw std::invalid_argument(fmt::format("unknown subcommand '{}'", name));
    const auto& declared = config.experiment.declared;
    if (!declared.empty() && std::find(declared.begin(), declared.end(), name) == declared.end())
      throw std::invalid_argument(fmt::format("experiment: config has no '{}' block", name));

    std::filesystem::create_directories(config.output_dir);
    write_json(config.output_dir / "resolved_config.json", to_json(config));
    if (name == "simulate") run_simulate(config);
    else if (name == "converge") run_converge(config);
    else if (name == "validate") run_validate(config);
    else if (name == "moments") run_moments(config);
    else run_probe(config);
    return kExitOk;
  } catch (const CheckFailure& e) {
    report(err, "check_failed", name, e.what());
    return kExitCheckFailed;
  } catch (const std::invalid_argument& e) {
    report(err, "invalid_argument", name, e.what());
    return kExitError;
  } catch (const std::exception& e) {
    report(err, "runtime_error", name, e.what());
    return kExitError;
  }
}

}  // namespace mvsim
