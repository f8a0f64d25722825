#include "mvsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <fmt/core.h>

namespace mvsim {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& message) {
  throw std::invalid_argument(fmt::format("{}: {}", key, message));
}

std::string join_key(const std::string& parent, const std::string& child) {
  return parent.empty() ? child : parent + "." + child;
}

std::string index_key(const std::string& parent, std::size_t i) { return fmt::format("{}[{}]", parent, i); }

/// JSON object paired with its key path; rejects keys outside `allowed`.
class Block {
 public:
  Block(const json& node, std::string path, std::initializer_list<const char*> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : node_.items())
      if (!ok.contains(item.key())) fail(join_key(path_, item.key()), "unknown key");
  }

  bool has(const char* key) const { return node_.contains(key) && !node_.at(key).is_null(); }
  const json& at(const char* key) const { return node_.at(key); }
  std::string key(const char* k) const { return join_key(path_, k); }

  double real(const char* k, double fallback) const { return has(k) ? as_real(at(k), key(k)) : fallback; }
  std::optional<double> optional_real(const char* k, std::optional<double> fallback) const {
    if (!node_.contains(k)) return fallback;
    if (at(k).is_null()) return std::nullopt;
    return as_real(at(k), key(k));
  }
  std::uint64_t integer(const char* k, std::uint64_t fallback) const {
    return has(k) ? as_integer(at(k), key(k)) : fallback;
  }
  bool boolean(const char* k, bool fallback) const {
    if (!has(k)) return fallback;
    if (!at(k).is_boolean()) fail(key(k), "expected a boolean");
    return at(k).get<bool>();
  }
  std::string string(const char* k, const std::string& fallback) const {
    if (!has(k)) return fallback;
    if (!at(k).is_string()) fail(key(k), "expected a string");
    return at(k).get<std::string>();
  }
  std::vector<double> reals(const char* k, std::vector<double> fallback) const {
    return has(k) ? as_reals(at(k), key(k)) : fallback;
  }

  static double as_real(const json& v, const std::string& key) {
    if (!v.is_number()) fail(key, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(key, "expected a finite number");
    return x;
  }
  static std::uint64_t as_integer(const json& v, const std::string& key) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static std::vector<double> as_reals(const json& v, const std::string& key) {
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_real(v[i], index_key(key, i)));
    return out;
  }

 private:
  const json& node_;
  std::string path_;
};

TamingKind parse_kind_at(const json& v, const std::string& key) {
  if (!v.is_string()) fail(key, "expected a taming kind name");
  try {
    return parse_taming_kind(v.get<std::string>());
  } catch (const std::invalid_argument& e) {
    fail(key, e.what());
  }
}

TamingSlot parse_slot(const json& v, const std::string& key) {
  if (v.is_string()) return TamingSlot{parse_kind_at(v, key)};
  Block b(v, key, {"kind", "zeta", "delta", "gamma"});
  if (!b.has("kind")) fail(b.key("kind"), "missing");
  TamingSlot slot{parse_kind_at(b.at("kind"), b.key("kind"))};
  slot.zeta = b.real("zeta", slot.zeta);
  slot.delta = b.real("delta", slot.delta);
  slot.gamma = b.real("gamma", slot.gamma);
  return slot;
}

std::string slot_label(const TamingSpec& spec) {
  const auto& s = spec.slots;
  const bool uniform = std::all_of(s.begin(), s.end(), [&](const TamingSlot& x) { return x.kind == s[0].kind; });
  if (uniform) return TamingSpec::uniform(s[0].kind).label;
  const auto mixed = TamingSpec::mixed();
  bool is_mixed = true;
  for (std::size_t l = 0; l < 4; ++l) is_mixed = is_mixed && s[l].kind == mixed.slots[l].kind;
  if (is_mixed) return mixed.label;
  return fmt::format("{}+{}+{}+{}", to_string(s[0].kind), to_string(s[1].kind), to_string(s[2].kind),
                     to_string(s[3].kind));
}

TamingSpec parse_taming(const json& v, const std::string& key) {
  TamingSpec spec;
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    try {
      spec = TamingSpec::named(name);
    } catch (const std::invalid_argument&) {
      spec = TamingSpec::uniform(parse_kind_at(v, key));
    }
  } else {
    const json* slots = &v;
    if (v.is_object()) {
      Block b(v, key, {"label", "slots"});
      if (!b.has("slots")) fail(b.key("slots"), "missing");
      slots = &b.at("slots");
    }
    const std::string slots_key = v.is_object() ? join_key(key, "slots") : key;
    if (!slots->is_array() || slots->size() != 4) fail(slots_key, "expected four taming slots");
    for (std::size_t l = 0; l < 4; ++l) spec.slots[l] = parse_slot((*slots)[l], index_key(slots_key, l));
    spec.label = slot_label(spec);
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    fail(key, e.what());
  }
  return spec;
}

SchemeKind parse_kind(const Block& b, SchemeKind fallback) {
  if (!b.has("kind")) return fallback;
  try {
    return parse_scheme_kind(b.string("kind", ""));
  } catch (const std::invalid_argument& e) {
    fail(b.key("kind"), e.what());
  }
}

InitialLaw parse_initial_law(const json& v, const std::string& key) {
  Block b(v, key, {"kind", "value", "mean", "stddev", "covariance"});
  const auto kind = b.string("kind", "");
  auto need = [&](const char* k) {
    if (!b.has(k)) fail(b.key(k), "missing");
    return Block::as_reals(b.at(k), b.key(k));
  };
  auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (b.has(k)) fail(b.key(k), fmt::format("not used by initial law '{}'", kind));
  };
  if (kind == "point_mass") {
    reject({"mean", "stddev", "covariance"});
    return PointMass{need("value")};
  }
  if (kind == "normal") {
    reject({"value", "covariance"});
    return IndependentNormals{need("mean"), need("stddev")};
  }
  if (kind == "multivariate_normal") {
    reject({"value", "stddev"});
    auto mean = need("mean");
    if (!b.has("covariance") || !b.at("covariance").is_array()) fail(b.key("covariance"), "expected a matrix");
    std::vector<double> cov;
    const auto& rows = b.at("covariance");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto row = Block::as_reals(rows[r], index_key(b.key("covariance"), r));
      if (row.size() != mean.size()) fail(index_key(b.key("covariance"), r), "row length does not match mean");
      cov.insert(cov.end(), row.begin(), row.end());
    }
    if (rows.size() != mean.size()) fail(b.key("covariance"), "matrix size does not match mean");
    return MultivariateNormal{std::move(mean), std::move(cov)};
  }
  fail(b.key("kind"), fmt::format("unknown initial law '{}'", kind));
}

ModelPreset parse_model(const json& v) {
  Block b(v, "model", {"preset", "name", "case", "params", "initial_law"});
  ModelPreset preset;
  try {
    if (b.has("preset")) {
      if (b.has("name") || b.has("case")) fail("model.preset", "give either preset or name/case");
      preset = resolve_preset(b.string("preset", ""));
    } else {
      if (!b.has("name")) fail("model.name", "missing");
      auto qualified = b.string("name", "");
      if (b.has("case")) qualified += "." + b.string("case", "");
      preset = resolve_preset(qualified);
    }
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind("model.", 0) == 0) throw;
    fail(b.has("preset") ? "model.preset" : "model.name", msg);
  }
  if (b.has("params")) {
    const auto& params = b.at("params");
    if (!params.is_object()) fail("model.params", "expected an object");
    for (const auto& item : params.items()) {
      const std::string key = join_key("model.params", item.key());
      if (!preset.params.contains(item.key())) fail(key, "unknown parameter");
      preset.params[item.key()] = Block::as_real(item.value(), key);
    }
  }
  if (b.has("initial_law")) preset.initial_law = parse_initial_law(b.at("initial_law"), "model.initial_law");
  try {
    make_model(preset);
  } catch (const std::invalid_argument& e) {
    fail(b.has("initial_law") ? "model.initial_law" : "model", e.what());
  }
  return preset;
}

void check_grid(double dt, double T, const std::string& key) {
  if (!(dt > 0.0)) fail(key, "step must be positive");
  const double ratio = T / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-12 * std::max(1.0, ratio)) fail(key, "step does not divide T");
}

void check_measure_term(const SchemeConfig& s, std::size_t n, const std::string& key) {
  if (s.include_measure_term && n > s.cross_N_ceiling)
    fail(key, fmt::format("include_measure_term needs N <= {} (cross_N_ceiling), got N = {}", s.cross_N_ceiling, n));
}

void check_taming(const SchemeConfig& s, const std::string& key) {
  if (s.kind != SchemeKind::classical_milstein && s.taming.any_identity())
    fail(key, fmt::format("scheme '{}' needs a bounded taming kind in every slot", to_string(s.kind)));
}

SchemeConfig parse_scheme_entry(const json& v, const std::string& key, const SchemeConfig& base, std::size_t n) {
  Block b(v, key, {"kind", "taming", "include_measure_term"});
  SchemeConfig s = base;
  s.kind = parse_kind(b, base.kind);
  if (b.has("taming")) s.taming = parse_taming(b.at("taming"), b.key("taming"));
  s.include_measure_term = b.boolean("include_measure_term", base.include_measure_term);
  check_taming(s, b.key("taming"));
  check_measure_term(s, n, b.key("include_measure_term"));
  return s;
}

std::vector<std::string> string_list(const json& v, const std::string& key) {
  if (!v.is_array()) fail(key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) fail(index_key(key, i), "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

RunConfig parse_config(const json& document) {
  Block root(document, "", {"seed", "model", "scheme", "experiment", "io"});
  RunConfig config;
  config.seed = root.integer("seed", config.seed);
  if (!root.has("model")) fail("model", "missing");
  config.model = parse_model(root.at("model"));

  SchemeConfig& s = config.scheme;
  if (root.has("scheme")) {
    Block b(root.at("scheme"), "scheme",
            {"kind", "taming", "include_measure_term", "dt", "dt_grid", "T", "N", "K", "blow_up_threshold",
             "cross_N_ceiling"});
    s.kind = parse_kind(b, s.kind);
    if (b.has("taming")) s.taming = parse_taming(b.at("taming"), "scheme.taming");
    s.include_measure_term = b.boolean("include_measure_term", s.include_measure_term);
    s.T = b.real("T", s.T);
    s.dt = b.real("dt", s.dt);
    config.dt_grid = b.reals("dt_grid", {});
    config.particles = b.integer("N", config.particles);
    s.wiktorsson_K = b.integer("K", s.wiktorsson_K);
    s.blow_up_threshold = b.real("blow_up_threshold", s.blow_up_threshold);
    s.cross_N_ceiling = b.integer("cross_N_ceiling", s.cross_N_ceiling);
  }
  if (!(s.T > 0.0)) fail("scheme.T", "must be positive");
  check_grid(s.dt, s.T, "scheme.dt");
  for (std::size_t i = 0; i < config.dt_grid.size(); ++i)
    check_grid(config.dt_grid[i], s.T, index_key("scheme.dt_grid", i));
  if (config.particles == 0) fail("scheme.N", "must be at least 1");
  if (s.wiktorsson_K == 0) fail("scheme.K", "must be at least 1");
  if (!(s.blow_up_threshold > 0.0)) fail("scheme.blow_up_threshold", "must be positive");
  if (s.cross_N_ceiling == 0) fail("scheme.cross_N_ceiling", "must be at least 1");
  check_taming(s, "scheme.taming");
  check_measure_term(s, config.particles, "scheme.include_measure_term");

  auto& ex = config.experiment;
  if (root.has("experiment")) {
    Block b(root.at("experiment"), "experiment", {"simulate", "converge", "validate", "moments", "probe"});
    for (const char* name : {"simulate", "converge", "validate", "moments", "probe"})
      if (root.at("experiment").contains(name)) ex.declared.emplace_back(name);
    if (b.has("simulate")) Block(b.at("simulate"), "experiment.simulate", {});
    if (b.has("converge")) {
      Block c(b.at("converge"), "experiment.converge",
              {"schemes", "ref_dt", "seeds", "slope_window", "max_residual", "error_mode"});
      if (c.has("schemes")) {
        const auto& list = c.at("schemes");
        if (!list.is_array()) fail(c.key("schemes"), "expected an array");
        for (std::size_t i = 0; i < list.size(); ++i)
          ex.converge.schemes.push_back(
              parse_scheme_entry(list[i], index_key(c.key("schemes"), i), s, config.particles));
      }
      ex.converge.ref_dt = c.real("ref_dt", ex.converge.ref_dt);
      if (c.has("seeds")) {
        const auto& seeds = c.at("seeds");
        if (!seeds.is_array()) fail(c.key("seeds"), "expected an array");
        for (std::size_t i = 0; i < seeds.size(); ++i)
          ex.converge.seeds.push_back(Block::as_integer(seeds[i], index_key(c.key("seeds"), i)));
      }
      if (c.has("slope_window")) {
        const auto w = c.reals("slope_window", {});
        if (w.size() != 2 || !(w[0] <= w[1])) fail(c.key("slope_window"), "expected [low, high]");
        ex.converge.slope_window = std::pair{w[0], w[1]};
      }
      ex.converge.max_residual = c.optional_real("max_residual", std::nullopt);
      ex.converge.error_mode = c.string("error_mode", ex.converge.error_mode);
      if (ex.converge.error_mode != "terminal" && ex.converge.error_mode != "sup")
        fail(c.key("error_mode"), fmt::format("expected \"terminal\" or \"sup\", got '{}'", ex.converge.error_mode));
    }
    if (b.has("validate")) {
      Block v(b.at("validate"), "experiment.validate",
              {"kinds", "samples", "dt_grid", "magnitude_range", "models", "derivative_trials",
               "derivative_tolerance"});
      auto& vs = ex.validate;
      if (v.has("kinds")) {
        const auto& kinds = v.at("kinds");
        if (!kinds.is_array()) fail(v.key("kinds"), "expected an array");
        vs.kinds.clear();
        for (std::size_t i = 0; i < kinds.size(); ++i)
          vs.kinds.push_back(parse_kind_at(kinds[i], index_key(v.key("kinds"), i)));
      }
      vs.samples = v.integer("samples", vs.samples);
      vs.dt_grid = v.reals("dt_grid", vs.dt_grid);
      vs.magnitude_range = v.real("magnitude_range", vs.magnitude_range);
      if (v.has("models")) {
        vs.models = string_list(v.at("models"), v.key("models"));
        const auto& known = model_names();
        for (std::size_t i = 0; i < vs.models.size(); ++i)
          if (std::find(known.begin(), known.end(), vs.models[i]) == known.end())
            fail(index_key(v.key("models"), i), fmt::format("unknown model '{}'", vs.models[i]));
      }
      vs.derivative_trials = v.integer("derivative_trials", vs.derivative_trials);
      vs.derivative_tolerance = v.real("derivative_tolerance", vs.derivative_tolerance);
      if (vs.samples == 0) fail(v.key("samples"), "must be at least 1");
      if (!(vs.magnitude_range > 1.0)) fail(v.key("magnitude_range"), "must exceed 1");
      for (std::size_t i = 0; i < vs.dt_grid.size(); ++i)
        if (!(vs.dt_grid[i] > 0.0)) fail(index_key(v.key("dt_grid"), i), "must be positive");
    }
    if (b.has("moments")) {
      Block m(b.at("moments"), "experiment.moments", {"p", "ratio_limit"});
      ex.moments.p = m.real("p", ex.moments.p);
      ex.moments.ratio_limit = m.optional_real("ratio_limit", ex.moments.ratio_limit);
      if (!(ex.moments.p >= 2.0)) fail(m.key("p"), "moment order must be >= 2");
    }
    if (b.has("probe")) {
      Block p(b.at("probe"), "experiment.probe",
              {"targets", "radius", "min_blown_up_fraction", "max_blown_up_fraction", "min_near_fraction"});
      auto& ps = ex.probe;
      ps.targets = p.reals("targets", ps.targets);
      ps.radius = p.real("radius", ps.radius);
      ps.min_blown_up_fraction = p.optional_real("min_blown_up_fraction", std::nullopt);
      ps.max_blown_up_fraction = p.optional_real("max_blown_up_fraction", std::nullopt);
      ps.min_near_fraction = p.optional_real("min_near_fraction", std::nullopt);
    }
  }
  const double ref_dt = ex.converge.ref_dt;
  if (!(ref_dt > 0.0)) fail("experiment.converge.ref_dt", "must be positive");

  if (root.has("io")) {
    Block b(root.at("io"), "io", {"output_dir", "snapshot_times"});
    config.output_dir = b.string("output_dir", config.output_dir.string());
    config.snapshot_times = b.reals("snapshot_times", {});
  }
  if (config.snapshot_times.empty()) config.snapshot_times = {s.T};
  for (std::size_t i = 0; i < config.snapshot_times.size(); ++i) {
    const double t = config.snapshot_times[i];
    if (t < 0.0 || t > s.T * (1.0 + 1e-12)) fail(index_key("io.snapshot_times", i), "outside [0, T]");
  }
  return config;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(fmt::format("config: cannot open '{}'", path.string()));
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(fmt::format("config: malformed JSON in '{}': {}", path.string(), e.what()));
  }
  return parse_config(document);
}

json to_json(const InitialLaw& law) {
  return std::visit(
      [](const auto& l) -> json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, PointMass>) {
          return {{"kind", "point_mass"}, {"value", l.value}};
        } else if constexpr (std::is_same_v<L, IndependentNormals>) {
          return {{"kind", "normal"}, {"mean", l.mean}, {"stddev", l.stddev}};
        } else {
          const std::size_t d = l.mean.size();
          json rows = json::array();
          for (std::size_t r = 0; r < d; ++r)
            rows.push_back(std::vector<double>(l.covariance.begin() + r * d, l.covariance.begin() + (r + 1) * d));
          return {{"kind", "multivariate_normal"}, {"mean", l.mean}, {"covariance", rows}};
        }
      },
      law);
}

json to_json(const TamingSpec& spec) {
  json slots = json::array();
  for (const auto& slot : spec.slots)
    slots.push_back(
        {{"kind", to_string(slot.kind)}, {"zeta", slot.zeta}, {"delta", slot.delta}, {"gamma", slot.gamma}});
  return {{"label", spec.label}, {"slots", slots}};
}

json to_json(const SchemeConfig& scheme) {
  return {{"kind", to_string(scheme.kind)},
          {"taming", to_json(scheme.taming)},
          {"include_measure_term", scheme.include_measure_term}};
}

json to_json(const RunConfig& config) {
  const auto& s = config.scheme;
  json scheme = to_json(s);
  scheme["dt"] = s.dt;
  scheme["dt_grid"] = config.dt_grid;
  scheme["T"] = s.T;
  scheme["N"] = config.particles;
  scheme["K"] = s.wiktorsson_K;
  scheme["blow_up_threshold"] = s.blow_up_threshold;
  scheme["cross_N_ceiling"] = s.cross_N_ceiling;

  const auto& ex = config.experiment;
  json schemes = json::array();
  for (const auto& entry : ex.converge.schemes) schemes.push_back(to_json(entry));
  json converge = {{"schemes", schemes},
                   {"ref_dt", ex.converge.ref_dt},
                   {"seeds", ex.converge.seeds},
                   {"max_residual", optional_json(ex.converge.max_residual)},
                   {"error_mode", ex.converge.error_mode}};
  converge["slope_window"] = ex.converge.slope_window
                                 ? json::array({ex.converge.slope_window->first, ex.converge.slope_window->second})
                                 : json(nullptr);
  json kinds = json::array();
  for (auto k : ex.validate.kinds) kinds.push_back(to_string(k));
  json validate = {{"kinds", kinds},
                   {"samples", ex.validate.samples},
                   {"dt_grid", ex.validate.dt_grid},
                   {"magnitude_range", ex.validate.magnitude_range},
                   {"models", ex.validate.models},
                   {"derivative_trials", ex.validate.derivative_trials},
                   {"derivative_tolerance", ex.validate.derivative_tolerance}};
  json moments = {{"p", ex.moments.p}, {"ratio_limit", optional_json(ex.moments.ratio_limit)}};
  json probe = {{"targets", ex.probe.targets},
                {"radius", ex.probe.radius},
                {"min_blown_up_fraction", optional_json(ex.probe.min_blown_up_fraction)},
                {"max_blown_up_fraction", optional_json(ex.probe.max_blown_up_fraction)},
                {"min_near_fraction", optional_json(ex.probe.min_near_fraction)}};
  json experiment = json::object();
  auto declared = [&](const char* name) {
    return ex.declared.empty() || std::find(ex.declared.begin(), ex.declared.end(), name) != ex.declared.end();
  };
  if (declared("simulate")) experiment["simulate"] = json::object();
  if (declared("converge")) experiment["converge"] = converge;
  if (declared("validate")) experiment["validate"] = validate;
  if (declared("moments")) experiment["moments"] = moments;
  if (declared("probe")) experiment["probe"] = probe;

  return {{"seed", config.seed},
          {"model",
           {{"name", config.model.model},
            {"case", config.model.preset},
            {"params", config.model.params},
            {"initial_law", to_json(config.model.initial_law)}}},
          {"scheme", scheme},
          {"experiment", experiment},
          {"io", {{"output_dir", config.output_dir.string()}, {"snapshot_times", config.snapshot_times}}}};
}

}  // namespace mvsim
