#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "kinhier/kernels.hpp"
#include "kinhier/meanfield.hpp"
#include "kinhier/state_space.hpp"

namespace kinhier {

using ojson = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

struct SpaceConfig {
  int subpopulations = 1;
  int grid_points = 0;  // midpoint grid; 0 means explicit grid/weights below
  std::vector<double> grid;
  std::vector<double> weights;
  bool operator==(const SpaceConfig&) const = default;
};

struct KernelConfig {
  std::string catalog = "uniform-redistribution";
  // rate parameters for the named catalogs, draw scales for "random"
  double a1_scale = 1.0;
  double a2_scale = 1.0;
  std::uint64_t kernel_seed = 1;  // random catalog only
  // inline catalog only, row-major flats; A2 is u2-major, then (v,u1) rows
  std::vector<double> a1;
  std::vector<double> A1;
  std::vector<double> a2;
  std::vector<double> A2;
  bool operator==(const KernelConfig&) const = default;
};

struct InitialConfig {
  std::vector<double> f1;  // empty = uniform unit-mass density
  std::vector<double> g2;  // empty = chaotic (no pair correlation supplied)
  bool operator==(const InitialConfig&) const = default;
};

struct ObservableConfig {
  int order = 1;
  std::vector<double> values;  // empty = seeded random, symmetrized
  bool operator==(const ObservableConfig&) const = default;
};

struct TruncationConfig {
  int s_max = 3;         // dual hierarchy / expansion order
  int bbgky_n = 3;       // state hierarchy truncation for finite evolutions
  int series_n_max = 3;  // one-particle series depth
  int hierarchy = 4;     // kinetic state-hierarchy truncation
  bool operator==(const TruncationConfig&) const = default;
};

struct ToleranceConfig {
  double ode = 1e-8;
  bool operator==(const ToleranceConfig&) const = default;
};

struct SweepConfig {
  std::vector<double> epsilon;  // empty lists fall back to the scalar fields
  std::vector<double> t;
  std::vector<int> s_max;
  bool operator==(const SweepConfig&) const = default;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string scenario = "vlasov";
  SpaceConfig space;
  KernelConfig kernels;
  std::vector<double> epsilon{0.1};
  TruncationConfig truncations;
  std::vector<double> time_grid{1.0};
  ToleranceConfig tolerances;
  int quadrature_order = 8;
  std::uint64_t seed = 1;
  int entities = 2;
  int replicas = 100000;
  int threads = 0;
  std::string dressing = "inverse-dressed";
  InitialConfig initial;
  ObservableConfig observable;
  SweepConfig sweep;
  std::string output_dir = "out";
  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::set<std::string>& scenario_names() {
  static const std::set<std::string> names{
      "jump-evolve",    "bbgky-evolve", "dual-bbgky-evolve",
      "meanfield-scan", "vlasov",       "propagation-check"};
  return names;
}

namespace detail {

inline void reject_unknown_keys(const ojson& j, const std::string& path,
                                const std::set<std::string>& allowed) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw config_error("unknown key: " + path + item.key());
}

template <class T>
inline T get_field(const ojson& j, const std::string& path,
                   const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("bad value type at " + path + key);
  }
}

inline std::vector<double> get_number_or_list(const ojson& j,
                                              const std::string& path,
                                              const std::string& key,
                                              const std::vector<double>& fb) {
  if (!j.contains(key)) return fb;
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  try {
    return v.get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw config_error("bad value type at " + path + key);
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw config_error("config root must be an object");
  detail::reject_unknown_keys(
      j, "",
      {"version", "scenario", "space", "kernels", "epsilon", "truncations",
       "time_grid", "tolerances", "quadrature_order", "seed", "entities",
       "replicas", "threads", "dressing", "initial", "observable", "sweep",
       "output_dir"});

  ExperimentConfig c;
  if (!j.contains("version")) throw config_error("missing key: version");
  c.version = detail::get_field<int>(j, "", "version", kConfigVersion);
  if (c.version != kConfigVersion)
    throw config_error("version: unsupported config version");

  c.scenario = detail::get_field<std::string>(j, "", "scenario", c.scenario);
  if (!scenario_names().count(c.scenario))
    throw config_error("scenario: unknown scenario name '" + c.scenario + "'");

  if (j.contains("space")) {
    const auto& js = j.at("space");
    detail::reject_unknown_keys(
        js, "space.", {"subpopulations", "grid_points", "grid", "weights"});
    c.space.subpopulations =
        detail::get_field<int>(js, "space.", "subpopulations", 1);
    c.space.grid_points = detail::get_field<int>(js, "space.", "grid_points", 0);
    c.space.grid = detail::get_field<std::vector<double>>(js, "space.", "grid",
                                                          {});
    c.space.weights =
        detail::get_field<std::vector<double>>(js, "space.", "weights", {});
    if (c.space.grid_points > 0 && !c.space.grid.empty())
      throw config_error("space.grid: give either grid_points or grid, not both");
    if (c.space.grid.size() != c.space.weights.size())
      throw config_error("space.weights: must match grid length");
    if (c.space.grid_points == 0 && c.space.grid.empty())
      throw config_error("space.grid_points: space needs a grid");
  } else {
    throw config_error("missing key: space");
  }

  if (j.contains("kernels")) {
    const auto& jk = j.at("kernels");
    detail::reject_unknown_keys(jk, "kernels.",
                                {"catalog", "a1_scale", "a2_scale",
                                 "kernel_seed", "a1", "A1", "a2", "A2"});
    c.kernels.catalog =
        detail::get_field<std::string>(jk, "kernels.", "catalog", "inline");
    static const std::set<std::string> catalogs{
        "uniform-redistribution", "local-diffusion", "alignment", "random",
        "inline"};
    if (!catalogs.count(c.kernels.catalog))
      throw config_error("kernels.catalog: unknown catalog '" +
                         c.kernels.catalog + "'");
    c.kernels.a1_scale =
        detail::get_field<double>(jk, "kernels.", "a1_scale", 1.0);
    c.kernels.a2_scale =
        detail::get_field<double>(jk, "kernels.", "a2_scale", 1.0);
    c.kernels.kernel_seed =
        detail::get_field<std::uint64_t>(jk, "kernels.", "kernel_seed", 1);
    c.kernels.a1 =
        detail::get_field<std::vector<double>>(jk, "kernels.", "a1", {});
    c.kernels.A1 =
        detail::get_field<std::vector<double>>(jk, "kernels.", "A1", {});
    c.kernels.a2 =
        detail::get_field<std::vector<double>>(jk, "kernels.", "a2", {});
    c.kernels.A2 =
        detail::get_field<std::vector<double>>(jk, "kernels.", "A2", {});
    if (c.kernels.catalog == "inline" &&
        (c.kernels.a1.empty() || c.kernels.A1.empty() ||
         c.kernels.a2.empty() || c.kernels.A2.empty()))
      throw config_error("kernels.a1: inline catalog needs a1, A1, a2, A2");
  }

  c.epsilon = detail::get_number_or_list(j, "", "epsilon", c.epsilon);
  if (c.epsilon.empty()) throw config_error("epsilon: needs a value");
  for (double e : c.epsilon)
    if (e < 0.0) throw config_error("epsilon: must be nonnegative");

  if (j.contains("truncations")) {
    const auto& jt = j.at("truncations");
    detail::reject_unknown_keys(
        jt, "truncations.", {"s_max", "bbgky_n", "series_n_max", "hierarchy"});
    c.truncations.s_max = detail::get_field<int>(jt, "truncations.", "s_max", 3);
    c.truncations.bbgky_n =
        detail::get_field<int>(jt, "truncations.", "bbgky_n", 3);
    c.truncations.series_n_max =
        detail::get_field<int>(jt, "truncations.", "series_n_max", 3);
    c.truncations.hierarchy =
        detail::get_field<int>(jt, "truncations.", "hierarchy", 4);
  }

  c.time_grid = detail::get_number_or_list(j, "", "time_grid", c.time_grid);
  if (c.time_grid.empty()) throw config_error("time_grid: needs a value");
  for (size_t i = 1; i < c.time_grid.size(); ++i)
    if (c.time_grid[i] < c.time_grid[i - 1])
      throw config_error("time_grid: must be nondecreasing");

  if (j.contains("tolerances")) {
    const auto& jt = j.at("tolerances");
    detail::reject_unknown_keys(jt, "tolerances.", {"ode"});
    c.tolerances.ode = detail::get_field<double>(jt, "tolerances.", "ode", 1e-8);
    if (c.tolerances.ode <= 0.0)
      throw config_error("tolerances.ode: must be positive");
  }

  c.quadrature_order = detail::get_field<int>(j, "", "quadrature_order", 8);
  c.seed = detail::get_field<std::uint64_t>(j, "", "seed", 1);
  c.entities = detail::get_field<int>(j, "", "entities", 2);
  c.replicas = detail::get_field<int>(j, "", "replicas", 100000);
  c.threads = detail::get_field<int>(j, "", "threads", 0);

  c.dressing = detail::get_field<std::string>(j, "", "dressing", c.dressing);
  if (c.dressing != "inverse-dressed" && c.dressing != "literal-forward")
    throw config_error("dressing: expected inverse-dressed or literal-forward");

  if (j.contains("initial")) {
    const auto& ji = j.at("initial");
    detail::reject_unknown_keys(ji, "initial.", {"f1", "g2"});
    c.initial.f1 =
        detail::get_field<std::vector<double>>(ji, "initial.", "f1", {});
    c.initial.g2 =
        detail::get_field<std::vector<double>>(ji, "initial.", "g2", {});
  }

  if (j.contains("observable")) {
    const auto& jo = j.at("observable");
    detail::reject_unknown_keys(jo, "observable.", {"order", "values"});
    c.observable.order = detail::get_field<int>(jo, "observable.", "order", 1);
    c.observable.values =
        detail::get_field<std::vector<double>>(jo, "observable.", "values", {});
    if (c.observable.order < 1)
      throw config_error("observable.order: must be at least 1");
  }

  if (j.contains("sweep")) {
    const auto& jw = j.at("sweep");
    detail::reject_unknown_keys(jw, "sweep.", {"epsilon", "t", "s_max"});
    c.sweep.epsilon = detail::get_number_or_list(jw, "sweep.", "epsilon", {});
    c.sweep.t = detail::get_number_or_list(jw, "sweep.", "t", {});
    c.sweep.s_max =
        detail::get_field<std::vector<int>>(jw, "sweep.", "s_max", {});
  }

  c.output_dir = detail::get_field<std::string>(j, "", "output_dir", "out");
  return c;
}

inline ojson config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["version"] = c.version;
  j["scenario"] = c.scenario;
  j["space"]["subpopulations"] = c.space.subpopulations;
  if (c.space.grid_points > 0) {
    j["space"]["grid_points"] = c.space.grid_points;
  } else {
    j["space"]["grid"] = c.space.grid;
    j["space"]["weights"] = c.space.weights;
  }
  j["kernels"]["catalog"] = c.kernels.catalog;
  if (c.kernels.catalog != "inline") {
    j["kernels"]["a1_scale"] = c.kernels.a1_scale;
    j["kernels"]["a2_scale"] = c.kernels.a2_scale;
  }
  if (c.kernels.catalog == "random") {
    j["kernels"]["kernel_seed"] = c.kernels.kernel_seed;
  }
  if (c.kernels.catalog == "inline") {
    j["kernels"]["a1"] = c.kernels.a1;
    j["kernels"]["A1"] = c.kernels.A1;
    j["kernels"]["a2"] = c.kernels.a2;
    j["kernels"]["A2"] = c.kernels.A2;
  }
  j["epsilon"] = c.epsilon;
  j["truncations"]["s_max"] = c.truncations.s_max;
  j["truncations"]["bbgky_n"] = c.truncations.bbgky_n;
  j["truncations"]["series_n_max"] = c.truncations.series_n_max;
  j["truncations"]["hierarchy"] = c.truncations.hierarchy;
  j["time_grid"] = c.time_grid;
  j["tolerances"]["ode"] = c.tolerances.ode;
  j["quadrature_order"] = c.quadrature_order;
  j["seed"] = c.seed;
  j["entities"] = c.entities;
  j["replicas"] = c.replicas;
  j["threads"] = c.threads;
  j["dressing"] = c.dressing;
  if (!c.initial.f1.empty()) j["initial"]["f1"] = c.initial.f1;
  if (!c.initial.g2.empty()) j["initial"]["g2"] = c.initial.g2;
  j["observable"]["order"] = c.observable.order;
  if (!c.observable.values.empty())
    j["observable"]["values"] = c.observable.values;
  if (!c.sweep.epsilon.empty()) j["sweep"]["epsilon"] = c.sweep.epsilon;
  if (!c.sweep.t.empty()) j["sweep"]["t"] = c.sweep.t;
  if (!c.sweep.s_max.empty()) j["sweep"]["s_max"] = c.sweep.s_max;
  j["output_dir"] = c.output_dir;
  return j;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  return config_to_json(c).dump(2) + "\n";
}

/// Realize the entity space described by a config.
inline SpacePtr space_from_config(const SpaceConfig& sc) {
  if (sc.subpopulations < 1)
    throw config_error("space.subpopulations: must be at least 1");
  if (sc.grid_points > 0) return make_space(sc.subpopulations, sc.grid_points);
  return make_space(sc.subpopulations, sc.grid, sc.weights);
}

/// Realize the kernel tables described by a config; inline tables are
/// validated against the space before use.
inline KernelSet kernels_from_config(const KernelConfig& kc,
                                     const EntitySpace& space) {
  const int K = space.flat_count();
  if (kc.catalog == "uniform-redistribution")
    return uniform_redistribution_kernels(space, kc.a1_scale, kc.a2_scale);
  if (kc.catalog == "local-diffusion")
    return local_diffusion_kernels(space, kc.a1_scale, kc.a2_scale);
  if (kc.catalog == "alignment")
    return alignment_kernels(space, kc.a1_scale, kc.a2_scale);
  if (kc.catalog == "random") {
    std::mt19937_64 gen(kc.kernel_seed);
    return random_kernels(space, gen, kc.a1_scale, kc.a2_scale);
  }
  auto shape = [&](const std::vector<double>& v, size_t want,
                   const char* name) {
    if (v.size() != want)
      throw config_error(std::string("kernels.") + name +
                         ": wrong length for this space");
  };
  shape(kc.a1, static_cast<size_t>(K), "a1");
  shape(kc.A1, static_cast<size_t>(K) * K, "A1");
  shape(kc.a2, static_cast<size_t>(K) * K, "a2");
  shape(kc.A2, static_cast<size_t>(K) * K * K, "A2");
  Vec a1(K);
  for (int i = 0; i < K; ++i) a1[i] = kc.a1[static_cast<size_t>(i)];
  Mat A1(K, K), a2(K, K);
  for (int r = 0; r < K; ++r)
    for (int col = 0; col < K; ++col) {
      A1(r, col) = kc.A1[static_cast<size_t>(r) * K + col];
      a2(r, col) = kc.a2[static_cast<size_t>(r) * K + col];
    }
  std::vector<Mat> A2(static_cast<size_t>(K), Mat(K, K));
  for (int u2 = 0; u2 < K; ++u2)
    for (int v = 0; v < K; ++v)
      for (int u1 = 0; u1 < K; ++u1)
        A2[static_cast<size_t>(u2)](v, u1) =
            kc.A2[(static_cast<size_t>(u2) * K + v) * K + u1];
  return KernelSet(std::move(a1), std::move(A1), std::move(a2), std::move(A2),
                   "inline");
}

/// Realize the correlated initial state: uniform f1 when unspecified, and
/// the chaotic family when no pair correlation is supplied.
inline CorrelatedInitialState initial_from_config(const InitialConfig& ic,
                                                  const SpacePtr& space) {
  const int K = space->flat_count();
  TensorFunction f1(space, 1, Kind::state);
  if (ic.f1.empty()) {
    const double total = space->weights().sum();
    f1.values() = Vec::Constant(K, 1.0 / total);
  } else {
    if (static_cast<int>(ic.f1.size()) != K)
      throw config_error("initial.f1: wrong length for this space");
    for (int i = 0; i < K; ++i) f1.values()[i] = ic.f1[static_cast<size_t>(i)];
  }
  const int g_top = ic.g2.empty() ? 1 : 2;
  SequenceVector g(space, Kind::state, g_top);
  g.component(0).values()[0] = 1.0;
  g.component(1).values() = Vec::Ones(K);
  if (!ic.g2.empty()) {
    if (ic.g2.size() != static_cast<size_t>(K) * K)
      throw config_error("initial.g2: wrong length for this space");
    for (int i = 0; i < K * K; ++i)
      g.component(2).values()[i] = ic.g2[static_cast<size_t>(i)];
  }
  return CorrelatedInitialState(std::move(f1), std::move(g));
}

/// Realize the observable: explicit values, or a seeded random symmetric
/// tensor so that a (config, seed) pair pins the data bit-for-bit.
inline TensorFunction observable_from_config(const ObservableConfig& oc,
                                             const SpacePtr& space,
                                             std::uint64_t seed) {
  const int K = space->flat_count();
  TensorFunction b(space, oc.order, Kind::observable);
  if (oc.values.empty()) {
    std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (Eigen::Index i = 0; i < b.values().size(); ++i)
      b.values()[i] = dist(gen);
    return symmetrize(b);
  }
  if (b.values().size() != static_cast<Eigen::Index>(oc.values.size()))
    throw config_error("observable.values: wrong length for this order");
  for (Eigen::Index i = 0; i < b.values().size(); ++i)
    b.values()[i] = oc.values[static_cast<size_t>(i)];
  return b;
}

inline DressingReading dressing_from_config(const ExperimentConfig& c) {
  return c.dressing == "literal-forward" ? DressingReading::literal_forward
                                         : DressingReading::inverse_dressed;
}

}  // namespace kinhier
