#include "kinlim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

namespace kinlim {

using nlohmann::json;

namespace {

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? get<T>(j, key, where) : fallback;
}

std::vector<int> parse_wave(const std::string& text, int dim, const std::string& where) {
  std::vector<int> k;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) throw ConfigError(where + ": bad wave number in '" + text + "'");
    k.push_back(v);
    p = next;
    if (p < end && *p == ',') ++p;
  }
  if (int(k.size()) != dim) throw ConfigError(where + ": wave vector '" + text + "' does not match dimension");
  return k;
}

FunctionalKind parse_kind(const std::string& s) {
  if (s == "linear") return FunctionalKind::Linear;
  if (s == "quadratic") return FunctionalKind::Quadratic;
  throw ConfigError("functional kind must be 'linear' or 'quadratic', got '" + s + "'");
}

}  // namespace

GridFunction parse_shape(const json& shape, const Grid& grid) {
  const std::string where = "shape";
  if (shape.is_number()) return constant_function(grid, shape.get<double>());
  if (shape.is_string()) {
    const auto s = shape.get<std::string>();
    if (s == "const") return constant_function(grid, 1.0);
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError(where + ": unknown shape '" + s + "'");
    const auto head = s.substr(0, colon);
    const auto k = parse_wave(s.substr(colon + 1), grid.dim, where);
    const WaveVector wv{k[0], grid.dim == 2 ? k[1] : 0};
    if (head == "cos") return fourier_mode(grid, Trig::Cos, wv);
    if (head == "sin") return fourier_mode(grid, Trig::Sin, wv);
    throw ConfigError(where + ": unknown shape '" + s + "'");
  }
  if (shape.is_object() && shape.contains("fourier")) {
    only_keys(shape, {"fourier"}, where);
    GridFunction out(grid.size(), 0.0);
    for (const auto& term : shape.at("fourier")) {
      const auto v = term.get<std::vector<double>>();
      if (int(v.size()) != grid.dim + 2) throw ConfigError(where + ": fourier term needs dim + 2 entries");
      WaveVector wv{int(v[0]), grid.dim == 2 ? int(v[1]) : 0};
      const double ac = v[grid.dim], as = v[grid.dim + 1];
      const auto c = fourier_mode(grid, Trig::Cos, wv);
      const auto sn = fourier_mode(grid, Trig::Sin, wv);
      for (std::size_t p = 0; p < out.size(); ++p) out[p] += ac * c[p] + as * sn[p];
    }
    return out;
  }
  if (shape.is_object() && shape.contains("terms")) {
    only_keys(shape, {"terms"}, where);
    GridFunction out(grid.size(), 0.0);
    for (const auto& term : shape.at("terms")) {
      only_keys(term, {"shape", "amplitude"}, where + ".terms");
      const double a = get_or<double>(term, "amplitude", 1.0, where);
      const auto f = parse_shape(term.at("shape"), grid);
      for (std::size_t p = 0; p < out.size(); ++p) out[p] += a * f[p];
    }
    return out;
  }
  throw ConfigError(where + ": unsupported shape " + shape.dump());
}

ChainSpec parse_chain(const json& chain) {
  const std::string where = "chain";
  if (chain.contains("telegraph")) {
    only_keys(chain, {"telegraph"}, where);
    const auto& t = chain.at("telegraph");
    only_keys(t, {"sigma", "rate"}, where + ".telegraph");
    return ChainSpec::telegraph(get<double>(t, "sigma", where), get<double>(t, "rate", where));
  }
  only_keys(chain, {"states", "rates"}, where);
  const auto states = get<std::vector<double>>(chain, "states", where);
  const auto rates = get<std::vector<std::vector<double>>>(chain, "rates", where);
  Eigen::MatrixXd g(Eigen::Index(rates.size()), Eigen::Index(states.size()));
  for (std::size_t k = 0; k < rates.size(); ++k) {
    if (rates[k].size() != states.size()) throw ConfigError(where + ": rate matrix must be square");
    for (std::size_t l = 0; l < states.size(); ++l) g(Eigen::Index(k), Eigen::Index(l)) = rates[k][l];
  }
  return ChainSpec(states, g);
}

namespace {

ExperimentConfig parse_config(const json& j) {
  only_keys(j, {"dimension", "grid_size", "velocity_model", "noise_model", "initial_density", "epsilons",
                "ensemble_size", "spde_ensemble_size", "final_time", "output_times", "dt_factor", "spde_steps",
                "functionals", "sobolev_eta", "moment_threshold", "seed", "output_directory"},
            "config");
  ExperimentConfig c;
  c.source = j;
  c.dimension = get_or<int>(j, "dimension", 1, "config");
  if (c.dimension != 1 && c.dimension != 2) throw ConfigError("dimension must be 1 or 2");
  c.grid_size = get_or<int>(j, "grid_size", 64, "config");
  if (!is_power_of_two(c.grid_size) || c.grid_size < 4) throw ConfigError("grid_size must be a power of two >= 4");

  const auto& vm = j.at("velocity_model");
  only_keys(vm, {"velocities", "weights"}, "velocity_model");
  c.velocity.dim = c.dimension;
  for (const auto& v : vm.at("velocities")) {
    Velocity a{0.0, 0.0};
    if (v.is_number()) {
      if (c.dimension != 1) throw ConfigError("velocity_model: 2D velocities need two components");
      a[0] = v.get<double>();
    } else {
      const auto comps = v.get<std::vector<double>>();
      if (int(comps.size()) != c.dimension) throw ConfigError("velocity_model: velocity dimension mismatch");
      for (int d = 0; d < c.dimension; ++d) a[d] = comps[d];
    }
    c.velocity.velocities.push_back(a);
  }
  c.velocity.weights = get<std::vector<double>>(vm, "weights", "velocity_model");
  if (auto v = validate(c.velocity); !v.empty()) throw ConfigError("velocity_model: " + v.front());

  if (j.contains("noise_model")) {
    const auto& nm = j.at("noise_model");
    only_keys(nm, {"modes"}, "noise_model");
    for (const auto& m : nm.at("modes")) {
      only_keys(m, {"shape", "chain"}, "noise_model.modes");
      c.modes.push_back({m.at("shape"), m.at("chain")});
      // Validate eagerly so malformed entries fail at load time.
      parse_shape(m.at("shape"), Grid(c.dimension, c.grid_size));
      parse_chain(m.at("chain"));
    }
  }
  if (j.contains("initial_density")) c.initial_density = j.at("initial_density");

  c.epsilons = get<std::vector<double>>(j, "epsilons", "config");
  if (c.epsilons.empty()) throw ConfigError("epsilons must not be empty");
  for (std::size_t i = 0; i < c.epsilons.size(); ++i) {
    if (!(c.epsilons[i] > 0.0 && c.epsilons[i] <= 1.0)) throw ConfigError("epsilons must lie in (0, 1]");
    if (i > 0 && !(c.epsilons[i] < c.epsilons[i - 1])) throw ConfigError("epsilons must be strictly decreasing");
  }
  c.ensemble_size = get_or<std::size_t>(j, "ensemble_size", 1000, "config");
  c.spde_ensemble_size = get_or<std::size_t>(j, "spde_ensemble_size", c.ensemble_size, "config");
  c.final_time = get<double>(j, "final_time", "config");
  if (!(c.final_time > 0.0)) throw ConfigError("final_time must be positive");
  c.output_times = get_or<std::vector<double>>(j, "output_times", {c.final_time}, "config");
  if (c.output_times.empty() || c.output_times.back() != c.final_time)
    throw ConfigError("output_times must end at final_time");
  for (std::size_t i = 0; i < c.output_times.size(); ++i)
    if (!(c.output_times[i] > (i ? c.output_times[i - 1] : 0.0)))
      throw ConfigError("output_times must be positive and strictly increasing");
  c.dt_factor = get_or<double>(j, "dt_factor", 0.1, "config");
  if (!(c.dt_factor > 0.0 && c.dt_factor <= 1.0)) throw ConfigError("dt_factor must lie in (0, 1]");
  c.spde_steps = get_or<std::size_t>(j, "spde_steps", 2048, "config");
  if (c.spde_steps == 0) throw ConfigError("spde_steps must be positive");

  if (j.contains("functionals")) {
    std::set<std::string> ids;
    for (const auto& f : j.at("functionals")) {
      only_keys(f, {"id", "kind", "weight"}, "functionals");
      FunctionalSpec s{get<std::string>(f, "id", "functionals"),
                       parse_kind(get<std::string>(f, "kind", "functionals")), f.value("weight", json("const"))};
      if (!ids.insert(s.id).second) throw ConfigError("duplicate functional id '" + s.id + "'");
      c.functionals.push_back(std::move(s));
    }
  }
  c.sobolev_eta = get_or<double>(j, "sobolev_eta", 1.0, "config");
  if (!(c.sobolev_eta >= 0.0)) throw ConfigError("sobolev_eta must be nonnegative");
  c.moment_threshold = get_or<double>(j, "moment_threshold", 4.0, "config");
  if (!(c.moment_threshold > 0.0)) throw ConfigError("moment_threshold must be positive");
  c.seed = get_or<std::uint64_t>(j, "seed", 1, "config");
  c.output_directory = get_or<std::string>(j, "output_directory", "out", "config");
  return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  try {
    return parse_config(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::require_ensembles(std::size_t minimum) const {
  if (ensemble_size < minimum || spde_ensemble_size < minimum)
    throw ConfigError("ensemble sizes must be at least " + std::to_string(minimum));
}

Experiment Experiment::build(ExperimentConfig config) {
  Experiment e;
  try {
    e.spectral = std::make_shared<const Spectral>(Grid(config.dimension, config.grid_size));
    std::vector<GridFunction> modes;
    std::vector<ChainSpec> chains;
    for (const auto& m : config.modes) {
      modes.push_back(parse_shape(m.shape, e.grid()));
      chains.push_back(parse_chain(m.chain));
    }
    e.noise = std::make_shared<const NoiseModel>(e.spectral, std::move(modes), std::move(chains));
    e.rho0 = parse_shape(config.initial_density, e.grid());
    for (const auto& f : config.functionals)
      e.functionals.emplace_back(f.kind, parse_shape(f.weight, e.grid()), f.id);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(err.what());
  } catch (const nlohmann::json::exception& err) {
    throw ConfigError(err.what());
  }
  e.config = std::move(config);
  return e;
}

KineticField Experiment::initial_field() const {
  return KineticField::from_density(grid(), config.velocity.size(), rho0);
}

}  // namespace kinlim
