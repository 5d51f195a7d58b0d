#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinlim/generator.hpp"
#include "kinlim/markov_noise.hpp"
#include "kinlim/velocity_space.hpp"

namespace kinlim {

/// Raised for malformed or inconsistent configuration files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct FunctionalSpec {
  std::string id;
  FunctionalKind kind = FunctionalKind::Linear;
  nlohmann::json weight;
};

struct ModeSpec {
  nlohmann::json shape;
  nlohmann::json chain;
};

/// Parsed experiment file. Unknown keys anywhere are rejected.
struct ExperimentConfig {
  int dimension = 1;
  int grid_size = 64;
  VelocityModel velocity;
  std::vector<ModeSpec> modes;
  nlohmann::json initial_density = "const";
  std::vector<double> epsilons;
  std::size_t ensemble_size = 1000;
  std::size_t spde_ensemble_size = 1000;
  double final_time = 0.1;
  std::vector<double> output_times;
  double dt_factor = 0.1;
  std::size_t spde_steps = 2048;
  std::vector<FunctionalSpec> functionals;
  double sobolev_eta = 1.0;
  /// E‖f‖² must stay below moment_threshold·‖f₀‖² (and E‖f‖⁴ below its square times ‖f₀‖⁴).
  double moment_threshold = 4.0;
  std::uint64_t seed = 1;
  std::string output_directory = "out";
  nlohmann::json source;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Ensemble sizes must reach `minimum` for statistical subcommands.
  void require_ensembles(std::size_t minimum) const;
};

/// Models instantiated from a configuration.
struct Experiment {
  ExperimentConfig config;
  SpectralPtr spectral;
  std::shared_ptr<const NoiseModel> noise;
  GridFunction rho0;
  std::vector<TestFunctional> functionals;

  static Experiment build(ExperimentConfig config);
  const Grid& grid() const { return spectral->grid(); }
  const VelocityModel& velocity() const { return config.velocity; }
  KineticField initial_field() const;
};

/// Grid function from the shape grammar:
///   number                    constant
///   "const"                   1
///   "cos:k" / "sin:k"         cos(2πkx), in 2D "cos:k1,k2"
///   {"fourier": [[k..., a_cos, a_sin], ...]}
///   {"terms": [{"shape": ..., "amplitude": a}, ...]}
GridFunction parse_shape(const nlohmann::json& shape, const Grid& grid);

/// Chain from {"telegraph": {"sigma", "rate"}} or {"states": [...], "rates": [[...]]}.
ChainSpec parse_chain(const nlohmann::json& chain);

}  // namespace kinlim
