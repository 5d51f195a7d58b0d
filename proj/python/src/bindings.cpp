#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kinlim/harness.hpp"
#include "kinlim/version.hpp"

namespace py = pybind11;
using namespace kinlim;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GridFunction to_vector(const Array& a) { return GridFunction(a.data(), a.data() + a.size()); }

py::array_t<double> to_array(const GridFunction& f, const Grid& g) {
  std::vector<py::ssize_t> shape{py::ssize_t(g.n)};
  if (g.dim == 2) shape.push_back(g.n);
  py::array_t<double> out(shape);
  std::copy(f.begin(), f.end(), out.mutable_data());
  return out;
}

Experiment experiment_from(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(e.what());
  }
  return Experiment::build(ExperimentConfig::from_json(j));
}

py::dict stats_dict(const EnsembleStats& stats, std::size_t eps_index, const std::vector<std::string>& keys,
                    std::size_t ntimes) {
  py::dict out;
  for (const auto& k : keys) {
    std::vector<double> mean, se;
    for (std::size_t t = 0; t < ntimes; ++t) {
      const auto* s = stats.find(eps_index, k, t);
      mean.push_back(s ? s->mean() : std::nan(""));
      se.push_back(s ? s->stderr_of_mean() : std::nan(""));
    }
    out[py::str(k)] = py::dict(py::arg("mean") = mean, py::arg("stderr") = se);
  }
  return out;
}

std::vector<std::string> ids(const Experiment& e) {
  std::vector<std::string> out;
  for (const auto& f : e.functionals) out.push_back(f.id());
  return out;
}

py::list density_list(const FieldMean& fm, const Grid& g) {
  py::list out;
  for (std::size_t t = 0; t < fm.sum.size(); ++t) out.append(to_array(fm.mean(t), g));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kinetic diffusion-limit solvers and ensemble harness";
  m.attr("__version__") = kVersion;

  // Translators run newest first, so the subclass goes last.
  py::register_exception<Error>(m, "KinlimError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "diffusion_matrix",
      [](const std::vector<std::vector<double>>& velocities, const std::vector<double>& weights) {
        VelocityModel vm;
        vm.dim = velocities.empty() ? 1 : int(velocities.front().size());
        for (const auto& v : velocities) {
          if (int(v.size()) != vm.dim || vm.dim < 1 || vm.dim > 2) throw Error("velocities must all have 1 or 2 components");
          vm.velocities.push_back({v[0], vm.dim == 2 ? v[1] : 0.0});
        }
        vm.weights = weights;
        if (auto problems = validate(vm); !problems.empty()) throw Error(problems.front());
        const auto k = diffusion_matrix(vm);
        std::vector<std::vector<double>> out(vm.dim, std::vector<double>(vm.dim));
        for (int p = 0; p < vm.dim; ++p)
          for (int q = 0; q < vm.dim; ++q) out[p][q] = k[p][q];
        return out;
      },
      py::arg("velocities"), py::arg("weights"), "K = sum_i w_i a_i a_i^T for a centered velocity set.");

  m.def(
      "integrated_autocovariance",
      [](const std::vector<double>& states, const std::vector<std::vector<double>>& rates) {
        nlohmann::json j{{"states", states}, {"rates", rates}};
        return integrated_autocovariance(parse_chain(j));
      },
      py::arg("states"), py::arg("rates"), "Integrated autocovariance of a stationary finite-state chain.");

  m.def(
      "sobolev_distance",
      [](const Array& a, const Array& b, double eta) {
        if (a.ndim() != b.ndim() || a.size() != b.size()) throw Error("fields must share a grid");
        const int n = int(a.shape(0));
        const Spectral sp(Grid(int(a.ndim()), n));
        return sobolev_distance(sp, to_vector(a), to_vector(b), eta);
      },
      py::arg("a"), py::arg("b"), py::arg("eta") = 1.0, "Spectral H^{-eta} distance on the periodic grid.");

  py::class_<Experiment>(m, "Experiment")
      .def_static("from_file", [](const std::string& path) { return Experiment::build(ExperimentConfig::load(path)); })
      .def_static("from_json", &experiment_from, py::arg("text"))
      .def_property_readonly("epsilons", [](const Experiment& e) { return e.config.epsilons; })
      .def_property_readonly("output_times", [](const Experiment& e) { return e.config.output_times; })
      .def_property_readonly("functionals", &ids)
      .def_property_readonly("grid_size", [](const Experiment& e) { return e.config.grid_size; })
      .def_property_readonly("dimension", [](const Experiment& e) { return e.config.dimension; })
      .def_property(
          "seed", [](const Experiment& e) { return e.config.seed; },
          [](Experiment& e, std::uint64_t s) { e.config.seed = s; })
      .def_property_readonly("autocovariances",
                             [](const Experiment& e) {
                               std::vector<double> c;
                               for (std::size_t j = 0; j < e.noise->num_modes(); ++j) c.push_back(e.noise->autocovariance(j));
                               return c;
                             })
      .def_property_readonly("initial_density", [](const Experiment& e) { return to_array(e.rho0, e.grid()); })
      .def_property_readonly("trace", [](const Experiment& e) { return to_array(trace_field(*e.noise), e.grid()); })
      .def("drift_consistency",
           [](const Experiment& e) {
             return drift_consistency(LimitCoefficients::from_models(e.velocity(), *e.noise));
           })
      .def(
          "run_kinetic",
          [](const Experiment& e, std::size_t eps_index, std::size_t trajectories, std::size_t workers) {
            KineticEnsemble ens;
            {
              py::gil_scoped_release release;
              ens = run_kinetic_ensemble(e, eps_index, trajectories, workers);
            }
            auto keys = ids(e);
            keys.push_back(kNorm2Key);
            keys.push_back(kNorm4Key);
            py::dict out;
            out["epsilon"] = ens.epsilon;
            out["trajectories"] = ens.trajectories;
            out["failures"] = ens.stats.failures;
            out["gronwall_violations"] = ens.gronwall_violations;
            out["stats"] = stats_dict(ens.stats, eps_index, keys, e.config.output_times.size());
            out["density"] = density_list(ens.density, e.grid());
            return out;
          },
          py::arg("epsilon_index") = 0, py::arg("trajectories") = 100, py::arg("workers") = 1)
      .def(
          "run_limit",
          [](const Experiment& e, std::size_t trajectories, std::size_t workers) {
            LimitEnsemble ens;
            {
              py::gil_scoped_release release;
              ens = run_limit_ensemble(e, trajectories, workers);
            }
            py::dict out;
            out["trajectories"] = ens.trajectories;
            out["stats"] = stats_dict(ens.stats, 0, ids(e), e.config.output_times.size());
            out["density"] = density_list(ens.density, e.grid());
            return out;
          },
          py::arg("trajectories") = 100, py::arg("workers") = 1)
      .def(
          "converge",
          [](const Experiment& e, std::size_t workers) {
            ConvergenceReport rep;
            {
              py::gil_scoped_release release;
              rep = run_ensemble(e, workers);
            }
            py::list rows;
            for (const auto& r : rep.table.rows)
              rows.append(py::dict(py::arg("functional") = r.functional, py::arg("epsilon") = r.epsilon,
                                   py::arg("kinetic_mean") = r.kinetic_mean, py::arg("limit_mean") = r.limit_mean,
                                   py::arg("error") = r.error, py::arg("ci") = r.ci, py::arg("ratio") = r.ratio));
            py::dict out;
            out["rows"] = rows;
            out["verdicts"] = rep.table.verdicts;
            out["sobolev"] = rep.sobolev;
            out["moments_bounded"] = rep.moments.passed;
            out["moment_sup"] = rep.moments.sup_second;
            return out;
          },
          py::arg("workers") = 1)
      .def(
          "diagnose_generator",
          [](const Experiment& e, std::size_t states) {
            py::list out;
            for (const auto& r : diagnose_generator(e, states, e.config.seed))
              out.append(py::dict(py::arg("epsilon") = r.epsilon, py::arg("functional") = r.functional,
                                  py::arg("residual_mean") = r.residual_mean,
                                  py::arg("residual_stderr") = r.residual_stderr,
                                  py::arg("scaling_ratio") = r.scaling_ratio));
            return out;
          },
          py::arg("states") = 200);
}
