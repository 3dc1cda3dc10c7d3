#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "resdiff/diffusivity.hpp"
#include "resdiff/errors.hpp"
#include "resdiff/lattice_oracle.hpp"
#include "resdiff/map_core.hpp"
#include "resdiff/map_io.hpp"
#include "resdiff/minor_check.hpp"
#include "resdiff/process.hpp"
#include "resdiff/torus_transfer.hpp"

namespace py = pybind11;
using namespace resdiff;

namespace {

py::dict lattice_dict(const LatticeDistribution& w) {
  py::dict out;
  for (std::size_t i = 0; i < w.support.size(); ++i) {
    py::tuple key(w.support[i].size());
    for (std::size_t c = 0; c < w.support[i].size(); ++c) key[c] = w.support[i][c];
    out[key] = w.prob[i];
  }
  return out;
}

py::object exact_or_none(const std::optional<std::vector<Rational>>& v) {
  if (!v) return py::none();
  py::list out;
  for (const auto& r : *v) out.append(r.to_string());
  return out;
}

KernelOptions kernel_options(double tail_tol, int threads) {
  KernelOptions o;
  o.tail_tol = tail_tol;
  o.threads = threads;
  return o;
}

DoeblinStage parse_stage(const std::string& s) {
  if (s == "defrag") return DoeblinStage::Defrag;
  if (s == "one_step") return DoeblinStage::OneStep;
  if (s == "two_step") return DoeblinStage::TwoStep;
  throw Error(ErrorCode::InvalidArgument, "unknown stage " + s);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Residual diffusivity toolkit for noisy expanding Bernoulli maps";
  py::register_exception<Error>(m, "ResdiffError", PyExc_RuntimeError);

  py::class_<PeriodicMap>(m, "PeriodicMap")
      .def_property_readonly("dim", &PeriodicMap::dim)
      .def("apply", [](const PeriodicMap& map, std::vector<double> x) { return map.apply(x); });
  py::class_<BernoulliMap, PeriodicMap>(m, "BernoulliMap")
      .def_property_readonly("num_cells", &BernoulliMap::num_cells)
      .def_property_readonly("min_volume", &BernoulliMap::min_volume)
      .def_property_readonly("max_volume", &BernoulliMap::max_volume)
      .def("to_json", [](const BernoulliMap& map, const std::string& name) { return map_to_json(map, name); },
           py::arg("name") = "");
  py::class_<ShearMap, PeriodicMap>(m, "ShearMap").def(py::init<>());
  py::class_<TranslationMap, PeriodicMap>(m, "TranslationMap").def(py::init<Point>());

  m.def("builtin_map", &builtin_map, py::arg("name"));
  m.def("load_map_file", &load_map_file, py::arg("path"));
  m.def("load_map_json", &load_map_json, py::arg("text"));
  m.def("validate_map", [](const BernoulliMap& map) {
    auto r = validate_map(map);
    py::list items, errors;
    for (const auto& it : r.items) items.append(py::dict(py::arg("name") = it.name, py::arg("pass") = it.pass,
                                                          py::arg("detail") = it.detail));
    for (auto code : r.errors) errors.append(std::string(to_string(code)));
    return py::dict(py::arg("ok") = r.ok(), py::arg("items") = items, py::arg("errors") = errors);
  });

  m.def("theta_eps", [](const BernoulliMap& map, std::vector<double> x, double eps) { return theta_eps(map, x, eps); },
        py::arg("map"), py::arg("x"), py::arg("eps"));
  m.def(
      "theta_bar",
      [](const BernoulliMap& map, double eps, bool exact, std::size_t samples, std::uint64_t seed) {
        ThetaBarOptions o;
        o.samples = samples;
        o.seed = seed;
        auto t = theta_bar(map, eps, exact ? ThetaMode::Exact : ThetaMode::MonteCarlo, o);
        return py::dict(py::arg("value") = t.value, py::arg("error") = t.error,
                        py::arg("exact") = t.exact ? py::cast(t.exact->to_string()) : py::none());
      },
      py::arg("map"), py::arg("eps"), py::arg("exact") = true, py::arg("samples") = 100'000, py::arg("seed") = 1);
  m.def("deterministic_orbit",
        [](const PeriodicMap& map, std::vector<double> x, std::size_t n) { return deterministic_orbit(map, x, n); },
        py::arg("map"), py::arg("x"), py::arg("n"));

  m.def("d_w0", [](const BernoulliMap& map) {
    auto d = d_w0(map);
    return py::dict(py::arg("value") = d.value, py::arg("exact") = exact_or_none(d.exact));
  });
  m.def(
      "w_check",
      [](const BernoulliMap& map, std::vector<double> z, double eps) {
        return lattice_dict(w_check_distribution(map, z, eps, DistributionMode::Exact));
      },
      py::arg("map"), py::arg("z"), py::arg("eps"));
  m.def(
      "d_w_check",
      [](const BernoulliMap& map, double eps) {
        auto d = d_w_check(map, eps);
        return py::dict(py::arg("value") = d.value.value, py::arg("exact") = exact_or_none(d.value.exact),
                        py::arg("theta_bar") = d.theta_bar, py::arg("discrepancy") = d.discrepancy);
      },
      py::arg("map"), py::arg("eps"));

  m.def(
      "simulate",
      [](const PeriodicMap& map, double eps, std::size_t n, std::size_t trajectories, std::uint64_t seed,
         std::optional<std::vector<double>> start, std::vector<std::size_t> observe, int threads) {
        EnsembleOptions o;
        o.observe_times = std::move(observe);
        o.threads = threads;
        auto init = start ? InitialDistribution::delta(*start) : InitialDistribution::uniform(map.dim());
        auto r = simulate_ensemble(map, init, eps, n, trajectories, seed, o);
        py::list out;
        for (const auto& mo : r.moments) {
          out.append(py::dict(py::arg("time") = mo.time, py::arg("mean") = mo.mean,
                              py::arg("covariance") = mo.covariance, py::arg("mean_se") = mo.mean_se));
        }
        return out;
      },
      py::arg("map"), py::arg("eps"), py::arg("n"), py::arg("trajectories"), py::arg("seed") = 1,
      py::arg("start") = py::none(), py::arg("observe") = std::vector<std::size_t>{}, py::arg("threads") = 1);
  m.def(
      "variance_rate",
      [](const PeriodicMap& map, double eps, std::vector<double> v, std::size_t n, std::size_t trajectories,
         std::uint64_t seed, int threads) {
        RateOptions o;
        o.threads = threads;
        auto r = variance_rate_mc(map, eps, v, n, trajectories, seed, o);
        return py::dict(py::arg("rate") = r.rate, py::arg("se") = r.se);
      },
      py::arg("map"), py::arg("eps"), py::arg("v"), py::arg("n"), py::arg("trajectories"), py::arg("seed") = 1,
      py::arg("threads") = 1);

  m.def(
      "kv_rate",
      [](const PeriodicMap& map, double eps, std::size_t grid_cells, std::vector<double> v, int threads) {
        auto k = build_displacement_kernel(map, eps, UlamGrid(map.dim(), grid_cells), kernel_options(1e-12, threads));
        auto c = corrector_solve(k, CorrectorMode::Linear);
        return py::dict(py::arg("rate") = kv_rate(k, c, v), py::arg("residual") = c.residual,
                        py::arg("drift_mean") = c.drift_mean);
      },
      py::arg("map"), py::arg("eps"), py::arg("grid_cells"), py::arg("v"), py::arg("threads") = 1);
  m.def(
      "mixing_time",
      [](const PeriodicMap& map, double eps, std::size_t grid_cells, double threshold) {
        auto k = build_displacement_kernel(map, eps, UlamGrid(map.dim(), grid_cells));
        MixingOptions o;
        o.threshold = threshold;
        o.mode = MixingMode::MatVec;
        return mixing_time(k, o).time;
      },
      py::arg("map"), py::arg("eps"), py::arg("grid_cells"), py::arg("threshold") = 0.5);

  m.def(
      "residual_sweep",
      [](const BernoulliMap& map, std::vector<double> eps, std::vector<double> v, std::size_t trajectories,
         std::size_t n_per_log, std::size_t grid_cells, std::uint64_t seed, int threads) {
        SweepBudget b;
        b.trajectories = trajectories;
        b.n_per_log = n_per_log;
        b.grid_cells = grid_cells;
        b.seed = seed;
        b.threads = threads;
        auto rep = residual_sweep(map, std::move(eps), v, b);
        py::list rows;
        for (const auto& r : rep.rows) {
          rows.append(py::dict(py::arg("eps") = r.eps, py::arg("n") = r.n, py::arg("rate") = r.rate,
                               py::arg("rate_se") = r.rate_se, py::arg("kv_rate") = r.kv_rate,
                               py::arg("t_mix") = r.t_mix, py::arg("c_emp") = r.c_emp));
        }
        return py::dict(py::arg("rows") = rows, py::arg("c_min") = rep.c_min, py::arg("c_env") = rep.c_env,
                        py::arg("lower_ok") = rep.lower_ok, py::arg("envelope_ok") = rep.envelope_ok);
      },
      py::arg("map"), py::arg("eps"), py::arg("v"), py::arg("trajectories") = 100'000, py::arg("n_per_log") = 200,
      py::arg("grid_cells") = 0, py::arg("seed") = 1, py::arg("threads") = 1);

  m.def(
      "bump_chain",
      [](const BernoulliMap& map, std::int64_t k, std::vector<int> s, double eps, std::size_t cells_per_unit) {
        BumpChainOptions o;
        o.cells_per_unit = cells_per_unit;
        auto r = verify_bump_chain(map, k, s, eps, o);
        return py::dict(py::arg("step_ratio") = r.step_ratio, py::arg("cumulative_ratio") = r.cumulative_ratio,
                        py::arg("a_fit") = r.a_fit, py::arg("beta_emp") = r.beta_emp,
                        py::arg("beta_theory") = r.beta_theory, py::arg("mass_error") = r.mass_error);
      },
      py::arg("map"), py::arg("k"), py::arg("s"), py::arg("eps"), py::arg("cells_per_unit") = 2048);
  m.def(
      "doeblin",
      [](const BernoulliMap& map, double x, double eps, const std::string& stage, std::size_t cells_per_unit) {
        DoeblinOptions o;
        o.cells_per_unit = cells_per_unit;
        auto r = verify_doeblin(map, x, eps, parse_stage(stage), o);
        return py::dict(py::arg("min_constant") = r.min_constant, py::arg("target_cube") = r.target_cube,
                        py::arg("theta") = r.theta);
      },
      py::arg("map"), py::arg("x"), py::arg("eps"), py::arg("stage"), py::arg("cells_per_unit") = 2048);

  py::class_<PeriodicChainSpec>(m, "PeriodicChainSpec")
      .def_property_readonly("states", &PeriodicChainSpec::states)
      .def_property_readonly("dim", &PeriodicChainSpec::dim)
      .def("to_json", [](const PeriodicChainSpec& s) { return spec_to_json(s); })
      .def_static("from_json", &spec_from_json);
  m.def("random_spec", &random_spec, py::arg("seed"), py::arg("states") = 5, py::arg("lo") = -2, py::arg("hi") = 2,
        py::arg("extra_permutations") = 2);
  m.def("equality_case_spec", &equality_case_spec);
  m.def(
      "spec_from_map",
      [](const PeriodicMap& map, double eps, std::size_t grid_cells) { return build_spec_from_map(map, eps, grid_cells); },
      py::arg("map"), py::arg("eps"), py::arg("grid_cells"));
  m.def(
      "dual_rate",
      [](const PeriodicChainSpec& spec, std::vector<double> v) {
        auto r = exact_variance_rate_dual(spec, v);
        return py::dict(py::arg("rate_a") = r.rate_a, py::arg("rate_b") = r.rate_b, py::arg("diff") = r.diff,
                        py::arg("n") = r.n);
      },
      py::arg("spec"), py::arg("v"));
  m.def(
      "minorization_bound",
      [](const PeriodicChainSpec& spec, std::vector<double> v, std::optional<std::tuple<std::size_t, std::size_t, double>> stop) {
        std::optional<StoppingSchedule> st;
        if (stop) st = StoppingSchedule{std::get<0>(*stop), std::get<1>(*stop), std::get<2>(*stop)};
        auto r = minorization_bound_check(spec, v, st);
        return py::dict(py::arg("rate") = r.rate, py::arg("bound") = r.bound, py::arg("pass") = r.pass);
      },
      py::arg("spec"), py::arg("v"), py::arg("stopping") = py::none());
}
