#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "smc2fw/errors.hpp"
#include "smc2fw/harness.hpp"
#include "smc2fw/kalman.hpp"

namespace py = pybind11;
using namespace smc2fw;

namespace {

py::dict record_to_dict(const StepRecord& r) {
  py::dict d;
  d["time"] = r.time;
  d["block"] = r.block;
  d["theta_mean"] = r.theta_mean;
  d["theta_sd"] = r.theta_sd;
  d["state_mean"] = r.state_mean;
  d["prediction"] = r.prediction;
  d["ess"] = r.ess;
  d["log_evidence_increment"] = r.log_evidence_increment;
  d["rejuvenated"] = r.rejuvenated;
  d["acceptance"] = r.acceptance;
  d["wall_ms"] = r.wall_ms;
  return d;
}

RunConfig config_from(const std::string& text, const py::kwargs& kw) {
  RunConfig cfg;
  if (!text.empty()) apply_config_text(cfg, text);
  std::string extra;
  for (const auto& item : kw) {
    extra += py::str(item.first).cast<std::string>() + " = " +
             py::str(item.second).cast<std::string>() + "\n";
  }
  if (!extra.empty()) apply_config_text(cfg, extra);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Online static-parameter inference for state-space models";

  py::register_exception<ParameterDomainError>(m, "ParameterDomainError", PyExc_ValueError);
  py::register_exception<DegenerateWeightsError>(m, "DegenerateWeightsError", PyExc_RuntimeError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_ValueError);

  m.def(
      "kalman_loglik",
      [](double tau0, double tau, double lambda, const Vec& y) {
        return kalman_loglik({tau0, tau, lambda}, y);
      },
      py::arg("tau0"), py::arg("tau"), py::arg("lam"), py::arg("y"));

  m.def("bandwidth_rule_a3", &bandwidth_rule_a3, py::arg("n"), py::arg("d"));
  m.def("ess", [](const Vec& logw) { return ess_from_log(logw); }, py::arg("logw"));
  m.def("normalize_returns", &normalize_returns, py::arg("prices"));

  // Keyword arguments use config keys, e.g. model="finite", n_theta=50.
  m.def(
      "simulate",
      [](std::size_t steps, const std::string& config, py::kwargs kw) {
        RunConfig cfg = config_from(config, kw);
        const auto model = make_model(cfg);
        Engine eng = stream(cfg.data_seed.value_or(cfg.seed), StreamTag::simulate);
        const SimulatedPath p = simulate(*model, true_theta(cfg), steps, eng);
        py::dict d;
        d["y"] = p.y;
        d["states"] = p.states;
        d["dim_state"] = p.dim_state;
        return d;
      },
      py::arg("steps"), py::arg("config") = "");

  m.def(
      "run",
      [](const Vec& y, const std::string& config, py::kwargs kw) {
        RunConfig cfg = config_from(config, kw);
        const auto model = make_model(cfg);
        const std::size_t n = cfg.steps == 0 ? y.size() : std::min(cfg.steps, y.size());
        std::vector<StepRecord> recs;
        {
          py::gil_scoped_release release;
          run_algorithm(cfg, *model, y, n, cfg.seed,
                        [&](const StepRecord& r) { recs.push_back(r); });
        }
        py::list out;
        for (const auto& r : recs) out.append(record_to_dict(r));
        return out;
      },
      py::arg("y"), py::arg("config") = "");

  m.def(
      "verify",
      [](std::size_t contraction_trials, std::size_t bias_trials, std::uint64_t seed) {
        VerifySpec spec;
        spec.contraction_trials = contraction_trials;
        spec.bias_trials = bias_trials;
        spec.seed = seed;
        const VerifyReport r = verify_theory(spec);
        py::dict d;
        d["pass"] = r.pass();
        d["contraction_checked"] = r.contraction_checked;
        d["contraction_violations"] = r.contraction_violations;
        d["bias_checked"] = r.bias_checked;
        d["bias_failures"] = r.bias_failures;
        d["lines"] = r.lines;
        return d;
      },
      py::arg("contraction_trials") = 100, py::arg("bias_trials") = 50, py::arg("seed") = 1);
}
