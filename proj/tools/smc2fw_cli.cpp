// Command-line front end: simulate, run, ingest, verify, report.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "smc2fw/errors.hpp"
#include "smc2fw/harness.hpp"

using namespace smc2fw;

namespace {

struct Flags {
  std::string config, algo, model, data, reference, out, coupling;
  std::uint64_t seed = 0;
  std::size_t n_theta = 0, n_x = 0, window = 0, pmmh_sweeps = 0, replicates = 0, steps = 0,
              predict = 0;
  double bandwidth = 0, ess_threshold = 0;
  bool rule_a3 = false, no_timing = false;
};

void add_sampler_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "INI config file; flags override it");
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--model", f.model, "lg | levy | finite");
  app->add_option("--steps", f.steps, "number of observations to use or simulate");
  app->add_option("--out", f.out, "output directory");
}

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("--algo", f.algo, "kalman-ibis | smc2 | smc2fw");
  app->add_option("--n-theta", f.n_theta, "number of theta-particles N");
  app->add_option("--n-x", f.n_x, "state particles per theta-particle");
  app->add_option("--window", f.window, "block length T");
  app->add_option("--bandwidth", f.bandwidth, "kernel bandwidth h (log scale)");
  app->add_flag("--bandwidth-rule-a3", f.rule_a3, "h = N^(-1/(2(d+1)))");
  app->add_option("--coupling", f.coupling, "conditional | product");
  app->add_option("--ess-threshold", f.ess_threshold, "resample when ESS < threshold * N");
  app->add_option("--pmmh-sweeps", f.pmmh_sweeps, "PMMH sweeps per rejuvenation");
  app->add_option("--predict", f.predict, "samples per particle for one-step prediction");
  app->add_option("--replicates", f.replicates, "independent runs (seed + index)");
  app->add_option("--data", f.data, "observation file (default: simulate)");
  app->add_option("--reference", f.reference, "record or summary file for MSE");
  app->add_flag("--no-timing", f.no_timing, "write wall_ms = 0 for byte-stable output");
}

RunConfig build_config(CLI::App* app, const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  auto given = [&](const char* name) {
    const auto* opt = app->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (given("--seed")) cfg.seed = f.seed;
  if (given("--model")) cfg.model = parse_model(f.model);
  if (given("--steps")) cfg.steps = f.steps;
  if (given("--out")) cfg.out = f.out;
  if (given("--algo")) cfg.algo = parse_algo(f.algo);
  if (given("--n-theta")) cfg.n_theta = f.n_theta;
  if (given("--n-x")) cfg.n_x = f.n_x;
  if (given("--window")) cfg.window = f.window;
  if (given("--bandwidth")) cfg.bandwidth = f.bandwidth;
  if (given("--bandwidth-rule-a3")) cfg.bandwidth_rule_a3 = true;
  if (given("--coupling")) {
    cfg.coupling = f.coupling == "product" ? BridgeCoupling::product : BridgeCoupling::conditional;
    if (f.coupling != "product" && f.coupling != "conditional") {
      throw std::invalid_argument("coupling must be conditional or product");
    }
  }
  if (given("--ess-threshold")) cfg.ess_threshold = f.ess_threshold;
  if (given("--pmmh-sweeps")) cfg.pmmh_sweeps = f.pmmh_sweeps;
  if (given("--predict")) cfg.predict_samples = f.predict;
  if (given("--replicates")) cfg.replicates = f.replicates;
  if (given("--data")) cfg.data = f.data;
  if (given("--reference")) cfg.reference = f.reference;
  if (given("--no-timing")) cfg.timing = false;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online static-parameter inference for state-space models"};
  app.require_subcommand(1);

  Flags sim_f, run_f, ing_f, ver_f, rep_f;

  auto* sim = app.add_subcommand("simulate", "simulate a dataset from a model");
  add_sampler_flags(sim, sim_f);

  auto* run = app.add_subcommand("run", "run a sampler over a dataset");
  add_sampler_flags(run, run_f);
  add_run_flags(run, run_f);

  auto* ing = app.add_subcommand("ingest", "prices to normalized log returns");
  ing->add_option("--data", ing_f.data, "price file")->required();
  ing->add_option("--out", ing_f.out, "output series file")->required();

  std::size_t contraction_trials = 100, bias_trials = 50;
  auto* ver = app.add_subcommand("verify", "randomized checks of the finite-space theory");
  ver->add_option("--seed", ver_f.seed, "seed");
  ver->add_option("--contraction-trials", contraction_trials);
  ver->add_option("--bias-trials", bias_trials);
  ver->add_option("--out", ver_f.out, "also write the report to this file");

  auto* rep = app.add_subcommand("report", "summarize an output directory");
  rep->add_option("--out", rep_f.out, "directory written by run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      RunConfig cfg = build_config(sim, sim_f);
      if (cfg.steps == 0) throw std::invalid_argument("simulate needs --steps");
      const auto model = make_model(cfg);
      Engine eng = stream(cfg.data_seed.value_or(cfg.seed), StreamTag::simulate);
      const SimulatedPath path = simulate(*model, true_theta(cfg), cfg.steps, eng);
      std::filesystem::create_directories(cfg.out);
      const auto file = (std::filesystem::path(cfg.out) / "data.csv").string();
      write_series(file, path.y, path.states, path.dim_state);
      std::cout << file << '\n';
      return 0;
    }
    if (*run) {
      const RunConfig cfg = build_config(run, run_f);
      const ExperimentResult res = run_experiment(cfg);
      for (const auto& f : res.files) std::cout << f << '\n';
      if (res.aborted) {
        std::cerr << res.diagnostic << '\n';
        return 2;
      }
      return 0;
    }
    if (*ing) {
      const Vec y = ingest_prices(ing_f.data);
      write_series(ing_f.out, y, {}, 0);
      std::cout << y.size() << " returns\n";
      return 0;
    }
    if (*ver) {
      VerifySpec spec;
      spec.seed = ver_f.seed;
      spec.contraction_trials = contraction_trials;
      spec.bias_trials = bias_trials;
      const VerifyReport r = verify_theory(spec);
      std::ofstream file;
      if (!ver_f.out.empty()) file.open(ver_f.out);
      for (const auto& line : r.lines) {
        std::cout << line << '\n';
        if (file.is_open()) file << line << '\n';
      }
      return r.pass() ? 0 : 1;
    }
    if (*rep) {
      std::cout << report(rep_f.out);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
