#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smc2fw/kde.hpp"
#include "smc2fw/models.hpp"
#include "smc2fw/smc2.hpp"
#include "smc2fw/smc2fw.hpp"

namespace smc2fw {

enum class ModelKind { lg, levy, finite };
enum class Algo { kalman_ibis, smc2, smc2fw };

ModelKind parse_model(const std::string& s);
Algo parse_algo(const std::string& s);
std::string to_string(ModelKind m);
std::string to_string(Algo a);

struct RunConfig {
  ModelKind model = ModelKind::lg;
  Algo algo = Algo::smc2fw;
  std::size_t n_theta = 200;
  std::size_t n_x = 100;
  std::size_t window = 125;
  double bandwidth = 0.01;
  bool bandwidth_rule_a3 = false;
  BridgeCoupling coupling = BridgeCoupling::conditional;
  double ess_threshold = 0.5;
  std::size_t pmmh_sweeps = 1;
  std::size_t predict_samples = 0;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> data_seed;  // defaults to seed
  std::size_t replicates = 1;
  std::size_t steps = 0;  // 0: whole series
  std::string data;       // observation file; empty: simulate
  std::string reference;
  std::string out = "out";
  bool timing = true;

  LinearGaussianParams lg;
  LevySVParams levy{1.5, 1.5, 0.2, 0.3, 1.0};
  FiniteHmmParams finite;

  void validate() const;
  BlockConfig block_config(std::uint64_t replicate_seed) const;
};

// INI-style file ("key = value" lines under [section] headers). Unknown keys
// are an error so typos do not pass silently.
RunConfig load_config(const std::string& path);
void apply_config_text(RunConfig& cfg, const std::string& text);

std::unique_ptr<StateSpaceModel> make_model(const RunConfig& cfg);
Vec true_theta(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Records on disk.

struct RecordLayout {
  std::vector<std::string> theta_names;
  std::size_t dim_state = 1;
  bool prediction = false;
};

std::string format_double(double v);
void write_record_header(std::ostream& os, const RecordLayout& layout);
void write_record(std::ostream& os, const RecordLayout& layout, const StepRecord& r);

struct RecordFile {
  RecordLayout layout;
  std::vector<StepRecord> records;
};
RecordFile read_records(const std::string& path);
RecordFile parse_records(std::istream& is);

// ---------------------------------------------------------------------------

// Observation series: one number per line, or CSV with a header holding a
// "y" column. Blank lines and lines starting with '#' are skipped.
Vec read_series(const std::string& path);
void write_series(const std::string& path, const Vec& y, const Vec& states,
                  std::size_t dim_state);

// Daily prices (last field of each line; an optional leading date column is
// ignored) to log returns scaled to unit sample variance.
Vec ingest_prices(const std::string& path);
Vec normalize_returns(const Vec& prices);

// Runs the chosen algorithm on y, calling sink per step.
void run_algorithm(const RunConfig& cfg, const StateSpaceModel& model,
                   std::span<const double> y, std::size_t n_steps, std::uint64_t seed,
                   const RecordSink& sink);

struct ExperimentResult {
  std::vector<std::string> files;
  std::vector<Vec> finals;  // final theta means per replicate
  bool aborted = false;
  std::string diagnostic;
};

// Writes replicate_XXX.csv per replicate and summary.csv into cfg.out.
ExperimentResult run_experiment(const RunConfig& cfg);

// Final theta means from a record file (last row) or a summary file.
Vec read_reference(const std::string& path);

// Human readable digest of an output directory.
std::string report(const std::string& dir);

// ---------------------------------------------------------------------------

struct VerifySpec {
  std::size_t contraction_trials = 100;
  std::size_t bias_trials = 50;
  std::uint64_t seed = 1;
  double bound_factor = 1.0;  // < 1 plants violations (negative control)
  double bias_ratio = 1.25;
  double bias_pass_fraction = 0.9;
};

struct VerifyReport {
  std::size_t contraction_checked = 0;
  std::size_t contraction_violations = 0;
  std::size_t bias_checked = 0;
  std::size_t bias_failures = 0;
  double bias_pass_fraction = 0.9;
  std::vector<std::string> lines;  // one per violation, then a verdict
  bool pass() const;
};

VerifyReport verify_theory(const VerifySpec& spec);

}  // namespace smc2fw
