#include "smc2fw/harness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "smc2fw/errors.hpp"
#include "smc2fw/fk_oracle.hpp"
#include "smc2fw/kalman.hpp"

namespace smc2fw {
namespace fs = std::filesystem;

ModelKind parse_model(const std::string& s) {
  if (s == "lg") return ModelKind::lg;
  if (s == "levy") return ModelKind::levy;
  if (s == "finite") return ModelKind::finite;
  throw std::invalid_argument("unknown model '" + s + "' (lg, levy, finite)");
}

Algo parse_algo(const std::string& s) {
  if (s == "kalman-ibis") return Algo::kalman_ibis;
  if (s == "smc2") return Algo::smc2;
  if (s == "smc2fw") return Algo::smc2fw;
  throw std::invalid_argument("unknown algorithm '" + s + "' (kalman-ibis, smc2, smc2fw)");
}

std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::lg: return "lg";
    case ModelKind::levy: return "levy";
    case ModelKind::finite: return "finite";
  }
  return "?";
}

std::string to_string(Algo a) {
  switch (a) {
    case Algo::kalman_ibis: return "kalman-ibis";
    case Algo::smc2: return "smc2";
    case Algo::smc2fw: return "smc2fw";
  }
  return "?";
}

void RunConfig::validate() const {
  if (n_theta == 0 || n_x == 0 || replicates == 0) {
    throw std::invalid_argument("n-theta, n-x and replicates must be >= 1");
  }
  if (algo == Algo::smc2fw && window < 2) throw std::invalid_argument("window must be >= 2");
  if (algo == Algo::kalman_ibis && model != ModelKind::lg) {
    throw std::invalid_argument("kalman-ibis needs the lg model");
  }
  if (!data.empty() && !fs::exists(data)) throw std::invalid_argument("no such file: " + data);
  if (!reference.empty() && !fs::exists(reference)) {
    throw std::invalid_argument("no such file: " + reference);
  }
  if (data.empty() && steps == 0) throw std::invalid_argument("simulated runs need steps >= 1");
  lg.validate();
  levy.validate();
  finite.validate();
}

BlockConfig RunConfig::block_config(std::uint64_t replicate_seed) const {
  BlockConfig b;
  b.window = window;
  b.bandwidth = bandwidth;
  b.bandwidth_rule_a3 = bandwidth_rule_a3;
  b.coupling = coupling;
  b.smc.n_theta = n_theta;
  b.smc.n_x = n_x;
  b.smc.ess_threshold = ess_threshold;
  b.smc.pmmh_sweeps = pmmh_sweeps;
  b.smc.predict_samples = predict_samples;
  b.smc.seed = replicate_seed;
  return b;
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("not a boolean: " + v);
}

Vec parse_list(const std::string& v) {
  Vec out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"run.model", [](RunConfig& c, const std::string& v) { c.model = parse_model(v); }},
      {"run.algo", [](RunConfig& c, const std::string& v) { c.algo = parse_algo(v); }},
      {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
      {"run.data_seed", [](RunConfig& c, const std::string& v) { c.data_seed = std::stoull(v); }},
      {"run.replicates", [](RunConfig& c, const std::string& v) { c.replicates = std::stoul(v); }},
      {"run.steps", [](RunConfig& c, const std::string& v) { c.steps = std::stoul(v); }},
      {"run.data", [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"run.reference", [](RunConfig& c, const std::string& v) { c.reference = v; }},
      {"run.out", [](RunConfig& c, const std::string& v) { c.out = v; }},
      {"run.timing", [](RunConfig& c, const std::string& v) { c.timing = parse_bool(v); }},
      {"sampler.n_theta", [](RunConfig& c, const std::string& v) { c.n_theta = std::stoul(v); }},
      {"sampler.n_x", [](RunConfig& c, const std::string& v) { c.n_x = std::stoul(v); }},
      {"sampler.window", [](RunConfig& c, const std::string& v) { c.window = std::stoul(v); }},
      {"sampler.bandwidth", [](RunConfig& c, const std::string& v) { c.bandwidth = std::stod(v); }},
      {"sampler.bandwidth_rule_a3",
       [](RunConfig& c, const std::string& v) { c.bandwidth_rule_a3 = parse_bool(v); }},
      {"sampler.coupling",
       [](RunConfig& c, const std::string& v) {
         if (v == "conditional") c.coupling = BridgeCoupling::conditional;
         else if (v == "product") c.coupling = BridgeCoupling::product;
         else throw std::invalid_argument("coupling must be conditional or product");
       }},
      {"sampler.ess_threshold",
       [](RunConfig& c, const std::string& v) { c.ess_threshold = std::stod(v); }},
      {"sampler.pmmh_sweeps",
       [](RunConfig& c, const std::string& v) { c.pmmh_sweeps = std::stoul(v); }},
      {"sampler.predict_samples",
       [](RunConfig& c, const std::string& v) { c.predict_samples = std::stoul(v); }},
      {"lg.tau0", [](RunConfig& c, const std::string& v) { c.lg.tau0 = std::stod(v); }},
      {"lg.tau", [](RunConfig& c, const std::string& v) { c.lg.tau = std::stod(v); }},
      {"lg.lambda", [](RunConfig& c, const std::string& v) { c.lg.lambda = std::stod(v); }},
      {"levy.kappa", [](RunConfig& c, const std::string& v) { c.levy.kappa = std::stod(v); }},
      {"levy.delta", [](RunConfig& c, const std::string& v) { c.levy.delta = std::stod(v); }},
      {"levy.gamma", [](RunConfig& c, const std::string& v) { c.levy.gamma = std::stod(v); }},
      {"levy.lambda", [](RunConfig& c, const std::string& v) { c.levy.lambda = std::stod(v); }},
      {"finite.means", [](RunConfig& c, const std::string& v) { c.finite.means = parse_list(v); }},
      {"finite.obs_sd", [](RunConfig& c, const std::string& v) { c.finite.obs_sd = std::stod(v); }},
      {"finite.rho", [](RunConfig& c, const std::string& v) { c.finite.rho = std::stod(v); }},
  };
  return m;
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& m = setters();
  auto it = m.find(key);
  if (it == m.end() && key.find('.') == std::string::npos) {
    // Top-level keys may omit the run/sampler section.
    it = m.find("run." + key);
    if (it == m.end()) it = m.find("sampler." + key);
  }
  if (it == m.end()) throw std::invalid_argument("unknown config key: " + key);
  try {
    it->second(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config key " + key + ": " + e.what());
  }
}

}  // namespace

void apply_config_text(RunConfig& cfg, const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  pt::ini_parser::read_ini(is, tree);
  for (const auto& [section, child] : tree) {
    if (child.empty()) {
      set_key(cfg, section, child.data());
      continue;
    }
    for (const auto& [key, leaf] : child) set_key(cfg, section + "." + key, leaf.data());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str());
  return cfg;
}

std::unique_ptr<StateSpaceModel> make_model(const RunConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::lg: return std::make_unique<LinearGaussianModel>(cfg.lg);
    case ModelKind::levy: return std::make_unique<LevySVModel>(cfg.levy);
    case ModelKind::finite: return std::make_unique<FiniteHmmModel>(cfg.finite);
  }
  throw std::logic_error("unreachable");
}

Vec true_theta(const RunConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::lg: return LinearGaussianModel(cfg.lg).true_theta();
    case ModelKind::levy: return LevySVModel(cfg.levy).true_theta();
    case ModelKind::finite: return FiniteHmmModel(cfg.finite).true_theta();
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_record_header(std::ostream& os, const RecordLayout& layout) {
  os << "time,block";
  for (const auto& n : layout.theta_names) os << ",mean_" << n;
  for (const auto& n : layout.theta_names) os << ",sd_" << n;
  for (std::size_t k = 0; k < layout.dim_state; ++k) os << ",state_" << k;
  if (layout.prediction) {
    for (std::size_t k = 0; k < layout.dim_state; ++k) os << ",pred_" << k;
  }
  os << ",ess,log_evidence_increment,rejuvenated,acceptance,wall_ms\n";
}

void write_record(std::ostream& os, const RecordLayout& layout, const StepRecord& r) {
  os << r.time << ',' << r.block;
  for (double v : r.theta_mean) os << ',' << format_double(v);
  for (double v : r.theta_sd) os << ',' << format_double(v);
  for (double v : r.state_mean) os << ',' << format_double(v);
  if (layout.prediction) {
    for (std::size_t k = 0; k < layout.dim_state; ++k) {
      os << ',' << format_double(k < r.prediction.size() ? r.prediction[k] : NAN);
    }
  }
  os << ',' << format_double(r.ess) << ',' << format_double(r.log_evidence_increment) << ','
     << (r.rejuvenated ? 1 : 0) << ',' << format_double(r.acceptance) << ','
     << format_double(r.wall_ms) << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IngestionError(where + ": cannot parse '" + s + "'");
  }
  return v;
}

bool starts_with(const std::string& s, const std::string& p) {
  return s.compare(0, p.size(), p) == 0;
}

}  // namespace

RecordFile parse_records(std::istream& is) {
  RecordFile f;
  std::string line;
  if (!std::getline(is, line)) throw IngestionError("empty record file");
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "time") throw IngestionError("not a record file");
  for (const auto& h : header) {
    if (starts_with(h, "mean_")) f.layout.theta_names.push_back(h.substr(5));
    if (starts_with(h, "pred_")) f.layout.prediction = true;
  }
  f.layout.dim_state = 0;
  for (const auto& h : header) f.layout.dim_state += starts_with(h, "state_") ? 1 : 0;
  const std::size_t d = f.layout.theta_names.size();
  const std::size_t ds = f.layout.dim_state;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw IngestionError("line " + std::to_string(lineno) + ": wrong number of fields");
    }
    const std::string where = "line " + std::to_string(lineno);
    StepRecord r;
    std::size_t c = 0;
    r.time = std::stoul(cells[c++]);
    r.block = std::stoul(cells[c++]);
    for (std::size_t k = 0; k < d; ++k) r.theta_mean.push_back(parse_double(cells[c++], where));
    for (std::size_t k = 0; k < d; ++k) r.theta_sd.push_back(parse_double(cells[c++], where));
    for (std::size_t k = 0; k < ds; ++k) r.state_mean.push_back(parse_double(cells[c++], where));
    if (f.layout.prediction) {
      for (std::size_t k = 0; k < ds; ++k) r.prediction.push_back(parse_double(cells[c++], where));
    }
    r.ess = parse_double(cells[c++], where);
    r.log_evidence_increment = parse_double(cells[c++], where);
    r.rejuvenated = cells[c++] == "1";
    r.acceptance = parse_double(cells[c++], where);
    r.wall_ms = parse_double(cells[c++], where);
    f.records.push_back(std::move(r));
  }
  return f;
}

RecordFile read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  return parse_records(in);
}

// ---------------------------------------------------------------------------

Vec read_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  Vec y;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> column;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (!column) {
      // Header row if the first cell is not a number.
      char* end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (end == cells[0].c_str()) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (cells[i] == "y") column = i;
        }
        if (!column) throw IngestionError(path + ": header has no 'y' column");
        continue;
      }
      column = cells.size() == 1 ? 0 : 1;
    }
    if (*column >= cells.size()) {
      throw IngestionError(path + " line " + std::to_string(lineno) + ": missing field");
    }
    y.push_back(parse_double(cells[*column], path + " line " + std::to_string(lineno)));
  }
  if (y.empty()) throw IngestionError(path + ": no observations");
  return y;
}

void write_series(const std::string& path, const Vec& y, const Vec& states,
                  std::size_t dim_state) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "time,y";
  for (std::size_t k = 0; k < dim_state; ++k) os << ",x" << k;
  os << '\n';
  for (std::size_t n = 1; n <= y.size(); ++n) {
    os << n << ',' << format_double(y[n - 1]);
    for (std::size_t k = 0; k < dim_state; ++k) {
      os << ',' << format_double(states.empty() ? NAN : states[n * dim_state + k]);
    }
    os << '\n';
  }
}

Vec normalize_returns(const Vec& prices) {
  if (prices.size() < 3) throw IngestionError("need at least 3 prices");
  Vec r(prices.size() - 1);
  for (std::size_t k = 1; k < prices.size(); ++k) r[k - 1] = std::log(prices[k] / prices[k - 1]);
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(r.size());
  double ss = 0.0, scale = 0.0;
  for (double v : r) {
    ss += (v - mean) * (v - mean);
    scale = std::max(scale, std::abs(v));
  }
  const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
  if (!(sd > 1e-12 * std::max(scale, 1e-300))) {
    throw IngestionError("returns have zero variance; cannot normalize");
  }
  for (auto& v : r) v /= sd;
  return r;
}

Vec ingest_prices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  Vec prices;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::string field = line;
    const auto cut = line.find_last_of(",; \t");
    if (cut != std::string::npos) field = line.substr(cut + 1);
    char* end = nullptr;
    const double p = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size()) {
      if (prices.empty() && lineno == 1) continue;  // header
      throw IngestionError("line " + std::to_string(lineno) + ": cannot parse price '" +
                           field + "'");
    }
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw IngestionError("line " + std::to_string(lineno) + ": price must be positive");
    }
    prices.push_back(p);
  }
  return normalize_returns(prices);
}

// ---------------------------------------------------------------------------

void run_algorithm(const RunConfig& cfg, const StateSpaceModel& model,
                   std::span<const double> y, std::size_t n_steps, std::uint64_t seed,
                   const RecordSink& sink) {
  const BlockConfig bc = cfg.block_config(seed);
  switch (cfg.algo) {
    case Algo::kalman_ibis: {
      const auto* lg = dynamic_cast<const LinearGaussianModel*>(&model);
      if (!lg) throw std::invalid_argument("kalman-ibis needs the lg model");
      KalmanLikelihood lik(*lg, y);
      run_smc2(lik, n_steps, bc.smc, sink);
      return;
    }
    case Algo::smc2: {
      ParticleLikelihood lik(model, y, bc.smc.n_x);
      run_smc2(lik, n_steps, bc.smc, sink);
      return;
    }
    case Algo::smc2fw:
      run_online(model, y, n_steps, bc, sink);
      return;
  }
}

namespace {

std::string replicate_name(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replicate_%03zu.csv", r);
  return buf;
}

}  // namespace

Vec read_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  if (starts_with(first, "time,")) {
    const RecordFile f = parse_records(in);
    if (f.records.empty()) throw IngestionError(path + ": no records");
    return f.records.back().theta_mean;
  }
  if (starts_with(first, "parameter,")) {
    Vec out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() < 2) throw IngestionError(path + ": malformed summary");
      if (starts_with(cells[0], "state")) continue;
      out.push_back(parse_double(cells[1], path));
    }
    return out;
  }
  throw IngestionError(path + ": neither a record file nor a summary");
}

ExperimentResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const auto model = make_model(cfg);
  fs::create_directories(cfg.out);

  Vec y;
  if (!cfg.data.empty()) {
    y = read_series(cfg.data);
  } else {
    Engine eng = stream(cfg.data_seed.value_or(cfg.seed), StreamTag::simulate);
    const Vec theta = true_theta(cfg);
    const SimulatedPath path = simulate(*model, theta, cfg.steps, eng);
    y = path.y;
    write_series((fs::path(cfg.out) / "data.csv").string(), path.y, path.states,
                 path.dim_state);
  }
  const std::size_t n_steps = cfg.steps == 0 ? y.size() : std::min(cfg.steps, y.size());

  RecordLayout layout{model->theta_names(), model->dim_state(), cfg.predict_samples > 0};
  ExperimentResult result;
  for (std::size_t r = 0; r < cfg.replicates; ++r) {
    std::vector<StepRecord> records;
    records.reserve(n_steps);
    const RecordSink sink = [&](const StepRecord& rec) {
      records.push_back(rec);
      if (!cfg.timing) records.back().wall_ms = 0.0;
    };
    try {
      run_algorithm(cfg, *model, y, n_steps, cfg.seed + r, sink);
    } catch (const DegenerateWeightsError& e) {
      result.aborted = true;
      result.diagnostic = "replicate " + std::to_string(r) + " aborted after " +
                          std::to_string(records.size()) + " steps: " + e.what();
    }
    const std::string file = (fs::path(cfg.out) / replicate_name(r)).string();
    std::ofstream os(file);
    write_record_header(os, layout);
    for (const auto& rec : records) write_record(os, layout, rec);
    result.files.push_back(file);
    if (result.aborted) {
      std::ofstream diag(fs::path(cfg.out) / "diagnostic.txt");
      diag << result.diagnostic << '\n';
      return result;
    }
    result.finals.push_back(records.back().theta_mean);
  }

  std::optional<Vec> ref;
  if (!cfg.reference.empty()) ref = read_reference(cfg.reference);
  const std::size_t d = layout.theta_names.size();
  if (ref && ref->size() != d) throw IngestionError("reference has the wrong dimension");
  std::ofstream os(fs::path(cfg.out) / "summary.csv");
  os << "parameter,mean,sd,mse,reference\n";
  const double R = static_cast<double>(result.finals.size());
  for (std::size_t k = 0; k < d; ++k) {
    double m = 0.0;
    for (const auto& f : result.finals) m += f[k];
    m /= R;
    double v = 0.0, mse = 0.0;
    for (const auto& f : result.finals) {
      v += (f[k] - m) * (f[k] - m);
      if (ref) mse += (f[k] - (*ref)[k]) * (f[k] - (*ref)[k]);
    }
    const double sd = R > 1 ? std::sqrt(v / (R - 1.0)) : 0.0;
    os << layout.theta_names[k] << ',' << format_double(m) << ',' << format_double(sd) << ','
       << format_double(ref ? mse / R : NAN) << ',' << format_double(ref ? (*ref)[k] : NAN)
       << '\n';
  }
  return result;
}

std::string report(const std::string& dir) {
  std::ostringstream os;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (starts_with(name, "replicate_")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError(dir + ": no replicate files");
  os << std::setprecision(6);
  for (const auto& p : files) {
    const RecordFile f = read_records(p.string());
    os << p.filename().string() << ": " << f.records.size() << " steps";
    if (f.records.empty()) {
      os << '\n';
      continue;
    }
    const auto& last = f.records.back();
    std::size_t rejuv = 0;
    double wall = 0.0;
    for (const auto& r : f.records) {
      rejuv += r.rejuvenated ? 1 : 0;
      wall += r.wall_ms;
    }
    os << ", " << rejuv << " rejuvenations, " << wall << " ms\n";
    for (std::size_t k = 0; k < f.layout.theta_names.size(); ++k) {
      os << "  " << f.layout.theta_names[k] << " = " << last.theta_mean[k] << " (sd "
         << last.theta_sd[k] << ")\n";
    }
    // Mean step cost per quarter of the run.
    const std::size_t q = std::max<std::size_t>(1, f.records.size() / 4);
    os << "  ms/step by quarter:";
    for (std::size_t s = 0; s < f.records.size(); s += q) {
      double w = 0.0;
      const std::size_t e = std::min(f.records.size(), s + q);
      for (std::size_t i = s; i < e; ++i) w += f.records[i].wall_ms;
      os << ' ' << w / static_cast<double>(e - s);
    }
    os << '\n';
  }
  const fs::path summary = fs::path(dir) / "summary.csv";
  if (fs::exists(summary)) {
    std::ifstream in(summary);
    os << "summary:\n" << in.rdbuf();
  }
  return os.str();
}

// ---------------------------------------------------------------------------

bool VerifyReport::pass() const {
  const bool bias_ok =
      bias_checked == 0 || static_cast<double>(bias_checked - bias_failures) >=
                               bias_pass_fraction * static_cast<double>(bias_checked) - 1e-9;
  return contraction_violations == 0 && bias_ok;
}

VerifyReport verify_theory(const VerifySpec& spec) {
  VerifyReport rep;
  rep.bias_pass_fraction = spec.bias_pass_fraction;
  std::uniform_int_distribution<std::size_t> states(2, 5);
  std::uniform_int_distribution<std::size_t> steps(1, 8);
  std::uniform_real_distribution<double> floor(0.2, 0.9);
  for (std::size_t trial = 0; trial < spec.contraction_trials; ++trial) {
    Engine eng = stream(spec.seed, StreamTag::test, {1, trial});
    const std::size_t m = states(eng);
    const std::size_t T = steps(eng);
    const FiniteFK fk = random_fk(m, T, floor(eng), eng);
    std::uniform_int_distribution<std::size_t> pick(0, T);
    std::size_t s = pick(eng), t = pick(eng);
    if (s > t) std::swap(s, t);
    const Vector mu = random_simplex(m, eng);
    const Vector rho = random_simplex(m, eng);
    ContractionResult c = contraction_check(fk, s, t, mu, rho);
    c.bound *= spec.bound_factor;
    ++rep.contraction_checked;
    if (!c.holds()) {
      ++rep.contraction_violations;
      std::ostringstream os;
      os << std::setprecision(17) << "contraction trial " << trial << ": lhs " << c.lhs
         << " > bound " << c.bound << " (s=" << s << ", t=" << t << ", eps=" << c.epsilon
         << ", delta=" << c.delta << ")";
      rep.lines.push_back(os.str());
    }
  }
  for (std::size_t trial = 0; trial < spec.bias_trials; ++trial) {
    Engine eng = stream(spec.seed, StreamTag::test, {2, trial});
    const std::size_t m = states(eng);
    const BlockChain chain = random_block_chain(m, 10, floor(eng), 0.1, eng);
    const Vector phi = random_simplex(m, eng) * static_cast<double>(m);
    const Vec b = block_bias_profile(chain, 5, phi);
    const double worst = *std::max_element(b.begin() + 1, b.end());
    ++rep.bias_checked;
    if (!(worst <= spec.bias_ratio * b[1])) {
      ++rep.bias_failures;
      std::ostringstream os;
      os << std::setprecision(17) << "bias trial " << trial << ": max B " << worst << " > "
         << spec.bias_ratio << " x B(2T) " << b[1];
      rep.lines.push_back(os.str());
    }
  }
  std::ostringstream verdict;
  verdict << "contraction " << rep.contraction_checked - rep.contraction_violations << "/"
          << rep.contraction_checked << ", bias " << rep.bias_checked - rep.bias_failures << "/"
          << rep.bias_checked << (rep.pass() ? " PASS" : " FAIL");
  rep.lines.push_back(verdict.str());
  return rep;
}

}  // namespace smc2fw
