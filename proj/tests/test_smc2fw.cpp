#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "smc2fw/kalman.hpp"
#include "smc2fw/smc2fw.hpp"
#include "test_util.hpp"

using namespace smc2fw;

namespace {

Vec lg_data(std::size_t n, std::uint64_t seed) {
  Engine eng = stream(seed, StreamTag::simulate);
  return lg_simulate({1.0, 1.0, 1.0}, n, eng).y;
}

BlockConfig small_config(std::size_t window, std::size_t n_theta, std::size_t n_x) {
  BlockConfig cfg;
  cfg.window = window;
  cfg.bandwidth = 0.05;
  cfg.smc.n_theta = n_theta;
  cfg.smc.n_x = n_x;
  return cfg;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) ++i; else ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST(FirstBlock, TinyRunShapes) {
  const auto model = lg_model({});
  const Vec y = lg_data(2, 1);
  const auto cfg = small_config(2, 4, 3);
  std::vector<StepRecord> recs;
  auto [st, bridge] = run_first_block(model, y, cfg, [&](const StepRecord& r) { recs.push_back(r); });
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].time, 1u);
  EXPECT_EQ(recs[1].time, 2u);
  EXPECT_EQ(bridge.n, 4u);
  EXPECT_EQ(bridge.dim_theta, 2u);
  EXPECT_EQ(bridge.dim_state, 1u);
  EXPECT_EQ(bridge.h, 0.05);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto& p = st.within.particles[j];
    EXPECT_EQ(Vec(bridge.support_u(j).begin(), bridge.support_u(j).end()), p.u);
    const double xj = bridge.support_x(j)[0];
    EXPECT_TRUE(std::find(p.tracker.particles.begin(), p.tracker.particles.end(), xj) !=
                p.tracker.particles.end());
  }
  for (double w : st.within.logw) EXPECT_EQ(w, 0.0);
}

TEST(FirstBlock, RequiresAFullWindow) {
  const auto model = lg_model({});
  const Vec y = lg_data(3, 2);
  EXPECT_THROW(run_first_block(model, y, small_config(5, 4, 3)), std::invalid_argument);
  auto bad = small_config(1, 4, 3);
  EXPECT_THROW(run_first_block(model, y, bad), std::invalid_argument);
}

TEST(Extraction, PicksByObservationWeight) {
  // Inner cloud {-1, +1}; y = 1 with unit noise. k = 1 has odds exp(2).
  const auto model = lg_model({});
  const Vec y = {1.0};
  auto cfg = small_config(2, 1, 2);
  FwState s = fw_begin(model, y, cfg);
  auto& tr = s.within.particles[0].tracker;
  const double unit[] = {1.0, 1.0};
  tr = pf_start(model, unit, {-1.0, 1.0}, 1.0);
  int hits = 0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    cfg.smc.seed = 1000 + r;
    hits += extract_bridge(s, cfg).x[0] > 0 ? 1 : 0;
  }
  const double p = 1 / (1 + std::exp(-2.0));
  EXPECT_NEAR(hits / double(reps), p, 3 * std::sqrt(p * (1 - p) / reps));
}

TEST(InitBlock, CollapsedBridgeStartsAtItsPoint) {
  const auto model = lg_model({1.0, 1e12, 1.0});
  const Vec y = lg_data(8, 3);
  auto cfg = small_config(4, 50, 6);
  cfg.bandwidth = 1e-8;
  FwState s = fw_begin(model, y, cfg);
  for (int k = 0; k < 3; ++k) fw_advance(s, cfg);
  auto bridge = std::make_shared<KdeBridge>();
  bridge->n = 3;
  bridge->dim_theta = 2;
  bridge->dim_state = 1;
  bridge->h = 1e-8;
  bridge->u = {std::log(1e12), 0.0, std::log(1e12), 0.0, std::log(1e12), 0.0};
  bridge->x = {0.7, 0.7, 0.7};
  init_block(s, bridge, cfg);
  EXPECT_EQ(s.block, 2u);
  EXPECT_EQ(s.time(), 5u);
  EXPECT_EQ(s.within.window_start, 5u);
  for (const auto& p : s.within.particles) {
    EXPECT_NEAR(p.u[1], 0.0, 1e-3);
    for (double x : p.tracker.particles) EXPECT_NEAR(x, 0.7, 1e-4);
    EXPECT_DOUBLE_EQ(p.log_extra, kde_marginal_logdensity(*bridge, p.u));
  }
}

TEST(InitBlock, ThetaFollowsTheSmoothedBridge) {
  KdeBridge b;
  b.n = 5;
  b.dim_theta = 1;
  b.dim_state = 1;
  b.h = 0.3;
  b.u = {-1.0, -0.8, 0.0, 0.4, 2.0};
  b.x = {0, 0, 0, 0, 0};
  Engine eng = stream(4, StreamTag::test);
  std::vector<double> direct(4000), rejected;
  for (auto& v : direct) v = kde_sample_theta(b, eng).u[0];
  // Rejection from a uniform envelope on [-3, 4].
  double cmax = 0;
  for (double t = -3; t <= 4; t += 1e-3) {
    const double p[] = {t};
    cmax = std::max(cmax, std::exp(kde_marginal_logdensity(b, p)));
  }
  while (rejected.size() < 4000) {
    const double t = -3 + 7 * uniform01(eng);
    const double p[] = {t};
    if (uniform01(eng) * cmax * 1.01 < std::exp(kde_marginal_logdensity(b, p))) {
      rejected.push_back(t);
    }
  }
  EXPECT_LT(ks_two_sample(direct, rejected), 1.95 * std::sqrt(2.0 / 4000));
}

TEST(Online, ZeroThresholdNeverRejuvenates) {
  const auto model = lg_model({});
  const Vec y = lg_data(30, 5);
  auto cfg = small_config(10, 30, 10);
  cfg.smc.ess_threshold = 0.0;
  std::size_t count = 0;
  run_online(model, y, 30, cfg, [&](const StepRecord& r) {
    EXPECT_FALSE(r.rejuvenated);
    EXPECT_EQ(r.block, (r.time - 1) / 10 + 1);
    ++count;
  });
  EXPECT_EQ(count, 30u);
}

TEST(Online, HistoryIsBoundedByTheWindow) {
  const auto model = lg_model({});
  const Vec y = lg_data(45, 6);
  auto cfg = small_config(10, 10, 5);
  cfg.smc.pf.keep_history = true;
  FwState s = fw_begin(model, y, cfg);
  while (s.time() < 45) {
    fw_advance(s, cfg);
    fw_maybe_rejuvenate(s, cfg);
    for (const auto& p : s.within.particles) {
      EXPECT_LE(p.tracker.ancestors.size(), 10u);
      EXPECT_LE(p.tracker.paths.size(), 10u);
      EXPECT_LE(p.tracker.step_logpotentials.size(), 10u);
    }
  }
}

// Every transition draw is either one filter step of one theta-particle, or
// part of a PMMH rerun over the current window.
TEST(Online, TransitionDrawsMatchTheWindowedCost) {
  const auto model = lg_model({});
  const Vec y = lg_data(60, 7);
  auto cfg = small_config(15, 20, 8);
  cfg.smc.pmmh_sweeps = 2;
  std::vector<StepRecord> recs;
  const auto before = transition_draws();
  run_online(model, y, 60, cfg, [&](const StepRecord& r) { recs.push_back(r); });
  const auto used = transition_draws() - before;
  const std::size_t n_theta = 20, n_x = 8, n_blocks = 2;
  std::uint64_t expect = n_theta * n_x * 60;
  std::uint64_t worst_step = 0;
  for (const auto& r : recs) {
    if (!r.rejuvenated) continue;
    const std::size_t ws = (r.block - 1) * 15 + 1;
    const std::uint64_t c = n_theta * cfg.smc.pmmh_sweeps * n_blocks * n_x * (r.time - ws + 1);
    expect += c;
    worst_step = std::max(worst_step, c);
  }
  EXPECT_EQ(used, expect);
  EXPECT_LE(worst_step, n_theta * cfg.smc.pmmh_sweeps * n_blocks * n_x * 15);
}

TEST(Online, SingleBlockIsPlainSmc2) {
  const auto model = levy_sv_model({});
  Engine eng = stream(8, StreamTag::simulate);
  const auto path = simulate(model, model.true_theta(), 40, eng);
  auto cfg = small_config(40, 30, 12);
  cfg.smc.predict_samples = 3;
  std::vector<StepRecord> a, b;
  run_online(model, path.y, 40, cfg, [&](const StepRecord& r) { a.push_back(r); });
  ParticleLikelihood lik(model, path.y, 12, cfg.smc.pf);
  run_smc2(lik, 40, cfg.smc, [&](const StepRecord& r) { b.push_back(r); });
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].theta_mean, b[k].theta_mean);
    EXPECT_EQ(a[k].theta_sd, b[k].theta_sd);
    EXPECT_EQ(a[k].prediction, b[k].prediction);
    EXPECT_EQ(a[k].ess, b[k].ess);
    EXPECT_EQ(a[k].rejuvenated, b[k].rejuvenated);
  }
}

TEST(Online, PredictionTracksTheKalmanPredictor) {
  const auto model = lg_model({});
  const Vec y = lg_data(200, 9);
  auto cfg = small_config(50, 300, 60);
  cfg.bandwidth = 0.02;
  cfg.smc.predict_samples = 10;
  std::vector<double> err;
  const auto kf = kalman_filter({1.0, 1.0, 1.0}, y);
  run_online(model, y, 200, cfg, [&](const StepRecord& r) {
    if (r.time > 50) err.push_back(std::abs(r.prediction[0] - kf.mean[r.time - 1]));
  });
  double mean = 0;
  for (double e : err) mean += e;
  mean /= err.size();
  // The one-step predictive sd is about 1.6; parameter uncertainty adds a little.
  EXPECT_LT(mean, 0.15);
}

TEST(Online, ResultsDoNotDependOnWorkerCount) {
  const auto model = lg_model({});
  const Vec y = lg_data(40, 10);
  auto cfg = small_config(10, 24, 8);
  cfg.smc.predict_samples = 2;
  auto run = [&](const char* w) {
    setenv("SMC2FW_WORKERS", w, 1);
    std::vector<StepRecord> out;
    run_online(model, y, 40, cfg, [&](const StepRecord& r) { out.push_back(r); });
    unsetenv("SMC2FW_WORKERS");
    return out;
  };
  const auto a = run("1"), b = run("5");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].theta_mean, b[k].theta_mean);
    EXPECT_EQ(a[k].prediction, b[k].prediction);
  }
}
