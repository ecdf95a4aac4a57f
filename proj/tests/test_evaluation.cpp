#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "graphvar/data.hpp"
#include "graphvar/evaluation.hpp"
#include "graphvar/io.hpp"
#include "oracles.hpp"

using namespace graphvar;

TEST(Rnmse, UnitFacts) {
  std::mt19937_64 rng(1);
  std::vector<Eigen::MatrixXd> x{oracle::random_matrix(4, 3, rng), oracle::random_matrix(4, 3, rng)};
  std::vector<Eigen::MatrixXd> zero(2, Eigen::MatrixXd::Zero(4, 3)), twice{2.0 * x[0], 2.0 * x[1]};
  EXPECT_EQ(rnmse(x, x), 0.0);
  EXPECT_DOUBLE_EQ(rnmse(zero, x), 1.0);
  EXPECT_DOUBLE_EQ(rnmse(twice, x), 1.0);
}

TEST(Rnmse, DegenerateReferenceAndShapeErrors) {
  std::vector<Eigen::MatrixXd> zero(2, Eigen::MatrixXd::Zero(2, 2)), one(1, Eigen::MatrixXd::Ones(2, 2));
  try {
    rnmse(one, std::vector<Eigen::MatrixXd>(1, Eigen::MatrixXd::Zero(2, 2)));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate reference signal"), std::string::npos);
  }
  EXPECT_THROW(rnmse(zero, one), Error);
  std::vector<Eigen::MatrixXd> bad(1, Eigen::MatrixXd::Ones(3, 2));
  EXPECT_THROW(rnmse(bad, one), Error);
}

TEST(Rnmse, PanelOverloadMatches) {
  std::mt19937_64 rng(2);
  auto a = oracle::random_panel(5, 3, 2, rng), b = oracle::random_panel(5, 3, 2, rng);
  std::vector<Eigen::MatrixXd> va, vb;
  for (std::size_t t = 0; t < 5; ++t) va.push_back(a.slice(t)), vb.push_back(b.slice(t));
  EXPECT_DOUBLE_EQ(rnmse(a, b), rnmse(va, vb));
}

TEST(Rnmse, PoolingIsNotTheMeanOfWindows) {
  std::mt19937_64 rng(3);
  // Two windows with very different reference energies.
  Eigen::MatrixXd x1 = oracle::random_matrix(3, 2, rng), x2 = 10.0 * oracle::random_matrix(3, 2, rng);
  Eigen::MatrixXd p1 = x1 + oracle::random_matrix(3, 2, rng), p2 = x2 + oracle::random_matrix(3, 2, rng);
  ErrorEnergy e1, e2, pooled;
  e1.add(p1, x1);
  e2.add(p2, x2);
  pooled.merge(e1);
  pooled.merge(e2);
  std::vector<Eigen::MatrixXd> pred{p1, p2}, act{x1, x2};
  EXPECT_DOUBLE_EQ(pooled.rnmse(), rnmse(pred, act));
  EXPECT_GT(std::abs(pooled.rnmse() - 0.5 * (e1.rnmse() + e2.rnmse())), 1e-3);
}

TEST(PlanWindows, Arithmetic) {
  auto w = plan_windows(500, {100, 50, 3, 50, 0.7});
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].in_sample, (IndexRange{0, 100}));
  EXPECT_EQ(w[1].in_sample, (IndexRange{50, 150}));
  EXPECT_EQ(w[2].in_sample, (IndexRange{100, 200}));
  EXPECT_EQ(w[2].out_sample, (IndexRange{200, 250}));
}

TEST(PlanWindows, FullSweepSettingFits) {
  auto w = plan_windows(9918, WindowPlan{});
  ASSERT_EQ(w.size(), 20u);
  EXPECT_EQ(w.back().out_sample.end, 5360u);
  EXPECT_EQ(w.back().in_sample.begin, 19u * 168u);
}

TEST(PlanWindows, OverflowReportsFeasibleIterations) {
  try {
    plan_windows(500, {100, 50, 10, 50, 0.7});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("at most 8 iterations"), std::string::npos) << e.what();
  }
  EXPECT_THROW(plan_windows(500, {0, 50, 1, 50, 0.7}), Error);
  EXPECT_THROW(plan_windows(500, {100, 50, 1, 50, 1.0}), Error);
}

TEST(ZScore, UsesOnlyReferenceRangeAndInverts) {
  std::mt19937_64 rng(4);
  auto p = oracle::random_panel(40, 3, 2, rng);
  for (auto& v : p.raw()) v = 5.0 + 3.0 * v;
  auto z = ZScore::fit(p, {0, 20});
  auto q = z.apply(p);
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 2), sq = Eigen::MatrixXd::Zero(3, 2);
  for (std::size_t t = 0; t < 20; ++t) mean += q.slice(t);
  for (std::size_t t = 0; t < 20; ++t) sq += q.slice(t).cwiseAbs2();
  EXPECT_LT((mean / 20.0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(((sq / 19.0).array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((z.invert(q.slice(33)) - p.slice(33)).cwiseAbs().maxCoeff(), 1e-12);
  // Changing data outside the reference range leaves the statistics alone.
  auto p2 = p;
  p2.slice(30).setConstant(1e6);
  EXPECT_EQ((ZScore::fit(p2, {0, 20}).mean - z.mean).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ZScore, ConstantSeriesKeepsUnitScale) {
  SignalPanel p(10, 2, 1, 3.0);
  auto z = ZScore::fit(p, {0, 10});
  EXPECT_EQ(z.scale(0, 0), 1.0);
  EXPECT_EQ(z.apply(p)(4, 1, 0), 0.0);
}

TEST(EstimationMode, Parse) {
  EXPECT_EQ(parse_estimation_mode("fixed"), EstimationMode::Fixed);
  EXPECT_EQ(parse_estimation_mode("joint"), EstimationMode::Joint);
  EXPECT_THROW(parse_estimation_mode("both"), Error);
}

namespace {

struct GVarData {
  GraphShiftOperator s;
  GraphShiftOperator sf;
  SignalPanel panel;
};

GVarData gvar22(std::size_t T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto s = oracle::random_laplacian(6, rng);
  auto sf = oracle::random_laplacian(3, rng);
  ModelSpec spec{ModelFamily::GVar, 2, 2};
  auto c = CoefficientSet::zeros(spec, 3);
  c.scalar_taps << 0.5, -0.3, 0.3, 0.2;
  auto panel = generate_synthetic({spec, c, 0.1, T, seed, 200, 1.0}, s);
  return {s, sf, panel};
}

}  // namespace

TEST(GridSearch, SingletonGrid) {
  auto d = gvar22(200, 5);
  auto r = grid_search(ModelFamily::GVar, {}, {d.s, std::nullopt}, d.panel, {0, 200}, {{1, 1}}, 0.7);
  EXPECT_EQ(r.best_P, 1);
  EXPECT_EQ(r.best_K, 1);
  ASSERT_EQ(r.table.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.table[0].rnmse));
}

TEST(GridSearch, RecoversGeneratingOrders) {
  auto d = gvar22(3000, 6);
  auto r = grid_search(ModelFamily::GVar, {}, {d.s, std::nullopt}, d.panel, {0, 3000}, full_grid(3, 3), 0.7);
  EXPECT_EQ(r.best_P, 2);
  EXPECT_EQ(r.best_K, 2);
}

TEST(GridSearch, FiveByFiveGridHasTwentyFiveCells) {
  auto d = gvar22(300, 7);
  auto r = grid_search(ModelFamily::PerFeatureGVar, {}, {d.s, std::nullopt}, d.panel, {0, 300}, full_grid(5, 5), 0.7);
  EXPECT_EQ(r.table.size(), 25u);
  for (const auto& c : r.table) EXPECT_TRUE(std::isfinite(c.rnmse)) << c.P << "," << c.K << ": " << c.error;
}

TEST(GridSearch, FailedCellsScoreInfinityAndAreRecorded) {
  auto d = gvar22(40, 8);
  // Train part is 28 samples; P = 30 cannot be fit.
  auto r = grid_search(ModelFamily::GVar, {}, {d.s, std::nullopt}, d.panel, {0, 40}, {{30, 1}, {1, 1}}, 0.7);
  EXPECT_TRUE(std::isinf(r.table[0].rnmse));
  EXPECT_FALSE(r.table[0].error.empty());
  EXPECT_EQ(r.best_P, 1);
  EXPECT_THROW(grid_search(ModelFamily::GVar, {}, {d.s, std::nullopt}, d.panel, {0, 40}, {{30, 1}}, 0.7), Error);
  EXPECT_THROW(grid_search(ModelFamily::GVar, {}, {d.s, std::nullopt}, d.panel, {0, 40}, {}, 0.7), Error);
}

TEST(GridSearch, TiesPreferSmallerModels) {
  // A zero panel except for the validation reference makes every model predict 0.
  SignalPanel p(50, 3, 1, 0.0);
  for (std::size_t t = 35; t < 50; ++t) p(t, 0, 0) = 1.0;
  auto s = GraphShiftOperator::identity(3);
  auto r = grid_search(ModelFamily::GVar, {}, {s, std::nullopt}, p, {0, 50}, {{2, 2}, {2, 1}, {1, 2}, {3, 1}}, 0.7);
  for (const auto& c : r.table) EXPECT_DOUBLE_EQ(c.rnmse, 1.0);
  EXPECT_EQ(r.best_P, 1);
  EXPECT_EQ(r.best_K, 2);
}

namespace {

EvaluationConfig small_config(std::vector<ModelFamily> families) {
  EvaluationConfig cfg;
  cfg.families = std::move(families);
  cfg.in_sample_lens = {150};
  cfg.plan = {150, 30, 3, 30, 0.7};
  cfg.grid = full_grid(2, 2);
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST(Evaluate, SingleWindowReportsOneEntry) {
  auto d = gvar22(400, 9);
  auto cfg = small_config({ModelFamily::GVar});
  cfg.plan.n_iterations = 1;
  auto r = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  ASSERT_EQ(r.windows.size(), 1u);
  ASSERT_EQ(r.pooled.size(), 1u);
  EXPECT_TRUE(r.windows[0].error.empty()) << r.windows[0].error;
  EXPECT_DOUBLE_EQ(r.pooled[0].rnmse, r.windows[0].rnmse);
  EXPECT_GE(r.pooled[0].rnmse, 0.0);
  EXPECT_LT(r.pooled[0].rnmse, 1.0);
}

TEST(Evaluate, PooledEqualsConcatenatedWindows) {
  auto d = gvar22(400, 10);
  auto r = evaluate(small_config({ModelFamily::GVar}), {d.s, std::nullopt}, d.panel);
  ErrorEnergy sum;
  for (const auto& w : r.windows) sum.merge(w.energy);
  EXPECT_DOUBLE_EQ(r.pooled[0].rnmse, sum.rnmse());
  EXPECT_EQ(r.pooled[0].windows_ok, 3u);
}

TEST(Evaluate, CsvHasOneRowPerFamilySizeWindow) {
  auto d = gvar22(400, 11);
  auto cfg = small_config({ModelFamily::GVar, ModelFamily::PerFeatureGVar, ModelFamily::PgVar, ModelFamily::PgGVar,
                           ModelFamily::MimoGVar});
  cfg.in_sample_lens = {100, 150};
  auto r = evaluate(cfg, {d.s, d.sf}, d.panel);
  std::ostringstream os;
  write_report_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "family,in_sample_len,window,P,K,rnmse");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 5 * 2 * 3);
  EXPECT_EQ(r.pooled.size(), 10u);
  for (const auto& w : r.windows) EXPECT_TRUE(w.error.empty()) << w.error;
}

TEST(Evaluate, DeterministicAcrossRunsAndThreadCounts) {
  auto d = gvar22(400, 12);
  auto cfg = small_config({ModelFamily::GVar, ModelFamily::MimoGVar});
  auto a = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  cfg.threads = 3;
  auto b = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  ASSERT_EQ(a.windows.size(), b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    EXPECT_EQ(a.windows[i].rnmse, b.windows[i].rnmse);
    EXPECT_EQ(a.windows[i].P, b.windows[i].P);
    EXPECT_EQ(a.windows[i].K, b.windows[i].K);
  }
  std::ostringstream ja, jb;
  ja << report_to_json(a, "x");
  jb << report_to_json(b, "x");
  EXPECT_EQ(ja.str(), jb.str());
}

TEST(Evaluate, NoLeakageFromFutureOrOutOfSampleData) {
  auto d = gvar22(400, 13);
  auto cfg = small_config({ModelFamily::GVar});
  auto base = evaluate(cfg, {d.s, std::nullopt}, d.panel);

  // Data after the last window is never read.
  auto later = d.panel;
  for (std::size_t t = 240; t < later.T(); ++t) later.slice(t).setConstant(1e6);
  auto r1 = evaluate(cfg, {d.s, std::nullopt}, later);
  for (std::size_t i = 0; i < base.windows.size(); ++i) EXPECT_EQ(base.windows[i].rnmse, r1.windows[i].rnmse);

  // Corrupting the out-of-sample part of window 0 leaves its selection and fit
  // untouched, and only scores from t onwards change.
  auto oos = d.panel;
  for (std::size_t t = 170; t < 180; ++t) oos.slice(t) *= -3.0;
  auto r2 = evaluate(cfg, {d.s, std::nullopt}, oos);
  EXPECT_EQ(r2.windows[0].P, base.windows[0].P);
  EXPECT_EQ(r2.windows[0].K, base.windows[0].K);
  EXPECT_EQ(r2.windows[0].training_objective, base.windows[0].training_objective);
  EXPECT_NE(r2.windows[0].rnmse, base.windows[0].rnmse);
}

TEST(Evaluate, FailuresBecomeDiagnostics) {
  auto d = gvar22(400, 14);
  auto cfg = small_config({ModelFamily::GVar, ModelFamily::PgVar});
  // No feature graph: every PG-VAR window fails, G-VAR is unaffected.
  auto r = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  const auto* ok = r.find(ModelFamily::GVar, 150);
  const auto* bad = r.find(ModelFamily::PgVar, 150);
  ASSERT_TRUE(ok && bad);
  EXPECT_EQ(ok->windows_ok, 3u);
  EXPECT_EQ(bad->windows_failed, 3u);
  EXPECT_TRUE(std::isnan(bad->rnmse));
  for (const auto& w : r.windows)
    if (w.family == ModelFamily::PgVar) {
      EXPECT_FALSE(w.error.empty());
    }

  EXPECT_THROW(evaluate(small_config({}), {d.s, std::nullopt}, d.panel), Error);
}

TEST(Evaluate, JointModeTrainingObjectiveNotAboveFixed) {
  auto d = gvar22(400, 15);
  auto cfg = small_config({ModelFamily::PgGVar});
  cfg.mode = EstimationMode::Joint;
  cfg.grid = {{1, 2}, {2, 2}};
  cfg.joint.max_outer_iters = 5;
  auto r = evaluate(cfg, {d.s, d.sf}, d.panel);
  for (const auto& w : r.windows) {
    ASSERT_TRUE(w.error.empty()) << w.error;
    EXPECT_LE(w.training_objective, w.fixed_objective);
    EXPECT_GE(w.outer_iterations, 1);
  }
  std::ostringstream os;
  write_report_csv(os, r);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "family,in_sample_len,window,P,K,rnmse,outer_iterations,final_objective,fixed_objective");
}

TEST(Evaluate, RawScaleReportingDiffersFromNormalized) {
  auto d = gvar22(400, 16);
  for (auto& v : d.panel.raw()) v = 100.0 + 20.0 * v;
  auto cfg = small_config({ModelFamily::GVar});
  auto norm = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  cfg.raw_scale_rnmse = true;
  auto raw = evaluate(cfg, {d.s, std::nullopt}, d.panel);
  // Raw-scale reference energy includes the large mean.
  EXPECT_LT(raw.pooled[0].rnmse, 0.1 * norm.pooled[0].rnmse);
}
