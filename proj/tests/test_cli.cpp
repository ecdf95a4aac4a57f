#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphvar/experiment.hpp"

using namespace graphvar;
namespace fs = std::filesystem;

namespace {

const fs::path kData = GRAPHVAR_DATA_DIR;

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.toml");
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("graphvar_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string fixture_config(const fs::path& out) {
  return "seed = 1\n[data]\nsource = \"air_quality\"\ndir = \"" + (kData / "fixture").string() +
         "\"\nstations = \"" + (kData / "beijing_stations.csv").string() +
         "\"\nstart = \"2015-07-20 07:00\"\nend = \"2015-07-28 15:00\"\n"
         "[models]\nfamilies = [\"gvar\", \"per_feature_gvar\", \"pgvar\", \"pg_gvar\", \"mimo_gvar\"]\n"
         "[grid]\nmax_P = 2\nmax_K = 2\n[windows]\nin_sample = [100, 150]\nout_sample = 24\niterations = 2\n"
         "stride = 24\n[output]\ndir = \"" + out.string() + "\"\n";
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndComments) {
  auto c = parse(R"(
# top comment
seed = 7
[data]
source = "synthetic"   # trailing comment
name = "a # not a comment"
[models]
families = ["gvar", mimo_gvar]
empty = []
ratio = 0.25
flag = true
)");
  EXPECT_EQ(c.get_int("seed", 0), 7);
  EXPECT_EQ(c.get_string("data.source"), "synthetic");
  EXPECT_EQ(c.get_string("data.name"), "a # not a comment");
  EXPECT_EQ(c.get_list("models.families"), (std::vector<std::string>{"gvar", "mimo_gvar"}));
  EXPECT_TRUE(c.has("models.empty"));
  EXPECT_TRUE(c.get_list("models.empty").empty());
  EXPECT_DOUBLE_EQ(c.get_double("models.ratio", 0), 0.25);
  EXPECT_TRUE(c.get_bool("models.flag", false));
  EXPECT_EQ(c.get_int("missing", 42), 42);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse("a = 1\nb\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("test.toml:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("a = 1\na = 2\n"), Error);
  EXPECT_THROW(parse("[bad section\n"), Error);
  EXPECT_THROW(parse("a = \"open\n"), Error);
  EXPECT_THROW(parse("a = [1, 2\n"), Error);
  EXPECT_THROW(parse("a = \n"), Error);
}

TEST(Config, TypedAccessorsRejectWrongTypes) {
  auto c = parse("n = abc\nl = [1, 2]\nb = yes\n");
  EXPECT_THROW(c.get_int("n", 0), Error);
  EXPECT_THROW(c.get_double("n", 0), Error);
  EXPECT_THROW(c.get_string("l"), Error);
  EXPECT_THROW(c.get_bool("b", false), Error);
}

TEST(Config, OverridesReplaceValues) {
  auto c = parse("[grid]\nmax_P = 5\n");
  c.set("grid.max_P=2");
  c.set("models.families = [gvar]");
  EXPECT_EQ(c.get_int("grid.max_P", 0), 2);
  EXPECT_EQ(c.get_list("models.families"), std::vector<std::string>{"gvar"});
  EXPECT_THROW(c.set("no_equals_sign"), Error);
}

TEST(Config, CanonicalFormIsOrderAndSpacingInsensitive) {
  auto a = parse("[x]\nb = 2\na = \"1\"\n");
  auto b = parse("[x]\na=1\n  b   =   2  # note\n");
  EXPECT_EQ(a.canonical(), b.canonical());
  EXPECT_EQ(content_hash(a.canonical()), content_hash(b.canonical()));
  auto c = parse("[x]\na = 1\nb = 3\n");
  EXPECT_NE(content_hash(a.canonical()), content_hash(c.canonical()));
}

TEST(Config, PathsResolveAgainstConfigDirectory) {
  auto dir = scratch("paths");
  std::ofstream(dir / "c.toml") << "[data]\ndir = \"raw\"\npanel = \"/abs/p.csv\"\n";
  auto c = Config::load(dir / "c.toml");
  EXPECT_EQ(c.get_path("data.dir"), dir / "raw");
  EXPECT_EQ(c.get_path("data.panel"), fs::path("/abs/p.csv"));
  EXPECT_THROW(Config::load(dir / "missing.toml"), Error);
}

TEST(ExperimentConfig, DefaultsDescribeTheFullSweep) {
  auto x = ExperimentConfig::from(parse(""));
  EXPECT_EQ(x.eval.families.size(), 5u);
  EXPECT_EQ(x.eval.product, ProductGraphSpec::cartesian());
  EXPECT_EQ(x.eval.grid.size(), 25u);
  ASSERT_EQ(x.eval.in_sample_lens.size(), 10u);
  EXPECT_EQ(x.eval.in_sample_lens.front(), 200u);
  EXPECT_EQ(x.eval.in_sample_lens.back(), 2000u);
  EXPECT_EQ(x.eval.plan.out_sample_len, 168u);
  EXPECT_EQ(x.eval.plan.n_iterations, 20u);
  EXPECT_EQ(x.eval.plan.stride, 168u);
  EXPECT_DOUBLE_EQ(x.eval.plan.train_fraction, 0.7);
  EXPECT_EQ(x.station_k, 3);
  EXPECT_EQ(x.feature_m, 2);
  EXPECT_EQ(x.eval.mode, EstimationMode::Fixed);
}

TEST(ExperimentConfig, EmptyFamilyListIsAUsageError) {
  try {
    ExperimentConfig::from(parse("[models]\nfamilies = []\n"));
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("models.families"), std::string::npos);
  }
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(ExperimentConfig::from(parse("[grid]\nmax_p = 3\n")), UsageError);
  EXPECT_THROW(ExperimentConfig::from(parse("[models]\nfamilies = [\"var\"]\n")), UsageError);
  EXPECT_THROW(ExperimentConfig::from(parse("[models]\nproduct = \"tensor\"\n")), UsageError);
  EXPECT_THROW(ExperimentConfig::from(parse("[estimation]\nmode = \"both\"\n")), UsageError);
  EXPECT_THROW(ExperimentConfig::from(parse("[data]\nsource = \"web\"\n")), UsageError);
  auto x = ExperimentConfig::from(parse("[models]\nproduct = [0, 1, 1, 1]\n"));
  EXPECT_EQ(x.eval.product, ProductGraphSpec::strong());
}

TEST(ExperimentConfig, HashCoversEveryKey) {
  auto a = ExperimentConfig::from(parse("seed = 1\n"));
  auto b = ExperimentConfig::from(parse("seed = 2\n"));
  auto c = ExperimentConfig::from(parse("seed=1"));
  EXPECT_NE(a.hash, b.hash);
  EXPECT_EQ(a.hash, c.hash);
}

TEST(BuildGraphs, MissingDatasetNamesThePath) {
  auto out = scratch("missing");
  auto x = ExperimentConfig::from(parse("[data]\ndir = \"/no/such/PRSA\"\nstations = \"" +
                                        (kData / "beijing_stations.csv").string() + "\"\n[output]\ndir = \"" +
                                        out.string() + "\"\n"));
  std::ostringstream log;
  try {
    cmd_build_graphs(x, log);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("/no/such/PRSA"), std::string::npos) << e.what();
  }
}

TEST(BuildGraphs, AirQualityGivesTwelveAndTenNodeLaplacians) {
  auto out = scratch("aq");
  auto x = ExperimentConfig::from(parse(fixture_config(out)));
  std::ostringstream log;
  ASSERT_EQ(cmd_build_graphs(x, log), kExitOk);
  auto s = load_graph(out / "graphs" / "station.gso");
  auto f = load_graph(out / "graphs" / "feature.gso");
  EXPECT_EQ(s.size(), 12);
  EXPECT_EQ(f.size(), 10);
  EXPECT_EQ(s.kind(), GsoKind::NormalizedLaplacian);
  EXPECT_EQ(f.kind(), GsoKind::NormalizedLaplacian);
  EXPECT_TRUE(fs::exists(out / "graphs" / "summary.txt"));
  EXPECT_TRUE(fs::exists(out / "graphs" / "panel.csv"));
  std::ifstream in(out / "graphs" / "panel.csv");
  auto cached = read_panel_csv(in);
  EXPECT_EQ(cached.panel.T(), 200u);
}

TEST(BuildGraphs, BinaryFeatureWeights) {
  auto out = scratch("binary");
  auto x = ExperimentConfig::from(parse(fixture_config(out) + "[graphs]\nfeature_weights = \"binary\"\n"));
  std::ostringstream log;
  ASSERT_EQ(cmd_build_graphs(x, log), kExitOk);
  auto f = load_graph(out / "graphs" / "feature.gso");
  // Binary adjacency: off-diagonal Laplacian entries are -1/sqrt(d_i d_j).
  const Eigen::MatrixXd d = f.dense();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (i == j || d(i, j) == 0.0) continue;
      const double deg_i = double((d.row(i).array() != 0.0).count() - 1);
      const double deg_j = double((d.row(j).array() != 0.0).count() - 1);
      EXPECT_NEAR(d(i, j), -1.0 / std::sqrt(deg_i * deg_j), 1e-12);
    }
}

TEST(BuildGraphs, SyntheticProvidedGraphsArePassedThrough) {
  auto dir = scratch("passthrough");
  auto s = normalized_laplacian(knn_gaussian_graph(
      DistanceMatrix((Eigen::MatrixXd(3, 3) << 0, 1, 2, 1, 0, 1, 2, 1, 0).finished()), 1));
  save_graph(dir / "s_in.gso", s);
  save_graph(dir / "f_in.gso", s);
  auto x = ExperimentConfig::from(parse("[data]\nsource = \"synthetic\"\n[graphs]\nstation = \"" +
                                        (dir / "s_in.gso").string() + "\"\nfeature = \"" +
                                        (dir / "f_in.gso").string() + "\"\n[output]\ndir = \"" +
                                        (dir / "out").string() + "\"\n"));
  std::ostringstream log;
  ASSERT_EQ(cmd_build_graphs(x, log), kExitOk);
  EXPECT_EQ(read_file(dir / "out" / "graphs" / "station.gso"), read_file(dir / "s_in.gso"));
  EXPECT_EQ(read_file(dir / "out" / "graphs" / "feature.gso"), read_file(dir / "f_in.gso"));
}

TEST(Evaluate, NeedsBuiltGraphs) {
  auto out = scratch("nographs");
  auto x = ExperimentConfig::from(parse(fixture_config(out)));
  std::ostringstream o, e;
  EXPECT_THROW(cmd_evaluate(x, o, e), UsageError);
}

TEST(Evaluate, FixedModeWritesOneRowPerFamilySizeWindow) {
  auto out = scratch("eval_fixed");
  auto x = ExperimentConfig::from(parse(fixture_config(out)));
  std::ostringstream o, e;
  ASSERT_EQ(cmd_build_graphs(x, o), kExitOk);
  ASSERT_EQ(cmd_evaluate(x, o, e), kExitOk) << e.str();
  // 5 families x 2 sizes x 2 windows, plus the header.
  EXPECT_EQ(count_lines(out / "windows.csv"), 1u + 5 * 2 * 2);
  std::ifstream in(out / "windows.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "family,in_sample_len,window,P,K,rnmse");
  EXPECT_EQ(count_lines(out / "pooled.csv"), 1u + 5 * 2);
  auto j = json::parse(read_file(out / "report.json"));
  EXPECT_EQ(j["config_hash"], x.hash);
}

TEST(Evaluate, JointModeAddsIterationAndObjectiveColumns) {
  auto out = scratch("eval_joint");
  auto x = ExperimentConfig::from(parse(fixture_config(out) +
                                        "[estimation]\nmode = \"joint\"\nmax_outer_iters = 3\nmax_inner_iters = 5\n"));
  x.eval.families = {ModelFamily::PgGVar};
  std::ostringstream o, e;
  ASSERT_EQ(cmd_build_graphs(x, o), kExitOk);
  ASSERT_EQ(cmd_evaluate(x, o, e), kExitOk) << e.str();
  std::ifstream in(out / "windows.csv");
  std::string header, row;
  std::getline(in, header);
  EXPECT_EQ(header, "family,in_sample_len,window,P,K,rnmse,outer_iterations,final_objective,fixed_objective");
  while (std::getline(in, row)) {
    std::stringstream ss(row);
    std::vector<std::string> f;
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 9u);
    EXPECT_GE(std::stoi(f[6]), 1);
    EXPECT_LE(std::stod(f[7]), std::stod(f[8]));
  }
}

TEST(Evaluate, TotalFailureExitsNonzero) {
  auto out = scratch("eval_fail");
  // Windows longer than the fixture cannot be planned for any family.
  auto x = ExperimentConfig::from(parse(fixture_config(out)));
  std::ostringstream o, e;
  ASSERT_EQ(cmd_build_graphs(x, o), kExitOk);
  x.eval.in_sample_lens = {150};
  x.eval.grid = {{200, 1}};
  EXPECT_EQ(cmd_evaluate(x, o, e), kExitFailure);
  EXPECT_NE(e.str().find("window failed"), std::string::npos);
}

TEST(Fit, WritesLoadableModelAndReport) {
  auto out = scratch("fit");
  auto x = ExperimentConfig::from(
      parse(fixture_config(out) + "[fit]\nfamily = \"pg_gvar\"\nP = 2\nK = 2\n[estimation]\nmode = \"joint\"\n"
                                  "max_outer_iters = 3\n"));
  std::ostringstream o;
  ASSERT_EQ(cmd_build_graphs(x, o), kExitOk);
  ASSERT_EQ(cmd_fit(x, o), kExitOk);
  auto model = model_from_json(json::parse(read_file(out / "model_pg_gvar.json")), out);
  EXPECT_EQ(model.spec().family, ModelFamily::PgGVar);
  EXPECT_EQ(model.nodes(), 12);
  EXPECT_EQ(model.features(), 10);
  auto report = json::parse(read_file(out / "model_pg_gvar_report.json"));
  EXPECT_EQ(report["config_hash"], x.hash);
  EXPECT_LE(report["objective"].get<double>(), report["fixed_objective"].get<double>());
  EXPECT_TRUE(report.contains("normalization"));
}

TEST(Synth, IsReproducibleFromConfigAndSeed) {
  auto a = scratch("synth_a"), b = scratch("synth_b");
  const std::string base = "seed = 9\n[data]\nsource = \"synthetic\"\n[synthetic]\nT = 300\nN = 5\nF = 3\n";
  auto xa = ExperimentConfig::from(parse(base + "[output]\ndir = \"" + a.string() + "\"\n"));
  auto xb = ExperimentConfig::from(parse(base + "[output]\ndir = \"" + b.string() + "\"\n"));
  std::ostringstream o;
  ASSERT_EQ(cmd_synth(xa, o), kExitOk);
  ASSERT_EQ(cmd_synth(xb, o), kExitOk);
  EXPECT_EQ(read_file(a / "synthetic_panel.csv"), read_file(b / "synthetic_panel.csv"));
  auto truth = json::parse(read_file(a / "synthetic_truth.json"));
  EXPECT_LT(truth["companion_spectral_radius"].get<double>(), 1.0);
  auto model = model_from_json(truth, a);
  EXPECT_EQ(model.spec().family, ModelFamily::MimoGVar);
}

TEST(Selftest, DefaultSeedPasses) {
  auto x = ExperimentConfig::from(parse(""));
  std::ostringstream o;
  EXPECT_EQ(cmd_selftest(x, o), kExitOk) << o.str();
  EXPECT_NE(o.str().find("7/7 checks passed"), std::string::npos);
}

TEST(Selftest, CorruptedGradientModeFailsTheGradientCheck) {
  auto x = ExperimentConfig::from(parse("[selftest]\ngradient_mode = \"analytc\"\n"));
  std::ostringstream o;
  EXPECT_EQ(cmd_selftest(x, o), kExitFailure);
  const auto out = o.str();
  const auto line = out.substr(out.find("gradient "));
  EXPECT_EQ(line.find("FAIL"), line.find_first_of("PF"));
  EXPECT_NE(out.find("6/7 checks passed"), std::string::npos) << out;
}
