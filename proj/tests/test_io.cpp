#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "graphvar/io.hpp"
#include "oracles.hpp"

using namespace graphvar;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("graphvar_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ContentHash, KnownValues) {
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
  EXPECT_NE(content_hash("ab"), content_hash("ba"));
}

TEST(ModelJson, RoundTripAllFamilies) {
  std::mt19937_64 rng(1);
  auto dir = scratch_dir("models");
  auto s = oracle::random_laplacian(4, rng);
  auto sf = oracle::random_laplacian(3, rng);
  save_graph(dir / "station.txt", s);
  save_graph(dir / "feature.txt", sf);
  GraphRef sref{"station.txt", file_hash(dir / "station.txt")};
  GraphRef fref{"feature.txt", file_hash(dir / "feature.txt")};
  for (auto fam : {ModelFamily::GVar, ModelFamily::PerFeatureGVar, ModelFamily::PgVar, ModelFamily::PgGVar,
                   ModelFamily::MimoGVar}) {
    ModelSpec spec{fam, 2, 3, ProductGraphSpec::strong()};
    const bool pg = uses_product_graph(fam);
    FittedModel m(spec, oracle::random_coefficients(spec, 3, rng), s,
                  pg ? std::optional<GraphShiftOperator>(sf) : std::nullopt);
    json j = model_to_json(m, sref, pg ? std::optional<GraphRef>(fref) : std::nullopt);
    EXPECT_EQ(j["sign_convention"], "plus_sum");
    auto back = model_from_json(json::parse(j.dump()), dir);
    EXPECT_EQ(back.spec().family, fam);
    EXPECT_EQ(back.spec().product, spec.product);
    EXPECT_EQ(back.coeffs().max_abs_diff(m.coeffs()), 0.0) << to_string(fam);
    EXPECT_LT((back.station_graph().dense() - s.dense()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(ModelJson, HashMismatchIsRejected) {
  std::mt19937_64 rng(2);
  auto dir = scratch_dir("hash");
  auto s = oracle::random_laplacian(4, rng);
  save_graph(dir / "station.txt", s);
  ModelSpec spec{ModelFamily::GVar, 1, 2};
  FittedModel m(spec, oracle::random_coefficients(spec, 2, rng), s);
  json j = model_to_json(m, {"station.txt", file_hash(dir / "station.txt")}, std::nullopt);
  std::ofstream(dir / "station.txt", std::ios::app) << "# edited\n";
  try {
    model_from_json(j, dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("does not match the recorded hash"), std::string::npos);
  }
}

TEST(ModelJson, ShapeAndFormatErrors) {
  std::mt19937_64 rng(3);
  auto dir = scratch_dir("shape");
  auto s = oracle::random_laplacian(3, rng);
  save_graph(dir / "s.txt", s);
  ModelSpec spec{ModelFamily::GVar, 2, 2};
  FittedModel m(spec, oracle::random_coefficients(spec, 1, rng), s);
  json j = model_to_json(m, {"s.txt", file_hash(dir / "s.txt")}, std::nullopt);
  json bad = j;
  bad["coefficients"]["scalar_taps"]["shape"] = {2, 3};
  EXPECT_THROW(model_from_json(bad, dir), Error);
  bad = j;
  bad["coefficients"]["scalar_taps"]["data"] = {1.0, 2.0};
  EXPECT_THROW(model_from_json(bad, dir), Error);
  bad = j;
  bad["format"] = "something-else";
  EXPECT_THROW(model_from_json(bad, dir), Error);
}

TEST(ReportJson, NonFiniteValuesBecomeNull) {
  EvaluationReport r;
  WindowResult w;
  w.error = "boom";
  r.windows.push_back(w);
  PooledResult p;
  r.pooled.push_back(p);
  json j = report_to_json(r, "abc");
  EXPECT_EQ(j["config_hash"], "abc");
  EXPECT_TRUE(j["windows"][0]["rnmse"].is_null());
  EXPECT_EQ(j["windows"][0]["error"], "boom");
  EXPECT_TRUE(j["pooled"][0]["rnmse"].is_null());
  EXPECT_NO_THROW(json::parse(j.dump()));
}

TEST(FitReport, CarriesDiagnostics) {
  FitDiagnostics d;
  d.family = "gvar";
  d.P = 2;
  d.K = 3;
  d.objective = 1.5;
  d.rank = 6;
  json j = fit_report_to_json(d, "h");
  EXPECT_EQ(j["format"], "graphvar-fit-report");
  EXPECT_EQ(j["rank"], 6);
  EXPECT_EQ(j["objective"], 1.5);
}
