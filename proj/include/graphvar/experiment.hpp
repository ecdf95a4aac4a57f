#pragma once

// Experiment orchestration behind the graphvar command-line tool. Every
// command is a function of the parsed config; outputs embed the config hash.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "graphvar/config.hpp"
#include "graphvar/data.hpp"
#include "graphvar/evaluation.hpp"
#include "graphvar/io.hpp"
#include "graphvar/selftest.hpp"

namespace graphvar {

namespace fs = std::filesystem;

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Thrown for bad configs and missing inputs; maps to exit code 2.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCode::InvalidParameter, what) {}
};

struct SyntheticConfig {
  ModelFamily family = ModelFamily::MimoGVar;
  int P = 2;
  int K = 2;
  int N = 8;
  int F = 4;
  std::size_t T = 3000;
  double noise = 0.1;
  double radius = 0.9;
  std::size_t burn_in = 200;
};

struct ExperimentConfig {
  std::string source = "air_quality";  // air_quality | synthetic | panel
  fs::path data_dir;
  fs::path stations;
  fs::path panel_path;
  std::string start = "2015-07-20 07:00";
  std::string end = "2016-09-05 13:00";
  SyntheticConfig synthetic;

  Eigen::Index station_k = 3;
  std::optional<double> sigma;
  Eigen::Index feature_m = 2;
  bool feature_weighted = true;
  fs::path station_graph_in;  // optional pass-through inputs
  fs::path feature_graph_in;
  fs::path graph_dir;

  EvaluationConfig eval;

  ModelFamily fit_family = ModelFamily::PgGVar;
  int fit_P = 2;
  int fit_K = 2;

  std::string selftest_gradient = "analytic";

  fs::path output_dir;
  std::uint64_t seed = 1;
  std::string hash;

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "seed",
        "data.source", "data.dir", "data.stations", "data.panel", "data.start", "data.end",
        "synthetic.family", "synthetic.P", "synthetic.K", "synthetic.N", "synthetic.F", "synthetic.T",
        "synthetic.noise", "synthetic.radius", "synthetic.burn_in",
        "graphs.dir", "graphs.station_k", "graphs.sigma", "graphs.feature_m", "graphs.feature_weights",
        "graphs.station", "graphs.feature",
        "models.families", "models.product",
        "grid.max_P", "grid.max_K",
        "windows.in_sample", "windows.in_sample_min", "windows.in_sample_max", "windows.in_sample_step",
        "windows.out_sample", "windows.iterations", "windows.stride", "windows.train_fraction",
        "estimation.mode", "estimation.epsilon", "estimation.max_outer_iters", "estimation.max_inner_iters",
        "estimation.gradient", "estimation.symmetric_feature_graph",
        "evaluation.normalize", "evaluation.raw_scale_rnmse", "evaluation.threads",
        "fit.family", "fit.P", "fit.K",
        "selftest.gradient_mode",
        "output.dir"};
    return keys;
  }

  static ExperimentConfig from(const Config& c) {
    try {
      return build(c);
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }

 private:
  static ProductGraphSpec parse_product(const Config& c) {
    const auto items = c.get_list("models.product", {"cartesian"});
    if (items.size() == 1) return ProductGraphSpec::from_name(items.front());
    require(items.size() == 4, ErrorCode::Parse, "models.product must be a preset name or [s00, s01, s10, s11]");
    const auto v = c.get_double_list("models.product");
    ProductGraphSpec p{v[0], v[1], v[2], v[3]};
    p.validate();
    return p;
  }

  static std::size_t positive(long long v, const std::string& key) {
    require(v > 0, ErrorCode::InvalidParameter, key + " must be positive");
    return std::size_t(v);
  }

  static ExperimentConfig build(const Config& c) {
    c.reject_unknown(known_keys());
    ExperimentConfig x;
    x.hash = content_hash(c.canonical());
    x.seed = std::uint64_t(c.get_int("seed", 1));

    x.source = c.get_string("data.source", "air_quality");
    require(x.source == "air_quality" || x.source == "synthetic" || x.source == "panel", ErrorCode::Parse,
            "data.source must be air_quality, synthetic or panel");
    x.data_dir = c.get_path("data.dir");
    x.stations = c.get_path("data.stations");
    x.panel_path = c.get_path("data.panel");
    x.start = c.get_string("data.start", x.start);
    x.end = c.get_string("data.end", x.end);

    auto& s = x.synthetic;
    s.family = parse_model_family(c.get_string("synthetic.family", to_string(s.family)));
    s.P = int(c.get_int("synthetic.P", s.P));
    s.K = int(c.get_int("synthetic.K", s.K));
    s.N = int(c.get_int("synthetic.N", s.N));
    s.F = int(c.get_int("synthetic.F", s.F));
    s.T = positive(c.get_int("synthetic.T", (long long)s.T), "synthetic.T");
    s.noise = c.get_double("synthetic.noise", s.noise);
    s.radius = c.get_double("synthetic.radius", s.radius);
    s.burn_in = std::size_t(c.get_int("synthetic.burn_in", (long long)s.burn_in));

    x.station_k = c.get_int("graphs.station_k", 3);
    if (c.has("graphs.sigma") && c.get_string("graphs.sigma") != "auto") x.sigma = c.get_double("graphs.sigma", 0);
    x.feature_m = c.get_int("graphs.feature_m", 2);
    const std::string weights = c.get_string("graphs.feature_weights", "correlation");
    require(weights == "correlation" || weights == "binary", ErrorCode::Parse,
            "graphs.feature_weights must be correlation or binary");
    x.feature_weighted = weights == "correlation";
    x.station_graph_in = c.get_path("graphs.station");
    x.feature_graph_in = c.get_path("graphs.feature");

    x.output_dir = c.get_path("output.dir", "out");
    x.graph_dir = c.has("graphs.dir") ? c.get_path("graphs.dir") : x.output_dir / "graphs";

    auto& e = x.eval;
    e.families.clear();
    for (const auto& f : c.get_list("models.families", {"gvar", "per_feature_gvar", "pgvar", "pg_gvar", "mimo_gvar"}))
      e.families.push_back(parse_model_family(f));
    if (e.families.empty()) throw UsageError("models.families is empty; list at least one model family");
    e.product = parse_product(c);
    e.grid = full_grid(int(c.get_int("grid.max_P", 5)), int(c.get_int("grid.max_K", 5)));
    require(!e.grid.empty(), ErrorCode::InvalidParameter, "grid.max_P and grid.max_K must be >= 1");

    e.in_sample_lens.clear();
    if (c.has("windows.in_sample")) {
      for (double v : c.get_double_list("windows.in_sample")) e.in_sample_lens.push_back(positive((long long)v, "windows.in_sample"));
    } else {
      const auto lo = positive(c.get_int("windows.in_sample_min", 200), "windows.in_sample_min");
      const auto hi = positive(c.get_int("windows.in_sample_max", 2000), "windows.in_sample_max");
      const auto step = positive(c.get_int("windows.in_sample_step", 200), "windows.in_sample_step");
      for (auto v = lo; v <= hi; v += step) e.in_sample_lens.push_back(v);
    }
    require(!e.in_sample_lens.empty(), ErrorCode::InvalidParameter, "no in-sample sizes configured");
    e.plan.out_sample_len = positive(c.get_int("windows.out_sample", 168), "windows.out_sample");
    e.plan.n_iterations = positive(c.get_int("windows.iterations", 20), "windows.iterations");
    e.plan.stride = positive(c.get_int("windows.stride", 168), "windows.stride");
    e.plan.train_fraction = c.get_double("windows.train_fraction", 0.7);

    e.mode = parse_estimation_mode(c.get_string("estimation.mode", "fixed"));
    e.joint.epsilon = c.get_double("estimation.epsilon", e.joint.epsilon);
    e.joint.max_outer_iters = int(c.get_int("estimation.max_outer_iters", e.joint.max_outer_iters));
    e.joint.sf_step.max_inner_iters = int(c.get_int("estimation.max_inner_iters", e.joint.sf_step.max_inner_iters));
    e.joint.sf_step.gradient = parse_gradient_mode(c.get_string("estimation.gradient", "analytic"));
    e.joint.symmetric_feature_graph = c.get_bool("estimation.symmetric_feature_graph", false);
    e.joint.validate();
    e.normalize = c.get_bool("evaluation.normalize", true);
    e.raw_scale_rnmse = c.get_bool("evaluation.raw_scale_rnmse", false);
    e.threads = unsigned(c.get_int("evaluation.threads", 0));

    x.fit_family = parse_model_family(c.get_string("fit.family", to_string(x.fit_family)));
    x.fit_P = int(c.get_int("fit.P", 2));
    x.fit_K = int(c.get_int("fit.K", 2));
    ModelSpec{x.fit_family, x.fit_P, x.fit_K, e.product}.validate();

    x.selftest_gradient = c.get_string("selftest.gradient_mode", "analytic");

    if (x.source == "air_quality") {
      parse_hour(x.start);
      parse_hour(x.end);
    }
    return x;
  }
};

inline void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

namespace experiment_detail {

inline GraphShiftOperator binary_weights(const GraphShiftOperator& a) {
  std::vector<Triplet> t;
  for (const auto& e : a.triplets()) t.emplace_back(e.row(), e.col(), 1.0);
  return GraphShiftOperator::from_triplets(a.size(), t, GsoKind::Adjacency, t.empty());
}

// kNN graph over n random points of the unit square.
inline GraphShiftOperator random_geometric_laplacian(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pts(n, 2);
  for (auto& v : pts.reshaped()) v = u(rng);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (pts.row(i) - pts.row(j)).norm();
  return normalized_laplacian(knn_gaussian_graph(DistanceMatrix(d), k));
}

inline void copy_graph(const fs::path& from, const fs::path& to, const std::string& what) {
  require_exists(from, what);
  load_graph(from);  // validate before copying
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

}  // namespace experiment_detail

struct LoadedData {
  SignalPanel panel;
  std::vector<std::string> feature_names;
};

inline std::vector<std::string> generic_feature_names(std::size_t F) {
  std::vector<std::string> names;
  for (std::size_t f = 0; f < F; ++f) names.push_back("f" + std::to_string(f));
  return names;
}

inline fs::path station_graph_file(const ExperimentConfig& x) { return x.graph_dir / "station.gso"; }
inline fs::path feature_graph_file(const ExperimentConfig& x) { return x.graph_dir / "feature.gso"; }
inline fs::path panel_cache_file(const ExperimentConfig& x) { return x.graph_dir / "panel.csv"; }

/// Synthetic graphs: provided files win, otherwise seeded random geometric graphs.
inline GraphPair synthetic_graphs(const ExperimentConfig& x) {
  std::mt19937_64 rng(x.seed);
  GraphPair g{experiment_detail::random_geometric_laplacian(x.synthetic.N, x.station_k, rng), std::nullopt};
  g.feature = experiment_detail::random_geometric_laplacian(x.synthetic.F, x.feature_m, rng);
  if (!x.station_graph_in.empty()) {
    require_exists(x.station_graph_in, "station graph");
    g.station = load_graph(x.station_graph_in);
  }
  if (!x.feature_graph_in.empty()) {
    require_exists(x.feature_graph_in, "feature graph");
    g.feature = load_graph(x.feature_graph_in);
  }
  return g;
}

struct SyntheticTruth {
  FittedModel model;
  SignalPanel panel;
};

/// Seeded generating process of the synthetic source.
inline SyntheticTruth synthetic_truth(const ExperimentConfig& x, const GraphPair& g) {
  const auto& s = x.synthetic;
  ModelSpec spec{s.family, s.P, s.K, x.eval.product};
  const int F = int(g.feature ? g.feature->size() : s.F);
  std::optional<GraphShiftOperator> sf;
  if (uses_product_graph(s.family)) sf = g.feature;
  std::mt19937_64 rng(x.seed + 1);
  auto coeffs = random_stable_coefficients(spec, F, g.station, sf, rng, s.radius);
  auto panel = generate_synthetic({spec, coeffs, s.noise, s.T, x.seed + 2, s.burn_in, 1.0}, g.station, sf);
  return {FittedModel(spec, coeffs, g.station, sf), std::move(panel)};
}

inline LoadedData load_raw_data(const ExperimentConfig& x) {
  if (x.source == "air_quality") {
    if (x.data_dir.empty()) throw UsageError("data.dir is required for the air_quality source");
    if (x.stations.empty()) throw UsageError("data.stations is required for the air_quality source");
    require_exists(x.data_dir, "dataset directory");
    require_exists(x.stations, "station config");
    auto stations = StationConfig::load(x.stations);
    TimeRange range{parse_hour(x.start), parse_hour(x.end)};
    auto panel = load_air_quality(x.data_dir, stations, range);
    const auto& names = air_quality_features();
    return {std::move(panel), std::vector<std::string>(names.begin(), names.end())};
  }
  if (x.source == "panel") {
    if (x.panel_path.empty()) throw UsageError("data.panel is required for the panel source");
    require_exists(x.panel_path, "panel file");
    std::ifstream in(x.panel_path);
    auto loaded = read_panel_csv(in);
    return {std::move(loaded.panel), std::move(loaded.feature_names)};
  }
  auto g = synthetic_graphs(x);
  auto truth = synthetic_truth(x, g);
  const std::size_t F = truth.panel.F();
  return {std::move(truth.panel), generic_feature_names(F)};
}

/// Data for fit/evaluate: the panel cached by build-graphs when present.
inline LoadedData load_data(const ExperimentConfig& x) {
  if (x.source == "air_quality" && fs::exists(panel_cache_file(x))) {
    std::ifstream in(panel_cache_file(x));
    auto loaded = read_panel_csv(in);
    return {std::move(loaded.panel), std::move(loaded.feature_names)};
  }
  return load_raw_data(x);
}

inline GraphPair load_graphs(const ExperimentConfig& x) {
  const auto sp = station_graph_file(x), fp = feature_graph_file(x);
  if (!fs::exists(sp) || !fs::exists(fp))
    throw UsageError("graphs not found in " + x.graph_dir.string() + "; run build-graphs first");
  return {load_graph(sp), load_graph(fp)};
}

inline std::string graph_summary(const std::string& label, const GraphShiftOperator& g,
                                 const std::vector<std::string>& names, const fs::path& file) {
  std::ostringstream os;
  os << label << ": " << file.filename().string() << "\n  nodes " << g.size() << ", kind " << to_string(g.kind())
     << ", hash " << file_hash(file) << "\n";
  const Eigen::MatrixXd d = g.dense();
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    os << "  " << (std::size_t(i) < names.size() ? names[std::size_t(i)] : std::to_string(i)) << ":";
    for (Eigen::Index j = 0; j < g.size(); ++j)
      if (i != j && d(i, j) != 0.0) os << ' ' << (std::size_t(j) < names.size() ? names[std::size_t(j)] : std::to_string(j)) << '(' << -d(i, j) << ')';
    os << '\n';
  }
  return os.str();
}

inline int cmd_build_graphs(const ExperimentConfig& x, std::ostream& out) {
  fs::create_directories(x.graph_dir);
  const auto sp = station_graph_file(x), fp = feature_graph_file(x);
  std::vector<std::string> station_names, feature_names;
  std::vector<std::string> warnings;
  if (x.source == "synthetic") {
    if (!x.station_graph_in.empty())
      experiment_detail::copy_graph(x.station_graph_in, sp, "station graph");
    if (!x.feature_graph_in.empty())
      experiment_detail::copy_graph(x.feature_graph_in, fp, "feature graph");
    auto g = synthetic_graphs(x);
    if (x.station_graph_in.empty()) save_graph(sp, g.station);
    if (x.feature_graph_in.empty()) save_graph(fp, *g.feature);
    feature_names = generic_feature_names(std::size_t(g.feature->size()));
  } else {
    auto data = load_raw_data(x);
    feature_names = data.feature_names;
    if (x.source == "air_quality") {
      auto stations = StationConfig::load(x.stations);
      for (const auto& st : stations.stations) station_names.push_back(st.name);
      save_graph(sp, normalized_laplacian(knn_gaussian_graph(station_distances(stations), x.station_k, x.sigma)));
      std::ofstream cache(panel_cache_file(x));
      write_panel_csv(cache, data.panel, data.feature_names);
    } else {
      if (x.station_graph_in.empty()) throw UsageError("graphs.station is required for the panel source");
      experiment_detail::copy_graph(x.station_graph_in, sp, "station graph");
    }
    if (!x.feature_graph_in.empty()) {
      experiment_detail::copy_graph(x.feature_graph_in, fp, "feature graph");
    } else {
      auto a = correlation_feature_graph(data.panel, x.feature_m, &warnings);
      if (!x.feature_weighted) a = experiment_detail::binary_weights(a);
      save_graph(fp, normalized_laplacian(a));
    }
  }
  const auto station = load_graph(sp), feature = load_graph(fp);
  std::ofstream summary(x.graph_dir / "summary.txt");
  summary << "config_hash " << x.hash << "\nsource " << x.source << "\n\n"
          << graph_summary("station graph", station, station_names, sp) << '\n'
          << graph_summary("feature graph", feature, feature_names, fp);
  for (const auto& w : warnings) summary << "warning: " << w << '\n';
  out << "station graph: " << station.size() << " nodes -> " << sp.string() << '\n'
      << "feature graph: " << feature.size() << " nodes -> " << fp.string() << '\n';
  for (const auto& w : warnings) out << "warning: " << w << '\n';
  return kExitOk;
}

inline int cmd_synth(const ExperimentConfig& x, std::ostream& out) {
  if (x.source != "synthetic") throw UsageError("synth needs data.source = \"synthetic\"");
  fs::create_directories(x.output_dir);
  auto g = synthetic_graphs(x);
  auto truth = synthetic_truth(x, g);
  const auto sp = x.output_dir / "synthetic_station.gso", fp = x.output_dir / "synthetic_feature.gso";
  save_graph(sp, g.station);
  save_graph(fp, *g.feature);
  {
    std::ofstream panel(x.output_dir / "synthetic_panel.csv");
    write_panel_csv(panel, truth.panel, generic_feature_names(truth.panel.F()));
  }
  std::optional<GraphRef> fref;
  if (uses_product_graph(truth.model.spec().family)) fref = GraphRef{fp.filename().string(), file_hash(fp)};
  json model = model_to_json(truth.model, {sp.filename().string(), file_hash(sp)}, fref);
  model["config_hash"] = x.hash;
  model["companion_spectral_radius"] = companion_spectral_radius(truth.model);
  std::ofstream(x.output_dir / "synthetic_truth.json") << model.dump(2) << '\n';
  out << "synthetic panel T=" << truth.panel.T() << " N=" << truth.panel.N() << " F=" << truth.panel.F()
      << " -> " << (x.output_dir / "synthetic_panel.csv").string() << '\n';
  return kExitOk;
}

inline int cmd_fit(const ExperimentConfig& x, std::ostream& out) {
  auto graphs = load_graphs(x);
  auto data = load_data(x);
  fs::create_directories(x.output_dir);
  std::optional<ZScore> z;
  if (x.eval.normalize) {
    z = ZScore::fit(data.panel, {0, data.panel.T()});
    data.panel = z->apply(data.panel);
  }
  ModelSpec spec{x.fit_family, x.fit_P, x.fit_K, x.eval.product};
  const std::size_t t0 = std::size_t(spec.P), t1 = data.panel.T();

  FitDiagnostics d;
  d.family = to_string(spec.family);
  d.P = spec.P;
  d.K = spec.K;
  d.targets = t1 > t0 ? t1 - t0 : 0;
  std::optional<GraphShiftOperator> learned;
  CoefficientSet coeffs;
  const GraphShiftOperator* sf = &*graphs.feature;
  if (x.eval.mode == EstimationMode::Joint && uses_product_graph(spec.family)) {
    auto r = joint_fit(spec, graphs.station, *sf, data.panel, t0, t1, x.eval.joint);
    coeffs = r.coeffs;
    learned = r.sf;
    d.objective = r.final_objective;
    d.fixed_objective = r.fixed_objective;
    d.outer_iterations = r.outer_iterations;
    d.converged = r.converged;
    d.trace = joint_trace_to_json(r);
  } else {
    auto r = fit_least_squares(spec, graphs.station, sf, data.panel, t0, t1);
    coeffs = r.coeffs;
    d.objective = d.fixed_objective = r.objective;
    d.rank = r.rank;
    d.rank_deficient = r.rank_deficient;
    d.condition_estimate = r.condition_estimate;
  }

  const std::string stem = std::string("model_") + to_string(spec.family);
  const auto rel = [&](const fs::path& p) { return fs::relative(p, x.output_dir).generic_string(); };
  GraphRef sref{rel(station_graph_file(x)), file_hash(station_graph_file(x))};
  std::optional<GraphRef> fref;
  std::optional<GraphShiftOperator> model_sf;
  if (uses_product_graph(spec.family)) {
    fs::path fp = feature_graph_file(x);
    model_sf = *graphs.feature;
    if (learned) {
      fp = x.output_dir / (stem + "_feature.gso");
      save_graph(fp, *learned);
      model_sf = *learned;
    }
    fref = GraphRef{rel(fp), file_hash(fp)};
  }
  FittedModel model(spec, coeffs, graphs.station, model_sf);
  json mj = model_to_json(model, sref, fref);
  mj["config_hash"] = x.hash;
  std::ofstream(x.output_dir / (stem + ".json")) << mj.dump(2) << '\n';
  json report = fit_report_to_json(d, x.hash);
  if (z) {
    // Per (node, feature) statistics, column-major N x F.
    report["normalization"] = {{"mean", std::vector<double>(z->mean.reshaped().begin(), z->mean.reshaped().end())},
                               {"scale", std::vector<double>(z->scale.reshaped().begin(), z->scale.reshaped().end())}};
  }
  std::ofstream(x.output_dir / (stem + "_report.json")) << report.dump(2) << '\n';
  out << d.family << " P=" << d.P << " K=" << d.K << " objective=" << d.objective;
  if (learned) out << " (fixed " << d.fixed_objective << ", " << d.outer_iterations << " AM iterations)";
  out << "\n  -> " << (x.output_dir / (stem + ".json")).string() << '\n';
  return kExitOk;
}

inline int cmd_evaluate(const ExperimentConfig& x, std::ostream& out, std::ostream& err) {
  auto graphs = load_graphs(x);
  auto data = load_data(x);
  fs::create_directories(x.output_dir);
  EvaluationReport r = evaluate(x.eval, graphs, data.panel);
  {
    std::ofstream csv(x.output_dir / "windows.csv");
    write_report_csv(csv, r);
  }
  {
    std::ofstream pooled(x.output_dir / "pooled.csv");
    pooled << "family,in_sample_len,rnmse,windows_ok,windows_failed\n";
    for (const auto& p : r.pooled)
      pooled << to_string(p.family) << ',' << p.in_sample_len << ',' << p.rnmse << ',' << p.windows_ok << ','
             << p.windows_failed << '\n';
  }
  std::ofstream(x.output_dir / "report.json") << report_to_json(r, x.hash).dump(2) << '\n';

  std::size_t failed = 0;
  for (const auto& w : r.windows)
    if (!w.error.empty()) {
      ++failed;
      err << "window failed: " << to_string(w.family) << " in_sample=" << w.in_sample_len << " window=" << w.window
          << ": " << w.error << '\n';
    }
  for (const auto& p : r.pooled)
    out << std::left << std::setw(18) << to_string(p.family) << " in_sample=" << std::setw(6) << p.in_sample_len
        << " rnmse=" << p.rnmse << '\n';
  out << r.windows.size() - failed << "/" << r.windows.size() << " windows ok; reports in " << x.output_dir.string()
      << '\n';
  return (!r.windows.empty() && failed == r.windows.size()) ? kExitFailure : kExitOk;
}

inline int cmd_selftest(const ExperimentConfig& x, std::ostream& out) {
  SelftestConfig cfg;
  cfg.seed = x.seed;
  cfg.gradient_mode = x.selftest_gradient;
  const auto results = run_selftest(cfg);
  print_selftest(out, results);
  for (const auto& r : results)
    if (!r.passed) return kExitFailure;
  return kExitOk;
}

}  // namespace graphvar
