#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphvar/error.hpp"
#include "graphvar/estimation.hpp"
#include "graphvar/evaluation.hpp"
#include "graphvar/graph.hpp"
#include "graphvar/models.hpp"

namespace graphvar {

using json = nlohmann::json;

/// 64-bit FNV-1a, hex encoded. Stable across platforms, used for provenance.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string file_hash(const std::filesystem::path& path) { return content_hash(read_file(path)); }

inline void save_graph(const std::filesystem::path& path, const GraphShiftOperator& g) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::Io, "cannot write " + path.string());
  write_edge_list(out, g);
}

inline GraphShiftOperator load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::Io, "cannot open graph file " + path.string());
  return read_edge_list(in);
}

// JSON has no NaN/Inf; those become null.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json product_to_json(const ProductGraphSpec& p) {
  return {{"s00", p.s00}, {"s01", p.s01}, {"s10", p.s10}, {"s11", p.s11}};
}

inline ProductGraphSpec product_from_json(const json& j) {
  return {j.at("s00").get<double>(), j.at("s01").get<double>(), j.at("s10").get<double>(),
          j.at("s11").get<double>()};
}

struct GraphRef {
  std::string path;
  std::string hash;
};

/// Model document: spec, coefficient arrays (row-major, explicit shape) and
/// graph references by path plus content hash.
inline json model_to_json(const FittedModel& m, const GraphRef& station, const std::optional<GraphRef>& feature) {
  const auto& c = m.coeffs();
  json coeffs = json::object();
  if (c.scalar_taps.size()) {
    std::vector<double> d;
    for (int p = 1; p <= c.P; ++p)
      for (int k = 0; k < c.K; ++k) d.push_back(c.scalar(p, k));
    coeffs["scalar_taps"] = {{"shape", {c.P, c.K}}, {"data", d}};
  }
  if (!c.feature_taps.empty()) {
    std::vector<double> d;
    for (int p = 1; p <= c.P; ++p)
      for (int k = 0; k < c.K; ++k)
        for (int f = 0; f < c.F; ++f) d.push_back(c.feature(p, k)(f));
    coeffs["feature_taps"] = {{"shape", {c.P, c.K, c.F}}, {"data", d}};
  }
  if (!c.matrix_taps.empty()) {
    std::vector<double> d;
    for (int p = 1; p <= c.P; ++p)
      for (int k = 0; k < c.K; ++k)
        for (int i = 0; i < c.F; ++i)
          for (int j = 0; j < c.F; ++j) d.push_back(c.matrix(p, k)(i, j));
    coeffs["matrix_taps"] = {{"shape", {c.P, c.K, c.F, c.F}}, {"data", d}};
  }
  json graphs = {{"station", {{"path", station.path}, {"hash", station.hash}}}};
  if (feature) graphs["feature"] = {{"path", feature->path}, {"hash", feature->hash}};
  return {{"format", "graphvar-model"},
          {"version", 1},
          {"spec",
           {{"family", to_string(m.spec().family)},
            {"P", m.spec().P},
            {"K", m.spec().K},
            {"product", product_to_json(m.spec().product)}}},
          {"sign_convention", to_string(m.sign_convention())},
          {"nodes", m.nodes()},
          {"features", m.features()},
          {"coefficients", coeffs},
          {"graphs", graphs}};
}

namespace detail {

inline std::vector<double> array_data(const json& arr, const std::vector<int>& shape, const char* name) {
  const auto got = arr.at("shape").get<std::vector<int>>();
  require(got == shape, ErrorCode::Parse, std::string(name) + " has an unexpected shape");
  auto d = arr.at("data").get<std::vector<double>>();
  std::size_t n = 1;
  for (int s : shape) n *= std::size_t(s);
  require(d.size() == n, ErrorCode::Parse, std::string(name) + " data length does not match its shape");
  return d;
}

inline GraphShiftOperator load_checked(const json& ref, const std::filesystem::path& base) {
  std::filesystem::path p = ref.at("path").get<std::string>();
  if (p.is_relative()) p = base / p;
  const std::string text = read_file(p);
  require(content_hash(text) == ref.at("hash").get<std::string>(), ErrorCode::InvalidInput,
          "graph file " + p.string() + " does not match the recorded hash");
  std::istringstream in(text);
  return read_edge_list(in);
}

}  // namespace detail

/// Rebuilds a model; relative graph paths resolve against `base`.
inline FittedModel model_from_json(const json& j, const std::filesystem::path& base = ".") {
  require(j.value("format", "") == "graphvar-model", ErrorCode::Parse, "not a graphvar model document");
  ModelSpec spec;
  const auto& s = j.at("spec");
  spec.family = parse_model_family(s.at("family").get<std::string>());
  spec.P = s.at("P").get<int>();
  spec.K = s.at("K").get<int>();
  spec.product = product_from_json(s.at("product"));
  const int F = j.at("features").get<int>();

  CoefficientSet c = CoefficientSet::zeros(spec, F);
  const auto& cj = j.at("coefficients");
  if (c.scalar_taps.size()) {
    auto d = detail::array_data(cj.at("scalar_taps"), {spec.P, spec.K}, "scalar_taps");
    std::size_t i = 0;
    for (int p = 1; p <= spec.P; ++p)
      for (int k = 0; k < spec.K; ++k) c.scalar(p, k) = d[i++];
  }
  if (!c.feature_taps.empty()) {
    auto d = detail::array_data(cj.at("feature_taps"), {spec.P, spec.K, F}, "feature_taps");
    std::size_t i = 0;
    for (int p = 1; p <= spec.P; ++p)
      for (int k = 0; k < spec.K; ++k)
        for (int f = 0; f < F; ++f) c.feature(p, k)(f) = d[i++];
  }
  if (!c.matrix_taps.empty()) {
    auto d = detail::array_data(cj.at("matrix_taps"), {spec.P, spec.K, F, F}, "matrix_taps");
    std::size_t i = 0;
    for (int p = 1; p <= spec.P; ++p)
      for (int k = 0; k < spec.K; ++k)
        for (int a = 0; a < F; ++a)
          for (int b = 0; b < F; ++b) c.matrix(p, k)(a, b) = d[i++];
  }
  const auto& g = j.at("graphs");
  GraphShiftOperator station = detail::load_checked(g.at("station"), base);
  std::optional<GraphShiftOperator> feature;
  if (g.contains("feature")) feature = detail::load_checked(g.at("feature"), base);
  return FittedModel(spec, std::move(c), std::move(station), std::move(feature));
}

inline json joint_trace_to_json(const JointFitResult& r) {
  json trace = json::array();
  for (const auto& e : r.trace)
    trace.push_back({{"outer", e.outer},
                     {"step", e.step == HalfStep::Coefficients ? "coefficients" : "feature_graph"},
                     {"objective", e.objective}});
  return trace;
}

struct FitDiagnostics {
  std::string family;
  int P = 0;
  int K = 0;
  std::size_t targets = 0;
  double objective = 0.0;
  double fixed_objective = 0.0;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
  double condition_estimate = 0.0;
  int outer_iterations = 0;
  bool converged = true;
  json trace = json::array();
};

inline json fit_report_to_json(const FitDiagnostics& d, const std::string& config_hash) {
  return {{"format", "graphvar-fit-report"},
          {"config_hash", config_hash},
          {"family", d.family},
          {"P", d.P},
          {"K", d.K},
          {"targets", d.targets},
          {"objective", number_or_null(d.objective)},
          {"fixed_objective", number_or_null(d.fixed_objective)},
          {"rank", d.rank},
          {"rank_deficient", d.rank_deficient},
          {"condition_estimate", number_or_null(d.condition_estimate)},
          {"outer_iterations", d.outer_iterations},
          {"converged", d.converged},
          {"objective_trace", d.trace}};
}

/// One row per (family, in_sample_len, window). Joint mode adds the AM
/// iteration count and training objectives.
inline void write_report_csv(std::ostream& os, const EvaluationReport& r) {
  const bool joint = r.mode == EstimationMode::Joint;
  os << "family,in_sample_len,window,P,K,rnmse";
  if (joint) os << ",outer_iterations,final_objective,fixed_objective";
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  auto num = [&](double v) -> std::ostream& {
    if (std::isfinite(v)) os << v;
    else os << "nan";
    return os;
  };
  for (const auto& w : r.windows) {
    os << to_string(w.family) << ',' << w.in_sample_len << ',' << w.window << ',' << w.P << ',' << w.K << ',';
    num(w.rnmse);
    if (joint) {
      os << ',' << w.outer_iterations << ',';
      num(w.training_objective) << ',';
      num(w.fixed_objective);
    }
    os << '\n';
  }
}

inline json report_to_json(const EvaluationReport& r, const std::string& config_hash) {
  json windows = json::array();
  for (const auto& w : r.windows) {
    json grid = json::array();
    for (const auto& c : w.grid) {
      json cell = {{"P", c.P}, {"K", c.K}, {"rnmse", number_or_null(c.rnmse)}};
      if (!c.error.empty()) cell["error"] = c.error;
      grid.push_back(cell);
    }
    json item = {{"family", to_string(w.family)},
                 {"in_sample_len", w.in_sample_len},
                 {"window", w.window},
                 {"P", w.P},
                 {"K", w.K},
                 {"rnmse", number_or_null(w.rnmse)},
                 {"residual_energy", w.energy.residual},
                 {"reference_energy", w.energy.reference},
                 {"training_objective", number_or_null(w.training_objective)},
                 {"fixed_objective", number_or_null(w.fixed_objective)},
                 {"outer_iterations", w.outer_iterations},
                 {"grid", grid}};
    if (!w.error.empty()) item["error"] = w.error;
    windows.push_back(item);
  }
  json pooled = json::array();
  for (const auto& p : r.pooled)
    pooled.push_back({{"family", to_string(p.family)},
                      {"in_sample_len", p.in_sample_len},
                      {"rnmse", number_or_null(p.rnmse)},
                      {"windows_ok", p.windows_ok},
                      {"windows_failed", p.windows_failed}});
  return {{"format", "graphvar-evaluation"},
          {"config_hash", config_hash},
          {"mode", to_string(r.mode)},
          {"pooled", pooled},
          {"windows", windows}};
}

}  // namespace graphvar
