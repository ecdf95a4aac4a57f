#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/graph.hpp"
#include "graphvar/models.hpp"
#include "graphvar/panel.hpp"

namespace graphvar {

/// Feature order of the air-quality panel: 6 pollutants, then 4 weather variables.
inline const std::array<std::string, 10>& air_quality_features() {
  static const std::array<std::string, 10> names{"PM2.5", "PM10", "SO2",  "NO2",  "CO",
                                                 "O3",    "TEMP", "PRES", "DEWP", "WSPM"};
  return names;
}

struct StationInfo {
  std::string id;
  std::string name;
  double latitude = 0.0;
  double longitude = 0.0;
};

struct StationConfig {
  std::vector<StationInfo> stations;

  std::size_t size() const noexcept { return stations.size(); }

  void validate() const {
    require(!stations.empty(), ErrorCode::InvalidInput, "station config is empty");
    std::unordered_map<std::string, int> seen;
    for (const auto& s : stations) {
      require(seen[s.id]++ == 0, ErrorCode::InvalidInput, "duplicate station id '" + s.id + "'");
      require(std::isfinite(s.latitude) && std::abs(s.latitude) <= 90.0 && std::isfinite(s.longitude) &&
                  std::abs(s.longitude) <= 180.0,
              ErrorCode::InvalidInput, "invalid coordinates for station '" + s.id + "'");
    }
  }

  /// CSV with header "id,name,latitude,longitude"; '#' lines are comments.
  static StationConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(bool(in), ErrorCode::Io, "cannot open station config " + path.string());
    StationConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      if (header) {
        header = false;
        continue;
      }
      std::stringstream ls(line);
      std::string id, name, lat, lon;
      if (!std::getline(ls, id, ',') || !std::getline(ls, name, ',') || !std::getline(ls, lat, ',') ||
          !std::getline(ls, lon, ','))
        throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
      try {
        cfg.stations.push_back({id, name, std::stod(lat), std::stod(lon)});
      } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(line_no) + ": bad coordinate");
      }
    }
    cfg.validate();
    return cfg;
  }
};

/// Great-circle distance in kilometres.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0088;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (lat2 - lat1) * kDeg;
  const double dlon = (lon2 - lon1) * kDeg;
  const double a = std::pow(std::sin(dlat / 2), 2) +
                   std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

inline DistanceMatrix station_distances(const StationConfig& cfg) {
  const auto n = Eigen::Index(cfg.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = cfg.stations[std::size_t(i)];
      const auto& b = cfg.stations[std::size_t(j)];
      d(i, j) = d(j, i) = haversine_km(a.latitude, a.longitude, b.latitude, b.longitude);
    }
  return DistanceMatrix(std::move(d));
}

using HourPoint = std::chrono::sys_time<std::chrono::hours>;

inline HourPoint make_hour(int y, unsigned m, unsigned d, int h) {
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  require(ymd.ok(), ErrorCode::Parse, "invalid calendar date");
  require(h >= 0 && h < 24, ErrorCode::Parse, "hour out of range");
  return std::chrono::sys_days{ymd} + std::chrono::hours{h};
}

/// Accepts "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH:MM" or "YYYY-MM-DD HH".
inline HourPoint parse_hour(const std::string& text) {
  int y = 0, h = 0, minute = 0;
  unsigned mo = 0, d = 0;
  char sep = 0;
  const int got = std::sscanf(text.c_str(), "%d-%u-%u%c%d:%d", &y, &mo, &d, &sep, &h, &minute);
  require(got >= 5 && (sep == ' ' || sep == 'T') && minute == 0, ErrorCode::Parse,
          "cannot parse hour timestamp '" + text + "'");
  return make_hour(y, mo, d, h);
}

inline std::string format_hour(HourPoint p) {
  const auto day = std::chrono::floor<std::chrono::days>(p);
  const std::chrono::year_month_day ymd{day};
  const auto hour = (p - day).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02lld:00", int(ymd.year()), unsigned(ymd.month()),
                unsigned(ymd.day()), static_cast<long long>(hour));
  return buf;
}

/// Hourly range [start, end).
struct TimeRange {
  HourPoint start;
  HourPoint end;

  std::size_t hours() const { return std::size_t((end - start).count()); }
};

/// Linear interpolation over NaN gaps; edge gaps take the nearest valid value.
/// Returns false if the series has no valid value at all.
inline bool impute_linear(std::vector<double>& series) {
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < series.size(); ++i)
    if (std::isfinite(series[i])) valid.push_back(i);
  if (valid.empty()) return series.empty();
  for (std::size_t i = 0; i < valid.front(); ++i) series[i] = series[valid.front()];
  for (std::size_t i = valid.back() + 1; i < series.size(); ++i) series[i] = series[valid.back()];
  for (std::size_t v = 0; v + 1 < valid.size(); ++v) {
    const std::size_t a = valid[v], b = valid[v + 1];
    for (std::size_t i = a + 1; i < b; ++i) {
      const double w = double(i - a) / double(b - a);
      series[i] = (1.0 - w) * series[a] + w * series[b];
    }
  }
  return true;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::filesystem::path find_station_file(const std::filesystem::path& dir, const StationInfo& st) {
  require(std::filesystem::is_directory(dir), ErrorCode::Io, "dataset directory not found: " + dir.string());
  const std::string prefix = "PRSA_Data_" + st.name + "_";
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    if (name.rfind(prefix, 0) == 0 || name == st.name + ".csv" || name == st.id + ".csv") return entry.path();
  }
  throw Error(ErrorCode::Io, "no data file for station '" + st.name + "' in " + dir.string());
}

// Hour-indexed [T x F] block for one station, NaN where missing.
inline std::vector<double> read_station(const std::filesystem::path& file, const TimeRange& range) {
  std::ifstream in(file);
  require(bool(in), ErrorCode::Io, "cannot open " + file.string());
  const auto& features = air_quality_features();
  const std::size_t T = range.hours();
  const std::size_t F = features.size();
  std::vector<double> block(T * F, std::numeric_limits<double>::quiet_NaN());

  std::string line;
  std::size_t line_no = 0;
  std::unordered_map<std::string, std::size_t> col;
  std::optional<HourPoint> first, last;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const char* need : {"year", "month", "day", "hour"})
        require(col.count(need), ErrorCode::Parse, file.string() + ": missing column '" + need + "'");
      for (const auto& f : features)
        require(col.count(f), ErrorCode::Parse, file.string() + ": missing column '" + f + "'");
      continue;
    }
    auto where = [&] { return file.string() + ":" + std::to_string(line_no); };
    require(fields.size() >= col.size(), ErrorCode::Parse, where() + ": malformed row (too few fields)");
    HourPoint when;
    try {
      when = make_hour(std::stoi(fields[col["year"]]), unsigned(std::stoul(fields[col["month"]])),
                       unsigned(std::stoul(fields[col["day"]])), std::stoi(fields[col["hour"]]));
    } catch (const Error&) {
      throw Error(ErrorCode::Parse, where() + ": malformed timestamp");
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, where() + ": malformed timestamp");
    }
    if (!first || when < *first) first = when;
    if (!last || when > *last) last = when;
    if (when < range.start || when >= range.end) continue;
    const std::size_t t = std::size_t((when - range.start).count());
    for (std::size_t f = 0; f < F; ++f) {
      const std::string& raw = fields[col[features[f]]];
      if (raw.empty() || raw == "NA" || raw == "NaN") continue;
      try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        require(used == raw.size(), ErrorCode::Parse, "");
        block[t * F + f] = v;
      } catch (const std::exception&) {
        throw Error(ErrorCode::Parse, where() + ": malformed value '" + raw + "' in column " + features[f]);
      }
    }
  }
  require(first && *first <= range.start && *last >= range.end - std::chrono::hours{1}, ErrorCode::InvalidInput,
          file.string() + ": time range " + format_hour(range.start) + " .. " + format_hour(range.end) +
              " not covered by the file");
  return block;
}

}  // namespace detail

/// Loads one CSV per station (UCI multi-site layout) into a T x N x 10 panel
/// over the hourly range [start, end). Missing values are linearly
/// interpolated per (station, feature) series.
inline SignalPanel load_air_quality(const std::filesystem::path& dir, const StationConfig& stations,
                                    const TimeRange& range) {
  stations.validate();
  require(range.end > range.start, ErrorCode::InvalidParameter, "empty time range");
  const std::size_t T = range.hours();
  const std::size_t N = stations.size();
  const std::size_t F = air_quality_features().size();

  std::vector<std::filesystem::path> files;
  for (const auto& st : stations.stations) files.push_back(detail::find_station_file(dir, st));
  std::vector<std::future<std::vector<double>>> jobs;
  for (const auto& f : files)
    jobs.push_back(std::async(std::launch::async, [f, range] { return detail::read_station(f, range); }));

  SignalPanel panel(T, N, F);
  std::vector<double> series(T);
  for (std::size_t n = 0; n < N; ++n) {
    const auto block = jobs[n].get();
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < T; ++t) series[t] = block[t * F + f];
      require(impute_linear(series), ErrorCode::InsufficientData,
              "station '" + stations.stations[n].name + "' has no valid " + air_quality_features()[f] +
                  " values in range");
      for (std::size_t t = 0; t < T; ++t) panel(t, n, f) = series[t];
    }
  }
  return panel;
}

/// Panel cache: "# graphvar-panel T N F", a "t,node,<features...>" header, then
/// one row per (t, node).
inline void write_panel_csv(std::ostream& os, const SignalPanel& panel,
                            const std::vector<std::string>& feature_names) {
  require(feature_names.size() == panel.F(), ErrorCode::DimensionMismatch, "feature name count != F");
  os << "# graphvar-panel " << panel.T() << ' ' << panel.N() << ' ' << panel.F() << '\n';
  os << "t,node";
  for (const auto& n : feature_names) os << ',' << n;
  os << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t t = 0; t < panel.T(); ++t)
    for (std::size_t n = 0; n < panel.N(); ++n) {
      os << t << ',' << n;
      for (std::size_t f = 0; f < panel.F(); ++f) os << ',' << panel(t, n, f);
      os << '\n';
    }
}

struct LoadedPanel {
  SignalPanel panel;
  std::vector<std::string> feature_names;
};

inline LoadedPanel read_panel_csv(std::istream& is) {
  std::string line;
  require(bool(std::getline(is, line)), ErrorCode::Parse, "empty panel file");
  std::istringstream hs(line);
  std::string hash, tag;
  std::size_t T = 0, N = 0, F = 0;
  require(bool(hs >> hash >> tag >> T >> N >> F) && hash == "#" && tag == "graphvar-panel", ErrorCode::Parse,
          "missing '# graphvar-panel T N F' header");
  require(bool(std::getline(is, line)), ErrorCode::Parse, "missing column header");
  auto names = detail::split_csv(line);
  require(names.size() == F + 2, ErrorCode::Parse, "column header does not list F features");
  LoadedPanel out{SignalPanel(T, N, F), std::vector<std::string>(names.begin() + 2, names.end())};
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = detail::split_csv(line);
    require(fields.size() == F + 2, ErrorCode::Parse, "panel row " + std::to_string(rows + 3) + " malformed");
    const std::size_t t = std::stoul(fields[0]), n = std::stoul(fields[1]);
    require(t < T && n < N, ErrorCode::Parse, "panel row index out of range");
    for (std::size_t f = 0; f < F; ++f) out.panel(t, n, f) = std::stod(fields[f + 2]);
    ++rows;
  }
  require(rows == T * N, ErrorCode::Parse, "panel has " + std::to_string(rows) + " rows, expected T*N");
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic graph-VAR processes.

struct SyntheticSpec {
  ModelSpec model;
  CoefficientSet coeffs;
  double noise_std = 0.1;
  std::size_t T = 100;
  std::uint64_t seed = 1;
  std::size_t burn_in = 100;
  double initial_scale = 1.0;  // stddev of the initial P slices
};

/// Lag matrices M_p (NF x NF) of x_t = sum_p M_p x_{t-p}, read off the predictor.
inline std::vector<Eigen::MatrixXd> lag_matrices(const FittedModel& model) {
  const Eigen::Index N = model.nodes(), F = model.features(), NF = N * F;
  const int P = model.spec().P;
  std::vector<Eigen::MatrixXd> zero(std::size_t(P), Eigen::MatrixXd::Zero(N, F));
  std::vector<Eigen::MatrixXd> out(std::size_t(P), Eigen::MatrixXd(NF, NF));
  for (int p = 0; p < P; ++p) {
    for (Eigen::Index i = 0; i < NF; ++i) {
      auto slices = zero;
      slices[std::size_t(p)](i % N, i / N) = 1.0;
      std::vector<SliceView> h;
      for (const auto& s : slices) h.emplace_back(s.data(), N, F);
      const Eigen::MatrixXd y = predict(model, h);
      out[std::size_t(p)].col(i) = Eigen::Map<const Eigen::VectorXd>(y.data(), NF);
    }
  }
  return out;
}

/// Largest eigenvalue modulus of the NF*P x NF*P companion matrix.
inline double companion_spectral_radius(const FittedModel& model, Eigen::Index max_dim = 3000) {
  const auto lags = lag_matrices(model);
  const Eigen::Index NF = lags.front().rows();
  const Eigen::Index P = Eigen::Index(lags.size());
  require(NF * P <= max_dim, ErrorCode::InvalidParameter,
          "companion matrix of dimension " + std::to_string(NF * P) + " too large for the stability check");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(NF * P, NF * P);
  for (Eigen::Index p = 0; p < P; ++p) c.block(0, p * NF, NF, NF) = lags[std::size_t(p)];
  if (P > 1) c.block(NF, 0, NF * (P - 1), NF * (P - 1)).setIdentity();
  Eigen::EigenSolver<Eigen::MatrixXd> es(c, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Simulates x_t = prediction(history) + noise after verifying stability.
/// Deterministic for a given seed.
inline SignalPanel generate_synthetic(const SyntheticSpec& spec, const GraphShiftOperator& s,
                                      const std::optional<GraphShiftOperator>& sf = std::nullopt) {
  require(spec.noise_std >= 0.0 && spec.initial_scale >= 0.0, ErrorCode::InvalidParameter,
          "noise and initial scale must be nonnegative");
  FittedModel model(spec.model, spec.coeffs, s, sf);
  const double radius = companion_spectral_radius(model);
  require(radius < 1.0, ErrorCode::Unstable,
          "process is unstable: companion spectral radius " + std::to_string(radius) + " >= 1");

  const std::size_t N = std::size_t(s.size()), F = std::size_t(spec.coeffs.F);
  const std::size_t P = std::size_t(spec.model.P);
  const std::size_t total = P + spec.burn_in + spec.T;
  SignalPanel work(total, N, F);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t t = 0; t < P; ++t)
    for (auto& v : work.slice(t).reshaped()) v = spec.initial_scale * normal(rng);
  for (std::size_t t = P; t < total; ++t) {
    Eigen::MatrixXd x = predict_at(model, work, t);
    if (spec.noise_std > 0.0)
      for (auto& v : x.reshaped()) v += spec.noise_std * normal(rng);
    work.set_slice(t, x);
  }
  return work.subrange(P + spec.burn_in, total);
}

/// Random coefficients scaled down until the process is stable with the
/// requested companion spectral radius bound.
inline CoefficientSet random_stable_coefficients(const ModelSpec& spec, int F, const GraphShiftOperator& s,
                                                 const std::optional<GraphShiftOperator>& sf,
                                                 std::mt19937_64& rng, double max_radius = 0.9) {
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  CoefficientSet c = CoefficientSet::zeros(spec, F);
  for (auto& v : c.scalar_taps.reshaped()) v = uni(rng);
  for (auto& vec : c.feature_taps)
    for (auto& v : vec) v = uni(rng);
  for (auto& m : c.matrix_taps)
    for (auto& v : m.reshaped()) v = uni(rng);
  for (int attempt = 0; attempt < 200; ++attempt) {
    if (companion_spectral_radius(FittedModel(spec, c, s, sf)) < max_radius) return c;
    c.scalar_taps *= 0.9;
    for (auto& vec : c.feature_taps) vec *= 0.9;
    for (auto& m : c.matrix_taps) m *= 0.9;
  }
  throw Error(ErrorCode::Unstable, "could not scale coefficients to a stable process");
}

}  // namespace graphvar
