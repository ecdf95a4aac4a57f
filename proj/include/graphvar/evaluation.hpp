#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/estimation.hpp"
#include "graphvar/graph.hpp"
#include "graphvar/models.hpp"
#include "graphvar/panel.hpp"

namespace graphvar {

/// Accumulates prediction-error energy and reference energy.
/// RNMSE = sqrt(sum ||x~_t - x_t||^2 / sum ||x_t||^2).
struct ErrorEnergy {
  double residual = 0.0;
  double reference = 0.0;

  template <typename A, typename B>
  void add(const Eigen::MatrixBase<A>& predicted, const Eigen::MatrixBase<B>& actual) {
    require(predicted.rows() == actual.rows() && predicted.cols() == actual.cols(),
            ErrorCode::DimensionMismatch, "predicted and actual shapes differ");
    residual += (predicted - actual).squaredNorm();
    reference += actual.squaredNorm();
  }

  void merge(const ErrorEnergy& o) {
    residual += o.residual;
    reference += o.reference;
  }

  double rnmse() const {
    require(reference > 0.0, ErrorCode::InvalidInput, "degenerate reference signal");
    return std::sqrt(residual / reference);
  }
};

inline double rnmse(std::span<const Eigen::MatrixXd> predicted, std::span<const Eigen::MatrixXd> actual) {
  require(predicted.size() == actual.size(), ErrorCode::DimensionMismatch,
          "predicted and actual have different lengths");
  ErrorEnergy e;
  for (std::size_t i = 0; i < predicted.size(); ++i) e.add(predicted[i], actual[i]);
  return e.rnmse();
}

inline double rnmse(const SignalPanel& predicted, const SignalPanel& actual) {
  require(predicted.T() == actual.T() && predicted.N() == actual.N() && predicted.F() == actual.F(),
          ErrorCode::DimensionMismatch, "panel shapes differ");
  ErrorEnergy e;
  for (std::size_t t = 0; t < actual.T(); ++t) e.add(predicted.slice(t), actual.slice(t));
  return e.rnmse();
}

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct WindowPlan {
  std::size_t in_sample_len = 2000;
  std::size_t out_sample_len = 168;
  std::size_t n_iterations = 20;
  std::size_t stride = 168;
  double train_fraction = 0.7;

  void validate() const {
    require(in_sample_len > 0 && out_sample_len > 0 && n_iterations > 0 && stride > 0,
            ErrorCode::InvalidParameter, "window plan sizes must be positive");
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::InvalidParameter,
            "train fraction must lie in (0, 1)");
  }
};

struct Window {
  std::size_t index = 0;
  IndexRange in_sample;
  IndexRange out_sample;
};

/// Iteration i uses in-sample [i*stride, i*stride + in) and the next `out`
/// indices as out-of-sample; everything later is left out.
inline std::vector<Window> plan_windows(std::size_t T_total, const WindowPlan& plan) {
  plan.validate();
  const std::size_t span = plan.in_sample_len + plan.out_sample_len;
  const std::size_t last_end = (plan.n_iterations - 1) * plan.stride + span;
  if (last_end > T_total) {
    const std::size_t feasible = T_total >= span ? (T_total - span) / plan.stride + 1 : 0;
    throw Error(ErrorCode::InvalidParameter,
                "window plan needs " + std::to_string(last_end) + " samples but the series has " +
                    std::to_string(T_total) + "; at most " + std::to_string(feasible) + " iterations fit");
  }
  std::vector<Window> out;
  for (std::size_t i = 0; i < plan.n_iterations; ++i) {
    const std::size_t b = i * plan.stride;
    out.push_back({i, {b, b + plan.in_sample_len}, {b + plan.in_sample_len, b + span}});
  }
  return out;
}

/// Per (node, feature) z-scoring with statistics from a reference range.
struct ZScore {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd scale;

  static ZScore fit(const SignalPanel& panel, IndexRange range) {
    require(range.size() >= 2 && range.end <= panel.T(), ErrorCode::InsufficientData,
            "z-scoring needs at least two samples");
    const auto N = Eigen::Index(panel.N()), F = Eigen::Index(panel.F());
    ZScore z{Eigen::MatrixXd::Zero(N, F), Eigen::MatrixXd::Zero(N, F)};
    for (std::size_t t = range.begin; t < range.end; ++t) z.mean += panel.slice(t);
    z.mean /= double(range.size());
    for (std::size_t t = range.begin; t < range.end; ++t)
      z.scale += (panel.slice(t) - z.mean).cwiseAbs2();
    z.scale = (z.scale / double(range.size() - 1)).cwiseSqrt();
    for (auto& v : z.scale.reshaped())
      if (!(v > 0.0)) v = 1.0;
    return z;
  }

  SignalPanel apply(const SignalPanel& panel) const {
    SignalPanel out = panel;
    for (std::size_t t = 0; t < out.T(); ++t)
      out.slice(t) = (panel.slice(t) - mean).cwiseQuotient(scale);
    return out;
  }

  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const { return x.cwiseProduct(scale) + mean; }
};

enum class EstimationMode { Fixed, Joint };

inline const char* to_string(EstimationMode m) { return m == EstimationMode::Fixed ? "fixed" : "joint"; }

inline EstimationMode parse_estimation_mode(const std::string& s) {
  if (s == "fixed") return EstimationMode::Fixed;
  if (s == "joint") return EstimationMode::Joint;
  throw Error(ErrorCode::Parse, "unknown estimation mode '" + s + "'");
}

struct GraphPair {
  GraphShiftOperator station;
  std::optional<GraphShiftOperator> feature;
};

struct ModelFit {
  FittedModel model;
  double objective = 0.0;        // training objective of the returned model
  double fixed_objective = 0.0;  // LS objective with the given feature graph
  int outer_iterations = 0;      // 0 unless joint estimation ran
  bool rank_deficient = false;
};

/// Fits a model on targets [t_begin, t_end). Joint mode learns the feature
/// graph for product-graph families and falls back to plain LS otherwise.
inline ModelFit fit_model(const ModelSpec& spec, const GraphPair& graphs, const SignalPanel& panel,
                          std::size_t t_begin, std::size_t t_end, EstimationMode mode,
                          const JointFitConfig& joint = {}) {
  const GraphShiftOperator* sf = graphs.feature ? &*graphs.feature : nullptr;
  if (mode == EstimationMode::Joint && uses_product_graph(spec.family)) {
    require(sf != nullptr, ErrorCode::InvalidInput, "joint estimation needs an initial feature graph");
    JointFitResult r = joint_fit(spec, graphs.station, *sf, panel, t_begin, t_end, joint);
    return {FittedModel(spec, r.coeffs, graphs.station, r.sf), r.final_objective, r.fixed_objective,
            r.outer_iterations, false};
  }
  FitResult r = fit_least_squares(spec, graphs.station, sf, panel, t_begin, t_end);
  std::optional<GraphShiftOperator> keep;
  if (uses_product_graph(spec.family)) keep = *sf;
  return {FittedModel(spec, r.coeffs, graphs.station, keep), r.objective, r.objective, 0, r.rank_deficient};
}

struct GridCell {
  int P = 1;
  int K = 1;
  double rnmse = std::numeric_limits<double>::infinity();
  std::string error;  // empty on success
};

struct GridSearchResult {
  int best_P = 0;
  int best_K = 0;
  std::vector<GridCell> table;
};

inline std::vector<std::pair<int, int>> full_grid(int max_P, int max_K) {
  std::vector<std::pair<int, int>> g;
  for (int p = 1; p <= max_P; ++p)
    for (int k = 1; k <= max_K; ++k) g.emplace_back(p, k);
  return g;
}

/// Scores every (P, K) by one-step-ahead validation RNMSE: fit on the first
/// train_fraction of the in-sample range, predict the rest from observed history.
/// Ties go to the smaller P*K, then the smaller P.
inline GridSearchResult grid_search(ModelFamily family, const ProductGraphSpec& product, const GraphPair& graphs,
                                    const SignalPanel& panel, IndexRange in_sample,
                                    const std::vector<std::pair<int, int>>& grid, double train_fraction,
                                    EstimationMode mode = EstimationMode::Fixed, const JointFitConfig& joint = {}) {
  require(!grid.empty(), ErrorCode::InvalidParameter, "empty hyperparameter grid");
  require(in_sample.end <= panel.T() && in_sample.size() >= 2, ErrorCode::InvalidParameter,
          "in-sample range outside the panel");
  const std::size_t train_end = in_sample.begin + std::size_t(std::floor(train_fraction * double(in_sample.size())));
  require(train_end > in_sample.begin && train_end < in_sample.end, ErrorCode::InsufficientData,
          "in-sample range too short to split into train and validation");

  GridSearchResult out;
  for (auto [P, K] : grid) {
    GridCell cell;
    cell.P = P;
    cell.K = K;
    try {
      ModelSpec spec{family, P, K, product};
      const std::size_t first = in_sample.begin + std::size_t(P);
      require(first < train_end, ErrorCode::InsufficientData, "training part shorter than P");
      ModelFit fit = fit_model(spec, graphs, panel, first, train_end, mode, joint);
      ErrorEnergy e;
      for (std::size_t t = train_end; t < in_sample.end; ++t) e.add(predict_at(fit.model, panel, t), panel.slice(t));
      cell.rnmse = e.rnmse();
      if (!std::isfinite(cell.rnmse)) {
        cell.rnmse = std::numeric_limits<double>::infinity();
        cell.error = "non-finite validation error";
      }
    } catch (const std::exception& ex) {
      cell.rnmse = std::numeric_limits<double>::infinity();
      cell.error = ex.what();
    }
    out.table.push_back(cell);
  }
  const GridCell* best = nullptr;
  for (const auto& c : out.table) {
    if (!best) {
      best = &c;
      continue;
    }
    const auto key = [](const GridCell& x) { return std::tuple(x.rnmse, x.P * x.K, x.P); };
    if (key(c) < key(*best)) best = &c;
  }
  require(std::isfinite(best->rnmse), ErrorCode::InsufficientData,
          "every grid cell failed (first error: " + out.table.front().error + ")");
  out.best_P = best->P;
  out.best_K = best->K;
  return out;
}

struct EvaluationConfig {
  std::vector<ModelFamily> families;
  ProductGraphSpec product = ProductGraphSpec::cartesian();
  std::vector<std::size_t> in_sample_lens{2000};
  WindowPlan plan;  // in_sample_len is overridden by each sweep entry
  std::vector<std::pair<int, int>> grid = full_grid(5, 5);
  EstimationMode mode = EstimationMode::Fixed;
  JointFitConfig joint;
  bool normalize = true;
  bool raw_scale_rnmse = false;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct WindowResult {
  ModelFamily family = ModelFamily::GVar;
  std::size_t in_sample_len = 0;
  std::size_t window = 0;
  int P = 0;
  int K = 0;
  double rnmse = std::numeric_limits<double>::quiet_NaN();
  ErrorEnergy energy;
  double training_objective = std::numeric_limits<double>::quiet_NaN();
  double fixed_objective = std::numeric_limits<double>::quiet_NaN();
  int outer_iterations = 0;
  std::vector<GridCell> grid;
  std::string error;  // non-empty if the window failed
};

struct PooledResult {
  ModelFamily family = ModelFamily::GVar;
  std::size_t in_sample_len = 0;
  double rnmse = std::numeric_limits<double>::quiet_NaN();
  std::size_t windows_ok = 0;
  std::size_t windows_failed = 0;
};

struct EvaluationReport {
  EstimationMode mode = EstimationMode::Fixed;
  std::vector<WindowResult> windows;
  std::vector<PooledResult> pooled;

  const PooledResult* find(ModelFamily f, std::size_t in_len) const {
    for (const auto& p : pooled)
      if (p.family == f && p.in_sample_len == in_len) return &p;
    return nullptr;
  }
};

/// Evaluates one window: z-score on in-sample statistics, grid search, refit on
/// the full in-sample range, then score one-step-ahead predictions over the
/// out-of-sample range. Predictions at t only read indices < t.
inline WindowResult evaluate_window(ModelFamily family, const EvaluationConfig& cfg, const GraphPair& graphs,
                                    const SignalPanel& panel, const Window& w, std::size_t in_len) {
  WindowResult r;
  r.family = family;
  r.in_sample_len = in_len;
  r.window = w.index;
  try {
    const SignalPanel raw = panel.subrange(w.in_sample.begin, w.out_sample.end);
    const IndexRange in_local{0, w.in_sample.size()};
    std::optional<ZScore> z;
    if (cfg.normalize) z = ZScore::fit(raw, in_local);
    const SignalPanel local = z ? z->apply(raw) : raw;

    GridSearchResult gs = grid_search(family, cfg.product, graphs, local, in_local, cfg.grid,
                                      cfg.plan.train_fraction, cfg.mode, cfg.joint);
    r.grid = gs.table;
    r.P = gs.best_P;
    r.K = gs.best_K;
    ModelSpec spec{family, r.P, r.K, cfg.product};
    ModelFit fit = fit_model(spec, graphs, local, std::size_t(r.P), in_local.end, cfg.mode, cfg.joint);
    r.training_objective = fit.objective;
    r.fixed_objective = fit.fixed_objective;
    r.outer_iterations = fit.outer_iterations;
    for (std::size_t t = in_local.end; t < local.T(); ++t) {
      Eigen::MatrixXd pred = predict_at(fit.model, local, t);
      if (z && cfg.raw_scale_rnmse)
        r.energy.add(z->invert(pred), raw.slice(t));
      else
        r.energy.add(pred, local.slice(t));
    }
    r.rnmse = r.energy.rnmse();
  } catch (const std::exception& ex) {
    r.error = ex.what();
  }
  return r;
}

/// Runs fn(i) for i in [0, n) on a small worker pool.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

/// Sliding-window evaluation sweep over families and in-sample sizes. RNMSE
/// is pooled over all out-of-sample signals of all windows, not averaged.
inline EvaluationReport evaluate(const EvaluationConfig& cfg, const GraphPair& graphs, const SignalPanel& panel) {
  require(!cfg.families.empty(), ErrorCode::InvalidParameter, "no model families to evaluate");
  require(!cfg.in_sample_lens.empty(), ErrorCode::InvalidParameter, "no in-sample sizes to evaluate");

  struct Job {
    ModelFamily family;
    std::size_t in_len;
    Window window;
  };
  std::vector<Job> jobs;
  for (auto family : cfg.families)
    for (auto in_len : cfg.in_sample_lens) {
      WindowPlan plan = cfg.plan;
      plan.in_sample_len = in_len;
      for (const auto& w : plan_windows(panel.T(), plan)) jobs.push_back({family, in_len, w});
    }

  EvaluationReport report;
  report.mode = cfg.mode;
  report.windows.resize(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    report.windows[i] = evaluate_window(jobs[i].family, cfg, graphs, panel, jobs[i].window, jobs[i].in_len);
  });

  std::map<std::pair<int, std::size_t>, std::pair<ErrorEnergy, PooledResult>> pool;
  for (const auto& w : report.windows) {
    auto& [energy, pooled] = pool[{int(w.family), w.in_sample_len}];
    pooled.family = w.family;
    pooled.in_sample_len = w.in_sample_len;
    if (w.error.empty()) {
      energy.merge(w.energy);
      ++pooled.windows_ok;
    } else {
      ++pooled.windows_failed;
    }
  }
  for (auto family : cfg.families)
    for (auto in_len : cfg.in_sample_lens) {
      auto& [energy, pooled] = pool[{int(family), in_len}];
      if (pooled.windows_ok > 0 && energy.reference > 0.0) pooled.rnmse = energy.rnmse();
      report.pooled.push_back(pooled);
    }
  return report;
}

}  // namespace graphvar
