#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/filters.hpp"
#include "graphvar/graph.hpp"
#include "graphvar/models.hpp"
#include "graphvar/panel.hpp"

namespace graphvar {

/// Which regressor a design-matrix column carries.
enum class Term {
  NodeShared,      // h_kp S^k X, shared by all features
  NodePerFeature,  // h_kp^(f) S^k X(:, f)
  NodeMimo,        // (H_kp)_{ij}: S^k X(:, i) feeding output feature j
  Product,         // h_kp S_prod^k x
};

struct ColumnTag {
  Term term = Term::NodeShared;
  int lag = 1;
  int k = 0;
  int f_in = -1;
  int f_out = -1;
};

/// Column layout, p-major then k then feature. Within one (p, k):
///   gvar/pgvar: one column; per_feature_gvar: F columns (feature f);
///   pg_gvar: F per-feature columns followed by the product column;
///   mimo_gvar: F*F columns, f_in major, f_out minor (row-major H_kp).
inline std::vector<ColumnTag> column_layout(const ModelSpec& spec, int F) {
  spec.validate();
  std::vector<ColumnTag> cols;
  cols.reserve(std::size_t(param_count(spec, F)));
  for (int lag = 1; lag <= spec.P; ++lag) {
    for (int k = 0; k < spec.K; ++k) {
      switch (spec.family) {
        case ModelFamily::GVar: cols.push_back({Term::NodeShared, lag, k}); break;
        case ModelFamily::PgVar: cols.push_back({Term::Product, lag, k}); break;
        case ModelFamily::PerFeatureGVar:
          for (int f = 0; f < F; ++f) cols.push_back({Term::NodePerFeature, lag, k, f, f});
          break;
        case ModelFamily::PgGVar:
          for (int f = 0; f < F; ++f) cols.push_back({Term::NodePerFeature, lag, k, f, f});
          cols.push_back({Term::Product, lag, k});
          break;
        case ModelFamily::MimoGVar:
          for (int i = 0; i < F; ++i)
            for (int j = 0; j < F; ++j) cols.push_back({Term::NodeMimo, lag, k, i, j});
          break;
      }
    }
  }
  return cols;
}

inline CoefficientSet unpack_coefficients(const ModelSpec& spec, int F, const Eigen::VectorXd& h) {
  const auto cols = column_layout(spec, F);
  require(h.size() == Eigen::Index(cols.size()), ErrorCode::DimensionMismatch,
          "coefficient vector length does not match the column layout");
  CoefficientSet c = CoefficientSet::zeros(spec, F);
  for (std::size_t q = 0; q < cols.size(); ++q) {
    const auto& tag = cols[q];
    const double v = h(Eigen::Index(q));
    switch (tag.term) {
      case Term::NodeShared:
      case Term::Product: c.scalar(tag.lag, tag.k) = v; break;
      case Term::NodePerFeature: c.feature(tag.lag, tag.k)(tag.f_in) = v; break;
      case Term::NodeMimo: c.matrix(tag.lag, tag.k)(tag.f_in, tag.f_out) = v; break;
    }
  }
  return c;
}

inline Eigen::VectorXd pack_coefficients(const ModelSpec& spec, const CoefficientSet& c) {
  const auto cols = column_layout(spec, c.F);
  Eigen::VectorXd h(Eigen::Index(cols.size()));
  for (std::size_t q = 0; q < cols.size(); ++q) {
    const auto& tag = cols[q];
    double v = 0.0;
    switch (tag.term) {
      case Term::NodeShared:
      case Term::Product: v = c.scalar(tag.lag, tag.k); break;
      case Term::NodePerFeature: v = c.feature(tag.lag, tag.k)(tag.f_in); break;
      case Term::NodeMimo: v = c.matrix(tag.lag, tag.k)(tag.f_in, tag.f_out); break;
    }
    h(Eigen::Index(q)) = v;
  }
  return h;
}

/// PG-G-VAR is over-parametrized at k = 0: S_prod^0 = I, so the product tap
/// and the per-feature taps act on the same signal. Returns the minimum-norm
/// member of the equivalence class, which is what least squares recovers.
/// Other families are returned unchanged.
inline CoefficientSet canonical_coefficients(const ModelSpec& spec, CoefficientSet c) {
  if (spec.family != ModelFamily::PgGVar) return c;
  for (int lag = 1; lag <= spec.P; ++lag) {
    const Eigen::VectorXd d = c.feature(lag, 0).array() + c.scalar(lag, 0);
    const double shared = d.sum() / double(c.F + 1);
    c.scalar(lag, 0) = shared;
    c.feature(lag, 0) = d.array() - shared;
  }
  return c;
}

/// Graphs a model family needs, with the product GSO built once.
class RegressorGraphs {
 public:
  RegressorGraphs(const ModelSpec& spec, const GraphShiftOperator& s, const GraphShiftOperator* sf)
      : s_(&s) {
    if (uses_product_graph(spec.family)) {
      require(sf != nullptr, ErrorCode::InvalidInput,
              std::string(to_string(spec.family)) + " needs a feature graph");
      product_ = product_gso(*sf, s, spec.product);
    }
  }

  const GraphShiftOperator& node() const noexcept { return *s_; }
  const GraphShiftOperator* product() const noexcept { return product_ ? &*product_ : nullptr; }

 private:
  const GraphShiftOperator* s_;
  std::optional<GraphShiftOperator> product_;
};

/// NF x Q block of regressors for one target time, rows in feature-stacked order.
inline Eigen::MatrixXd regressor_block(const ModelSpec& spec, const std::vector<ColumnTag>& cols,
                                       const RegressorGraphs& graphs, History history) {
  const Eigen::Index N = history[0].rows();
  const Eigen::Index F = history[0].cols();
  const bool node_terms = spec.family != ModelFamily::PgVar;
  const bool product_terms = uses_product_graph(spec.family);

  std::vector<std::vector<Eigen::MatrixXd>> node_shift(std::size_t(spec.P));
  std::vector<std::vector<Eigen::VectorXd>> prod_shift(std::size_t(spec.P));
  for (int lag = 1; lag <= spec.P; ++lag) {
    const auto& x = history[std::size_t(lag - 1)];
    if (node_terms) node_shift[std::size_t(lag - 1)] = shift_sequence(graphs.node(), spec.K, x);
    if (product_terms) {
      auto& seq = prod_shift[std::size_t(lag - 1)];
      seq.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()));
      for (int k = 1; k < spec.K; ++k) seq.emplace_back(graphs.product()->matrix() * seq.back());
    }
  }

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(N * F, Eigen::Index(cols.size()));
  for (std::size_t q = 0; q < cols.size(); ++q) {
    const auto& tag = cols[q];
    auto col = block.col(Eigen::Index(q));
    const auto lag = std::size_t(tag.lag - 1);
    const auto k = std::size_t(tag.k);
    switch (tag.term) {
      case Term::NodeShared: {
        const auto& z = node_shift[lag][k];
        col = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
        break;
      }
      case Term::NodePerFeature: col.segment(tag.f_in * N, N) = node_shift[lag][k].col(tag.f_in); break;
      case Term::NodeMimo: col.segment(tag.f_out * N, N) = node_shift[lag][k].col(tag.f_in); break;
      case Term::Product: col = prod_shift[lag][k]; break;
    }
  }
  return block;
}

/// Stacked least-squares problem min ||b - A h||^2 over targets t in [t_begin, t_end).
struct RegressionSystem {
  ModelSpec spec;
  int F = 0;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<ColumnTag> columns;

  Eigen::Index rows() const noexcept { return A.rows(); }
  Eigen::Index cols() const noexcept { return A.cols(); }
  /// Fewer rows than unknowns cannot be full rank.
  bool underdetermined() const noexcept { return A.rows() < A.cols(); }
};

inline void check_target_range(const ModelSpec& spec, const SignalPanel& panel, std::size_t t_begin,
                               std::size_t t_end) {
  require(t_end <= panel.T(), ErrorCode::InvalidParameter, "target range exceeds the panel");
  require(t_begin >= std::size_t(spec.P), ErrorCode::InvalidParameter,
          "first target index must be >= P=" + std::to_string(spec.P));
  require(t_end > t_begin, ErrorCode::InsufficientData, "empty target range");
}

inline RegressionSystem build_regression(const ModelSpec& spec, const GraphShiftOperator& s,
                                         const GraphShiftOperator* sf, const SignalPanel& panel,
                                         std::size_t t_begin, std::size_t t_end) {
  spec.validate();
  check_target_range(spec, panel, t_begin, t_end);
  require(s.size() == Eigen::Index(panel.N()), ErrorCode::DimensionMismatch, "graph size does not match N");
  const int F = int(panel.F());
  const Eigen::Index NF = Eigen::Index(panel.slice_size());
  RegressorGraphs graphs(spec, s, sf);

  RegressionSystem sys;
  sys.spec = spec;
  sys.F = F;
  sys.columns = column_layout(spec, F);
  const Eigen::Index T = Eigen::Index(t_end - t_begin);
  sys.A.resize(T * NF, Eigen::Index(sys.columns.size()));
  sys.b.resize(T * NF);
  for (std::size_t t = t_begin; t < t_end; ++t) {
    const Eigen::Index row = Eigen::Index(t - t_begin) * NF;
    const auto hist = panel.history(t, std::size_t(spec.P));
    sys.A.middleRows(row, NF) = regressor_block(spec, sys.columns, graphs, hist);
    sys.b.segment(row, NF) = panel.stacked(t);
  }
  return sys;
}

struct LsSolution {
  Eigen::VectorXd h;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
  double residual_norm2 = 0.0;
  double condition_estimate = 0.0;  // ratio of extreme |R_ii| of the pivoted factor
};

namespace detail {

inline LsSolution solve_cod(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, Eigen::MatrixXd& X) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
  X = cod.solve(B);
  LsSolution out;
  out.rank = cod.rank();
  out.rank_deficient = out.rank < A.cols();
  out.residual_norm2 = (B - A * X).squaredNorm();
  if (out.rank > 0) {
    Eigen::VectorXd d = cod.matrixQTZ().diagonal().head(out.rank).cwiseAbs();
    out.condition_estimate = d.maxCoeff() / d.minCoeff();
  }
  return out;
}

}  // namespace detail

/// Minimum-norm least squares via a complete orthogonal decomposition
/// (column-pivoted QR); never forms A^T A.
inline LsSolution ls_fit(const RegressionSystem& sys) {
  require(sys.rows() > 0 && sys.cols() > 0, ErrorCode::InsufficientData, "empty regression system");
  Eigen::MatrixXd x;
  LsSolution out = detail::solve_cod(sys.A, sys.b, x);
  out.h = x.col(0);
  out.rank_deficient = out.rank_deficient || sys.underdetermined();
  return out;
}

/// Row-streaming least squares: folds row blocks into an upper-triangular
/// factor with Householder QR, so memory stays O(Q^2) for any row count.
class LeastSquaresAccumulator {
 public:
  explicit LeastSquaresAccumulator(Eigen::Index q, Eigen::Index chunk_rows = 0)
      : q_(q), chunk_(std::max<Eigen::Index>(chunk_rows > 0 ? chunk_rows : 4 * q, 64)) {
    pending_a_.resize(0, q_);
    r_.resize(0, q_);
  }

  void add(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    require(a.cols() == q_ && a.rows() == b.size(), ErrorCode::DimensionMismatch,
            "row block does not match the accumulator width");
    const Eigen::Index old = pending_a_.rows();
    pending_a_.conservativeResize(old + a.rows(), q_);
    pending_b_.conservativeResize(old + a.rows());
    pending_a_.bottomRows(a.rows()) = a;
    pending_b_.tail(a.rows()) = b;
    rows_ += a.rows();
    if (pending_a_.rows() >= chunk_) fold();
  }

  Eigen::Index rows() const noexcept { return rows_; }

  LsSolution solve() {
    fold();
    require(rows_ > 0, ErrorCode::InsufficientData, "empty regression system");
    Eigen::MatrixXd x;
    LsSolution out = detail::solve_cod(r_, c_, x);
    out.h = x.col(0);
    out.residual_norm2 += discarded_;
    out.rank_deficient = out.rank_deficient || rows_ < q_;
    return out;
  }

 private:
  void fold() {
    if (pending_a_.rows() == 0) return;
    Eigen::MatrixXd m(r_.rows() + pending_a_.rows(), q_);
    m << r_, pending_a_;
    Eigen::VectorXd y(c_.size() + pending_b_.size());
    y << c_, pending_b_;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    y.applyOnTheLeft(qr.householderQ().transpose());
    const Eigen::Index keep = std::min(m.rows(), q_);
    r_ = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    c_ = y.head(keep);
    discarded_ += y.tail(y.size() - keep).squaredNorm();
    pending_a_.resize(0, q_);
    pending_b_.resize(0);
  }

  Eigen::Index q_;
  Eigen::Index chunk_;
  Eigen::Index rows_ = 0;
  Eigen::MatrixXd r_;
  Eigen::VectorXd c_;
  Eigen::MatrixXd pending_a_;
  Eigen::VectorXd pending_b_;
  double discarded_ = 0.0;
};

struct FitResult {
  CoefficientSet coeffs;
  double objective = 0.0;  // sum_t ||x_t - prediction||^2 over the target range
  Eigen::Index rank = 0;
  bool rank_deficient = false;
  double condition_estimate = 0.0;
};

/// Least-squares fit exploiting model structure: MIMO G-VAR shares one design
/// across output features, per-feature G-VAR splits into F small problems, and
/// the remaining families stream rows through a QR accumulator. The result is the
/// same minimum-norm solution ls_fit returns on the stacked system.
inline FitResult fit_least_squares(const ModelSpec& spec, const GraphShiftOperator& s,
                                   const GraphShiftOperator* sf, const SignalPanel& panel,
                                   std::size_t t_begin, std::size_t t_end) {
  spec.validate();
  check_target_range(spec, panel, t_begin, t_end);
  require(s.size() == Eigen::Index(panel.N()), ErrorCode::DimensionMismatch, "graph size does not match N");
  const int F = int(panel.F());
  const Eigen::Index N = Eigen::Index(panel.N());
  const Eigen::Index T = Eigen::Index(t_end - t_begin);
  FitResult out;

  if (spec.family == ModelFamily::MimoGVar || spec.family == ModelFamily::PerFeatureGVar) {
    const Eigen::Index pk = spec.P * spec.K;
    const bool mimo = spec.family == ModelFamily::MimoGVar;
    // Column (lag, k, f_in) of the shared design holds S^k X_{t-lag}(:, f_in).
    Eigen::MatrixXd design(T * N, pk * F);
    Eigen::MatrixXd targets(T * N, F);
    for (std::size_t t = t_begin; t < t_end; ++t) {
      const Eigen::Index row = Eigen::Index(t - t_begin) * N;
      targets.middleRows(row, N) = panel.slice(t);
      for (int lag = 1; lag <= spec.P; ++lag) {
        const auto shifts = shift_sequence(s, spec.K, panel.slice(t - std::size_t(lag)));
        for (int k = 0; k < spec.K; ++k)
          design.block(row, ((lag - 1) * spec.K + k) * F, N, F) = shifts[std::size_t(k)];
      }
    }
    out.coeffs = CoefficientSet::zeros(spec, F);
    if (mimo) {
      Eigen::MatrixXd x;
      LsSolution sol = detail::solve_cod(design, targets, x);
      for (int lag = 1; lag <= spec.P; ++lag)
        for (int k = 0; k < spec.K; ++k)
          out.coeffs.matrix(lag, k) = x.middleRows(((lag - 1) * spec.K + k) * F, F);
      out.objective = sol.residual_norm2;
      out.rank = sol.rank * F;
      out.rank_deficient = sol.rank_deficient || design.rows() < design.cols();
      out.condition_estimate = sol.condition_estimate;
    } else {
      for (int f = 0; f < F; ++f) {
        Eigen::MatrixXd sub(T * N, pk);
        for (Eigen::Index c = 0; c < pk; ++c) sub.col(c) = design.col(c * F + f);
        Eigen::MatrixXd x;
        LsSolution sol = detail::solve_cod(sub, targets.col(f), x);
        for (int lag = 1; lag <= spec.P; ++lag)
          for (int k = 0; k < spec.K; ++k)
            out.coeffs.feature(lag, k)(f) = x((lag - 1) * spec.K + k, 0);
        out.objective += sol.residual_norm2;
        out.rank += sol.rank;
        out.rank_deficient = out.rank_deficient || sol.rank_deficient || sub.rows() < sub.cols();
        out.condition_estimate = std::max(out.condition_estimate, sol.condition_estimate);
      }
    }
    return out;
  }

  RegressorGraphs graphs(spec, s, sf);
  const auto cols = column_layout(spec, F);
  LeastSquaresAccumulator acc(Eigen::Index(cols.size()));
  for (std::size_t t = t_begin; t < t_end; ++t)
    acc.add(regressor_block(spec, cols, graphs, panel.history(t, std::size_t(spec.P))),
            panel.stacked(t));
  LsSolution sol = acc.solve();
  out.coeffs = unpack_coefficients(spec, F, sol.h);
  out.objective = sol.residual_norm2;
  out.rank = sol.rank;
  out.rank_deficient = sol.rank_deficient;
  out.condition_estimate = sol.condition_estimate;
  return out;
}

/// sum_t ||x_t - prediction_t||^2 for targets in [t_begin, t_end).
inline double prediction_objective(const FittedModel& model, const SignalPanel& panel,
                                   std::size_t t_begin, std::size_t t_end) {
  check_target_range(model.spec(), panel, t_begin, t_end);
  const Eigen::Index NF = Eigen::Index(panel.slice_size());
  Eigen::Map<const Eigen::MatrixXd> x(panel.raw().data() + t_begin * std::size_t(NF), NF,
                                      Eigen::Index(t_end - t_begin));
  return (x - predict_range(model, panel, t_begin, t_end)).squaredNorm();
}

// ---------------------------------------------------------------------------
// Joint estimation of coefficients and feature-graph weights.

enum class GradientMode { Analytic, FiniteDifference };

inline const char* to_string(GradientMode m) {
  return m == GradientMode::Analytic ? "analytic" : "finite_difference";
}

inline GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "analytic") return GradientMode::Analytic;
  if (s == "finite_difference" || s == "fd") return GradientMode::FiniteDifference;
  throw Error(ErrorCode::Parse, "unknown gradient mode '" + s + "'");
}

struct SfStepConfig {
  int max_inner_iters = 50;
  double initial_step = 1.0;
  double armijo = 1e-4;
  int max_backtracks = 50;
  double grad_tol = 1e-12;  // relative to max(1, objective)
  GradientMode gradient = GradientMode::Analytic;
  double fd_step = 1e-6;
};

struct JointFitConfig {
  double epsilon = 1e-6;
  int max_outer_iters = 50;
  SfStepConfig sf_step;
  bool symmetric_feature_graph = false;

  void validate() const {
    require(epsilon > 0.0, ErrorCode::InvalidParameter, "epsilon must be positive");
    require(max_outer_iters >= 1, ErrorCode::InvalidParameter, "max_outer_iters must be >= 1");
    require(sf_step.max_inner_iters >= 0 && sf_step.max_backtracks >= 0 && sf_step.initial_step > 0.0,
            ErrorCode::InvalidParameter, "invalid inner step configuration");
  }
};

/// Free entries of the feature GSO. Each group shares one value; groups have a
/// single entry unless symmetry is enforced.
class FeatureGraphParams {
 public:
  FeatureGraphParams(const GraphShiftOperator& sf0, bool symmetric) : F_(sf0.size()) {
    const auto pattern = sf0.support();
    require(!pattern.empty(), ErrorCode::InvalidInput, "initial feature graph has an empty support");
    Eigen::MatrixXd dense = sf0.dense();
    for (auto [a, b] : pattern) {
      if (symmetric) {
        if (a > b) continue;
        std::vector<std::pair<Eigen::Index, Eigen::Index>> g{{a, b}};
        if (a != b) g.emplace_back(b, a);
        groups_.push_back(std::move(g));
      } else {
        groups_.push_back({{a, b}});
      }
    }
    if (symmetric) {
      // A symmetric support is required for tying (a, b) and (b, a).
      for (auto [a, b] : pattern)
        require(dense(b, a) != 0.0, ErrorCode::InvalidInput,
                "symmetric feature-graph learning needs a symmetric support");
    }
    initial_ = values(sf0);
  }

  Eigen::Index size() const noexcept { return Eigen::Index(groups_.size()); }
  Eigen::Index features() const noexcept { return F_; }
  const Eigen::VectorXd& initial() const noexcept { return initial_; }
  const std::vector<std::vector<std::pair<Eigen::Index, Eigen::Index>>>& groups() const noexcept {
    return groups_;
  }

  Eigen::VectorXd values(const GraphShiftOperator& sf) const {
    Eigen::MatrixXd d = sf.dense();
    Eigen::VectorXd v(size());
    for (Eigen::Index g = 0; g < size(); ++g) {
      auto [a, b] = groups_[std::size_t(g)].front();
      v(g) = d(a, b);
    }
    return v;
  }

  GraphShiftOperator build(const Eigen::VectorXd& theta) const {
    std::vector<Triplet> t;
    for (Eigen::Index g = 0; g < size(); ++g)
      for (auto [a, b] : groups_[std::size_t(g)]) t.emplace_back(a, b, theta(g));
    const bool zero = theta.isZero(0.0);
    return GraphShiftOperator::from_triplets(F_, t, GsoKind::Generic, zero);
  }

  /// Collapse a dense F x F gradient onto the free parameters.
  Eigen::VectorXd restrict(const Eigen::MatrixXd& full) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(size());
    for (Eigen::Index i = 0; i < size(); ++i)
      for (auto [a, b] : groups_[std::size_t(i)]) g(i) += full(a, b);
    return g;
  }

 private:
  Eigen::Index F_;
  std::vector<std::vector<std::pair<Eigen::Index, Eigen::Index>>> groups_;
  Eigen::VectorXd initial_;
};

struct JointProblem {
  ModelSpec spec;
  const GraphShiftOperator* s = nullptr;
  const SignalPanel* panel = nullptr;
  std::size_t t_begin = 0;
  std::size_t t_end = 0;
};

/// f(h, S_F) = sum_t ||x_t - prediction_t||^2.
inline double sf_objective(const CoefficientSet& h, const GraphShiftOperator& sf, const JointProblem& pb) {
  FittedModel model(pb.spec, h, *pb.s, sf);
  return prediction_objective(model, *pb.panel, pb.t_begin, pb.t_end);
}

/// Gradient of f with respect to every entry of S_F, as a dense F x F matrix.
///
/// With D_ab = dS_prod/d(S_F)_ab = s10 (E_ab kron I) + s11 (E_ab kron S) and
/// d(M^k) = sum_{r<k} M^r dM M^{k-1-r}, the residual r_t is pulled back through
/// r shifts of S_prod^T and the lagged signals are pushed forward, giving
///   grad_ab = -2 sum_t sum_j [V_j^T (s10 W_j + s11 S W_j)]_ab
/// with V_j = (S_prod^T)^j r_t and W_j = sum_p sum_m h_{j+m+1,p} S_prod^m x_{t-p}
/// (both reshaped N x F).
inline Eigen::MatrixXd sf_objective_gradient_dense(const CoefficientSet& h, const GraphShiftOperator& sf,
                                                   const JointProblem& pb) {
  const ModelSpec& spec = pb.spec;
  require(uses_product_graph(spec.family), ErrorCode::InvalidParameter,
          "feature-graph gradient needs a product-graph family");
  const auto& panel = *pb.panel;
  const Eigen::Index N = Eigen::Index(panel.N());
  const Eigen::Index F = Eigen::Index(panel.F());
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(F, F);
  if (spec.K < 2 || !spec.product.uses_feature_graph()) return grad;

  FittedModel model(spec, h, *pb.s, sf);
  const SparseMatrix spt_matrix = model.product_graph()->matrix().transpose();
  const ShiftKernel sp(model.product_graph()->matrix()), spt(spt_matrix), s(pb.s->matrix());
  const int K = spec.K;
  const Eigen::Index NF = N * F;

  check_target_range(spec, panel, pb.t_begin, pb.t_end);
  const Eigen::Index T = Eigen::Index(pb.t_end - pb.t_begin);
  // Every target at once: columns of these NF x T blocks are feature-stacked slices.
  Eigen::MatrixXd v = Eigen::Map<const Eigen::MatrixXd>(panel.raw().data() + pb.t_begin * std::size_t(NF), NF, T) -
                      predict_range(model, panel, pb.t_begin, pb.t_end);
  std::vector<Eigen::MatrixXd> w(std::size_t(K - 1), Eigen::MatrixXd::Zero(NF, T));
  for (int lag = 1; lag <= spec.P; ++lag) {
    Eigen::MatrixXd u = Eigen::Map<const Eigen::MatrixXd>(
        panel.raw().data() + (pb.t_begin - std::size_t(lag)) * std::size_t(NF), NF, T);
    for (int m = 0; m <= K - 2; ++m) {
      if (m > 0) u = sp(u);
      for (int j = 0; j + m <= K - 2; ++j) w[std::size_t(j)].noalias() += h.scalar(lag, j + m + 1) * u;
    }
  }
  for (int j = 0; j <= K - 2; ++j) {
    if (j > 0) v = spt(v);
    Eigen::MatrixXd mixed = spec.product.s10 * w[std::size_t(j)];
    if (spec.product.s11 != 0.0) {
      Eigen::Map<const Eigen::MatrixXd> wn(w[std::size_t(j)].data(), N, F * T);
      Eigen::Map<Eigen::MatrixXd>(mixed.data(), N, F * T).noalias() += spec.product.s11 * s(wn);
    }
    for (Eigen::Index t = 0; t < T; ++t) {
      Eigen::Map<const Eigen::MatrixXd> vm(v.col(t).data(), N, F);
      Eigen::Map<const Eigen::MatrixXd> mm(mixed.col(t).data(), N, F);
      grad.noalias() += vm.transpose() * mm;
    }
  }
  return -2.0 * grad;
}

/// Analytic gradient over the free entries of the feature graph.
inline Eigen::VectorXd sf_objective_gradient(const CoefficientSet& h, const GraphShiftOperator& sf,
                                             const JointProblem& pb, const FeatureGraphParams& params) {
  return params.restrict(sf_objective_gradient_dense(h, sf, pb));
}

/// Central finite differences of f over the free parameters.
inline Eigen::VectorXd sf_objective_gradient_fd(const CoefficientSet& h, const Eigen::VectorXd& theta,
                                                const JointProblem& pb, const FeatureGraphParams& params,
                                                double step = 1e-6) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd plus = theta, minus = theta;
    plus(i) += step;
    minus(i) -= step;
    g(i) = (sf_objective(h, params.build(plus), pb) - sf_objective(h, params.build(minus), pb)) / (2.0 * step);
  }
  return g;
}

struct SfStepResult {
  GraphShiftOperator sf;
  double objective_before = 0.0;
  double objective_after = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
};

/// Support-constrained gradient descent on S_F with Armijo backtracking
/// (halving). Trial steps use the Barzilai-Borwein length when available. Only
/// steps with sufficient decrease are accepted, so f never increases.
inline SfStepResult sf_step(const CoefficientSet& h, const GraphShiftOperator& sf, const JointProblem& pb,
                            const FeatureGraphParams& params, const SfStepConfig& cfg = {}) {
  Eigen::VectorXd theta = params.values(sf);
  GraphShiftOperator current = params.build(theta);
  double f = sf_objective(h, current, pb);
  require(std::isfinite(f), ErrorCode::NonFinite, "feature-graph objective is not finite");

  auto gradient = [&](const Eigen::VectorXd& th, const GraphShiftOperator& g) {
    return cfg.gradient == GradientMode::Analytic ? sf_objective_gradient(h, g, pb, params)
                                                  : sf_objective_gradient_fd(h, th, pb, params, cfg.fd_step);
  };

  SfStepResult out{current, f, f, 0, 0};
  Eigen::VectorXd g = gradient(theta, current);
  Eigen::VectorXd prev_theta, prev_g;
  for (int it = 0; it < cfg.max_inner_iters; ++it) {
    out.iterations = it + 1;
    const double gnorm2 = g.squaredNorm();
    if (!std::isfinite(gnorm2) || std::sqrt(gnorm2) <= cfg.grad_tol * std::max(1.0, f)) break;

    double alpha = cfg.initial_step;
    if (prev_theta.size()) {
      const Eigen::VectorXd ds = theta - prev_theta;
      const Eigen::VectorXd dg = g - prev_g;
      const double sy = ds.dot(dg);
      if (sy > 0.0) alpha = ds.squaredNorm() / sy;
    }

    bool accepted = false;
    Eigen::VectorXd trial;
    double f_trial = f;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt, alpha *= 0.5) {
      trial = theta - alpha * g;
      f_trial = sf_objective(h, params.build(trial), pb);
      if (std::isfinite(f_trial) && f_trial <= f - cfg.armijo * alpha * gnorm2) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    prev_theta = theta;
    prev_g = g;
    theta = trial;
    f = f_trial;
    current = params.build(theta);
    ++out.accepted_steps;
    g = gradient(theta, current);
  }
  out.sf = current;
  out.objective_after = f;
  return out;
}

enum class HalfStep { Coefficients, FeatureGraph };

struct TraceEntry {
  int outer = 0;
  HalfStep step = HalfStep::Coefficients;
  double objective = 0.0;
};

struct JointFitResult {
  CoefficientSet coeffs;
  GraphShiftOperator sf;
  std::vector<TraceEntry> trace;
  int outer_iterations = 0;
  bool converged = false;
  double fixed_objective = 0.0;  // LS objective with the initial feature graph
  double final_objective = 0.0;
};

/// Alternating minimization: exact LS for the coefficients given S_F, then a
/// descent step on the supported entries of S_F. Stops when the relative
/// objective decrease of a full iteration drops below epsilon.
inline JointFitResult joint_fit(const ModelSpec& spec, const GraphShiftOperator& s,
                                const GraphShiftOperator& sf0, const SignalPanel& panel, std::size_t t_begin,
                                std::size_t t_end, const JointFitConfig& cfg = {}) {
  require(uses_product_graph(spec.family), ErrorCode::InvalidParameter,
          "joint estimation applies to pgvar and pg_gvar only");
  cfg.validate();
  FeatureGraphParams params(sf0, cfg.symmetric_feature_graph);
  JointProblem pb{spec, &s, &panel, t_begin, t_end};

  JointFitResult out{CoefficientSet{}, params.build(params.initial()), {}, 0, false, 0.0, 0.0};
  std::optional<CoefficientSet> h;
  double f_prev = std::numeric_limits<double>::infinity();
  double f_iter_start = 0.0;

  for (int n = 1; n <= cfg.max_outer_iters; ++n) {
    out.outer_iterations = n;
    // Coefficient step; keep the previous coefficients if rounding makes the
    // fresh solution no better, so the trace never increases.
    FitResult fit = fit_least_squares(spec, s, &out.sf, panel, t_begin, t_end);
    double f_h = sf_objective(fit.coeffs, out.sf, pb);
    require(std::isfinite(f_h), ErrorCode::NonFinite,
            "objective became non-finite in the coefficient step of iteration " + std::to_string(n));
    if (h && f_h > f_prev) {
      f_h = f_prev;
    } else {
      h = fit.coeffs;
    }
    if (n == 1) {
      out.fixed_objective = f_h;
      f_iter_start = f_h;
    }
    out.trace.push_back({n, HalfStep::Coefficients, f_h});

    SfStepResult step = sf_step(*h, out.sf, pb, params, cfg.sf_step);
    require(std::isfinite(step.objective_after), ErrorCode::NonFinite,
            "objective became non-finite in the feature-graph step of iteration " + std::to_string(n));
    out.sf = step.sf;
    out.trace.push_back({n, HalfStep::FeatureGraph, step.objective_after});

    const double f_n = step.objective_after;
    const double rel = std::abs(f_iter_start - f_n) / std::max(f_iter_start, 1e-12);
    f_prev = f_n;
    f_iter_start = f_n;
    if (rel < cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.coeffs = *h;
  out.final_objective = f_prev;
  return out;
}

}  // namespace graphvar
