#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/filters.hpp"
#include "graphvar/graph.hpp"
#include "graphvar/panel.hpp"

namespace graphvar {

enum class ModelFamily { GVar, PerFeatureGVar, PgVar, PgGVar, MimoGVar };

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::GVar: return "gvar";
    case ModelFamily::PerFeatureGVar: return "per_feature_gvar";
    case ModelFamily::PgVar: return "pgvar";
    case ModelFamily::PgGVar: return "pg_gvar";
    case ModelFamily::MimoGVar: return "mimo_gvar";
  }
  return "unknown";
}

inline ModelFamily parse_model_family(const std::string& s) {
  for (auto f : {ModelFamily::GVar, ModelFamily::PerFeatureGVar, ModelFamily::PgVar,
                 ModelFamily::PgGVar, ModelFamily::MimoGVar})
    if (s == to_string(f)) return f;
  throw Error(ErrorCode::Parse, "unknown model family '" + s + "'");
}

inline bool uses_product_graph(ModelFamily f) {
  return f == ModelFamily::PgVar || f == ModelFamily::PgGVar;
}

struct ModelSpec {
  ModelFamily family = ModelFamily::GVar;
  int P = 1;  // lag order
  int K = 1;  // filter length, taps k = 0 .. K-1
  ProductGraphSpec product = ProductGraphSpec::cartesian();

  void validate() const {
    require(P >= 1, ErrorCode::InvalidParameter, "lag order P must be >= 1");
    require(K >= 1, ErrorCode::InvalidParameter, "filter length K must be >= 1");
    if (uses_product_graph(family)) product.validate();
  }
};

/// Number of free coefficients of a model over F features.
inline long long param_count(const ModelSpec& spec, long long F) {
  const long long pk = static_cast<long long>(spec.P) * spec.K;
  switch (spec.family) {
    case ModelFamily::GVar:
    case ModelFamily::PgVar: return pk;
    case ModelFamily::PerFeatureGVar: return pk * F;
    case ModelFamily::PgGVar: return pk * (F + 1);
    case ModelFamily::MimoGVar: return pk * F * F;
  }
  return 0;
}

/// Coefficient containers; only the ones the family needs are populated.
/// Lags are 1-based (lag 1 multiplies X_{t-1}), taps 0-based.
struct CoefficientSet {
  int P = 0;
  int K = 0;
  int F = 0;
  Eigen::MatrixXd scalar_taps;                // P x K
  std::vector<Eigen::VectorXd> feature_taps;  // P*K vectors of length F
  std::vector<Eigen::MatrixXd> matrix_taps;   // P*K matrices F x F

  static CoefficientSet zeros(const ModelSpec& spec, int F) {
    spec.validate();
    CoefficientSet c;
    c.P = spec.P;
    c.K = spec.K;
    c.F = F;
    const auto pk = std::size_t(spec.P * spec.K);
    switch (spec.family) {
      case ModelFamily::GVar:
      case ModelFamily::PgVar: c.scalar_taps = Eigen::MatrixXd::Zero(spec.P, spec.K); break;
      case ModelFamily::PerFeatureGVar: c.feature_taps.assign(pk, Eigen::VectorXd::Zero(F)); break;
      case ModelFamily::PgGVar:
        c.scalar_taps = Eigen::MatrixXd::Zero(spec.P, spec.K);
        c.feature_taps.assign(pk, Eigen::VectorXd::Zero(F));
        break;
      case ModelFamily::MimoGVar: c.matrix_taps.assign(pk, Eigen::MatrixXd::Zero(F, F)); break;
    }
    return c;
  }

  double& scalar(int lag, int k) { return scalar_taps(lag - 1, k); }
  double scalar(int lag, int k) const { return scalar_taps(lag - 1, k); }
  Eigen::VectorXd& feature(int lag, int k) { return feature_taps[index(lag, k)]; }
  const Eigen::VectorXd& feature(int lag, int k) const { return feature_taps[index(lag, k)]; }
  Eigen::MatrixXd& matrix(int lag, int k) { return matrix_taps[index(lag, k)]; }
  const Eigen::MatrixXd& matrix(int lag, int k) const { return matrix_taps[index(lag, k)]; }

  bool all_finite() const {
    if (!scalar_taps.allFinite()) return false;
    for (const auto& v : feature_taps)
      if (!v.allFinite()) return false;
    for (const auto& m : matrix_taps)
      if (!m.allFinite()) return false;
    return true;
  }

  /// Largest absolute entry-wise difference over the populated containers.
  double max_abs_diff(const CoefficientSet& o) const {
    double d = 0.0;
    if (scalar_taps.size() && scalar_taps.size() == o.scalar_taps.size())
      d = std::max(d, (scalar_taps - o.scalar_taps).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < feature_taps.size() && i < o.feature_taps.size(); ++i)
      d = std::max(d, (feature_taps[i] - o.feature_taps[i]).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < matrix_taps.size() && i < o.matrix_taps.size(); ++i)
      d = std::max(d, (matrix_taps[i] - o.matrix_taps[i]).cwiseAbs().maxCoeff());
    return d;
  }

 private:
  std::size_t index(int lag, int k) const { return std::size_t((lag - 1) * K + k); }
};

/// Prediction is always a plain sum of regressor terms; the leading minus of the
/// textbook VAR form is folded into the stored coefficients.
enum class SignConvention { PlusSum };

inline const char* to_string(SignConvention) { return "plus_sum"; }

class FittedModel {
 public:
  FittedModel(ModelSpec spec, CoefficientSet coeffs, GraphShiftOperator s,
              std::optional<GraphShiftOperator> sf = std::nullopt)
      : spec_(spec), coeffs_(std::move(coeffs)), s_(std::move(s)), sf_(std::move(sf)) {
    spec_.validate();
    require(coeffs_.P == spec_.P && coeffs_.K == spec_.K, ErrorCode::DimensionMismatch,
            "coefficient orders do not match the model spec");
    require(coeffs_.all_finite(), ErrorCode::NonFinite, "coefficients must be finite");
    check_containers();
    if (uses_product_graph(spec_.family)) {
      require(sf_.has_value(), ErrorCode::InvalidInput,
              std::string(to_string(spec_.family)) + " needs a feature graph");
      require(sf_->size() == coeffs_.F, ErrorCode::DimensionMismatch,
              "feature graph size does not match F");
      product_ = product_gso(*sf_, s_, spec_.product);
    }
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  const CoefficientSet& coeffs() const noexcept { return coeffs_; }
  const GraphShiftOperator& station_graph() const noexcept { return s_; }
  const std::optional<GraphShiftOperator>& feature_graph() const noexcept { return sf_; }
  const std::optional<GraphShiftOperator>& product_graph() const noexcept { return product_; }
  SignConvention sign_convention() const noexcept { return SignConvention::PlusSum; }
  int features() const noexcept { return coeffs_.F; }
  Eigen::Index nodes() const noexcept { return s_.size(); }

 private:
  void check_containers() const {
    const auto pk = std::size_t(spec_.P * spec_.K);
    const bool needs_scalar = spec_.family == ModelFamily::GVar || spec_.family == ModelFamily::PgVar ||
                              spec_.family == ModelFamily::PgGVar;
    const bool needs_feature =
        spec_.family == ModelFamily::PerFeatureGVar || spec_.family == ModelFamily::PgGVar;
    const bool needs_matrix = spec_.family == ModelFamily::MimoGVar;
    if (needs_scalar)
      require(coeffs_.scalar_taps.rows() == spec_.P && coeffs_.scalar_taps.cols() == spec_.K,
              ErrorCode::DimensionMismatch, "scalar taps must be P x K");
    if (needs_feature) {
      require(coeffs_.feature_taps.size() == pk, ErrorCode::DimensionMismatch, "need P*K feature tap vectors");
      for (const auto& v : coeffs_.feature_taps)
        require(v.size() == coeffs_.F, ErrorCode::DimensionMismatch, "feature taps must have length F");
    }
    if (needs_matrix) {
      require(coeffs_.matrix_taps.size() == pk, ErrorCode::DimensionMismatch, "need P*K tap matrices");
      for (const auto& m : coeffs_.matrix_taps)
        require(m.rows() == coeffs_.F && m.cols() == coeffs_.F, ErrorCode::DimensionMismatch,
                "tap matrices must be F x F");
    }
  }

  ModelSpec spec_;
  CoefficientSet coeffs_;
  GraphShiftOperator s_;
  std::optional<GraphShiftOperator> sf_;
  std::optional<GraphShiftOperator> product_;
};

namespace detail {

inline void check_history(const FittedModel& m, History history, ModelFamily expected) {
  require(m.spec().family == expected, ErrorCode::InvalidParameter,
          std::string("model family is ") + to_string(m.spec().family) + ", expected " +
              to_string(expected));
  require(history.size() >= std::size_t(m.spec().P), ErrorCode::InsufficientData,
          "history has " + std::to_string(history.size()) + " slices, model needs P=" +
              std::to_string(m.spec().P));
  for (int p = 0; p < m.spec().P; ++p)
    require(history[std::size_t(p)].rows() == m.nodes() && history[std::size_t(p)].cols() == m.features(),
            ErrorCode::DimensionMismatch, "history slice shape does not match the model");
}

// sum_p sum_k S^k X_{t-p} scaled column-wise by the per-feature taps.
inline Eigen::MatrixXd per_feature_term(const FittedModel& m, History history) {
  const auto& c = m.coeffs();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m.nodes(), m.features());
  for (int lag = 1; lag <= m.spec().P; ++lag) {
    Eigen::MatrixXd z = history[std::size_t(lag - 1)];
    for (int k = 0; k < m.spec().K; ++k) {
      if (k > 0) z = m.station_graph().matrix() * z;
      y.noalias() += z * c.feature(lag, k).asDiagonal();
    }
  }
  return y;
}

inline Eigen::MatrixXd product_term(const FittedModel& m, History history) {
  const auto& c = m.coeffs();
  const auto& sp = m.product_graph()->matrix();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m.nodes() * m.features());
  for (int lag = 1; lag <= m.spec().P; ++lag) {
    const auto& x = history[std::size_t(lag - 1)];
    Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
    for (int k = 0; k < m.spec().K; ++k) {
      if (k > 0) z = sp * z;
      y.noalias() += c.scalar(lag, k) * z;
    }
  }
  return unvec_by_feature(y, m.nodes(), m.features());
}

}  // namespace detail

/// G-VAR: one scalar-tap polynomial in S shared by all feature columns.
inline Eigen::MatrixXd predict_gvar(const FittedModel& m, History history) {
  detail::check_history(m, history, ModelFamily::GVar);
  const auto& c = m.coeffs();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m.nodes(), m.features());
  for (int lag = 1; lag <= m.spec().P; ++lag) {
    Eigen::MatrixXd z = history[std::size_t(lag - 1)];
    for (int k = 0; k < m.spec().K; ++k) {
      if (k > 0) z = m.station_graph().matrix() * z;
      y.noalias() += c.scalar(lag, k) * z;
    }
  }
  return y;
}

/// F independent G-VAR filters, one tap set per feature.
inline Eigen::MatrixXd predict_per_feature_gvar(const FittedModel& m, History history) {
  detail::check_history(m, history, ModelFamily::PerFeatureGVar);
  return detail::per_feature_term(m, history);
}

/// G-VAR on the product graph.
inline Eigen::MatrixXd predict_pgvar(const FittedModel& m, History history) {
  detail::check_history(m, history, ModelFamily::PgVar);
  return detail::product_term(m, history);
}

/// Per-feature G-VAR plus PG-VAR, each with its own taps.
inline Eigen::MatrixXd predict_pg_g_var(const FittedModel& m, History history) {
  detail::check_history(m, history, ModelFamily::PgGVar);
  return detail::per_feature_term(m, history) + detail::product_term(m, history);
}

/// sum_p sum_k S^k X_{t-p} H_kp.
inline Eigen::MatrixXd predict_mimo_gvar(const FittedModel& m, History history) {
  detail::check_history(m, history, ModelFamily::MimoGVar);
  const auto& c = m.coeffs();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m.nodes(), m.features());
  for (int lag = 1; lag <= m.spec().P; ++lag) {
    Eigen::MatrixXd z = history[std::size_t(lag - 1)];
    for (int k = 0; k < m.spec().K; ++k) {
      if (k > 0) z = m.station_graph().matrix() * z;
      y.noalias() += z * c.matrix(lag, k);
    }
  }
  return y;
}

inline Eigen::MatrixXd predict(const FittedModel& m, History history) {
  switch (m.spec().family) {
    case ModelFamily::GVar: return predict_gvar(m, history);
    case ModelFamily::PerFeatureGVar: return predict_per_feature_gvar(m, history);
    case ModelFamily::PgVar: return predict_pgvar(m, history);
    case ModelFamily::PgGVar: return predict_pg_g_var(m, history);
    case ModelFamily::MimoGVar: return predict_mimo_gvar(m, history);
  }
  throw Error(ErrorCode::InvalidParameter, "unknown model family");
}

/// One-step-ahead prediction of X_t from the observed panel; needs t >= P.
inline Eigen::MatrixXd predict_at(const FittedModel& m, const SignalPanel& panel, std::size_t t) {
  const auto h = panel.history(t, std::size_t(m.spec().P));
  return predict(m, h);
}

/// One-step-ahead predictions for every target in [t_begin, t_end) at once, as
/// an NF x (t_end - t_begin) matrix whose columns are feature-stacked.
/// Equivalent to calling predict_at per t, but shifts whole blocks of the panel.
inline Eigen::MatrixXd predict_range(const FittedModel& m, const SignalPanel& panel, std::size_t t_begin,
                                     std::size_t t_end) {
  const auto& spec = m.spec();
  const auto& c = m.coeffs();
  require(t_begin >= std::size_t(spec.P) && t_end <= panel.T() && t_begin <= t_end, ErrorCode::InvalidParameter,
          "prediction range must satisfy P <= t_begin <= t_end <= T");
  require(Eigen::Index(panel.N()) == m.nodes() && Eigen::Index(panel.F()) == m.features(),
          ErrorCode::DimensionMismatch, "panel shape does not match the model");
  const Eigen::Index N = m.nodes(), F = m.features(), NF = N * F;
  const Eigen::Index T = Eigen::Index(t_end - t_begin);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(NF, T);
  if (T == 0) return y;
  const ShiftKernel s(m.station_graph().matrix());
  const bool node_terms = spec.family != ModelFamily::PgVar;
  const bool product_terms = uses_product_graph(spec.family);

  for (int lag = 1; lag <= spec.P; ++lag) {
    const double* src = panel.raw().data() + (t_begin - std::size_t(lag)) * std::size_t(NF);
    if (node_terms) {
      // N x (F*T): column f + F*t holds X_t(:, f).
      Eigen::MatrixXd z = Eigen::Map<const Eigen::MatrixXd>(src, N, F * T);
      Eigen::Map<Eigen::MatrixXd> out(y.data(), N, F * T);
      for (int k = 0; k < spec.K; ++k) {
        if (k > 0) z = s(z);
        switch (spec.family) {
          case ModelFamily::GVar: out.noalias() += c.scalar(lag, k) * z; break;
          case ModelFamily::PerFeatureGVar:
          case ModelFamily::PgGVar: {
            const Eigen::VectorXd& a = c.feature(lag, k);
            for (Eigen::Index col = 0; col < F * T; ++col) out.col(col) += a(col % F) * z.col(col);
            break;
          }
          case ModelFamily::MimoGVar:
            for (Eigen::Index t = 0; t < T; ++t)
              out.middleCols(t * F, F).noalias() += z.middleCols(t * F, F) * c.matrix(lag, k);
            break;
          case ModelFamily::PgVar: break;
        }
      }
    }
    if (product_terms) {
      const ShiftKernel sp(m.product_graph()->matrix());
      Eigen::MatrixXd z = Eigen::Map<const Eigen::MatrixXd>(src, NF, T);
      for (int k = 0; k < spec.K; ++k) {
        if (k > 0) z = sp(z);
        y.noalias() += c.scalar(lag, k) * z;
      }
    }
  }
  return y;
}

}  // namespace graphvar
