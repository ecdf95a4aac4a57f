#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "graphvar/error.hpp"

namespace graphvar {

using SliceView = Eigen::Map<const Eigen::MatrixXd>;
using MutableSliceView = Eigen::Map<Eigen::MatrixXd>;

// Most recent lag first: history[0] is X_{t-1}, history[p-1] is X_{t-p}.
using History = std::span<const SliceView>;

/// T x N x F observations. Each time slice X_t is an N x F column-major block,
/// so the raw memory of a slice is already the feature-stacked vector x_t
/// (block f holds the graph signal of feature f).
class SignalPanel {
 public:
  SignalPanel() = default;

  SignalPanel(std::size_t T, std::size_t N, std::size_t F, double fill = 0.0)
      : T_(T), N_(N), F_(F), data_(T * N * F, fill) {}

  std::size_t T() const noexcept { return T_; }
  std::size_t N() const noexcept { return N_; }
  std::size_t F() const noexcept { return F_; }
  std::size_t slice_size() const noexcept { return N_ * F_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t t, std::size_t n, std::size_t f) {
    return data_[t * N_ * F_ + f * N_ + n];
  }
  double operator()(std::size_t t, std::size_t n, std::size_t f) const {
    return data_[t * N_ * F_ + f * N_ + n];
  }

  SliceView slice(std::size_t t) const {
    check_time(t);
    return SliceView(data_.data() + t * slice_size(), Eigen::Index(N_), Eigen::Index(F_));
  }
  MutableSliceView slice(std::size_t t) {
    check_time(t);
    return MutableSliceView(data_.data() + t * slice_size(), Eigen::Index(N_), Eigen::Index(F_));
  }

  /// Feature-stacked x_t.
  Eigen::Map<const Eigen::VectorXd> stacked(std::size_t t) const {
    check_time(t);
    return Eigen::Map<const Eigen::VectorXd>(data_.data() + t * slice_size(),
                                             Eigen::Index(slice_size()));
  }

  void set_slice(std::size_t t, const Eigen::MatrixXd& x) {
    require(x.rows() == Eigen::Index(N_) && x.cols() == Eigen::Index(F_),
            ErrorCode::DimensionMismatch, "slice shape does not match panel");
    slice(t) = x;
  }

  /// Lags X_{t-1} .. X_{t-P}; requires t >= P.
  std::vector<SliceView> history(std::size_t t, std::size_t P) const {
    require(t >= P && t <= T_, ErrorCode::InsufficientData,
            "history of length " + std::to_string(P) + " unavailable at t=" + std::to_string(t));
    std::vector<SliceView> h;
    h.reserve(P);
    for (std::size_t p = 1; p <= P; ++p) h.push_back(slice(t - p));
    return h;
  }

  /// Copy of time steps [begin, end).
  SignalPanel subrange(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= T_, ErrorCode::InvalidParameter, "subrange out of bounds");
    SignalPanel out(end - begin, N_, F_);
    std::copy(data_.begin() + std::ptrdiff_t(begin * slice_size()),
              data_.begin() + std::ptrdiff_t(end * slice_size()), out.data_.begin());
    return out;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  const std::vector<double>& raw() const noexcept { return data_; }
  std::vector<double>& raw() noexcept { return data_; }

 private:
  void check_time(std::size_t t) const {
    require(t < T_, ErrorCode::InvalidParameter,
            "time index " + std::to_string(t) + " outside panel of length " + std::to_string(T_));
  }

  std::size_t T_ = 0;
  std::size_t N_ = 0;
  std::size_t F_ = 0;
  std::vector<double> data_;
};

/// Column-stacking of an N x F matrix; identical to the feature-stacked signal.
inline Eigen::VectorXd vec_by_feature(const Eigen::MatrixXd& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
}

inline Eigen::MatrixXd unvec_by_feature(const Eigen::VectorXd& v, Eigen::Index N, Eigen::Index F) {
  require(v.size() == N * F, ErrorCode::DimensionMismatch, "vector length is not N*F");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), N, F);
}

}  // namespace graphvar
