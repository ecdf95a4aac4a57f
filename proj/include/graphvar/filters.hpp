#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/graph.hpp"

namespace graphvar {

/// Taps h_0 .. h_{K-1} of a polynomial graph filter sum_k h_k S^k.
class FilterTaps {
 public:
  explicit FilterTaps(Eigen::VectorXd h) : h_(std::move(h)) {
    require(h_.size() >= 1, ErrorCode::InvalidParameter, "filter needs at least one tap");
    require(h_.allFinite(), ErrorCode::NonFinite, "filter taps must be finite");
  }
  FilterTaps(std::initializer_list<double> h)
      : FilterTaps(Eigen::Map<const Eigen::VectorXd>(h.begin(), Eigen::Index(h.size()))) {}

  Eigen::Index length() const noexcept { return h_.size(); }
  double operator[](Eigen::Index k) const { return h_(k); }
  const Eigen::VectorXd& values() const noexcept { return h_; }

 private:
  Eigen::VectorXd h_;
};

/// y = sum_k h_k S^k x by iterated sparse shifts; S^k is never formed.
template <typename Derived>
Eigen::MatrixXd apply_filter(const GraphShiftOperator& s, const FilterTaps& taps,
                             const Eigen::MatrixBase<Derived>& x) {
  require(x.rows() == s.size(), ErrorCode::DimensionMismatch,
          "signal length " + std::to_string(x.rows()) + " does not match graph size " +
              std::to_string(s.size()));
  Eigen::MatrixXd shifted = x;
  Eigen::MatrixXd y = taps[0] * shifted;
  for (Eigen::Index k = 1; k < taps.length(); ++k) {
    shifted = s.matrix() * shifted;
    y.noalias() += taps[k] * shifted;
  }
  return y;
}

/// S^k X applied by k successive sparse products.
template <typename Derived>
Eigen::MatrixXd shift_power(const GraphShiftOperator& s, int k, const Eigen::MatrixBase<Derived>& x) {
  require(k >= 0, ErrorCode::InvalidParameter, "shift power must be nonnegative");
  require(x.rows() == s.size(), ErrorCode::DimensionMismatch, "signal rows do not match graph size");
  Eigen::MatrixXd z = x;
  for (int i = 0; i < k; ++i) z = s.matrix() * z;
  return z;
}

/// All shifts [X, S X, ..., S^{K-1} X].
template <typename Derived>
std::vector<Eigen::MatrixXd> shift_sequence(const GraphShiftOperator& s, int K,
                                            const Eigen::MatrixBase<Derived>& x) {
  require(x.rows() == s.size(), ErrorCode::DimensionMismatch, "signal rows do not match graph size");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(std::size_t(K));
  if (K <= 0) return out;
  out.emplace_back(x);
  for (int k = 1; k < K; ++k) out.emplace_back(s.matrix() * out.back());
  return out;
}

/// S^k X H: shift over the node graph, then mix features on the right.
template <typename Derived>
Eigen::MatrixXd mimo_shift_apply(const GraphShiftOperator& s, const Eigen::MatrixXd& h, int k,
                                 const Eigen::MatrixBase<Derived>& x) {
  require(h.rows() == h.cols() && h.rows() == x.cols(), ErrorCode::DimensionMismatch,
          "feature mixing matrix must be F x F with F = signal columns");
  return shift_power(s, k, x) * h;
}

}  // namespace graphvar
