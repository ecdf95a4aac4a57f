#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graphvar/error.hpp"
#include "graphvar/panel.hpp"

namespace graphvar {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class GsoKind { Adjacency, Laplacian, NormalizedLaplacian, Generic };

inline const char* to_string(GsoKind kind) {
  switch (kind) {
    case GsoKind::Adjacency: return "adjacency";
    case GsoKind::Laplacian: return "laplacian";
    case GsoKind::NormalizedLaplacian: return "normalized_laplacian";
    case GsoKind::Generic: return "generic";
  }
  return "generic";
}

inline GsoKind parse_gso_kind(const std::string& s) {
  if (s == "adjacency") return GsoKind::Adjacency;
  if (s == "laplacian") return GsoKind::Laplacian;
  if (s == "normalized_laplacian") return GsoKind::NormalizedLaplacian;
  if (s == "generic") return GsoKind::Generic;
  throw Error(ErrorCode::Parse, "unknown GSO kind '" + s + "'");
}

/// Sparse n x n graph shift operator with a kind tag. Immutable after
/// construction; exact zeros are pruned so the stored pattern is the support.
class GraphShiftOperator {
 public:
  /// Normalized Laplacians up to this size get a dense eigenvalue check.
  static constexpr Eigen::Index kSpectrumCheckLimit = 64;

  GraphShiftOperator() = default;

  GraphShiftOperator(SparseMatrix m, GsoKind kind, bool edgeless = false)
      : m_(std::move(m)), kind_(kind), edgeless_(edgeless) {
    require(m_.rows() == m_.cols(), ErrorCode::InvalidInput, "GSO must be square");
    m_.prune(0.0);
    m_.makeCompressed();
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it)
        require(std::isfinite(it.value()), ErrorCode::NonFinite, "GSO entry is not finite");
    require(m_.rows() <= 1 || m_.nonZeros() > 0 || edgeless_, ErrorCode::InvalidInput,
            "empty sparsity pattern on a graph that is not declared edgeless");
    if (kind_ == GsoKind::NormalizedLaplacian) check_normalized_laplacian();
  }

  static GraphShiftOperator from_triplets(Eigen::Index n, const std::vector<Triplet>& entries,
                                          GsoKind kind, bool edgeless = false) {
    require(n >= 0, ErrorCode::InvalidParameter, "negative node count");
    std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
    for (const auto& e : entries) {
      require(e.row() >= 0 && e.row() < n && e.col() >= 0 && e.col() < n, ErrorCode::InvalidInput,
              "entry (" + std::to_string(e.row()) + ", " + std::to_string(e.col()) +
                  ") outside [0, " + std::to_string(n) + ")");
      require(seen.emplace(e.row(), e.col()).second, ErrorCode::InvalidInput,
              "duplicate entry (" + std::to_string(e.row()) + ", " + std::to_string(e.col()) + ")");
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(entries.begin(), entries.end());
    return GraphShiftOperator(std::move(m), kind, edgeless);
  }

  static GraphShiftOperator from_dense(const Eigen::MatrixXd& d, GsoKind kind,
                                       bool edgeless = false) {
    SparseMatrix m = d.sparseView();
    return GraphShiftOperator(std::move(m), kind, edgeless || d.isZero(0.0));
  }

  static GraphShiftOperator identity(Eigen::Index n) {
    SparseMatrix m(n, n);
    m.setIdentity();
    return GraphShiftOperator(std::move(m), GsoKind::Generic);
  }

  Eigen::Index size() const noexcept { return m_.rows(); }
  Eigen::Index nnz() const noexcept { return m_.nonZeros(); }
  GsoKind kind() const noexcept { return kind_; }
  bool edgeless() const noexcept { return edgeless_; }
  const SparseMatrix& matrix() const noexcept { return m_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }

  /// True once a dense eigen-check confirmed the spectrum lies in [0, 2].
  bool spectrum_validated() const noexcept { return spectrum_validated_; }

  bool is_symmetric(double tol = 1e-12) const {
    SparseMatrix diff = SparseMatrix(m_.transpose()) - m_;
    const double scale = std::max(1.0, m_.norm());
    return diff.norm() <= tol * scale;
  }

  bool has_nonzero_diagonal() const {
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it)
        if (it.row() == it.col()) return true;
    return false;
  }

  /// Row/col pairs of the stored pattern, column-major order.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> support() const {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    out.reserve(std::size_t(m_.nonZeros()));
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it) out.emplace_back(it.row(), it.col());
    return out;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(std::size_t(m_.nonZeros()));
    for (Eigen::Index c = 0; c < m_.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(m_, c); it; ++it)
        out.emplace_back(it.row(), it.col(), it.value());
    return out;
  }

 private:
  void check_normalized_laplacian() {
    require(is_symmetric(1e-10), ErrorCode::InvalidInput, "normalized Laplacian must be symmetric");
    if (size() == 0 || size() > kSpectrumCheckLimit) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    require(lo >= -1e-10 && hi <= 2.0 + 1e-10, ErrorCode::InvalidInput,
            "normalized Laplacian eigenvalues outside [0, 2]");
    spectrum_validated_ = true;
  }

  SparseMatrix m_;
  GsoKind kind_ = GsoKind::Generic;
  bool edgeless_ = false;
  bool spectrum_validated_ = false;
};

/// Coefficients of S_prod = sum_ij s_ij (S_F^i kron S^j), i, j in {0, 1}.
struct ProductGraphSpec {
  double s00 = 0.0;
  double s01 = 1.0;
  double s10 = 1.0;
  double s11 = 0.0;

  static constexpr ProductGraphSpec kronecker() { return {0, 0, 0, 1}; }
  static constexpr ProductGraphSpec cartesian() { return {0, 1, 1, 0}; }
  static constexpr ProductGraphSpec strong() { return {0, 1, 1, 1}; }

  static ProductGraphSpec from_name(const std::string& name) {
    if (name == "kronecker") return kronecker();
    if (name == "cartesian") return cartesian();
    if (name == "strong") return strong();
    throw Error(ErrorCode::InvalidParameter, "unknown product graph '" + name + "'");
  }

  void validate() const {
    require(std::isfinite(s00) && std::isfinite(s01) && std::isfinite(s10) && std::isfinite(s11),
            ErrorCode::InvalidParameter, "product coefficients must be finite");
    require(s00 != 0.0 || s01 != 0.0 || s10 != 0.0 || s11 != 0.0, ErrorCode::InvalidParameter,
            "product graph needs at least one nonzero coefficient");
  }

  /// Whether S_prod depends on the feature graph at all.
  bool uses_feature_graph() const noexcept { return s10 != 0.0 || s11 != 0.0; }

  friend bool operator==(const ProductGraphSpec&, const ProductGraphSpec&) = default;
};

/// Dense symmetric nonnegative distances with zero diagonal.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(Eigen::MatrixXd d) : d_(std::move(d)) {
    require(d_.rows() == d_.cols(), ErrorCode::InvalidInput, "distance matrix must be square");
    for (Eigen::Index i = 0; i < d_.rows(); ++i) {
      require(d_(i, i) == 0.0, ErrorCode::InvalidInput, "distance matrix diagonal must be zero");
      for (Eigen::Index j = 0; j < d_.cols(); ++j) {
        require(std::isfinite(d_(i, j)) && d_(i, j) >= 0.0, ErrorCode::InvalidInput,
                "distances must be finite and nonnegative");
        require(d_(i, j) == d_(j, i), ErrorCode::InvalidInput, "distance matrix must be symmetric");
      }
    }
  }

  Eigen::Index size() const noexcept { return d_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return d_(i, j); }
  const Eigen::MatrixXd& matrix() const noexcept { return d_; }

 private:
  Eigen::MatrixXd d_;
};

namespace detail {

// Union symmetrization of a directed selection; weights[i][j] must be symmetric.
inline GraphShiftOperator symmetric_union(Eigen::Index n,
                                          const std::vector<std::pair<Eigen::Index, Eigen::Index>>& picks,
                                          const Eigen::MatrixXd& weights) {
  std::set<std::pair<Eigen::Index, Eigen::Index>> edges;
  for (auto [i, j] : picks) {
    if (i == j || weights(i, j) == 0.0) continue;
    edges.emplace(i, j);
    edges.emplace(j, i);
  }
  std::vector<Triplet> t;
  t.reserve(edges.size());
  for (auto [i, j] : edges) t.emplace_back(i, j, weights(i, j));
  return GraphShiftOperator::from_triplets(n, t, GsoKind::Adjacency, edges.empty());
}

// Indices of the m largest scores among j != i; ties go to the lower index.
inline std::vector<Eigen::Index> top_m(const Eigen::VectorXd& score, Eigen::Index self,
                                       Eigen::Index m, bool largest) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < score.size(); ++j)
    if (j != self) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return largest ? score(a) > score(b) : score(a) < score(b);
  });
  idx.resize(std::size_t(m));
  return idx;
}

}  // namespace detail

/// k-nearest-neighbour graph with Gaussian weights exp(-d^2 / sigma^2),
/// symmetrized by union. A missing sigma means "mean selected-neighbour distance".
inline GraphShiftOperator knn_gaussian_graph(const DistanceMatrix& d, Eigen::Index k,
                                             std::optional<double> sigma = std::nullopt) {
  const Eigen::Index n = d.size();
  require(k >= 1, ErrorCode::InvalidParameter, "k must be positive");
  require(k < n, ErrorCode::InvalidParameter,
          "k=" + std::to_string(k) + " must be smaller than the node count " + std::to_string(n));
  if (sigma) require(*sigma > 0.0 && std::isfinite(*sigma), ErrorCode::InvalidParameter,
                     "sigma must be positive");

  std::vector<std::pair<Eigen::Index, Eigen::Index>> picks;
  double dist_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j : detail::top_m(d.matrix().col(i), i, k, /*largest=*/false)) {
      picks.emplace_back(i, j);
      dist_sum += d(i, j);
    }
  }
  const double bandwidth = sigma ? *sigma : dist_sum / double(picks.size());
  require(bandwidth > 0.0, ErrorCode::InvalidParameter,
          "automatic sigma is zero (all selected distances vanish)");

  Eigen::MatrixXd w = (-(d.matrix().array().square()) / (bandwidth * bandwidth)).exp().matrix();
  return detail::symmetric_union(n, picks, w);
}

/// Absolute Pearson correlation between features, pooled over every node and
/// time sample. Constant features correlate at 0 with everything.
inline Eigen::MatrixXd pooled_feature_correlation(const SignalPanel& panel,
                                                  std::vector<std::string>* warnings = nullptr) {
  const Eigen::Index F = Eigen::Index(panel.F());
  const Eigen::Index samples = Eigen::Index(panel.T() * panel.N());
  Eigen::MatrixXd cols(samples, F);
  for (std::size_t t = 0; t < panel.T(); ++t)
    cols.middleRows(Eigen::Index(t * panel.N()), Eigen::Index(panel.N())) = panel.slice(t);

  Eigen::RowVectorXd mean = cols.colwise().mean();
  Eigen::MatrixXd centered = cols.rowwise() - mean;
  Eigen::VectorXd norms = centered.colwise().norm();
  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(F, F);
  for (Eigen::Index a = 0; a < F; ++a) {
    if (norms(a) == 0.0) {
      if (warnings) warnings->push_back("feature " + std::to_string(a) + " has zero variance");
      continue;
    }
    for (Eigen::Index b = 0; b < F; ++b) {
      if (norms(b) == 0.0) continue;
      corr(a, b) = std::abs(centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b)));
    }
  }
  return corr;
}

/// Connects each feature to its m most correlated features, weight |corr|,
/// symmetrized by union.
inline GraphShiftOperator correlation_feature_graph(const SignalPanel& panel, Eigen::Index m,
                                                    std::vector<std::string>* warnings = nullptr) {
  const Eigen::Index F = Eigen::Index(panel.F());
  require(m >= 1 && m < F, ErrorCode::InvalidParameter,
          "m must satisfy 1 <= m < F (F=" + std::to_string(F) + ")");
  require(panel.T() >= 2, ErrorCode::InsufficientData, "need at least two time samples");

  Eigen::MatrixXd corr = pooled_feature_correlation(panel, warnings);
  // |corr| can exceed 1 by an ulp; clamp so weights stay in [0, 1].
  corr = corr.cwiseMin(1.0);
  corr = 0.5 * (corr + corr.transpose());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> picks;
  for (Eigen::Index f = 0; f < F; ++f)
    for (Eigen::Index g : detail::top_m(corr.col(f), f, m, /*largest=*/true)) picks.emplace_back(f, g);
  return detail::symmetric_union(F, picks, corr);
}

/// L = I - D^{-1/2} A D^{-1/2}; isolated nodes get a zero row and column.
inline GraphShiftOperator normalized_laplacian(const GraphShiftOperator& a) {
  require(a.is_symmetric(), ErrorCode::InvalidInput, "normalized Laplacian needs a symmetric adjacency");
  const Eigen::Index n = a.size();
  Eigen::VectorXd degree = Eigen::VectorXd::Zero(n);
  for (const auto& t : a.triplets()) {
    require(t.value() >= 0.0, ErrorCode::InvalidInput, "adjacency weights must be nonnegative");
    degree(t.row()) += t.value();
  }
  Eigen::VectorXd inv_sqrt = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (degree(i) > 0.0) inv_sqrt(i) = 1.0 / std::sqrt(degree(i));

  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < n; ++i)
    if (degree(i) > 0.0) t.emplace_back(i, i, 1.0);
  // Self-loops fold into the diagonal (setFromTriplets sums duplicates).
  for (const auto& e : a.triplets())
    t.emplace_back(e.row(), e.col(), -e.value() * inv_sqrt(e.row()) * inv_sqrt(e.col()));
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return GraphShiftOperator(std::move(m), GsoKind::NormalizedLaplacian, /*edgeless=*/t.empty());
}

/// Sparse Kronecker product, row index of (a, b) is a * rows(b) + b.
/// Applies a shift matrix to blocks of column signals. Small operators with a
/// moderate fill are multiplied densely, which vectorizes; large or very sparse
/// ones stay sparse.
class ShiftKernel {
 public:
  explicit ShiftKernel(const SparseMatrix& m) : sparse_(&m) {
    const double n = double(m.rows());
    if (m.rows() <= 256 && double(m.nonZeros()) >= 0.1 * n * n) dense_ = Eigen::MatrixXd(m);
  }

  template <typename Derived>
  Eigen::MatrixXd operator()(const Eigen::MatrixBase<Derived>& x) const {
    if (dense_.size()) return dense_ * x;
    return *sparse_ * x;
  }

  Eigen::Index size() const noexcept { return sparse_->rows(); }

 private:
  const SparseMatrix* sparse_;
  Eigen::MatrixXd dense_;
};

inline SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> t;
  t.reserve(std::size_t(a.nonZeros() * b.nonZeros()));
  for (Eigen::Index ca = 0; ca < a.outerSize(); ++ca)
    for (SparseMatrix::InnerIterator ia(a, ca); ia; ++ia)
      for (Eigen::Index cb = 0; cb < b.outerSize(); ++cb)
        for (SparseMatrix::InnerIterator ib(b, cb); ib; ++ib)
          t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                         ia.value() * ib.value());
  SparseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

/// Product graph GSO over NF nodes. Node (f, v) maps to index f * N + v, which
/// matches feature-stacked signals.
inline GraphShiftOperator product_gso(const GraphShiftOperator& sf, const GraphShiftOperator& s,
                                      const ProductGraphSpec& spec) {
  spec.validate();
  const Eigen::Index F = sf.size();
  const Eigen::Index N = s.size();
  SparseMatrix eye_f(F, F), eye_n(N, N);
  eye_f.setIdentity();
  eye_n.setIdentity();

  SparseMatrix out(F * N, F * N);
  if (spec.s00 != 0.0) out += spec.s00 * kron(eye_f, eye_n);
  if (spec.s01 != 0.0) out += spec.s01 * kron(eye_f, s.matrix());
  if (spec.s10 != 0.0) out += spec.s10 * kron(sf.matrix(), eye_n);
  if (spec.s11 != 0.0) out += spec.s11 * kron(sf.matrix(), s.matrix());
  out.prune(0.0);
  const bool edgeless = out.nonZeros() == 0;
  return GraphShiftOperator(std::move(out), GsoKind::Generic, edgeless);
}

/// Edge-list text format: "gso <n> <kind>" then one "row col weight" per line.
inline void write_edge_list(std::ostream& os, const GraphShiftOperator& g) {
  os << "gso " << g.size() << ' ' << to_string(g.kind()) << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  auto t = g.triplets();
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return std::pair(a.row(), a.col()) < std::pair(b.row(), b.col());
  });
  for (const auto& e : t) os << e.row() << ' ' << e.col() << ' ' << e.value() << '\n';
}

inline GraphShiftOperator read_edge_list(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<Eigen::Index> n;
  GsoKind kind = GsoKind::Generic;
  std::vector<Triplet> entries;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#')
      continue;
    std::istringstream ls(line);
    if (!n) {
      std::string tag, kind_name;
      long long count = -1;
      if (!(ls >> tag >> count >> kind_name) || tag != "gso" || count < 0)
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 'gso <n> <kind>'");
      n = Eigen::Index(count);
      kind = parse_gso_kind(kind_name);
      continue;
    }
    long long r = -1, c = -1;
    double w = 0.0;
    std::string extra;
    if (!(ls >> r >> c >> w) || (ls >> extra))
      throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected 'row col weight'");
    entries.emplace_back(Eigen::Index(r), Eigen::Index(c), w);
  }
  require(n.has_value(), ErrorCode::Parse, "missing 'gso' header");
  bool all_zero = std::all_of(entries.begin(), entries.end(), [](const Triplet& t) { return t.value() == 0.0; });
  return GraphShiftOperator::from_triplets(*n, entries, kind, all_zero);
}

}  // namespace graphvar
