#include <gtest/gtest.h>

#include <random>

#include "graphvar/filters.hpp"
#include "oracles.hpp"

using namespace graphvar;

TEST(ApplyFilter, IdentityTap) {
  std::mt19937_64 rng(1);
  auto s = oracle::random_laplacian(6, rng);
  Eigen::VectorXd x = oracle::random_matrix(6, 1, rng);
  EXPECT_EQ((apply_filter(s, {1.0}, x) - x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((apply_filter(s, {1.0, 0.0, 0.0, 0.0}, x) - x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ApplyFilter, SingleShiftOnTwoCycle) {
  auto s = GraphShiftOperator::from_triplets(2, {{0, 1, 1.0}, {1, 0, 1.0}}, GsoKind::Adjacency);
  Eigen::VectorXd x(2);
  x << 1, 0;
  Eigen::VectorXd y = apply_filter(s, {0.0, 1.0}, x);
  EXPECT_EQ(y(0), 0.0);
  EXPECT_EQ(y(1), 1.0);
}

TEST(ApplyFilter, MatchesDenseMatrixPowers) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd sd = oracle::random_matrix(5, 5, rng);
    auto s = GraphShiftOperator::from_dense(sd, GsoKind::Generic);
    Eigen::VectorXd h = oracle::random_matrix(3, 1, rng);
    Eigen::VectorXd x = oracle::random_matrix(5, 1, rng);
    Eigen::VectorXd expect = h(0) * x + h(1) * sd * x + h(2) * oracle::power(sd, 2) * x;
    EXPECT_LT(oracle::max_rel(apply_filter(s, FilterTaps(h), x), expect), 1e-13);
  }
}

TEST(ApplyFilter, Linearity) {
  std::mt19937_64 rng(3);
  auto s = oracle::random_laplacian(8, rng);
  FilterTaps taps(oracle::random_matrix(4, 1, rng).col(0));
  Eigen::VectorXd x = oracle::random_matrix(8, 1, rng), y = oracle::random_matrix(8, 1, rng);
  const double a = 1.7, b = -0.4;
  Eigen::VectorXd lhs = apply_filter(s, taps, a * x + b * y);
  Eigen::VectorXd rhs = a * apply_filter(s, taps, x) + b * apply_filter(s, taps, y);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(ApplyFilter, DimensionMismatchAndBadTaps) {
  auto s = GraphShiftOperator::identity(3);
  Eigen::VectorXd x(4);
  EXPECT_THROW(apply_filter(s, {1.0}, x), Error);
  EXPECT_THROW(FilterTaps(Eigen::VectorXd()), Error);
  EXPECT_THROW(FilterTaps({1.0, std::nan("")}), Error);
}

TEST(MimoShiftApply, IdentityMixingAtZeroShift) {
  std::mt19937_64 rng(4);
  auto s = oracle::random_laplacian(4, rng);
  Eigen::MatrixXd x = oracle::random_matrix(4, 3, rng);
  EXPECT_EQ((mimo_shift_apply(s, Eigen::MatrixXd::Identity(3, 3), 0, x) - x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MimoShiftApply, PathGraphSingleShift) {
  auto s = GraphShiftOperator::from_triplets(2, {{0, 1, 1.0}, {1, 0, 1.0}}, GsoKind::Adjacency);
  Eigen::MatrixXd x(2, 2);
  x << 1, 0, 0, 1;
  Eigen::MatrixXd expect(2, 2);
  expect << 0, 1, 1, 0;  // [[0,1],[1,0]] * I * I
  EXPECT_EQ((mimo_shift_apply(s, Eigen::MatrixXd::Identity(2, 2), 1, x) - expect).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MimoShiftApply, KroneckerDualityOnRandomInstances) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd sd = oracle::random_matrix(4, 4, rng);
    auto s = GraphShiftOperator::from_dense(sd, GsoKind::Generic);
    Eigen::MatrixXd h = oracle::random_matrix(3, 3, rng);
    Eigen::MatrixXd x = oracle::random_matrix(4, 3, rng);
    const int k = trial % 4;
    Eigen::VectorXd lhs = vec_by_feature(mimo_shift_apply(s, h, k, x));
    Eigen::VectorXd rhs = oracle::kron(h.transpose(), oracle::power(sd, k)) * vec_by_feature(x);
    EXPECT_LT((lhs - rhs).norm() / rhs.norm(), 1e-12);
  }
}

TEST(MimoShiftApply, RejectsMismatchedShapes) {
  auto s = GraphShiftOperator::identity(3);
  EXPECT_THROW(mimo_shift_apply(s, Eigen::MatrixXd::Identity(2, 2), 1, Eigen::MatrixXd::Zero(3, 3)), Error);
  EXPECT_THROW(mimo_shift_apply(s, Eigen::MatrixXd::Identity(2, 2), 1, Eigen::MatrixXd::Zero(4, 2)), Error);
}
