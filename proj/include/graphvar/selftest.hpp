#pragma once

// Built-in oracle suite behind `graphvar selftest`. Each check compares the
// library against a dense reference on seeded random instances.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "graphvar/data.hpp"
#include "graphvar/estimation.hpp"
#include "graphvar/evaluation.hpp"
#include "graphvar/models.hpp"

namespace graphvar {

struct SelftestConfig {
  std::uint64_t seed = 1;
  std::string gradient_mode = "analytic";
  int instances = 20;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

namespace selftest_detail {

inline GraphShiftOperator random_laplacian(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.2, 1.0);
  std::bernoulli_distribution edge(0.6);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (edge(rng) || j == i + 1) a(i, j) = a(j, i) = w(rng);
  return normalized_laplacian(GraphShiftOperator::from_dense(a, GsoKind::Adjacency));
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (auto& v : m.reshaped()) v = g(rng);
  return m;
}

inline CoefficientSet random_coefficients(const ModelSpec& spec, int F, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CoefficientSet c = CoefficientSet::zeros(spec, F);
  for (auto& v : c.scalar_taps.reshaped()) v = g(rng);
  for (auto& vec : c.feature_taps)
    for (auto& v : vec) v = g(rng);
  for (auto& m : c.matrix_taps)
    for (auto& v : m.reshaped()) v = g(rng);
  return c;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& m, int k) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  for (int i = 0; i < k; ++i) out = out * m;
  return out;
}

inline std::vector<SliceView> views(const std::vector<Eigen::MatrixXd>& xs) {
  std::vector<SliceView> h;
  for (const auto& x : xs) h.emplace_back(x.data(), x.rows(), x.cols());
  return h;
}

// MIMO G-VAR with P = 1 against sum_k (H_k^T kron S^k) vec(X).
inline CheckResult kronecker_duality(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> n_d(1, 5), f_d(1, 4), k_d(1, 4);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int N = n_d(rng), F = f_d(rng), K = k_d(rng);
    auto s = random_laplacian(N, rng);
    ModelSpec spec{ModelFamily::MimoGVar, 1, K};
    auto c = random_coefficients(spec, F, rng);
    std::vector<Eigen::MatrixXd> x{random_matrix(N, F, rng)};
    const Eigen::MatrixXd y = predict(FittedModel(spec, c, s), views(x));
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(N * F);
    const Eigen::VectorXd vx = vec_by_feature(x[0]);
    const Eigen::MatrixXd sd = s.dense();
    for (int k = 0; k < K; ++k) {
      const Eigen::MatrixXd op =
          Eigen::kroneckerProduct(Eigen::MatrixXd(c.matrix_taps[std::size_t(k)].transpose()), matrix_power(sd, k));
      ref += op * vx;
    }
    worst = std::max(worst, rel_err(vec_by_feature(y), ref));
  }
  return {"kronecker_duality", worst <= 1e-12, worst, 1e-12, "100 instances", 0.0};
}

inline CheckResult family_nesting(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 1);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int N = 5, F = 3, P = 2, K = 3;
    auto s = random_laplacian(N, rng);
    std::vector<Eigen::MatrixXd> hist{random_matrix(N, F, rng), random_matrix(N, F, rng)};
    ModelSpec pf{ModelFamily::PerFeatureGVar, P, K}, mimo{ModelFamily::MimoGVar, P, K}, g{ModelFamily::GVar, P, K};
    auto cpf = random_coefficients(pf, F, rng);
    auto cm = CoefficientSet::zeros(mimo, F);
    for (std::size_t j = 0; j < cm.matrix_taps.size(); ++j) cm.matrix_taps[j] = cpf.feature_taps[j].asDiagonal();
    worst = std::max(worst, rel_err(predict(FittedModel(mimo, cm, s), views(hist)),
                                    predict(FittedModel(pf, cpf, s), views(hist))));
    auto cg = random_coefficients(g, F, rng);
    auto cpf2 = CoefficientSet::zeros(pf, F);
    for (int p = 1; p <= P; ++p)
      for (int k = 0; k < K; ++k) cpf2.feature(p, k).setConstant(cg.scalar(p, k));
    worst = std::max(worst, rel_err(predict(FittedModel(pf, cpf2, s), views(hist)),
                                    predict(FittedModel(g, cg, s), views(hist))));
  }
  return {"family_nesting", worst <= 1e-12, worst, 1e-12, "mimo>per_feature>gvar", 0.0};
}

inline CheckResult product_presets(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 2);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto s = random_laplacian(4, rng);
    auto sf = random_laplacian(3, rng);
    const Eigen::MatrixXd S = s.dense(), SF = sf.dense();
    const Eigen::MatrixXd IN = Eigen::MatrixXd::Identity(4, 4), IF = Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd cart = Eigen::kroneckerProduct(IF, S).eval() + Eigen::kroneckerProduct(SF, IN).eval();
    const Eigen::MatrixXd kr = Eigen::kroneckerProduct(SF, S);
    worst = std::max(worst, (product_gso(sf, s, ProductGraphSpec::cartesian()).dense() - cart).cwiseAbs().maxCoeff());
    worst = std::max(worst, (product_gso(sf, s, ProductGraphSpec::kronecker()).dense() - kr).cwiseAbs().maxCoeff());
  }
  return {"product_presets", worst == 0.0, worst, 0.0, "cartesian, kronecker", 0.0};
}

// Compares the gradient used by the configured mode with central differences.
inline CheckResult gradient(const SelftestConfig& cfg) {
  CheckResult r{"gradient", false, 0.0, 1e-5, "", 0.0};
  GradientMode mode;
  try {
    mode = parse_gradient_mode(cfg.gradient_mode);
  } catch (const Error& e) {
    r.metric = std::numeric_limits<double>::quiet_NaN();
    r.detail = e.what();
    return r;
  }
  std::mt19937_64 rng(cfg.seed + 3);
  std::uniform_int_distribution<int> n_d(2, 4), f_d(2, 3), k_d(1, 4);
  double worst = 0.0;
  for (int i = 0; i < cfg.instances; ++i) {
    const int N = n_d(rng), F = f_d(rng), K = k_d(rng);
    auto s = random_laplacian(N, rng);
    auto sf = random_laplacian(F, rng);
    const auto product = i % 2 ? ProductGraphSpec::kronecker() : ProductGraphSpec::cartesian();
    ModelSpec spec{i % 4 < 2 ? ModelFamily::PgVar : ModelFamily::PgGVar, 2, K, product};
    auto h = random_coefficients(spec, F, rng);
    SignalPanel panel(12, std::size_t(N), std::size_t(F));
    for (std::size_t t = 0; t < panel.T(); ++t) panel.set_slice(t, random_matrix(N, F, rng));
    JointProblem pb{spec, &s, &panel, 2, panel.T()};
    FeatureGraphParams params(sf, false);
    const Eigen::VectorXd theta = params.values(sf);
    const Eigen::VectorXd g = mode == GradientMode::Analytic ? sf_objective_gradient(h, sf, pb, params)
                                                             : sf_objective_gradient_fd(h, theta, pb, params);
    const Eigen::VectorXd ref = sf_objective_gradient_fd(h, theta, pb, params, 1e-6);
    worst = std::max(worst, rel_err(g, ref));
  }
  r.metric = worst;
  r.passed = worst <= r.tolerance;
  r.detail = std::to_string(cfg.instances) + " instances, mode " + to_string(mode);
  return r;
}

inline CheckResult recovery(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 4);
  const int N = 6, F = 3;
  auto s = random_laplacian(N, rng);
  auto sf = random_laplacian(F, rng);
  double worst = 0.0;
  for (auto fam : {ModelFamily::GVar, ModelFamily::PerFeatureGVar, ModelFamily::PgVar, ModelFamily::PgGVar,
                   ModelFamily::MimoGVar}) {
    ModelSpec spec{fam, 2, 2};
    const bool pg = uses_product_graph(fam);
    std::optional<GraphShiftOperator> f = pg ? std::optional<GraphShiftOperator>(sf) : std::nullopt;
    auto truth = random_stable_coefficients(spec, F, s, f, rng, 0.95);
    auto panel = generate_synthetic({spec, truth, 0.0, 400, cfg.seed, 0, 1.0}, s, f);
    auto fit = fit_least_squares(spec, s, pg ? &sf : nullptr, panel, 2, panel.T());
    worst = std::max(worst, fit.coeffs.max_abs_diff(canonical_coefficients(spec, truth)));
  }
  return {"ls_recovery", worst <= 1e-8, worst, 1e-8, "noise-free, all families", 0.0};
}

inline CheckResult am_monotone(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 5);
  auto s = random_laplacian(5, rng);
  auto sf_true = random_laplacian(3, rng);
  auto sf0 = random_laplacian(3, rng);
  ModelSpec spec{ModelFamily::PgVar, 2, 3};
  auto truth = random_stable_coefficients(spec, 3, s, sf_true, rng, 0.9);
  auto panel = generate_synthetic({spec, truth, 0.1, 300, cfg.seed, 100, 1.0}, s, sf_true);
  JointFitConfig jc;
  jc.max_outer_iters = 10;
  auto r = joint_fit(spec, s, sf0, panel, 2, panel.T(), jc);
  double worst_rise = 0.0;
  for (std::size_t i = 1; i < r.trace.size(); ++i)
    worst_rise = std::max(worst_rise, r.trace[i].objective - r.trace[i - 1].objective);
  const bool ok = worst_rise <= 0.0 && r.final_objective <= r.fixed_objective;
  return {"am_monotone", ok, worst_rise, 0.0,
          std::to_string(r.trace.size()) + " half-steps, final/fixed " +
              std::to_string(r.final_objective / r.fixed_objective),
          0.0};
}

inline CheckResult rnmse_facts(const SelftestConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + 6);
  std::vector<Eigen::MatrixXd> x, zero, twice;
  for (int t = 0; t < 5; ++t) {
    x.push_back(random_matrix(4, 3, rng));
    zero.push_back(Eigen::MatrixXd::Zero(4, 3));
    twice.push_back(2.0 * x.back());
  }
  const double perfect = rnmse(x, x), z = rnmse(zero, x), d = rnmse(twice, x);
  const double worst = std::max({std::abs(perfect), std::abs(z - 1.0), std::abs(d - 1.0)});
  return {"rnmse_facts", worst <= 1e-12, worst, 1e-12, "perfect=0, zero=1, doubled=1", 0.0};
}

}  // namespace selftest_detail

inline std::vector<CheckResult> run_selftest(const SelftestConfig& cfg = {}) {
  using namespace selftest_detail;
  const std::vector<std::function<CheckResult(const SelftestConfig&)>> checks{
      kronecker_duality, family_nesting, product_presets, gradient, recovery, am_monotone, rnmse_facts};
  std::vector<CheckResult> out;
  for (const auto& check : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check(cfg);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(r));
  }
  return out;
}

inline void print_selftest(std::ostream& os, const std::vector<CheckResult>& results) {
  os << std::left << std::setw(20) << "check" << std::setw(7) << "status" << std::setw(13) << "metric"
     << std::setw(10) << "tol" << std::setw(9) << "seconds" << "detail\n";
  std::size_t failed = 0;
  for (const auto& r : results) {
    failed += !r.passed;
    os << std::left << std::setw(20) << r.name << std::setw(7) << (r.passed ? "PASS" : "FAIL") << std::setw(13)
       << std::setprecision(3) << std::scientific << r.metric << std::setw(10) << r.tolerance << std::fixed
       << std::setw(9) << std::setprecision(2) << r.seconds << r.detail << '\n';
  }
  os << std::defaultfloat << results.size() - failed << "/" << results.size() << " checks passed\n";
}

}  // namespace graphvar
