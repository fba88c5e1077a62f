#ifndef ISSRC_SPARSE_SOLVER_HPP
#define ISSRC_SPARSE_SOLVER_HPP

#include "issrc/core.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace issrc {

enum class GradientFactor { two = 2, one = 1 };

/// How the linearization constant of the alpha-step is chosen when no
/// explicit value is given.
enum class ThetaPolicy {
  spectral,           // (1 + 1e-3) * lambda_max(g D'D + sigma I)
  frobenius_squared,  // (1 + 1e-3) * ||D'D + sigma I||_F^2
};

struct SolverParams {
  std::optional<double> lambda;  // unset: 0.01 * ||D'h||_inf per solve
  double lambda_scale = 0.01;
  double sigma = 1.0;
  double rho = 1.0;
  std::optional<double> theta;
  ThetaPolicy theta_policy = ThetaPolicy::spectral;
  int max_iters = 2000;
  double tol = 1e-8;
  GradientFactor gradient_factor = GradientFactor::two;
  bool record_kkt = true;

  double g() const { return static_cast<double>(static_cast<int>(gradient_factor)); }

  void validate() const {
    std::vector<std::string> errors;
    if (lambda && !(*lambda >= 0.0)) errors.emplace_back("lambda must be nonnegative");
    if (!(lambda_scale > 0.0)) errors.emplace_back("lambda_scale must be positive");
    if (!(sigma > 0.0)) errors.emplace_back("sigma must be positive");
    if (!(rho > 0.0 && rho < 2.0)) errors.emplace_back("rho must lie in (0,2)");
    if (theta && !(*theta > 0.0)) errors.emplace_back("theta must be positive");
    if (max_iters < 1) errors.emplace_back("max_iters must be positive");
    if (!(tol >= 0.0)) errors.emplace_back("tol must be nonnegative");
    if (!errors.empty()) {
      std::string msg = errors.front();
      for (std::size_t i = 1; i < errors.size(); ++i) msg += "; " + errors[i];
      throw Error(msg);
    }
  }
};

struct ResidualRecord {
  double primal = 0.0;  // ||alpha - b||_2
  double kkt = 0.0;     // NaN when not recorded
};

struct SparseSolveState {
  Vector alpha, b, eta;
  Vector alpha_tilde, b_tilde, eta_tilde;
  int iter = 0;
  bool converged = false;
  double lambda = 0.0;
  double theta = 0.0;
  std::vector<ResidualRecord> residuals;
};

struct SparseSolution {
  Vector alpha;  // the thresholded iterate b
  SparseSolveState state;
};

inline Vector soft_threshold(const Vector& x, double eps) {
  if (eps < 0.0) throw Error("threshold must be nonnegative");
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x(i);
    out(i) = v > eps ? v - eps : (v < -eps ? v + eps : 0.0);
  }
  return out;
}

/// Optimality gap of (alpha, b, eta) for min (g/2)||D a - h||^2 + lambda ||b||_1
/// subject to a = b: the max of ||eta + g D'(D alpha - h)||_inf,
/// dist(eta, lambda * subdiff ||b||_1) and ||alpha - b||_inf.
inline double kkt_residual(const Vector& alpha, const Vector& b, const Vector& eta, const Vector& target,
                           const Matrix& dict, double lambda, GradientFactor factor = GradientFactor::two) {
  const double g = static_cast<double>(static_cast<int>(factor));
  const Vector grad = g * (dict.transpose() * (dict * alpha - target));
  const double stationarity = (eta + grad).lpNorm<Eigen::Infinity>();
  double subgradient = 0.0;
  for (Index i = 0; i < b.size(); ++i) {
    const double gap = b(i) == 0.0 ? std::max(std::abs(eta(i)) - lambda, 0.0)
                                   : std::abs(eta(i) - lambda * (b(i) > 0.0 ? 1.0 : -1.0));
    subgradient = std::max(subgradient, gap);
  }
  const double feasibility = alpha.size() ? (alpha - b).lpNorm<Eigen::Infinity>() : 0.0;
  return std::max({stationarity, subgradient, feasibility});
}

namespace detail {

inline void check_problem(const Vector& target, const Matrix& dict) {
  if (dict.rows() != target.size()) throw Error("dictionary rows must equal target length");
  if (dict.cols() == 0) throw Error("dictionary has no columns");
  if (dict.isZero(0.0)) throw Error("dictionary is all zero");
  if (!dict.allFinite() || !target.allFinite()) throw Error("non-finite problem data");
}

inline double resolve_lambda(const SolverParams& params, const Matrix& dict, const Vector& target) {
  if (params.lambda) return *params.lambda;
  return params.lambda_scale * (dict.transpose() * target).lpNorm<Eigen::Infinity>();
}

}  // namespace detail

/// Generalized ADMM with a linearized alpha-step and relaxation factor rho.
/// The dictionary-dependent constants are computed once, so a solver can be
/// reused for many targets.
class GsadmmSolver {
 public:
  GsadmmSolver(Matrix dict, SolverParams params) : dict_(std::move(dict)), params_(std::move(params)) {
    params_.validate();
    if (dict_.cols() == 0) throw Error("dictionary has no columns");
    if (dict_.isZero(0.0)) throw Error("dictionary is all zero");
    gram_ = dict_.transpose() * dict_;
    const Index k = dict_.cols();
    const double g = params_.g();
    if (params_.theta) {
      theta_ = *params_.theta;
    } else if (params_.theta_policy == ThetaPolicy::frobenius_squared) {
      theta_ = (1.0 + 1e-3) * (gram_ + params_.sigma * Matrix::Identity(k, k)).squaredNorm();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(g * gram_ + params_.sigma * Matrix::Identity(k, k),
                                                Eigen::EigenvaluesOnly);
      theta_ = (1.0 + 1e-3) * eig.eigenvalues().maxCoeff();
    }
  }

  double theta() const { return theta_; }
  const Matrix& dictionary() const { return dict_; }
  const SolverParams& params() const { return params_; }

  SparseSolution solve(const Vector& target) const {
    detail::check_problem(target, dict_);
    const Index k = dict_.cols();
    const double g = params_.g();
    const double sigma = params_.sigma;
    const double rho = params_.rho;
    SparseSolveState s;
    s.lambda = detail::resolve_lambda(params_, dict_, target);
    s.theta = theta_;
    s.alpha_tilde = s.b_tilde = s.eta_tilde = Vector::Zero(k);
    s.alpha = s.b = s.eta = Vector::Zero(k);
    const Vector dt_target = dict_.transpose() * target;
    Vector alpha_prev = Vector::Zero(k);
    s.residuals.reserve(static_cast<std::size_t>(std::min(params_.max_iters, 4096)));
    for (int it = 0; it < params_.max_iters; ++it) {
      const Vector z = g * (gram_ * s.alpha_tilde - dt_target) + sigma * (s.alpha_tilde - s.b_tilde) + s.eta_tilde;
      s.alpha = s.alpha_tilde - z / theta_;
      s.eta = s.eta_tilde + sigma * (s.alpha - s.b_tilde);
      s.b = soft_threshold(s.alpha + s.eta / sigma, s.lambda / sigma);
      s.alpha_tilde += rho * (s.alpha - s.alpha_tilde);
      s.b_tilde += rho * (s.b - s.b_tilde);
      s.eta_tilde += rho * (s.eta - s.eta_tilde);
      s.iter = it + 1;
      if (!s.alpha.allFinite() || !s.eta.allFinite())
        throw Error("non-finite iterate at iteration " + std::to_string(s.iter) + " (theta too small?)");
      const double primal = (s.alpha - s.b).norm();
      const double change = it == 0 ? kInf : (s.alpha - alpha_prev).norm();
      s.residuals.push_back({primal, params_.record_kkt
                                         ? kkt_residual(s.alpha, s.b, s.eta, target, dict_, s.lambda,
                                                        params_.gradient_factor)
                                         : std::numeric_limits<double>::quiet_NaN()});
      alpha_prev = s.alpha;
      if (std::max(primal, change) < params_.tol) {
        s.converged = true;
        break;
      }
    }
    Vector out = s.b;
    return {std::move(out), std::move(s)};
  }

 private:
  Matrix dict_;
  SolverParams params_;
  Matrix gram_;
  double theta_ = 0.0;
};

/// Classic two-block ADMM with an exact alpha-step (Cholesky of g D'D + sigma I).
class AdmmSolver {
 public:
  AdmmSolver(Matrix dict, SolverParams params) : dict_(std::move(dict)), params_(std::move(params)) {
    params_.validate();
    if (dict_.cols() == 0) throw Error("dictionary has no columns");
    const Index k = dict_.cols();
    const Matrix system = params_.g() * dict_.transpose() * dict_ + params_.sigma * Matrix::Identity(k, k);
    llt_.compute(system);
    if (llt_.info() != Eigen::Success) throw Error("alpha-step system is not positive definite");
  }

  SparseSolution solve(const Vector& target) const {
    detail::check_problem(target, dict_);
    const Index k = dict_.cols();
    const double g = params_.g();
    const double sigma = params_.sigma;
    SparseSolveState s;
    s.lambda = detail::resolve_lambda(params_, dict_, target);
    s.alpha = s.b = s.eta = Vector::Zero(k);
    const Vector rhs_fixed = g * (dict_.transpose() * target);
    Vector alpha_prev = Vector::Zero(k);
    for (int it = 0; it < params_.max_iters; ++it) {
      s.alpha = llt_.solve(rhs_fixed + sigma * s.b - s.eta);
      s.b = soft_threshold(s.alpha + s.eta / sigma, s.lambda / sigma);
      s.eta += sigma * (s.alpha - s.b);
      s.iter = it + 1;
      if (!s.alpha.allFinite() || !s.eta.allFinite()) throw Error("non-finite iterate");
      const double primal = (s.alpha - s.b).norm();
      const double change = it == 0 ? kInf : (s.alpha - alpha_prev).norm();
      s.residuals.push_back({primal, params_.record_kkt
                                         ? kkt_residual(s.alpha, s.b, s.eta, target, dict_, s.lambda,
                                                        params_.gradient_factor)
                                         : std::numeric_limits<double>::quiet_NaN()});
      alpha_prev = s.alpha;
      if (std::max(primal, change) < params_.tol) {
        s.converged = true;
        break;
      }
    }
    s.alpha_tilde = s.alpha;
    s.b_tilde = s.b;
    s.eta_tilde = s.eta;
    Vector out = s.b;
    return {std::move(out), std::move(s)};
  }

 private:
  Matrix dict_;
  SolverParams params_;
  Eigen::LLT<Matrix> llt_;
};

/// Solves min (g/2)||dict a - target||^2 + lambda ||a||_1 by GsADMM.
inline SparseSolution gsadmm_solve(const Vector& target, const Matrix& dict, const SolverParams& params = {}) {
  return GsadmmSolver(dict, params).solve(target);
}

inline SparseSolution admm_solve(const Vector& target, const Matrix& dict, const SolverParams& params = {}) {
  return AdmmSolver(dict, params).solve(target);
}

enum class SolverKind { gsadmm, admm };

inline std::string to_string(SolverKind kind) { return kind == SolverKind::gsadmm ? "gsadmm" : "admm"; }

struct BenchInstance {
  Matrix dict;
  Vector target;
};

/// Gaussian dictionary (rows x cols) and Gaussian target.
inline BenchInstance random_instance(Index rows, Index cols, Rng& rng) {
  BenchInstance inst;
  inst.dict = gaussian_matrix(rows, cols, rng);
  inst.target = gaussian_matrix(rows, 1, rng).col(0);
  return inst;
}

inline std::vector<BenchInstance> random_instances(std::size_t count, Index rows, Index cols, std::uint64_t seed) {
  std::vector<BenchInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, SeedStage::bench, i));
    out.push_back(random_instance(rows, cols, rng));
  }
  return out;
}

struct BenchConfig {
  SolverKind solver = SolverKind::gsadmm;
  SolverParams params{};
};

struct BenchRow {
  std::size_t instance = 0;
  SolverKind solver = SolverKind::gsadmm;
  double rho = 1.0;
  double sigma = 1.0;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  double initial_kkt = 0.0;
  double final_primal = 0.0;
  double final_kkt = 0.0;
  double wall_ms = 0.0;
  std::vector<ResidualRecord> trace;
};

/// Runs every configuration on every instance and records iteration counts,
/// residuals and wall time.
inline std::vector<BenchRow> convergence_report(const std::vector<BenchInstance>& instances,
                                                const std::vector<BenchConfig>& configs) {
  if (instances.empty()) throw Error("benchmark needs at least one instance");
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (const auto& cfg : configs) {
      SolverParams params = cfg.params;
      params.record_kkt = true;
      const auto start = std::chrono::steady_clock::now();
      SparseSolution sol = cfg.solver == SolverKind::gsadmm
                               ? gsadmm_solve(instances[i].target, instances[i].dict, params)
                               : admm_solve(instances[i].target, instances[i].dict, params);
      const auto stop = std::chrono::steady_clock::now();
      BenchRow row;
      row.instance = i;
      row.solver = cfg.solver;
      row.rho = cfg.solver == SolverKind::gsadmm ? params.rho : 1.0;
      row.sigma = params.sigma;
      row.lambda = sol.state.lambda;
      row.iterations = sol.state.iter;
      row.converged = sol.state.converged;
      const Index k = instances[i].dict.cols();
      row.initial_kkt = kkt_residual(Vector::Zero(k), Vector::Zero(k), Vector::Zero(k), instances[i].target,
                                     instances[i].dict, sol.state.lambda, params.gradient_factor);
      row.final_primal = sol.state.residuals.back().primal;
      row.final_kkt = sol.state.residuals.back().kkt;
      row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
      row.trace = std::move(sol.state.residuals);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace issrc

#endif  // ISSRC_SPARSE_SOLVER_HPP
