#ifndef ISSRC_CLASSIFICATION_HPP
#define ISSRC_CLASSIFICATION_HPP

#include "issrc/core.hpp"
#include "issrc/feature_learning.hpp"
#include "issrc/sparse_solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace issrc {

namespace detail {

inline std::vector<std::size_t> class_sizes_of(std::span<const ClassIndex> labels, int num_classes) {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(num_classes), 0);
  for (auto l : labels) {
    if (l < 0 || l >= num_classes) throw Error("class index out of range");
    ++sizes[static_cast<std::size_t>(l)];
  }
  return sizes;
}

inline int infer_num_classes(std::span<const ClassIndex> labels) {
  if (labels.empty()) throw Error("no training labels");
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

}  // namespace detail

/// Column i holds the coefficients of training feature i over the k test features.
struct CoefficientMatrix {
  Matrix values;  // k x s
  std::vector<ClassIndex> class_of;
  std::vector<std::size_t> class_sizes;
  std::vector<std::size_t> zero_training_columns;
  std::vector<std::size_t> unconverged_columns;

  int num_classes() const { return static_cast<int>(class_sizes.size()); }
};

/// Represents every training feature as a sparse combination of the test features.
inline CoefficientMatrix issr_represent(const Matrix& train_features, const Matrix& test_features,
                                       std::span<const ClassIndex> train_labels, const SolverParams& params,
                                       unsigned threads = 1, std::optional<int> num_classes = std::nullopt) {
  if (train_features.rows() != test_features.rows()) throw Error("train and test features must share rows");
  if (test_features.cols() < 1) throw Error("need at least one test sample");
  if (static_cast<std::size_t>(train_features.cols()) != train_labels.size())
    throw Error("one label per training column is required");
  SolverParams p = params;
  p.record_kkt = false;
  const GsadmmSolver solver(test_features, p);
  const int c = num_classes.value_or(detail::infer_num_classes(train_labels));

  CoefficientMatrix out;
  out.class_of.assign(train_labels.begin(), train_labels.end());
  out.class_sizes = detail::class_sizes_of(train_labels, c);
  out.values.resize(test_features.cols(), train_features.cols());
  const auto s = static_cast<std::size_t>(train_features.cols());
  std::vector<char> converged(s, 1);
  parallel_for(s, threads, [&](std::size_t i) {
    const auto sol = solver.solve(train_features.col(static_cast<Index>(i)));
    out.values.col(static_cast<Index>(i)) = sol.alpha;
    converged[i] = sol.state.converged ? 1 : 0;
  });
  for (std::size_t i = 0; i < s; ++i) {
    if (train_features.col(static_cast<Index>(i)).isZero(0.0)) out.zero_training_columns.push_back(i);
    if (!converged[i]) out.unconverged_columns.push_back(i);
  }
  return out;
}

struct CcrOptions {
  bool class_size_normalization = true;  // the 1/s_j factor
  double tie_tolerance = 1e-12;          // relative
};

struct CcrResult {
  Matrix values;  // c x k
  std::vector<ClassIndex> predictions;
  std::vector<bool> tie_flags;
  std::vector<bool> fallback_flags;
};

/// Features used by the nearest-neighbour fallback for test samples whose
/// coefficient mass is zero.
struct FallbackFeatures {
  const Matrix& train;
  const Matrix& test;
};

/// Category contribution rates: C(j,l) = (1/s_j) * sum_{i in j} |a(l,i)| / sum_i |a(l,i)|.
inline CcrResult ccr_classify(const CoefficientMatrix& coeffs, const CcrOptions& options = {},
                              std::optional<FallbackFeatures> fallback = std::nullopt) {
  const int c = coeffs.num_classes();
  for (std::size_t j = 0; j < coeffs.class_sizes.size(); ++j)
    if (coeffs.class_sizes[j] == 0) throw Error("class " + std::to_string(j) + " has no training samples");
  if (static_cast<std::size_t>(coeffs.values.cols()) != coeffs.class_of.size())
    throw Error("coefficient columns and class map differ in length");
  const Index k = coeffs.values.rows();
  CcrResult out;
  out.values = Matrix::Zero(c, k);
  out.predictions.assign(static_cast<std::size_t>(k), 0);
  out.tie_flags.assign(static_cast<std::size_t>(k), false);
  out.fallback_flags.assign(static_cast<std::size_t>(k), false);
  for (Index l = 0; l < k; ++l) {
    Vector mass = Vector::Zero(c);
    for (Index i = 0; i < coeffs.values.cols(); ++i)
      mass(coeffs.class_of[static_cast<std::size_t>(i)]) += std::abs(coeffs.values(l, i));
    const double total = mass.sum();
    if (total == 0.0) {
      out.fallback_flags[static_cast<std::size_t>(l)] = true;
      if (!fallback) throw Error("test sample " + std::to_string(l) + " has no coefficient mass and no fallback");
      if (fallback->test.cols() != k || fallback->train.cols() != coeffs.values.cols())
        throw Error("fallback features do not match the coefficient matrix");
      Index best = 0;
      (fallback->train.colwise() - fallback->test.col(l)).colwise().squaredNorm().minCoeff(&best);
      out.predictions[static_cast<std::size_t>(l)] = coeffs.class_of[static_cast<std::size_t>(best)];
      continue;
    }
    for (int j = 0; j < c; ++j) {
      double share = mass(j) / total;
      if (options.class_size_normalization) share /= static_cast<double>(coeffs.class_sizes[static_cast<std::size_t>(j)]);
      out.values(j, l) = share;
    }
    Index arg = 0;
    const double best = out.values.col(l).maxCoeff(&arg);
    int near_best = 0;
    for (int j = 0; j < c; ++j)
      if (best - out.values(j, l) <= options.tie_tolerance * best) ++near_best;
    out.predictions[static_cast<std::size_t>(l)] = static_cast<ClassIndex>(arg);
    out.tie_flags[static_cast<std::size_t>(l)] = near_best > 1;
  }
  return out;
}

struct ClassificationReport {
  std::string method;
  std::vector<ClassIndex> predictions;
  Matrix class_scores;                // c x k: CCR for ISSRC, class residuals for SRC
  std::vector<double> positive_score; // binary tasks: higher means positive
  std::optional<CoefficientMatrix> coefficients;
  std::optional<FactorStack> factors;
  std::vector<bool> tie_flags;
  std::vector<bool> fallback_flags;
  std::size_t unconverged_solves = 0;
};

struct IsrcOptions {
  bool skip_features = false;
  LpmlOptions lpml{};
  SolverParams solver{};
  CcrOptions ccr{};
  std::optional<ClassIndex> positive_class;  // default: last class
  unsigned threads = 1;
};

namespace detail {

inline void shift_rows_nonnegative(Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double lo = m.row(r).minCoeff();
    if (lo < 0.0) m.row(r).array() -= lo;
  }
}

}  // namespace detail

/// Feature learning on [train, test] followed by inverse-space representation
/// and CCR. Inputs are gene x sample matrices; test labels are never needed.
inline ClassificationReport integrated_isrc_classify(const Matrix& train, const Matrix& test,
                                                     std::span<const ClassIndex> train_labels,
                                                     const IsrcOptions& options = {},
                                                     std::optional<int> num_classes = std::nullopt) {
  if (train.rows() != test.rows()) throw Error("train and test must share the row dimension");
  const int c = num_classes.value_or(detail::infer_num_classes(train_labels));
  ClassificationReport report;
  report.method = options.skip_features ? "issrc" : "integrated-issrc";
  Matrix train_features, test_features;
  if (options.skip_features) {
    train_features = train;
    test_features = test;
  } else {
    Matrix joined(train.rows(), train.cols() + test.cols());
    joined << train, test;
    detail::shift_rows_nonnegative(joined);
    report.factors = lpml_snmf_fit(joined.leftCols(train.cols()), joined.rightCols(test.cols()), options.lpml);
    train_features = report.factors->train_features();
    test_features = report.factors->test_features();
  }
  auto coeffs = issr_represent(train_features, test_features, train_labels, options.solver, options.threads, c);
  auto ccr = ccr_classify(coeffs, options.ccr, FallbackFeatures{train_features, test_features});
  report.unconverged_solves = coeffs.unconverged_columns.size();
  report.predictions = ccr.predictions;
  report.tie_flags = ccr.tie_flags;
  report.fallback_flags = ccr.fallback_flags;
  if (c == 2) {
    const ClassIndex pos = options.positive_class.value_or(1);
    report.positive_score.resize(ccr.predictions.size());
    for (std::size_t l = 0; l < ccr.predictions.size(); ++l) {
      const double total = ccr.values.col(static_cast<Index>(l)).sum();
      report.positive_score[l] = ccr.fallback_flags[l]
                                     ? (ccr.predictions[l] == pos ? 1.0 : 0.0)
                                     : ccr.values(pos, static_cast<Index>(l)) / total;
    }
  }
  report.class_scores = std::move(ccr.values);
  report.coefficients = std::move(coeffs);
  return report;
}

/// Sparse coding of each test sample over the training dictionary; the class
/// with the smallest class-restricted reconstruction residual wins.
inline ClassificationReport src_classify(const Matrix& train, const Matrix& test,
                                         std::span<const ClassIndex> train_labels, const SolverParams& params = {},
                                         std::optional<ClassIndex> positive_class = std::nullopt,
                                         unsigned threads = 1, std::optional<int> num_classes = std::nullopt) {
  if (train.rows() != test.rows()) throw Error("train and test must share the row dimension");
  if (static_cast<std::size_t>(train.cols()) != train_labels.size())
    throw Error("one label per training column is required");
  const int c = num_classes.value_or(detail::infer_num_classes(train_labels));
  SolverParams p = params;
  p.record_kkt = false;
  const GsadmmSolver solver(train, p);
  const auto k = static_cast<std::size_t>(test.cols());
  ClassificationReport report;
  report.method = "src";
  report.class_scores = Matrix::Zero(c, static_cast<Index>(k));
  report.predictions.assign(k, 0);
  report.tie_flags.assign(k, false);
  report.fallback_flags.assign(k, false);
  std::vector<char> converged(k, 1);
  parallel_for(k, threads, [&](std::size_t l) {
    const Vector y = test.col(static_cast<Index>(l));
    const auto sol = solver.solve(y);
    converged[l] = sol.state.converged ? 1 : 0;
    for (int j = 0; j < c; ++j) {
      Vector masked = Vector::Zero(sol.alpha.size());
      for (Index i = 0; i < masked.size(); ++i)
        if (train_labels[static_cast<std::size_t>(i)] == j) masked(i) = sol.alpha(i);
      report.class_scores(j, static_cast<Index>(l)) = (y - train * masked).norm();
    }
    Index arg = 0;
    const double best = report.class_scores.col(static_cast<Index>(l)).minCoeff(&arg);
    int near_best = 0;
    for (int j = 0; j < c; ++j)
      if (report.class_scores(j, static_cast<Index>(l)) - best <= 1e-12 * std::max(best, 1e-300)) ++near_best;
    report.predictions[l] = static_cast<ClassIndex>(arg);
    report.tie_flags[l] = near_best > 1;
  });
  report.unconverged_solves = static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 0));
  if (c == 2) {
    const ClassIndex pos = positive_class.value_or(1);
    report.positive_score.resize(k);
    for (std::size_t l = 0; l < k; ++l) {
      const double r_pos = report.class_scores(pos, static_cast<Index>(l));
      const double r_neg = report.class_scores(1 - pos, static_cast<Index>(l));
      report.positive_score[l] = r_pos + r_neg > 0.0 ? r_neg / (r_pos + r_neg) : 0.5;
    }
  }
  return report;
}

struct StabilityReport {
  double epsilon = 0.0;
  double observed_ratio = 0.0;  // ||a_perturbed - a|| / ||a||
  double bound = 0.0;
  double kappa = 1.0;
  double theta = 0.0;  // angle between target and its least-squares projection
  bool holds = true;
};

struct StabilityOptions {
  double slack = 1.1;
};

/// Perturbs (dict, target) with relative size epsilon and compares the
/// change in the least-squares coefficients against
/// epsilon * (2 kappa / cos(theta) + tan(theta) * kappa^2).
inline std::vector<StabilityReport> stability_check(const Matrix& dict, const Vector& target, double epsilon,
                                                    std::size_t trials, std::uint64_t seed,
                                                    const StabilityOptions& options = {}) {
  if (dict.rows() < dict.cols()) throw Error("dictionary must have at least as many rows as columns");
  if (dict.rows() != target.size()) throw Error("dictionary rows must equal target length");
  if (!(epsilon >= 0.0)) throw Error("epsilon must be nonnegative");
  Eigen::JacobiSVD<Matrix> svd(dict, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double phi_max = sv(0);
  const double phi_min = sv(sv.size() - 1);
  if (!(phi_min > phi_max * 1e-12)) throw Error("dictionary is rank deficient");
  if (epsilon > phi_min / phi_max)
    throw Error("epsilon exceeds the ratio of extreme singular values (" + std::to_string(phi_min / phi_max) + ")");
  const Vector base = svd.solve(target);
  const double rho_ls = (target - dict * base).norm();
  const double target_norm = target.norm();
  if (target_norm == 0.0) throw Error("target is zero");
  const double sin_theta = std::min(1.0, rho_ls / target_norm);
  if (1.0 - sin_theta <= 1e-12) throw Error("target is orthogonal to the dictionary span");
  const double theta = std::asin(sin_theta);
  const double kappa = phi_max / phi_min;
  const double bound = epsilon * (2.0 * kappa / std::cos(theta) + std::tan(theta) * kappa * kappa);

  std::vector<StabilityReport> out(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, SeedStage::stability, t));
    Vector dt = gaussian_matrix(target.size(), 1, rng).col(0);
    Matrix dd = gaussian_matrix(dict.rows(), dict.cols(), rng);
    dt *= epsilon * target_norm / dt.norm();
    Eigen::JacobiSVD<Matrix> dsvd(dd);
    dd *= epsilon * phi_max / dsvd.singularValues()(0);
    const Matrix perturbed_dict = dict + dd;
    const Vector perturbed_target = target + dt;
    Eigen::JacobiSVD<Matrix> psvd(perturbed_dict, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector moved = psvd.solve(perturbed_target);
    StabilityReport& r = out[t];
    r.epsilon = epsilon;
    r.observed_ratio = (moved - base).norm() / base.norm();
    r.bound = bound;
    r.kappa = kappa;
    r.theta = theta;
    r.holds = r.observed_ratio <= options.slack * bound;
  }
  return out;
}

}  // namespace issrc

#endif  // ISSRC_CLASSIFICATION_HPP
