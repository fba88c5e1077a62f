#ifndef ISSRC_FEATURE_LEARNING_HPP
#define ISSRC_FEATURE_LEARNING_HPP

#include "issrc/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace issrc {

/// 0.5 * ||v - w h||_F^2 + lambda * sum(h).
inline double snmf_objective(const Matrix& v, const Matrix& w, const Matrix& h, double lambda) {
  return 0.5 * (v - w * h).squaredNorm() + lambda * h.sum();
}

namespace detail {

inline void check_factor_shapes(const Matrix& v, const Matrix& w, const Matrix& h) {
  if (w.rows() != v.rows() || h.cols() != v.cols() || w.cols() != h.rows())
    throw Error("factor dimensions do not conform: v " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                ", w " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + ", h " +
                std::to_string(h.rows()) + "x" + std::to_string(h.cols()));
}

}  // namespace detail

/// Multiplicative coefficient update h * (w'v) / (w'w h + lambda), projected to >= 0.
inline Matrix snmf_update_h(const Matrix& v, const Matrix& w, const Matrix& h, double lambda) {
  detail::check_factor_shapes(v, w, h);
  if (lambda < 0.0) throw Error("lambda must be nonnegative");
  const Matrix numer = w.transpose() * v;
  const Matrix denom = ((w.transpose() * w) * h).array() + lambda;
  return (h.array() * numer.array() / denom.array().max(1e-12)).max(0.0).matrix();
}

struct WStep {
  Matrix w;
  double step = 0.0;       // step that was accepted, 0 when w was kept
  double objective = 0.0;  // objective at the returned w
  int halvings = 0;
};

/// Projected gradient step on w with backtracking: the step is halved at most
/// 20 times until the objective does not increase.
inline WStep snmf_update_w(const Matrix& v, const Matrix& w, const Matrix& h, double step, double lambda = 0.0) {
  detail::check_factor_shapes(v, w, h);
  if (!(step > 0.0)) throw Error("step must be positive");
  const double current = snmf_objective(v, w, h, lambda);
  const Matrix grad = (w * h - v) * h.transpose();
  double trial = step;
  double last = current;
  for (int halvings = 0; halvings <= 20; ++halvings, trial *= 0.5) {
    Matrix candidate = (w - trial * grad).cwiseMax(0.0);
    const double f = snmf_objective(v, candidate, h, lambda);
    if (f <= current) return {std::move(candidate), trial, f, halvings};
    last = f;
  }
  // A rise that survives 20 halvings is either rounding noise at a
  // stationary point or a divergent configuration.
  if (!std::isfinite(last) || last - current > 1e-8 * std::max(1.0, std::abs(current)))
    throw Error("W-step backtracking exhausted");
  return {w, 0.0, current, 20};
}

struct SnmfLayer {
  Matrix w;
  Matrix h;
  double lambda = 0.0;
  double step = 1e-2;  // last accepted W step
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
};

struct SnmfControls {
  int max_iters = 500;
  double tol = 1e-6;
  double initial_step = 1e-2;
};

/// Factorizes v ~ w h with w, h >= 0 and an l1 penalty on h.
inline SnmfLayer factorize_layer(const Matrix& v, Index rank, double lambda, std::uint64_t seed,
                                 const SnmfControls& controls = {}) {
  if (rank < 1 || rank >= std::min(v.rows(), v.cols()))
    throw Error("rank " + std::to_string(rank) + " must lie in [1, min(rows, cols)) = [1, " +
                std::to_string(std::min(v.rows(), v.cols())) + ")");
  if (lambda < 0.0) throw Error("lambda must be nonnegative");
  if ((v.array() < 0.0).any()) throw Error("input matrix has negative entries");
  if (!v.allFinite()) throw Error("input matrix has non-finite entries");
  if (v.isZero(0.0)) throw Error("input matrix is all zero");
  if (controls.max_iters < 1 || !(controls.tol >= 0.0)) throw Error("invalid NMF controls");

  Rng rng(seed);
  SnmfLayer layer;
  layer.lambda = lambda;
  layer.w.resize(v.rows(), rank);
  layer.h.resize(rank, v.cols());
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < v.rows(); ++i) layer.w(i, j) = uniform_open_closed(rng);
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < rank; ++i) layer.h(i, j) = uniform_open_closed(rng);

  double f = snmf_objective(v, layer.w, layer.h, lambda);
  layer.objective_trace.push_back(f);
  double next_step = controls.initial_step;
  bool first = true;
  for (int it = 0; it < controls.max_iters; ++it) {
    const double start = f;
    Matrix h = snmf_update_h(v, layer.w, layer.h, lambda);
    const double fh = snmf_objective(v, layer.w, h, lambda);
    if (fh <= f) {
      layer.h = std::move(h);
      f = fh;
    }
    WStep ws = snmf_update_w(v, layer.w, layer.h, first ? next_step : 2.0 * next_step, lambda);
    first = false;
    layer.w = std::move(ws.w);
    if (ws.step > 0.0) next_step = ws.step;
    f = ws.objective;
    layer.objective_trace.push_back(f);
    layer.iterations = it + 1;
    if (std::abs(start - f) < controls.tol * std::max(start, 1e-300)) {
      layer.converged = true;
      break;
    }
  }
  layer.step = next_step;
  return layer;
}

struct LpmlOptions {
  std::vector<Index> ranks{8, 6};
  std::vector<double> lambdas{0.2, 0.5};
  std::uint64_t seed = 0;
  SnmfControls controls{};
};

/// Layer-wise pre-trained stack: layer 1 factorizes [train, test], layer l
/// factorizes the coefficients of layer l-1. Column order is preserved, so
/// the first `train_count` columns of every H belong to training samples.
class FactorStack {
 public:
  FactorStack(std::vector<SnmfLayer> layers, LpmlOptions options, Index train_count, Index test_count)
      : layers_(std::move(layers)), options_(std::move(options)), train_count_(train_count), test_count_(test_count) {}

  const std::vector<SnmfLayer>& layers() const { return layers_; }
  const SnmfLayer& layer(std::size_t l) const { return layers_.at(l); }
  const LpmlOptions& options() const { return options_; }
  std::size_t depth() const { return layers_.size(); }
  Index train_count() const { return train_count_; }
  Index test_count() const { return test_count_; }

  Matrix train_block(std::size_t l) const { return layers_.at(l).h.leftCols(train_count_); }
  Matrix test_block(std::size_t l) const { return layers_.at(l).h.rightCols(test_count_); }
  Matrix train_features() const { return train_block(depth() - 1); }
  Matrix test_features() const { return test_block(depth() - 1); }

 private:
  std::vector<SnmfLayer> layers_;
  LpmlOptions options_;
  Index train_count_;
  Index test_count_;
};

inline void validate_lpml_options(const LpmlOptions& options) {
  if (options.ranks.empty()) throw Error("at least one layer is required");
  if (options.ranks.size() != options.lambdas.size()) throw Error("ranks and lambdas must have equal length");
  for (double l : options.lambdas)
    if (!(l >= 0.0)) throw Error("lambdas must be nonnegative");
}

/// Fits the stack on the column concatenation of train and test (test may be empty).
inline FactorStack lpml_snmf_fit(const Matrix& train, const Matrix& test, const LpmlOptions& options) {
  validate_lpml_options(options);
  if (test.cols() > 0 && test.rows() != train.rows()) throw Error("train and test must share the row dimension");
  if (train.cols() == 0) throw Error("training block is empty");
  Matrix input(train.rows(), train.cols() + test.cols());
  input << train, test;
  std::vector<SnmfLayer> layers;
  layers.reserve(options.ranks.size());
  for (std::size_t l = 0; l < options.ranks.size(); ++l) {
    const Matrix& v = l == 0 ? input : layers.back().h;
    layers.push_back(factorize_layer(v, options.ranks[l], options.lambdas[l],
                                     derive_seed(options.seed, SeedStage::features, l), options.controls));
  }
  return FactorStack(std::move(layers), options, train.cols(), test.cols());
}

struct CorrelationMatrix {
  Matrix values;                // NaN where undefined
  std::vector<bool> undefined;  // per column: zero variance
};

/// Pearson correlation between the columns of m.
inline CorrelationMatrix column_correlation(const Matrix& m) {
  const Index n = m.cols();
  CorrelationMatrix out;
  out.values = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  out.undefined.assign(static_cast<std::size_t>(n), false);
  Matrix centered = m.rowwise() - m.colwise().mean();
  Vector norms = centered.colwise().norm();
  for (Index j = 0; j < n; ++j) {
    if (norms(j) == 0.0) {
      out.undefined[static_cast<std::size_t>(j)] = true;
    } else {
      centered.col(j) /= norms(j);
    }
  }
  for (Index i = 0; i < n; ++i) {
    if (out.undefined[static_cast<std::size_t>(i)]) continue;
    out.values(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      if (out.undefined[static_cast<std::size_t>(j)]) continue;
      const double r = std::clamp(centered.col(i).dot(centered.col(j)), -1.0, 1.0);
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

/// Mean off-diagonal correlation over pairs of columns sharing a label.
inline double mean_within_class_correlation(const CorrelationMatrix& corr, std::span<const ClassIndex> labels) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const double r = corr.values(static_cast<Index>(i), static_cast<Index>(j));
      if (labels[i] == labels[j] && !std::isnan(r)) {
        sum += r;
        ++count;
      }
    }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

/// Type-7 (linear interpolation) quantile of unsorted data.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw Error("quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct FeatureQuartiles {
  Index feature = 0;
  ClassIndex label = 0;
  std::array<double, 5> summary{};  // min, q1, median, q3, max
};

/// Box-plot summaries of every feature (row) of m split by column label.
inline std::vector<FeatureQuartiles> class_quartiles(const Matrix& m, std::span<const ClassIndex> labels) {
  if (static_cast<std::size_t>(m.cols()) != labels.size()) throw Error("label count must equal column count");
  std::vector<FeatureQuartiles> out;
  if (labels.empty()) return out;
  const ClassIndex classes = *std::max_element(labels.begin(), labels.end()) + 1;
  for (Index f = 0; f < m.rows(); ++f)
    for (ClassIndex c = 0; c < classes; ++c) {
      std::vector<double> xs;
      for (std::size_t j = 0; j < labels.size(); ++j)
        if (labels[j] == c) xs.push_back(m(f, static_cast<Index>(j)));
      if (xs.empty()) continue;
      FeatureQuartiles q{f, c, {}};
      const double probs[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
      for (int k = 0; k < 5; ++k) q.summary[static_cast<std::size_t>(k)] = quantile(xs, probs[k]);
      out.push_back(q);
    }
  return out;
}

}  // namespace issrc

#endif  // ISSRC_FEATURE_LEARNING_HPP
