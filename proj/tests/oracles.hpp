// Slow, obviously-correct reference implementations used only by tests.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Cyclic coordinate descent for (g/2)||D a - h||^2 + lambda ||a||_1.
inline Vector cd_lasso(const Matrix& dict, const Vector& target, double lambda, double g = 2.0,
                       double tol = 1e-12, int max_sweeps = 200000) {
  const auto k = dict.cols();
  Vector a = Vector::Zero(k);
  Vector resid = target;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double biggest = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double norm2 = dict.col(j).squaredNorm();
      if (norm2 == 0.0) continue;
      const double rho = dict.col(j).dot(resid) + norm2 * a(j);
      const double thr = lambda / g;
      const double updated = (rho > thr ? rho - thr : (rho < -thr ? rho + thr : 0.0)) / norm2;
      const double delta = updated - a(j);
      if (delta != 0.0) {
        resid -= delta * dict.col(j);
        a(j) = updated;
        biggest = std::max(biggest, std::abs(delta));
      }
    }
    if (biggest < tol) break;
  }
  return a;
}

/// Probability that a random positive outscores a random negative, ties at 1/2.
inline double pair_auc(const std::vector<double>& scores, const std::vector<int>& truths) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truths[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truths[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline double logistic_loglik(const std::vector<double>& z, const std::vector<int>& y, double a, double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = a + b * z[i];
    // log(sigmoid(+-t)) written to avoid overflow
    const double s = y[i] ? t : -t;
    ll += s >= 0.0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
  }
  return ll;
}

struct GridFit {
  double intercept = 0.0;
  double slope = 0.0;
};

/// Maximizes the log-likelihood over the box [-cap, cap]^2 by successive
/// grid refinement.
inline GridFit grid_logistic(const std::vector<double>& z, const std::vector<int>& y, double cap = 30.0) {
  GridFit best;
  double best_ll = -INFINITY;
  double ca = 0.0, cb = 0.0, half = cap;
  for (int level = 0; level < 40; ++level) {
    const int steps = 40;
    const double h = 2.0 * half / steps;
    double na = ca, nb = cb;
    for (int i = 0; i <= steps; ++i) {
      const double a = std::clamp(ca - half + i * h, -cap, cap);
      for (int j = 0; j <= steps; ++j) {
        const double b = std::clamp(cb - half + j * h, -cap, cap);
        const double ll = logistic_loglik(z, y, a, b);
        if (ll > best_ll) {
          best_ll = ll;
          na = a;
          nb = b;
        }
      }
    }
    ca = na;
    cb = nb;
    half = std::max(2.0 * h, 1e-9);
  }
  best.intercept = ca;
  best.slope = cb;
  return best;
}

/// Direct net-benefit maximum over thresholds in [prevalence, p1] where p1 is
/// found by scanning down from the top of the grid.
inline double brute_dif(const std::vector<double>& risks, const std::vector<int>& y, int grid_n) {
  const double n = static_cast<double>(y.size());
  double pos = 0.0;
  for (int v : y) pos += v;
  const double prev = pos / n;
  std::vector<double> pts, nb;
  for (int i = 1; i < grid_n; ++i) {
    const double pt = static_cast<double>(i) / grid_n;
    double tp = 0.0, fp = 0.0;
    for (std::size_t s = 0; s < y.size(); ++s)
      if (risks[s] >= pt) (y[s] ? tp : fp) += 1.0;
    pts.push_back(pt);
    nb.push_back(tp / n - fp / n * pt / (1.0 - pt));
  }
  double p1 = pts.back();
  for (std::size_t t = pts.size() - 1; t-- > 0;) {
    if (pts[t] < prev) break;
    if (nb[t] >= 0.0 && nb[t + 1] < 0.0) {
      p1 = pts[t];
      break;
    }
  }
  p1 = std::max(p1, prev);
  double best = 0.0;
  for (std::size_t t = 0; t < pts.size(); ++t)
    if (pts[t] >= prev && pts[t] <= p1) best = std::max(best, nb[t]);
  return best;
}

/// Between-group over within-group sum of squares, straight from the definition.
inline double bw_ratio(const std::vector<double>& x, const std::vector<int>& labels, int classes) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double between = 0.0, within = 0.0;
  for (int c = 0; c < classes; ++c) {
    double m = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (labels[i] == c) {
        m += x[i];
        ++cnt;
      }
    if (cnt == 0) continue;
    m /= cnt;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (labels[i] == c) {
        between += (m - mean) * (m - mean);
        within += (x[i] - m) * (x[i] - m);
      }
  }
  if (within == 0.0) return between == 0.0 ? 0.0 : INFINITY;
  return between / within;
}

/// Eigenvalues of the sample covariance of a samples x features matrix, descending.
inline Vector covariance_eigenvalues(const Matrix& data) {
  const Matrix centered = data.rowwise() - data.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Vector vals = eig.eigenvalues().reverse();
  return vals;
}

}  // namespace oracle
