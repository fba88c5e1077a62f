#ifndef ISSRC_GENE_SELECTION_HPP
#define ISSRC_GENE_SELECTION_HPP

#include "issrc/core.hpp"
#include "issrc/dataset.hpp"

#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace issrc {

/// Binary labels: 1 marks the positive class, 0 the negative class.
using BinaryLabel = int;

inline std::vector<BinaryLabel> one_vs_rest(std::span<const ClassIndex> labels, ClassIndex positive) {
  std::vector<BinaryLabel> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == positive ? 1 : 0;
  return out;
}

namespace detail {

inline void require_same_length(std::size_t a, std::size_t b) {
  if (a == 0) throw Error("empty expression vector");
  if (a != b) throw Error("expression vector and labels differ in length");
}

inline std::pair<std::size_t, std::size_t> binary_counts(std::span<const BinaryLabel> labels) {
  std::size_t pos = 0;
  for (auto l : labels) {
    if (l != 0 && l != 1) throw Error("labels must be binary (0/1)");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error("both classes must be present");
  return {pos, neg};
}

}  // namespace detail

/// Between-groups over within-groups sum of squares for one gene.
/// Returns +inf when the within-group sum is 0 and the between-group sum is
/// positive, and 0 for a constant gene.
inline double bw_score(std::span<const double> expr, std::span<const ClassIndex> labels) {
  detail::require_same_length(expr.size(), labels.size());
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> sum(static_cast<std::size_t>(classes), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(classes), 0);
  double total = 0.0;
  for (std::size_t i = 0; i < expr.size(); ++i) {
    if (labels[i] < 0) throw Error("negative class index");
    sum[static_cast<std::size_t>(labels[i])] += expr[i];
    ++count[static_cast<std::size_t>(labels[i])];
    total += expr[i];
  }
  if (std::count_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw Error("BW needs at least two classes");
  const double grand = total / static_cast<double>(expr.size());
  std::vector<double> mean(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) mean[c] = count[c] ? sum[c] / static_cast<double>(count[c]) : 0.0;
  double between = 0.0, within = 0.0;
  for (std::size_t i = 0; i < expr.size(); ++i) {
    const double m = mean[static_cast<std::size_t>(labels[i])];
    between += (m - grand) * (m - grand);
    within += (expr[i] - m) * (expr[i] - m);
  }
  if (within == 0.0) return between > 0.0 ? kInf : 0.0;
  return between / within;
}

/// Signal-to-noise ratio |mu1 - mu0| / (sd1 + sd0) with sample standard deviations.
inline double snr_score(std::span<const double> expr, std::span<const BinaryLabel> labels) {
  detail::require_same_length(expr.size(), labels.size());
  const auto [npos, nneg] = detail::binary_counts(labels);
  double sum[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < expr.size(); ++i) sum[labels[i]] += expr[i];
  const double n[2] = {static_cast<double>(nneg), static_cast<double>(npos)};
  const double mu[2] = {sum[0] / n[0], sum[1] / n[1]};
  double ss[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < expr.size(); ++i) ss[labels[i]] += (expr[i] - mu[labels[i]]) * (expr[i] - mu[labels[i]]);
  const double sd0 = n[0] > 1 ? std::sqrt(ss[0] / (n[0] - 1.0)) : 0.0;
  const double sd1 = n[1] > 1 ? std::sqrt(ss[1] / (n[1] - 1.0)) : 0.0;
  const double diff = std::abs(mu[1] - mu[0]);
  if (sd0 + sd1 == 0.0) return diff > 0.0 ? kInf : 0.0;
  return diff / (sd0 + sd1);
}

struct AucScore {
  double raw = 0.5;     // P(score_pos > score_neg) + 0.5 P(tie)
  double folded = 0.5;  // max(raw, 1 - raw)
};

/// Mann-Whitney AUC from tie-averaged ranks.
inline AucScore auc_score(std::span<const double> expr, std::span<const BinaryLabel> labels) {
  detail::require_same_length(expr.size(), labels.size());
  const auto [npos, nneg] = detail::binary_counts(labels);
  std::vector<std::size_t> order(expr.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return expr[a] < expr[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && expr[order[j + 1]] == expr[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) rank_sum += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(npos), q = static_cast<double>(nneg);
  const double raw = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
  return {raw, std::max(raw, 1.0 - raw)};
}

/// Univariate logistic model mapping an expression value to a risk in (0,1).
///
/// The fit is done on standardized values z = (x - center) / scale; the
/// coefficient cap applies to (z_intercept, z_slope). `intercept`/`slope`
/// are the equivalent raw-scale coefficients.
struct RiskModel {
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t gene_index = 0;
  double z_intercept = 0.0;
  double z_slope = 0.0;
  double center = 0.0;
  double scale = 1.0;
  bool capped = false;
  int iterations = 0;

  double risk(double x) const { return 1.0 / (1.0 + std::exp(-(intercept + slope * x))); }

  std::vector<double> risks(std::span<const double> expr) const {
    std::vector<double> out(expr.size());
    for (std::size_t i = 0; i < expr.size(); ++i) out[i] = risk(expr[i]);
    return out;
  }
};

struct RiskFitOptions {
  int max_iters = 50;
  double grad_tol = 1e-8;
  double cap = 30.0;
};

namespace detail {

inline double log_sigmoid(double t) { return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double logistic_loglik(std::span<const double> z, std::span<const BinaryLabel> y, double a, double b) {
  double ll = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double t = a + b * z[i];
    ll += y[i] ? log_sigmoid(t) : log_sigmoid(-t);
  }
  return ll;
}

inline std::pair<double, double> logistic_gradient(std::span<const double> z, std::span<const BinaryLabel> y,
                                                   double a, double b) {
  double ga = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = static_cast<double>(y[i]) - sigmoid(a + b * z[i]);
    ga += r;
    gb += r * z[i];
  }
  return {ga, gb};
}

// Maximizes the concave log-likelihood along one coordinate on [-cap, cap]
// by bisection on the sign of the partial derivative.
inline double maximize_coordinate(std::span<const double> z, std::span<const BinaryLabel> y, double a, double b,
                                  bool along_slope, double cap) {
  auto deriv = [&](double t) {
    auto [ga, gb] = along_slope ? logistic_gradient(z, y, a, t) : logistic_gradient(z, y, t, b);
    return along_slope ? gb : ga;
  };
  if (deriv(cap) >= 0.0) return cap;
  if (deriv(-cap) <= 0.0) return -cap;
  double lo = -cap, hi = cap;
  for (int it = 0; it < 80 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    (deriv(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Fits risk = sigmoid(a + b z) by Newton/IRLS. When the maximum likelihood
/// estimate leaves the [-cap, cap] box (separable data) the box-constrained
/// maximizer is returned instead and `capped` is set.
inline RiskModel fit_risk_model(std::span<const double> expr, std::span<const BinaryLabel> labels,
                                const RiskFitOptions& options = {}) {
  detail::require_same_length(expr.size(), labels.size());
  const auto [npos, nneg] = detail::binary_counts(labels);
  const double n = static_cast<double>(expr.size());
  RiskModel model;
  model.center = std::accumulate(expr.begin(), expr.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : expr) ss += (x - model.center) * (x - model.center);
  model.scale = std::sqrt(ss / n);
  const double prevalence = static_cast<double>(npos) / n;

  if (model.scale == 0.0) {
    model.scale = 1.0;
    model.z_intercept = std::log(prevalence / (1.0 - prevalence));
    model.intercept = model.z_intercept;
    return model;
  }

  std::vector<double> z(expr.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (expr[i] - model.center) / model.scale;

  double a = std::log(prevalence / (1.0 - prevalence)), b = 0.0;
  bool converged = false;
  for (int it = 0; it < options.max_iters; ++it) {
    model.iterations = it + 1;
    auto [ga, gb] = detail::logistic_gradient(z, labels, a, b);
    if (std::hypot(ga, gb) < options.grad_tol) {
      converged = true;
      break;
    }
    double haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = detail::sigmoid(a + b * z[i]);
      const double w = p * (1.0 - p);
      haa += w;
      hab += w * z[i];
      hbb += w * z[i] * z[i];
    }
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    const double da = (hbb * ga - hab * gb) / det;
    const double db = (haa * gb - hab * ga) / det;
    const double ll = detail::logistic_loglik(z, labels, a, b);
    double step = 1.0;
    for (int h = 0; h < 30; ++h, step *= 0.5)
      if (detail::logistic_loglik(z, labels, a + step * da, b + step * db) >= ll) break;
    a += step * da;
    b += step * db;
    if (std::abs(a) > options.cap || std::abs(b) > options.cap) break;
  }

  if (!converged || std::abs(a) > options.cap || std::abs(b) > options.cap) {
    a = std::clamp(a, -options.cap, options.cap);
    b = std::clamp(b, -options.cap, options.cap);
    for (int sweep = 0; sweep < 500; ++sweep) {
      const double na = detail::maximize_coordinate(z, labels, a, b, false, options.cap);
      const double nb = detail::maximize_coordinate(z, labels, na, b, true, options.cap);
      const double change = std::max(std::abs(na - a), std::abs(nb - b));
      a = na;
      b = nb;
      if (change < 1e-12) break;
    }
    model.capped = std::abs(a) >= options.cap - 1e-9 || std::abs(b) >= options.cap - 1e-9;
  }

  model.z_intercept = a;
  model.z_slope = b;
  model.slope = b / model.scale;
  model.intercept = a - b * model.center / model.scale;
  return model;
}

/// Net benefit of a decision rule at threshold probability p_t.
inline double net_benefit(std::size_t tp, std::size_t fp, std::size_t n, double p_t) {
  if (!(p_t > 0.0 && p_t < 1.0)) throw Error("threshold probability must lie in (0,1)");
  if (n == 0) throw Error("net benefit needs n > 0");
  if (tp + fp > n) throw Error("tp + fp exceeds n");
  const double dn = static_cast<double>(n);
  return static_cast<double>(tp) / dn - (static_cast<double>(fp) / dn) * (p_t / (1.0 - p_t));
}

/// Decision curve: model, treat-all and treat-none net benefit over a threshold grid.
struct DcaCurve {
  std::vector<double> thresholds;
  std::vector<double> nb_model;
  std::vector<double> nb_treat_all;
  std::vector<double> nb_treat_none;
  double prevalence = 0.0;
  double p1 = 0.0;
};

/// Thresholds step, 2*step, ... up to 1 - step. When 1/step is an integer N
/// the grid is i/N so that values such as 0.4 are represented exactly.
inline std::vector<double> threshold_grid(double step) {
  if (!(step > 0.0 && step <= 0.1)) throw Error("grid step must lie in (0, 0.1]");
  std::vector<double> grid;
  const double inv = 1.0 / step;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) < 1e-9) {
    const auto count = static_cast<long>(rounded);
    for (long i = 1; i < count; ++i) grid.push_back(static_cast<double>(i) / rounded);
  } else {
    for (long i = 1; static_cast<double>(i) * step <= 1.0 - step + 1e-12; ++i) grid.push_back(static_cast<double>(i) * step);
  }
  return grid;
}

/// Builds the decision curve of a risk vector; sample i is called positive
/// at threshold p_t iff risk_i >= p_t.
inline DcaCurve dca_from_risks(std::span<const double> risks, std::span<const BinaryLabel> labels, double grid_step) {
  detail::require_same_length(risks.size(), labels.size());
  const auto [npos, nneg] = detail::binary_counts(labels);
  const std::size_t n = labels.size();
  DcaCurve curve;
  curve.thresholds = threshold_grid(grid_step);
  curve.prevalence = static_cast<double>(npos) / static_cast<double>(n);
  const std::size_t m = curve.thresholds.size();
  curve.nb_model.resize(m);
  curve.nb_treat_all.resize(m);
  curve.nb_treat_none.assign(m, 0.0);
  for (std::size_t t = 0; t < m; ++t) {
    const double pt = curve.thresholds[t];
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (risks[i] >= pt) (labels[i] ? tp : fp) += 1;
    curve.nb_model[t] = net_benefit(tp, fp, n, pt);
    curve.nb_treat_all[t] = net_benefit(npos, nneg, n, pt);
  }
  // p1: largest threshold >= p after which the model curve drops below treat-none.
  curve.p1 = curve.thresholds.back();
  for (std::size_t t = m - 1; t-- > 0;) {
    if (curve.thresholds[t] < curve.prevalence) break;
    if (curve.nb_model[t] >= 0.0 && curve.nb_model[t + 1] < 0.0) {
      curve.p1 = curve.thresholds[t];
      break;
    }
  }
  curve.p1 = std::max(curve.p1, curve.prevalence);
  return curve;
}

inline DcaCurve dca_curve(const RiskModel& model, std::span<const double> expr, std::span<const BinaryLabel> labels,
                          double grid_step) {
  const auto risks = model.risks(expr);
  return dca_from_risks(risks, labels, grid_step);
}

/// Maximum model net benefit over thresholds in [prevalence, p1], floored at 0.
inline double dif_score(const DcaCurve& curve) {
  double best = 0.0;
  for (std::size_t t = 0; t < curve.thresholds.size(); ++t) {
    const double pt = curve.thresholds[t];
    if (pt >= curve.prevalence && pt <= curve.p1) best = std::max(best, curve.nb_model[t]);
  }
  return best;
}

struct GeneScore {
  std::size_t gene_index = 0;
  std::string gene_id;
  double bw = 0.0;
  double snr = 0.0;
  double auc = 0.5;         // raw, positive class vs rest
  double auc_folded = 0.5;  // orientation-free
  std::optional<double> dif;
  std::optional<ClassIndex> dif_class;
  std::optional<double> dif_prevalence;
  std::optional<DcaCurve> dca;
};

struct GeneScoreTable {
  std::vector<GeneScore> records;          // indexed by gene
  std::vector<std::size_t> bw_ranking;     // all genes, best first
  std::vector<std::size_t> preselected;    // top pre_count by BW
  std::vector<std::size_t> selected;       // top final_count by DIF
};

struct SelectionOptions {
  std::size_t pre_count = 200;
  std::size_t final_count = 10;
  double grid_step = 0.005;
  std::optional<ClassIndex> positive_class;  // binary tasks; default = last class
  unsigned threads = 1;
};

/// BW pre-selection followed by DIF ranking.
///
/// Ranking order is DIF descending, then BW descending, then ascending gene
/// index. For more than two classes, DIF is the largest one-vs-rest value.
inline GeneScoreTable select_genes(const ExpressionDataset& ds, const SelectionOptions& options = {}) {
  const std::size_t d = ds.num_genes();
  if (options.final_count == 0) throw Error("final_count must be positive");
  if (options.pre_count > d)
    throw Error("pre_count (" + std::to_string(options.pre_count) + ") exceeds the number of genes (" +
                std::to_string(d) + ")");
  if (options.final_count > options.pre_count) throw Error("final_count must not exceed pre_count");
  if (ds.num_classes() < 2) throw Error("gene selection needs at least two classes");
  threshold_grid(options.grid_step);

  const auto& labels = ds.labels();
  const bool binary = ds.num_classes() == 2;
  const ClassIndex positive = options.positive_class.value_or(ds.num_classes() - 1);
  std::vector<std::vector<BinaryLabel>> ovr;
  if (binary) {
    ovr.push_back(one_vs_rest(labels, positive));
  } else {
    for (ClassIndex c = 0; c < ds.num_classes(); ++c) ovr.push_back(one_vs_rest(labels, c));
  }

  GeneScoreTable table;
  table.records.resize(d);
  const Matrix& v = ds.values();
  auto gene_row = [&](std::size_t g) {
    std::vector<double> x(ds.num_samples());
    for (std::size_t s = 0; s < x.size(); ++s) x[s] = v(static_cast<Index>(g), static_cast<Index>(s));
    return x;
  };

  parallel_for(d, options.threads, [&](std::size_t g) {
    const auto x = gene_row(g);
    GeneScore& r = table.records[g];
    r.gene_index = g;
    r.gene_id = ds.gene_ids()[g];
    r.bw = bw_score(x, labels);
    r.snr = 0.0;
    r.auc = binary ? auc_score(x, ovr[0]).raw : 0.5;
    r.auc_folded = 0.0;
    for (const auto& y : ovr) {
      r.snr = std::max(r.snr, snr_score(x, y));
      r.auc_folded = std::max(r.auc_folded, auc_score(x, y).folded);
    }
  });

  table.bw_ranking.resize(d);
  std::iota(table.bw_ranking.begin(), table.bw_ranking.end(), 0);
  std::sort(table.bw_ranking.begin(), table.bw_ranking.end(), [&](std::size_t a, std::size_t b) {
    if (table.records[a].bw != table.records[b].bw) return table.records[a].bw > table.records[b].bw;
    return a < b;
  });
  table.preselected.assign(table.bw_ranking.begin(), table.bw_ranking.begin() + static_cast<long>(options.pre_count));

  parallel_for(table.preselected.size(), options.threads, [&](std::size_t k) {
    const std::size_t g = table.preselected[k];
    const auto x = gene_row(g);
    GeneScore& r = table.records[g];
    double best = -1.0;
    for (std::size_t c = 0; c < ovr.size(); ++c) {
      auto model = fit_risk_model(x, ovr[c]);
      model.gene_index = g;
      auto curve = dca_curve(model, x, ovr[c], options.grid_step);
      const double dif = dif_score(curve);
      if (dif > best) {
        best = dif;
        r.dif = dif;
        r.dif_class = binary ? positive : static_cast<ClassIndex>(c);
        r.dif_prevalence = curve.prevalence;
        r.dca = std::move(curve);
      }
    }
  });

  std::vector<std::size_t> ranked = table.preselected;
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = table.records[a];
    const auto& rb = table.records[b];
    if (*ra.dif != *rb.dif) return *ra.dif > *rb.dif;
    if (ra.bw != rb.bw) return ra.bw > rb.bw;
    return a < b;
  });
  table.selected.assign(ranked.begin(), ranked.begin() + static_cast<long>(options.final_count));

  // Curves are kept only for the final genes.
  std::vector<bool> keep(d, false);
  for (auto g : table.selected) keep[g] = true;
  for (auto& r : table.records)
    if (!keep[r.gene_index]) r.dca.reset();
  return table;
}

}  // namespace issrc

#endif  // ISSRC_GENE_SELECTION_HPP
