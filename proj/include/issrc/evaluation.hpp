#ifndef ISSRC_EVALUATION_HPP
#define ISSRC_EVALUATION_HPP

#include "issrc/classification.hpp"
#include "issrc/core.hpp"
#include "issrc/dataset.hpp"
#include "issrc/gene_selection.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace issrc {

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  std::size_t total() const { return tp + fn + tn + fp; }
};

/// Binary confusion-derived rates; a rate with a zero denominator is empty.
struct MetricBundle {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> missed_diagnosis;
  std::optional<double> misdiagnosis;
  std::optional<double> ppv;
  std::optional<double> npv;
  Confusion confusion;
};

namespace detail {

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

inline MetricBundle metrics_from_confusion(const Confusion& c) {
  MetricBundle m;
  m.confusion = c;
  m.accuracy = detail::ratio(c.tp + c.tn, c.total());
  m.sensitivity = detail::ratio(c.tp, c.tp + c.fn);
  m.specificity = detail::ratio(c.tn, c.tn + c.fp);
  // Complements are formed from the rates themselves so the identities hold exactly.
  if (m.sensitivity) m.missed_diagnosis = 1.0 - *m.sensitivity;
  if (m.specificity) m.misdiagnosis = 1.0 - *m.specificity;
  m.ppv = detail::ratio(c.tp, c.tp + c.fp);
  m.npv = detail::ratio(c.tn, c.tn + c.fn);
  return m;
}

inline MetricBundle confusion_metrics(std::span<const ClassIndex> predictions, std::span<const ClassIndex> truths,
                                      ClassIndex positive) {
  if (predictions.size() != truths.size()) throw Error("predictions and truths differ in length");
  Confusion c;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const bool pred = predictions[i] == positive;
    const bool truth = truths[i] == positive;
    if (truth) {
      (pred ? c.tp : c.fn) += 1;
    } else {
      (pred ? c.fp : c.tn) += 1;
    }
  }
  return metrics_from_confusion(c);
}

struct MulticlassMetrics {
  std::optional<double> accuracy;
  std::vector<MetricBundle> per_class;  // one-vs-rest
};

inline MulticlassMetrics multiclass_metrics(std::span<const ClassIndex> predictions,
                                            std::span<const ClassIndex> truths, int num_classes) {
  if (predictions.size() != truths.size()) throw Error("predictions and truths differ in length");
  MulticlassMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) correct += predictions[i] == truths[i];
  m.accuracy = detail::ratio(correct, truths.size());
  for (ClassIndex c = 0; c < num_classes; ++c) m.per_class.push_back(confusion_metrics(predictions, truths, c));
  return m;
}

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;  // +inf for the (0,0) point
  double auc = 0.0;
};

/// Threshold sweep over the distinct scores (score >= t means positive) with
/// trapezoidal area.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const BinaryLabel> truths) {
  if (scores.size() != truths.size()) throw Error("scores and truths differ in length");
  const auto [npos, nneg] = detail::binary_counts(truths);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RocCurve roc;
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  roc.thresholds.push_back(kInf);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (truths[order[i]] ? tp : fp) += 1;
      ++i;
    }
    roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(nneg));
    roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(npos));
    roc.thresholds.push_back(s);
  }
  for (std::size_t i = 1; i < roc.fpr.size(); ++i)
    roc.auc += (roc.fpr[i] - roc.fpr[i - 1]) * 0.5 * (roc.tpr[i] + roc.tpr[i - 1]);
  return roc;
}

/// Error-reduction rate (er1 - er2) / er1 * 100; empty when er1 is 0.
inline std::optional<double> err_score(double er1, double er2) {
  if (!(er1 >= 0.0 && er1 <= 1.0 && er2 >= 0.0 && er2 <= 1.0)) throw Error("error rates must lie in [0,1]");
  if (er1 == 0.0) return std::nullopt;
  return (er1 - er2) / er1 * 100.0;
}

struct PcaResult {
  Matrix coordinates;  // samples x components
  Matrix components;   // features x components
  Vector variances;    // per component, sample covariance scale
};

/// Principal components of a samples x features matrix via SVD of the
/// centred data. Each component is signed so its largest-magnitude loading is positive.
inline PcaResult pca_embed(const Matrix& data, Index components) {
  if (data.rows() < 2) throw Error("PCA needs at least two samples");
  if (components < 1 || components > std::min(data.rows(), data.cols()))
    throw Error("components must lie in [1, min(samples, features)]");
  const Matrix centered = data.rowwise() - data.colwise().mean();
  if (centered.isZero(0.0)) throw Error("PCA of a constant matrix");
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PcaResult out;
  out.components = svd.matrixV().leftCols(components);
  for (Index j = 0; j < components; ++j) {
    Index arg = 0;
    out.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.components(arg, j) < 0.0) out.components.col(j) *= -1.0;
  }
  out.coordinates = centered * out.components;
  out.variances = svd.singularValues().head(components).array().square() / static_cast<double>(data.rows() - 1);
  return out;
}

enum class LabelPhase { selection, solver, evaluation };

inline std::string to_string(LabelPhase p) {
  switch (p) {
    case LabelPhase::selection: return "selection";
    case LabelPhase::solver: return "solver";
    case LabelPhase::evaluation: return "evaluation";
  }
  return "unknown";
}

struct LabelAccess {
  std::size_t fold = 0;
  LabelPhase phase = LabelPhase::selection;
  std::vector<std::size_t> samples;
};

/// Records which sample labels each pipeline phase read.
class LabelAudit {
 public:
  void record(std::size_t fold, LabelPhase phase, std::span<const std::size_t> samples) {
    std::lock_guard lock(mu_);
    accesses_.push_back({fold, phase, {samples.begin(), samples.end()}});
  }

  std::vector<LabelAccess> accesses() const {
    std::lock_guard lock(mu_);
    return accesses_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<LabelAccess> accesses_;
};

enum class Method { integrated_issrc, issrc, src };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::integrated_issrc: return "integrated-issrc";
    case Method::issrc: return "issrc";
    case Method::src: return "src";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "integrated-issrc") return Method::integrated_issrc;
  if (s == "issrc") return Method::issrc;
  if (s == "src") return Method::src;
  throw Error("unknown method '" + std::string(s) + "'");
}

struct PipelineOptions {
  Method method = Method::integrated_issrc;
  bool skip_selection = false;
  bool skip_features = false;
  SelectionOptions selection{};
  IsrcOptions isrc{};
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double dca_grid_step = 0.005;
  std::optional<ClassIndex> positive_class;
};

struct SplitOutcome {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::vector<std::size_t> selected_genes;
  std::optional<GeneScoreTable> gene_scores;
  ClassificationReport report;
  std::vector<ClassIndex> truths;
  bool single_class_training = false;
};

namespace detail {

inline std::vector<ClassIndex> read_labels(const ExpressionDataset& ds, std::span<const std::size_t> samples,
                                           LabelAudit* audit, std::size_t fold, LabelPhase phase) {
  if (audit) audit->record(fold, phase, samples);
  std::vector<ClassIndex> out;
  out.reserve(samples.size());
  for (auto s : samples) out.push_back(ds.labels()[s]);
  return out;
}

inline ExpressionDataset subset_samples(const ExpressionDataset& ds, std::span<const std::size_t> samples,
                                        std::span<const ClassIndex> labels) {
  std::vector<std::string> ids;
  for (auto s : samples) ids.push_back(ds.sample_ids()[s]);
  return ExpressionDataset(select_columns(ds.values(), samples), ds.gene_ids(), std::move(ids),
                           {labels.begin(), labels.end()}, ds.class_names());
}

}  // namespace detail

/// Runs one train/test split: gene selection on the training samples,
/// then the configured classifier. Test labels are read only for scoring.
inline SplitOutcome run_split(const ExpressionDataset& ds, std::vector<std::size_t> train_indices,
                              std::vector<std::size_t> test_indices, const PipelineOptions& options,
                              std::uint64_t split_seed, LabelAudit* audit = nullptr, std::size_t fold = 0) {
  if (train_indices.empty() || test_indices.empty()) throw Error("train and test sets must be nonempty");
  SplitOutcome out;
  out.train_indices = std::move(train_indices);
  out.test_indices = std::move(test_indices);
  const int c = ds.num_classes();
  const ClassIndex positive = options.positive_class.value_or(c - 1);

  const auto train_labels = detail::read_labels(ds, out.train_indices, audit, fold, LabelPhase::selection);
  std::vector<std::size_t> counts(static_cast<std::size_t>(c), 0);
  for (auto l : train_labels) ++counts[static_cast<std::size_t>(l)];
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; });

  if (present < 2) {
    // Nothing to discriminate: predict the only training class.
    out.single_class_training = true;
    out.report.method = to_string(options.method);
    out.report.predictions.assign(out.test_indices.size(), train_labels.front());
    if (c == 2) out.report.positive_score.assign(out.test_indices.size(), train_labels.front() == positive ? 1.0 : 0.0);
    out.truths = detail::read_labels(ds, out.test_indices, audit, fold, LabelPhase::evaluation);
    return out;
  }

  const bool skip_selection = options.skip_selection || options.method == Method::issrc;
  if (skip_selection) {
    out.selected_genes.resize(ds.num_genes());
    std::iota(out.selected_genes.begin(), out.selected_genes.end(), 0);
  } else {
    const auto train_ds = detail::subset_samples(ds, out.train_indices, train_labels);
    SelectionOptions sel = options.selection;
    sel.positive_class = positive;
    out.gene_scores = select_genes(train_ds, sel);
    out.selected_genes = out.gene_scores->selected;
  }

  const Matrix genes = select_rows(ds.values(), out.selected_genes);
  const Matrix train = select_columns(genes, out.train_indices);
  const Matrix test = select_columns(genes, out.test_indices);
  const auto solver_labels = detail::read_labels(ds, out.train_indices, audit, fold, LabelPhase::solver);

  if (options.method == Method::src) {
    out.report = src_classify(train, test, solver_labels, options.isrc.solver, positive, options.threads, c);
  } else {
    IsrcOptions isrc = options.isrc;
    isrc.skip_features = options.skip_features || options.method == Method::issrc;
    isrc.positive_class = positive;
    isrc.threads = options.threads;
    isrc.lpml.seed = split_seed;
    out.report = integrated_isrc_classify(train, test, solver_labels, isrc, c);
  }
  out.truths = detail::read_labels(ds, out.test_indices, audit, fold, LabelPhase::evaluation);
  return out;
}

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

/// Mean and sample sd; values are sorted first so the result does not depend
/// on input order.
inline std::optional<Summary> summarize(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  Summary s;
  s.count = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  return s;
}

inline std::vector<std::pair<std::string, std::optional<double>>> metric_fields(const MetricBundle& m) {
  return {{"accuracy", m.accuracy},       {"sensitivity", m.sensitivity},
          {"specificity", m.specificity}, {"missed_diagnosis", m.missed_diagnosis},
          {"misdiagnosis", m.misdiagnosis}, {"ppv", m.ppv},
          {"npv", m.npv}};
}

struct FoldResult {
  std::size_t fold = 0;
  SplitOutcome outcome;
  MetricBundle metrics;  // binary tasks: positive class; multiclass: accuracy only
};

struct CvReport {
  Method method = Method::integrated_issrc;
  std::size_t k_folds = 0;
  std::uint64_t seed = 0;
  ClassIndex positive_class = 1;
  std::vector<FoldResult> folds;
  std::map<std::string, Summary> fold_summary;  // mean/sd over folds where defined
  MetricBundle pooled;
  std::vector<ClassIndex> predictions;  // by sample index
  std::vector<double> scores;           // by sample index, binary tasks
  std::optional<RocCurve> roc;
  std::optional<DcaCurve> dca;
  std::size_t single_class_folds = 0;
};

/// k-fold evaluation following a fold plan; folds may run in parallel.
inline CvReport cross_validate(const ExpressionDataset& ds, const FoldPlan& plan, const PipelineOptions& options,
                               LabelAudit* audit = nullptr) {
  if (plan.folds.empty()) throw Error("empty fold plan");
  const int c = ds.num_classes();
  CvReport report;
  report.method = options.method;
  report.k_folds = plan.k_folds;
  report.seed = options.seed;
  report.positive_class = options.positive_class.value_or(c - 1);
  report.folds.resize(plan.folds.size());

  const unsigned outer = std::max(1u, options.threads);
  PipelineOptions inner = options;
  inner.threads = 1;
  parallel_for(plan.folds.size(), outer, [&](std::size_t f) {
    const auto& part = plan.folds[f];
    FoldResult& r = report.folds[f];
    r.fold = f;
    r.outcome = run_split(ds, part.train_indices, part.test_indices, inner,
                          derive_seed(options.seed, SeedStage::features, f), audit, f);
    if (c == 2) {
      r.metrics = confusion_metrics(r.outcome.report.predictions, r.outcome.truths, report.positive_class);
    } else {
      r.metrics.accuracy = multiclass_metrics(r.outcome.report.predictions, r.outcome.truths, c).accuracy;
    }
  });

  const std::size_t n = ds.num_samples();
  report.predictions.assign(n, -1);
  report.scores.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::map<std::string, std::vector<double>> per_metric;
  for (const auto& fr : report.folds) {
    report.single_class_folds += fr.outcome.single_class_training ? 1 : 0;
    for (std::size_t j = 0; j < fr.outcome.test_indices.size(); ++j) {
      const std::size_t s = fr.outcome.test_indices[j];
      report.predictions[s] = fr.outcome.report.predictions[j];
      if (!fr.outcome.report.positive_score.empty()) report.scores[s] = fr.outcome.report.positive_score[j];
    }
    for (const auto& [name, value] : metric_fields(fr.metrics))
      if (value) per_metric[name].push_back(*value);
  }
  for (auto& [name, values] : per_metric)
    if (auto s = summarize(values)) report.fold_summary[name] = *s;
  for (auto p : report.predictions)
    if (p < 0) throw Error("fold plan does not cover every sample");

  if (c == 2) {
    report.pooled = confusion_metrics(report.predictions, ds.labels(), report.positive_class);
    const auto truth01 = one_vs_rest(ds.labels(), report.positive_class);
    report.roc = roc_auc(report.scores, truth01);
    report.dca = dca_from_risks(report.scores, truth01, options.dca_grid_step);
  } else {
    report.pooled.accuracy = multiclass_metrics(report.predictions, ds.labels(), c).accuracy;
  }
  return report;
}

struct ImbalanceRow {
  double ratio = 0.0;  // positives : negatives in the test set
  std::size_t test_positives = 0;
  std::size_t test_negatives = 0;
  std::string method;
  double error_rate = 0.0;
  std::optional<double> err_vs_reference;  // ERR relative to the reference method
};

struct ImbalanceOptions {
  std::size_t test_size = 20;
  std::vector<std::size_t> positive_counts{18, 16, 14, 12, 10, 8, 6, 4, 2, 0};
  std::vector<Method> methods{Method::integrated_issrc, Method::src};
  Method reference = Method::src;
};

/// Fixed-size test sets with a varying class mix; the rest of the data trains.
inline std::vector<ImbalanceRow> imbalance_sweep(const ExpressionDataset& ds, const PipelineOptions& options,
                                                 const ImbalanceOptions& sweep = {}) {
  if (ds.num_classes() != 2) throw Error("the imbalance sweep needs a binary dataset");
  const ClassIndex pos = options.positive_class.value_or(1);
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < ds.num_samples(); ++i) (ds.labels()[i] == pos ? positives : negatives).push_back(i);
  std::vector<ImbalanceRow> rows;
  for (std::size_t r = 0; r < sweep.positive_counts.size(); ++r) {
    const std::size_t np = sweep.positive_counts[r];
    if (np > sweep.test_size) throw Error("positive count exceeds the test size");
    const std::size_t nn = sweep.test_size - np;
    if (np >= positives.size() || nn >= negatives.size())
      throw Error("not enough samples for a test set with " + std::to_string(np) + " positives and " +
                  std::to_string(nn) + " negatives");
    Rng rng(derive_seed(options.seed, SeedStage::sweep, r));
    auto p = positives;
    auto q = negatives;
    shuffle(p, rng);
    shuffle(q, rng);
    std::vector<std::size_t> test(p.begin(), p.begin() + static_cast<long>(np));
    test.insert(test.end(), q.begin(), q.begin() + static_cast<long>(nn));
    std::vector<std::size_t> train(p.begin() + static_cast<long>(np), p.end());
    train.insert(train.end(), q.begin() + static_cast<long>(nn), q.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    std::map<Method, double> errors;
    for (Method m : sweep.methods) {
      PipelineOptions o = options;
      o.method = m;
      const auto outcome = run_split(ds, train, test, o, derive_seed(options.seed, SeedStage::sweep, 1000 + r));
      std::size_t wrong = 0;
      for (std::size_t j = 0; j < test.size(); ++j) wrong += outcome.report.predictions[j] != outcome.truths[j];
      errors[m] = static_cast<double>(wrong) / static_cast<double>(test.size());
    }
    for (Method m : sweep.methods) {
      ImbalanceRow row;
      row.ratio = nn ? static_cast<double>(np) / static_cast<double>(nn) : kInf;
      row.test_positives = np;
      row.test_negatives = nn;
      row.method = to_string(m);
      row.error_rate = errors[m];
      if (errors.count(sweep.reference)) row.err_vs_reference = err_score(errors[sweep.reference], errors[m]);
      rows.push_back(row);
    }
  }
  return rows;
}

struct FractionRow {
  double train_fraction = 0.0;
  std::size_t repeat = 0;
  std::string method;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double accuracy = 0.0;
};

struct FractionOptions {
  std::vector<double> fractions{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  std::vector<Method> methods{Method::integrated_issrc, Method::src};
  std::size_t repeats = 1;
};

/// Stratified random splits with a shrinking training fraction.
inline std::vector<FractionRow> training_fraction_sweep(const ExpressionDataset& ds, const PipelineOptions& options,
                                                        const FractionOptions& sweep = {}) {
  std::vector<FractionRow> rows;
  const int c = ds.num_classes();
  for (std::size_t fi = 0; fi < sweep.fractions.size(); ++fi) {
    const double f = sweep.fractions[fi];
    if (!(f > 0.0 && f < 1.0)) throw Error("training fractions must lie in (0,1)");
    for (std::size_t rep = 0; rep < sweep.repeats; ++rep) {
      Rng rng(derive_seed(options.seed, SeedStage::sweep, 10000 + fi * 1000 + rep));
      std::vector<std::size_t> train, test;
      for (ClassIndex k = 0; k < c; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < ds.num_samples(); ++i)
          if (ds.labels()[i] == k) members.push_back(i);
        shuffle(members, rng);
        auto take = static_cast<std::size_t>(std::llround(f * static_cast<double>(members.size())));
        take = std::clamp<std::size_t>(take, 1, members.size() > 1 ? members.size() - 1 : 1);
        train.insert(train.end(), members.begin(), members.begin() + static_cast<long>(take));
        test.insert(test.end(), members.begin() + static_cast<long>(take), members.end());
      }
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());
      for (Method m : sweep.methods) {
        PipelineOptions o = options;
        o.method = m;
        const auto outcome = run_split(ds, train, test, o, derive_seed(options.seed, SeedStage::sweep, 20000 + fi));
        std::size_t correct = 0;
        for (std::size_t j = 0; j < test.size(); ++j) correct += outcome.report.predictions[j] == outcome.truths[j];
        rows.push_back({f, rep, to_string(m), train.size(), test.size(),
                        static_cast<double>(correct) / static_cast<double>(test.size())});
      }
    }
  }
  return rows;
}

}  // namespace issrc

#endif  // ISSRC_EVALUATION_HPP
