#ifndef ISSRC_REPORT_HPP
#define ISSRC_REPORT_HPP

#include "issrc/classification.hpp"
#include "issrc/config.hpp"
#include "issrc/evaluation.hpp"
#include "issrc/feature_learning.hpp"
#include "issrc/gene_selection.hpp"
#include "issrc/sparse_solver.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace issrc {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolName = "issrc";
inline constexpr const char* kToolVersion = "0.1.0";

/// Minimal CSV writer; cells are written as given, numbers in shortest round-trip form.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  static std::string num(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return detail::format_double(v);
  }
  static std::string num(const std::optional<double>& v) { return v ? num(*v) : "NA"; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string num(I v) { return std::to_string(v); }

 private:
  std::ofstream out_;
};

inline Json optional_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

inline Json metrics_json(const MetricBundle& m) {
  Json j;
  for (const auto& [name, value] : metric_fields(m)) j[name] = optional_json(value);
  j["confusion"] = {{"tp", m.confusion.tp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}, {"fp", m.confusion.fp}};
  return j;
}

inline Json summary_json(const std::map<std::string, Summary>& summary) {
  Json j = Json::object();
  for (const auto& [name, s] : summary) j[name] = {{"mean", s.mean}, {"sd", s.sd}, {"folds", s.count}};
  return j;
}

/// Deterministic metrics document for a cross-validation run (no timings).
inline Json cv_metrics_json(const CvReport& r, const ExpressionDataset& ds) {
  Json j;
  j["method"] = to_string(r.method);
  j["k_folds"] = r.k_folds;
  j["seed"] = r.seed;
  j["positive_class"] = ds.class_names()[static_cast<std::size_t>(r.positive_class)];
  j["samples"] = ds.num_samples();
  Json folds = Json::array();
  for (const auto& f : r.folds) {
    Json fj;
    fj["fold"] = f.fold;
    fj["train_size"] = f.outcome.train_indices.size();
    fj["test_size"] = f.outcome.test_indices.size();
    fj["single_class_training"] = f.outcome.single_class_training;
    Json genes = Json::array();
    for (auto g : f.outcome.selected_genes) genes.push_back(ds.gene_ids()[g]);
    if (f.outcome.selected_genes.size() == ds.num_genes()) genes = "all";
    fj["selected_genes"] = genes;
    fj["ties"] = std::count(f.outcome.report.tie_flags.begin(), f.outcome.report.tie_flags.end(), true);
    fj["fallbacks"] = std::count(f.outcome.report.fallback_flags.begin(), f.outcome.report.fallback_flags.end(), true);
    fj["unconverged_solves"] = f.outcome.report.unconverged_solves;
    fj["metrics"] = metrics_json(f.metrics);
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  j["fold_mean"] = summary_json(r.fold_summary);
  j["pooled"] = metrics_json(r.pooled);
  if (r.roc) j["pooled_auc"] = r.roc->auc;
  j["single_class_folds"] = r.single_class_folds;
  return j;
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline void write_gene_scores(const std::filesystem::path& path, const GeneScoreTable& t) {
  std::vector<std::size_t> rank(t.records.size(), 0);
  for (std::size_t i = 0; i < t.selected.size(); ++i) rank[t.selected[i]] = i + 1;
  std::vector<std::size_t> pre(t.records.size(), 0);
  for (std::size_t i = 0; i < t.preselected.size(); ++i) pre[t.preselected[i]] = i + 1;
  CsvWriter csv(path, {"gene_id", "bw", "snr", "auc", "auc_folded", "dif", "bw_rank", "dif_rank"});
  for (auto g : t.bw_ranking) {
    const auto& r = t.records[g];
    csv.row({r.gene_id, CsvWriter::num(r.bw), CsvWriter::num(r.snr), CsvWriter::num(r.auc),
             CsvWriter::num(r.auc_folded), CsvWriter::num(r.dif), pre[g] ? std::to_string(pre[g]) : "NA",
             rank[g] ? std::to_string(rank[g]) : "NA"});
  }
}

inline void write_dca(const std::filesystem::path& path, const DcaCurve& c) {
  CsvWriter csv(path, {"p_t", "nb_model", "nb_treat_all", "nb_treat_none"});
  for (std::size_t i = 0; i < c.thresholds.size(); ++i)
    csv.row({CsvWriter::num(c.thresholds[i]), CsvWriter::num(c.nb_model[i]), CsvWriter::num(c.nb_treat_all[i]),
             CsvWriter::num(c.nb_treat_none[i])});
}

/// File-name-safe form of an identifier.
inline std::string safe_name(std::string_view id) {
  std::string out;
  for (char ch : id) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  return out.empty() ? "gene" : out;
}

inline void write_roc(const std::filesystem::path& path, const RocCurve& roc) {
  CsvWriter csv(path, {"threshold", "fpr", "tpr"});
  for (std::size_t i = 0; i < roc.fpr.size(); ++i)
    csv.row({CsvWriter::num(roc.thresholds[i]), CsvWriter::num(roc.fpr[i]), CsvWriter::num(roc.tpr[i])});
}

/// One file per layer: coefficient rows (component) by sample columns.
inline void write_layer_factors(const std::filesystem::path& path, const SnmfLayer& layer,
                                const std::vector<std::string>& sample_ids, Index train_count) {
  std::vector<std::string> header{"component"};
  for (std::size_t s = 0; s < sample_ids.size(); ++s)
    header.push_back((static_cast<Index>(s) < train_count ? "train:" : "test:") + sample_ids[s]);
  CsvWriter csv(path, header);
  for (Index r = 0; r < layer.h.rows(); ++r) {
    std::vector<std::string> row{std::to_string(r + 1)};
    for (Index c = 0; c < layer.h.cols(); ++c) row.push_back(CsvWriter::num(layer.h(r, c)));
    csv.row(row);
  }
}

inline void write_basis(const std::filesystem::path& path, const SnmfLayer& layer,
                        const std::vector<std::string>& row_ids) {
  std::vector<std::string> header{"input"};
  for (Index c = 0; c < layer.w.cols(); ++c) header.push_back("component_" + std::to_string(c + 1));
  CsvWriter csv(path, header);
  for (Index r = 0; r < layer.w.rows(); ++r) {
    std::vector<std::string> row{row_ids[static_cast<std::size_t>(r)]};
    for (Index c = 0; c < layer.w.cols(); ++c) row.push_back(CsvWriter::num(layer.w(r, c)));
    csv.row(row);
  }
}

inline void write_objective_trace(const std::filesystem::path& path, const FactorStack& stack) {
  CsvWriter csv(path, {"layer", "iteration", "objective"});
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const auto& t = stack.layer(l).objective_trace;
    for (std::size_t i = 0; i < t.size(); ++i) csv.row({std::to_string(l + 1), std::to_string(i), CsvWriter::num(t[i])});
  }
}

inline void write_correlation(const std::filesystem::path& path, const CorrelationMatrix& corr,
                              const std::vector<std::string>& ids) {
  std::vector<std::string> header{"sample"};
  header.insert(header.end(), ids.begin(), ids.end());
  CsvWriter csv(path, header);
  for (Index i = 0; i < corr.values.rows(); ++i) {
    std::vector<std::string> row{ids[static_cast<std::size_t>(i)]};
    for (Index j = 0; j < corr.values.cols(); ++j) row.push_back(CsvWriter::num(corr.values(i, j)));
    csv.row(row);
  }
}

inline void write_quartiles(const std::filesystem::path& path, const std::vector<FeatureQuartiles>& qs,
                            const std::string& matrix_name, const std::vector<std::string>& class_names) {
  CsvWriter csv(path, {"matrix", "feature", "class", "min", "q1", "median", "q3", "max"});
  for (const auto& q : qs)
    csv.row({matrix_name, std::to_string(q.feature + 1), class_names[static_cast<std::size_t>(q.label)],
             CsvWriter::num(q.summary[0]), CsvWriter::num(q.summary[1]), CsvWriter::num(q.summary[2]),
             CsvWriter::num(q.summary[3]), CsvWriter::num(q.summary[4])});
}

inline void write_coefficients(const std::filesystem::path& path, const CoefficientMatrix& coeffs,
                               const std::vector<std::string>& train_ids, const std::vector<std::string>& test_ids) {
  std::vector<std::string> header{"test_sample"};
  header.insert(header.end(), train_ids.begin(), train_ids.end());
  CsvWriter csv(path, header);
  for (Index l = 0; l < coeffs.values.rows(); ++l) {
    std::vector<std::string> row{test_ids[static_cast<std::size_t>(l)]};
    for (Index i = 0; i < coeffs.values.cols(); ++i) row.push_back(CsvWriter::num(coeffs.values(l, i)));
    csv.row(row);
  }
}

inline void write_pca(const std::filesystem::path& path, const PcaResult& pca, const ExpressionDataset& ds) {
  std::vector<std::string> header{"sample_id", "label"};
  for (Index c = 0; c < pca.coordinates.cols(); ++c) header.push_back("pc" + std::to_string(c + 1));
  CsvWriter csv(path, header);
  for (Index s = 0; s < pca.coordinates.rows(); ++s) {
    std::vector<std::string> row{ds.sample_ids()[static_cast<std::size_t>(s)],
                                 ds.class_names()[static_cast<std::size_t>(ds.labels()[static_cast<std::size_t>(s)])]};
    for (Index c = 0; c < pca.coordinates.cols(); ++c) row.push_back(CsvWriter::num(pca.coordinates(s, c)));
    csv.row(row);
  }
}

inline void write_solver_bench(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  CsvWriter csv(path, {"instance", "solver", "rho", "sigma", "lambda", "iterations", "converged", "initial_kkt",
                       "final_primal", "final_kkt", "wall_ms"});
  for (const auto& r : rows)
    csv.row({std::to_string(r.instance), to_string(r.solver), CsvWriter::num(r.rho), CsvWriter::num(r.sigma),
             CsvWriter::num(r.lambda), std::to_string(r.iterations), r.converged ? "true" : "false",
             CsvWriter::num(r.initial_kkt), CsvWriter::num(r.final_primal), CsvWriter::num(r.final_kkt),
             CsvWriter::num(r.wall_ms)});
}

inline void write_solver_trace(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  CsvWriter csv(path, {"instance", "solver", "rho", "iteration", "primal", "kkt"});
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.trace.size(); ++i)
      csv.row({std::to_string(r.instance), to_string(r.solver), CsvWriter::num(r.rho), std::to_string(i + 1),
               CsvWriter::num(r.trace[i].primal), CsvWriter::num(r.trace[i].kkt)});
}

inline void write_stability(const std::filesystem::path& path, const std::vector<StabilityReport>& reports) {
  CsvWriter csv(path, {"trial", "epsilon", "observed_ratio", "bound", "kappa", "theta", "holds"});
  for (std::size_t t = 0; t < reports.size(); ++t) {
    const auto& r = reports[t];
    csv.row({std::to_string(t), CsvWriter::num(r.epsilon), CsvWriter::num(r.observed_ratio), CsvWriter::num(r.bound),
             CsvWriter::num(r.kappa), CsvWriter::num(r.theta), r.holds ? "true" : "false"});
  }
}

inline void write_imbalance(const std::filesystem::path& path, const std::vector<ImbalanceRow>& rows) {
  CsvWriter csv(path, {"ratio", "test_positives", "test_negatives", "method", "error_rate", "err_vs_reference"});
  for (const auto& r : rows)
    csv.row({CsvWriter::num(r.ratio), std::to_string(r.test_positives), std::to_string(r.test_negatives), r.method,
             CsvWriter::num(r.error_rate), CsvWriter::num(r.err_vs_reference)});
}

inline void write_fraction_sweep(const std::filesystem::path& path, const std::vector<FractionRow>& rows) {
  CsvWriter csv(path, {"train_fraction", "repeat", "method", "train_size", "test_size", "accuracy"});
  for (const auto& r : rows)
    csv.row({CsvWriter::num(r.train_fraction), std::to_string(r.repeat), r.method, std::to_string(r.train_size),
             std::to_string(r.test_size), CsvWriter::num(r.accuracy)});
}

inline Json ingest_json(const IngestLog& log) {
  Json j;
  j["genes"] = log.genes;
  j["samples"] = log.samples;
  j["class_counts"] = log.class_counts;
  j["missing_policy"] = log.missing_policy;
  j["rejected_genes"] = log.rejected_genes;
  j["imputed_genes"] = log.imputed_genes;
  return j;
}

/// Run manifest: enough to reproduce the run (config text, hash, seed, version).
inline Json manifest_json(const std::string& command, const PipelineConfig& cfg, const std::string& seed_source,
                          const std::vector<std::pair<std::string, double>>& stage_seconds,
                          const std::vector<std::string>& outputs) {
  Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["seed_source"] = seed_source;
  j["config"] = serialize_config(cfg);
  j["compiler"] = __VERSION__;
  j["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  Json stages = Json::object();
  for (const auto& [name, secs] : stage_seconds) stages[name] = secs;
  j["wall_seconds"] = stages;
  j["outputs"] = outputs;
  return j;
}

inline Json error_json(const std::string& command, const std::string& message,
                       const std::vector<std::string>& violations = {}) {
  Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["status"] = "error";
  j["message"] = message;
  j["violations"] = violations;
  return j;
}

}  // namespace issrc

#endif  // ISSRC_REPORT_HPP
