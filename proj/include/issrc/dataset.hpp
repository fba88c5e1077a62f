#ifndef ISSRC_DATASET_HPP
#define ISSRC_DATASET_HPP

#include "issrc/core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace issrc {

/// Genes x samples expression matrix with ids and class labels.
///
/// Values are always held in canonical orientation (rows are genes, columns
/// are samples). Labels are 0-based indices into `class_names()`, which is
/// sorted. The object is immutable once built and safe to share read-only.
class ExpressionDataset {
 public:
  ExpressionDataset() = default;

  ExpressionDataset(Matrix values, std::vector<std::string> gene_ids, std::vector<std::string> sample_ids,
                    std::vector<ClassIndex> labels, std::vector<std::string> class_names)
      : values_(std::move(values)),
        gene_ids_(std::move(gene_ids)),
        sample_ids_(std::move(sample_ids)),
        labels_(std::move(labels)),
        class_names_(std::move(class_names)) {
    validate();
  }

  /// Builds a dataset from label tokens; class names are the sorted distinct tokens.
  static ExpressionDataset from_tokens(Matrix values, std::vector<std::string> gene_ids,
                                       std::vector<std::string> sample_ids,
                                       const std::vector<std::string>& label_tokens) {
    std::set<std::string> distinct(label_tokens.begin(), label_tokens.end());
    std::vector<std::string> names(distinct.begin(), distinct.end());
    std::vector<ClassIndex> labels;
    labels.reserve(label_tokens.size());
    for (const auto& t : label_tokens)
      labels.push_back(static_cast<ClassIndex>(std::lower_bound(names.begin(), names.end(), t) - names.begin()));
    return ExpressionDataset(std::move(values), std::move(gene_ids), std::move(sample_ids), std::move(labels),
                             std::move(names));
  }

  const Matrix& values() const { return values_; }
  const std::vector<std::string>& gene_ids() const { return gene_ids_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<ClassIndex>& labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }

  std::size_t num_genes() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t num_samples() const { return static_cast<std::size_t>(values_.cols()); }
  int num_classes() const { return static_cast<int>(class_names_.size()); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names_.size(), 0);
    for (auto l : labels_) ++counts[static_cast<std::size_t>(l)];
    return counts;
  }

  std::optional<ClassIndex> class_index(std::string_view name) const {
    auto it = std::find(class_names_.begin(), class_names_.end(), name);
    if (it == class_names_.end()) return std::nullopt;
    return static_cast<ClassIndex>(it - class_names_.begin());
  }

  ExpressionDataset with_values(Matrix values) const {
    return ExpressionDataset(std::move(values), gene_ids_, sample_ids_, labels_, class_names_);
  }

  ExpressionDataset subset_genes(std::span<const std::size_t> genes) const {
    std::vector<std::string> ids;
    ids.reserve(genes.size());
    for (auto g : genes) ids.push_back(gene_ids_.at(g));
    return ExpressionDataset(select_rows(values_, genes), std::move(ids), sample_ids_, labels_, class_names_);
  }

 private:
  void validate() const {
    if (values_.rows() == 0 || values_.cols() == 0) throw Error("dataset is empty");
    if (gene_ids_.size() != static_cast<std::size_t>(values_.rows()))
      throw Error("dimension mismatch: " + std::to_string(values_.rows()) + " gene rows but " +
                  std::to_string(gene_ids_.size()) + " gene ids");
    if (sample_ids_.size() != static_cast<std::size_t>(values_.cols()))
      throw Error("dimension mismatch: " + std::to_string(values_.cols()) + " sample columns but " +
                  std::to_string(sample_ids_.size()) + " sample ids");
    if (labels_.size() != sample_ids_.size())
      throw Error("dimension mismatch: " + std::to_string(sample_ids_.size()) + " samples but " +
                  std::to_string(labels_.size()) + " labels");
    std::vector<bool> seen(class_names_.size(), false);
    for (auto l : labels_) {
      if (l < 0 || static_cast<std::size_t>(l) >= class_names_.size()) throw Error("label index out of range");
      seen[static_cast<std::size_t>(l)] = true;
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c]) throw Error("class '" + class_names_[c] + "' has no samples");
    if (!values_.allFinite()) throw Error("dataset contains non-finite values");
  }

  Matrix values_;
  std::vector<std::string> gene_ids_;
  std::vector<std::string> sample_ids_;
  std::vector<ClassIndex> labels_;
  std::vector<std::string> class_names_;
};

enum class Orientation { genes_as_rows, samples_as_rows };
enum class MissingPolicy { reject, impute, error };

struct LoadOptions {
  Orientation orientation = Orientation::genes_as_rows;
  char delimiter = '\0';  // '\0' = auto-detect comma/tab
  MissingPolicy missing = MissingPolicy::reject;
  std::vector<std::string> allowed_labels;  // empty = any token
};

/// What ingestion did to the raw file, for the run report.
struct IngestLog {
  std::size_t genes = 0;
  std::size_t samples = 0;
  std::map<std::string, std::size_t> class_counts;
  std::vector<std::string> rejected_genes;
  std::vector<std::string> imputed_genes;
  std::string missing_policy;
};

struct LoadedDataset {
  ExpressionDataset dataset;
  IngestLog log;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    const auto cell = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    out.emplace_back(trim(cell));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline char detect_delimiter(std::string_view line) { return line.find('\t') != std::string_view::npos ? '\t' : ','; }

inline bool is_missing_token(std::string_view s) {
  static const char* tokens[] = {"", "NA", "na", "N/A", "NaN", "nan", "NAN", "null", "NULL", "inf", "-inf", "Inf", "-Inf", "INF", "-INF"};
  for (const char* t : tokens)
    if (s == t) return true;
  return false;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a delimited expression file plus a `sample_id<delim>label` file.
///
struct UnlabeledMatrix {
  Matrix values;  // genes x samples
  std::vector<std::string> gene_ids;
  std::vector<std::string> sample_ids;
  IngestLog log;
};

/// Reads the value matrix only, applying orientation and the missing-value policy.
inline UnlabeledMatrix load_unlabeled(const std::string& data_path, const LoadOptions& options = {}) {
  const auto lines = detail::read_lines(data_path);
  if (lines.size() < 2) throw Error("no data rows in '" + data_path + "'");
  const char delim = options.delimiter ? options.delimiter : detail::detect_delimiter(lines.front());

  auto header = detail::split(lines.front(), delim);
  if (header.size() < 2) throw Error("header row has no id columns");
  std::vector<std::string> col_ids(header.begin() + 1, header.end());
  const std::size_t ncols = col_ids.size();
  const std::size_t nrows = lines.size() - 1;

  std::vector<std::string> row_ids(nrows);
  Matrix raw(static_cast<Index>(nrows), static_cast<Index>(ncols));
  for (std::size_t r = 0; r < nrows; ++r) {
    auto cells = detail::split(lines[r + 1], delim);
    if (cells.size() != ncols + 1)
      throw Error("dimension mismatch at line " + std::to_string(r + 2) + ": expected " + std::to_string(ncols + 1) +
                  " cells, found " + std::to_string(cells.size()));
    row_ids[r] = cells[0];
    for (std::size_t c = 0; c < ncols; ++c) {
      const auto& cell = cells[c + 1];
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!detail::is_missing_token(cell)) {
        auto parsed = detail::parse_double(cell);
        if (!parsed)
          throw Error("unparseable cell at line " + std::to_string(r + 2) + ", column " + std::to_string(c + 2) +
                      ": '" + cell + "'");
        v = *parsed;
      }
      raw(static_cast<Index>(r), static_cast<Index>(c)) = v;
    }
  }

  std::vector<std::string> gene_ids, sample_ids;
  Matrix values;
  if (options.orientation == Orientation::genes_as_rows) {
    gene_ids = std::move(row_ids);
    sample_ids = std::move(col_ids);
    values = std::move(raw);
  } else {
    gene_ids = std::move(col_ids);
    sample_ids = std::move(row_ids);
    values = raw.transpose();
  }

  {
    std::set<std::string> seen;
    for (const auto& s : sample_ids)
      if (!seen.insert(s).second) throw Error("duplicate sample id '" + s + "'");
  }

  IngestLog log;
  log.missing_policy = options.missing == MissingPolicy::reject   ? "reject"
                       : options.missing == MissingPolicy::impute ? "impute"
                                                                  : "error";
  std::vector<std::size_t> keep;
  for (Index g = 0; g < values.rows(); ++g) {
    const auto row = values.row(g);
    if (row.allFinite()) {
      keep.push_back(static_cast<std::size_t>(g));
      continue;
    }
    const auto& id = gene_ids[static_cast<std::size_t>(g)];
    switch (options.missing) {
      case MissingPolicy::error:
        throw Error("missing or non-finite value in gene '" + id + "'");
      case MissingPolicy::reject:
        log.rejected_genes.push_back(id);
        break;
      case MissingPolicy::impute: {
        double sum = 0.0;
        Index count = 0;
        for (Index s = 0; s < row.size(); ++s)
          if (std::isfinite(row(s))) {
            sum += row(s);
            ++count;
          }
        if (count == 0) {
          log.rejected_genes.push_back(id);
          break;
        }
        const double mean = sum / static_cast<double>(count);
        for (Index s = 0; s < values.cols(); ++s)
          if (!std::isfinite(values(g, s))) values(g, s) = mean;
        log.imputed_genes.push_back(id);
        keep.push_back(static_cast<std::size_t>(g));
        break;
      }
    }
  }
  if (keep.empty()) throw Error("no data rows left after missing-value handling");
  if (keep.size() != static_cast<std::size_t>(values.rows())) {
    values = select_rows(values, keep);
    std::vector<std::string> kept_ids;
    for (auto g : keep) kept_ids.push_back(gene_ids[g]);
    gene_ids = std::move(kept_ids);
  }
  log.genes = gene_ids.size();
  log.samples = sample_ids.size();
  return {std::move(values), std::move(gene_ids), std::move(sample_ids), std::move(log)};
}

/// Reads a data file and its labels file into a dataset. The data file's
/// first row holds sample ids (gene ids when samples are rows) and its first
/// column holds the other axis' ids. Cells that are missing-value tokens
/// (NA, NaN, Inf, empty) are handled per `LoadOptions::missing`; any other
/// unparseable cell is an error naming its 1-based line and column.
inline LoadedDataset load_matrix(const std::string& data_path, const std::string& labels_path,
                                 const LoadOptions& options = {}) {
  auto [values, gene_ids, sample_ids, log] = load_unlabeled(data_path, options);

  const auto label_lines = detail::read_lines(labels_path);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < sample_ids.size(); ++i) position.emplace(sample_ids[i], i);
  std::vector<std::optional<std::string>> tokens(sample_ids.size());
  std::size_t assigned = 0;
  for (std::size_t li = 0; li < label_lines.size(); ++li) {
    auto cells = detail::split(label_lines[li], detail::detect_delimiter(label_lines[li]));
    if (cells.size() != 2)
      throw Error("labels line " + std::to_string(li + 1) + ": expected 'sample_id<delim>label'");
    auto it = position.find(cells[0]);
    if (it == position.end()) {
      if (li == 0) continue;  // header line
      throw Error("labels line " + std::to_string(li + 1) + ": unknown sample id '" + cells[0] + "'");
    }
    if (tokens[it->second]) throw Error("duplicate label for sample '" + cells[0] + "'");
    if (!options.allowed_labels.empty() &&
        std::find(options.allowed_labels.begin(), options.allowed_labels.end(), cells[1]) ==
            options.allowed_labels.end())
      throw Error("unknown label token '" + cells[1] + "' for sample '" + cells[0] + "'");
    tokens[it->second] = cells[1];
    ++assigned;
  }
  if (assigned != sample_ids.size())
    throw Error("dimension mismatch: " + std::to_string(sample_ids.size()) + " samples but " +
                std::to_string(assigned) + " labels");
  std::vector<std::string> label_tokens;
  label_tokens.reserve(tokens.size());
  for (auto& t : tokens) label_tokens.push_back(*t);

  auto ds = ExpressionDataset::from_tokens(std::move(values), std::move(gene_ids), std::move(sample_ids), label_tokens);
  log.genes = ds.num_genes();
  log.samples = ds.num_samples();
  const auto counts = ds.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) log.class_counts[ds.class_names()[c]] = counts[c];
  return {std::move(ds), std::move(log)};
}

/// Writes the dataset in the canonical text layout; values use the shortest
/// round-trip representation so reloading reproduces them bit-for-bit.
inline void save_dataset(const ExpressionDataset& ds, const std::string& data_path, const std::string& labels_path,
                         char delim = ',') {
  std::ofstream out(data_path);
  if (!out) throw Error("cannot write '" + data_path + "'");
  out << "gene_id";
  for (const auto& s : ds.sample_ids()) out << delim << s;
  out << '\n';
  for (std::size_t g = 0; g < ds.num_genes(); ++g) {
    out << ds.gene_ids()[g];
    for (std::size_t s = 0; s < ds.num_samples(); ++s)
      out << delim << detail::format_double(ds.values()(static_cast<Index>(g), static_cast<Index>(s)));
    out << '\n';
  }
  std::ofstream lab(labels_path);
  if (!lab) throw Error("cannot write '" + labels_path + "'");
  for (std::size_t s = 0; s < ds.num_samples(); ++s)
    lab << ds.sample_ids()[s] << delim << ds.class_names()[static_cast<std::size_t>(ds.labels()[s])] << '\n';
}

struct ShiftResult {
  ExpressionDataset dataset;
  std::vector<double> shifts;  // amount added to each gene row (0 when untouched)
};

/// Subtracts each gene's minimum when that minimum is negative.
inline ShiftResult shift_nonnegative(const ExpressionDataset& ds) {
  Matrix v = ds.values();
  std::vector<double> shifts(ds.num_genes(), 0.0);
  for (Index g = 0; g < v.rows(); ++g) {
    const double lo = v.row(g).minCoeff();
    if (lo < 0.0) {
      v.row(g).array() -= lo;
      shifts[static_cast<std::size_t>(g)] = -lo;
    }
  }
  return {ds.with_values(std::move(v)), std::move(shifts)};
}

/// Per-gene z-scoring (sample standard deviation); constant genes become 0.
inline ExpressionDataset standardize_genes(const ExpressionDataset& ds) {
  Matrix v = ds.values();
  const double n = static_cast<double>(v.cols());
  for (Index g = 0; g < v.rows(); ++g) {
    const double mean = v.row(g).mean();
    v.row(g).array() -= mean;
    const double sd = n > 1 ? std::sqrt(v.row(g).squaredNorm() / (n - 1.0)) : 0.0;
    if (sd > 0.0)
      v.row(g) /= sd;
    else
      v.row(g).setZero();
  }
  return ds.with_values(std::move(v));
}

struct Partition {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct FoldPlan {
  std::vector<Partition> folds;
  std::uint64_t seed = 0;
  std::size_t k_folds = 0;
};

namespace detail {

/// Integer per-(class, fold) counts, each the floor or ceiling of
/// fold_size * class_size / n, with exact row and column sums. The leftover
/// units are placed by augmenting paths on the class/fold bipartite graph;
/// such a rounding always exists because every row and column sum is integral.
inline std::vector<std::vector<std::size_t>> stratified_counts(const std::vector<std::size_t>& class_sizes,
                                                               const std::vector<std::size_t>& fold_sizes) {
  const std::size_t c = class_sizes.size(), k = fold_sizes.size();
  std::size_t n = 0;
  for (auto s : class_sizes) n += s;
  std::vector<std::vector<std::size_t>> counts(c, std::vector<std::size_t>(k));
  std::vector<std::vector<bool>> fractional(c, std::vector<bool>(k));
  std::vector<std::size_t> class_extra(c), fold_extra(k);
  for (std::size_t j = 0; j < c; ++j) {
    std::size_t placed = 0;
    for (std::size_t f = 0; f < k; ++f) {
      const std::size_t num = fold_sizes[f] * class_sizes[j];
      counts[j][f] = num / n;
      fractional[j][f] = num % n != 0;
      placed += counts[j][f];
    }
    class_extra[j] = class_sizes[j] - placed;
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t placed = 0;
    for (std::size_t j = 0; j < c; ++j) placed += counts[j][f];
    fold_extra[f] = fold_sizes[f] - placed;
  }
  // bumped[j][f]: class j already received its ceiling in fold f
  std::vector<std::vector<bool>> bumped(c, std::vector<bool>(k));
  std::vector<bool> seen(k);
  std::function<bool(std::size_t)> augment = [&](std::size_t j) {
    for (std::size_t f = 0; f < k; ++f) {
      if (!fractional[j][f] || bumped[j][f] || seen[f]) continue;
      seen[f] = true;
      if (fold_extra[f] > 0) {
        --fold_extra[f];
        bumped[j][f] = true;
        return true;
      }
      // reroute another class's unit out of fold f
      for (std::size_t o = 0; o < c; ++o) {
        if (o == j || !bumped[o][f]) continue;
        bumped[o][f] = false;
        if (augment(o)) {
          bumped[j][f] = true;
          return true;
        }
        bumped[o][f] = true;
      }
    }
    return false;
  };
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t unit = 0; unit < class_extra[j]; ++unit) {
      std::fill(seen.begin(), seen.end(), false);
      if (!augment(j)) throw Error("internal error: no stratified rounding found");
    }
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t f = 0; f < k; ++f) counts[j][f] += bumped[j][f] ? 1 : 0;
  return counts;
}

}  // namespace detail

/// Stratified k-fold assignment.
///
/// Fold sizes differ by at most one. Each class's count in each fold is the
/// floor or ceiling of its proportional share of that fold, so fold class
/// proportions stay within one sample of the global ones. Members of each
/// class are shuffled with the seeded stream before being dealt out.
inline FoldPlan stratified_kfold(std::span<const ClassIndex> labels, std::size_t k, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (k < 2) throw Error("k must be at least 2");
  if (k > n) throw Error("k (" + std::to_string(k) + ") exceeds the number of samples (" + std::to_string(n) + ")");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Rng rng(derive_seed(seed, SeedStage::folds));
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> class_sizes, fold_sizes(k, n / k);
  for (auto& m : members) {
    shuffle(m, rng);
    class_sizes.push_back(m.size());
  }
  for (std::size_t f = 0; f < n % k; ++f) ++fold_sizes[f];
  const auto counts = detail::stratified_counts(class_sizes, fold_sizes);

  std::vector<std::size_t> fold_of(n);
  for (std::size_t j = 0; j < members.size(); ++j) {
    std::size_t next = 0;
    for (std::size_t f = 0; f < k; ++f)
      for (std::size_t u = 0; u < counts[j][f]; ++u) fold_of[members[j][next++]] = f;
  }

  FoldPlan plan;
  plan.seed = seed;
  plan.k_folds = k;
  plan.folds.resize(k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < k; ++f) (fold_of[i] == f ? plan.folds[f].test_indices : plan.folds[f].train_indices).push_back(i);
  return plan;
}

inline FoldPlan stratified_kfold(const ExpressionDataset& ds, std::size_t k, std::uint64_t seed) {
  return stratified_kfold(std::span<const ClassIndex>(ds.labels()), k, seed);
}

}  // namespace issrc

#endif  // ISSRC_DATASET_HPP
