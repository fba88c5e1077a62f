#ifndef ISSRC_CONFIG_HPP
#define ISSRC_CONFIG_HPP

#include "issrc/dataset.hpp"
#include "issrc/evaluation.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

namespace issrc {

/// Raised with every violation found while parsing or validating a config.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

struct PipelineConfig {
  std::string data;
  std::string labels;
  Orientation orientation = Orientation::genes_as_rows;
  char delimiter = '\0';
  MissingPolicy missing = MissingPolicy::reject;
  bool standardize = false;
  std::string positive_label;  // empty: last class name in sorted order

  std::size_t pre_count = 200;
  std::size_t final_count = 10;
  double grid_step = 0.005;

  std::vector<Index> ranks{8, 6};
  std::vector<double> lambdas{0.2, 0.5};
  int nmf_max_iters = 500;
  double nmf_tol = 1e-6;

  std::optional<double> lambda;  // empty: scale-adaptive
  double lambda_scale = 0.01;
  double sigma = 1.0;
  double rho = 1.0;
  std::optional<double> theta;
  ThetaPolicy theta_policy = ThetaPolicy::spectral;
  double tol = 1e-8;
  int max_iters = 2000;
  GradientFactor gradient_factor = GradientFactor::two;
  bool ccr_class_size_normalization = true;

  std::size_t folds = 10;
  std::uint64_t seed = 20240501;
  Method method = Method::integrated_issrc;
  bool skip_selection = false;
  bool skip_features = false;
  unsigned threads = 1;
  std::string output_dir = "out";
  double reference_accuracy = 98.70;
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  return std::nullopt;
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(',', start);
    out.push_back(trim_copy(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "data",         "labels",      "orientation",   "delimiter", "missing",     "standardize",
      "positive_label", "pre_count", "final_count",   "grid_step", "ranks",       "lambdas",
      "nmf_max_iters", "nmf_tol",    "lambda",        "lambda_scale", "sigma",    "rho",
      "theta",        "theta_policy", "tol",          "max_iters", "gradient_factor",
      "ccr_class_size_normalization", "folds",        "seed",      "method",      "skip_selection",
      "skip_features", "threads",    "output_dir",    "reference_accuracy"};
  return keys;
}

/// Sets one field from its text form. Type errors are appended to `errors`.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& raw,
                          std::vector<std::string>& errors) {
  const std::string value = detail::trim_copy(raw);
  auto bad = [&](const std::string& expected) {
    errors.push_back(key + ": expected " + expected + ", got '" + value + "'");
  };
  auto real = [&](double& out) {
    if (auto v = detail::parse_number<double>(value)) out = *v; else bad("a real number");
  };
  auto integer = [&](auto& out) {
    using T = std::remove_reference_t<decltype(out)>;
    if (auto v = detail::parse_number<T>(value)) out = *v; else bad("an integer");
  };
  auto boolean = [&](bool& out) {
    if (auto v = detail::parse_bool(value)) out = *v; else bad("true or false");
  };
  auto auto_or_real = [&](std::optional<double>& out) {
    if (value == "auto") {
      out.reset();
    } else if (auto v = detail::parse_number<double>(value)) {
      out = *v;
    } else {
      bad("'auto' or a real number");
    }
  };

  if (key == "data") {
    cfg.data = value;
  } else if (key == "labels") {
    cfg.labels = value;
  } else if (key == "orientation") {
    if (value == "genes_as_rows") cfg.orientation = Orientation::genes_as_rows;
    else if (value == "samples_as_rows") cfg.orientation = Orientation::samples_as_rows;
    else bad("genes_as_rows or samples_as_rows");
  } else if (key == "delimiter") {
    if (value == "auto") cfg.delimiter = '\0';
    else if (value == "comma" || value == ",") cfg.delimiter = ',';
    else if (value == "tab" || value == "\\t") cfg.delimiter = '\t';
    else bad("auto, comma or tab");
  } else if (key == "missing") {
    if (value == "reject") cfg.missing = MissingPolicy::reject;
    else if (value == "impute") cfg.missing = MissingPolicy::impute;
    else if (value == "error") cfg.missing = MissingPolicy::error;
    else bad("reject, impute or error");
  } else if (key == "standardize") {
    boolean(cfg.standardize);
  } else if (key == "positive_label") {
    cfg.positive_label = value;
  } else if (key == "pre_count") {
    integer(cfg.pre_count);
  } else if (key == "final_count") {
    integer(cfg.final_count);
  } else if (key == "grid_step") {
    real(cfg.grid_step);
  } else if (key == "ranks") {
    std::vector<Index> ranks;
    for (const auto& item : detail::split_list(value)) {
      if (auto v = detail::parse_number<Index>(item)) ranks.push_back(*v); else { bad("a comma list of integers"); return; }
    }
    cfg.ranks = std::move(ranks);
  } else if (key == "lambdas") {
    std::vector<double> lambdas;
    for (const auto& item : detail::split_list(value)) {
      if (auto v = detail::parse_number<double>(item)) lambdas.push_back(*v); else { bad("a comma list of reals"); return; }
    }
    cfg.lambdas = std::move(lambdas);
  } else if (key == "nmf_max_iters") {
    integer(cfg.nmf_max_iters);
  } else if (key == "nmf_tol") {
    real(cfg.nmf_tol);
  } else if (key == "lambda") {
    auto_or_real(cfg.lambda);
  } else if (key == "lambda_scale") {
    real(cfg.lambda_scale);
  } else if (key == "sigma") {
    real(cfg.sigma);
  } else if (key == "rho") {
    real(cfg.rho);
  } else if (key == "theta") {
    auto_or_real(cfg.theta);
  } else if (key == "theta_policy") {
    if (value == "spectral") cfg.theta_policy = ThetaPolicy::spectral;
    else if (value == "frobenius_squared") cfg.theta_policy = ThetaPolicy::frobenius_squared;
    else bad("spectral or frobenius_squared");
  } else if (key == "tol") {
    real(cfg.tol);
  } else if (key == "max_iters") {
    integer(cfg.max_iters);
  } else if (key == "gradient_factor") {
    if (value == "two" || value == "2") cfg.gradient_factor = GradientFactor::two;
    else if (value == "one" || value == "1") cfg.gradient_factor = GradientFactor::one;
    else bad("two or one");
  } else if (key == "ccr_class_size_normalization") {
    boolean(cfg.ccr_class_size_normalization);
  } else if (key == "folds") {
    integer(cfg.folds);
  } else if (key == "seed") {
    integer(cfg.seed);
  } else if (key == "method") {
    try {
      cfg.method = parse_method(value);
    } catch (const Error&) {
      bad("integrated-issrc, issrc or src");
    }
  } else if (key == "skip_selection") {
    boolean(cfg.skip_selection);
  } else if (key == "skip_features") {
    boolean(cfg.skip_features);
  } else if (key == "threads") {
    integer(cfg.threads);
  } else if (key == "output_dir") {
    cfg.output_dir = value;
  } else if (key == "reference_accuracy") {
    real(cfg.reference_accuracy);
  } else {
    errors.push_back("unknown key '" + key + "'");
  }
}

/// Domain checks; returns every violation.
inline std::vector<std::string> config_violations(const PipelineConfig& cfg) {
  std::vector<std::string> v;
  if (cfg.final_count == 0) v.emplace_back("final_count must be positive");
  if (cfg.pre_count == 0) v.emplace_back("pre_count must be positive");
  if (cfg.final_count > cfg.pre_count) v.emplace_back("final_count must not exceed pre_count");
  if (!(cfg.grid_step > 0.0 && cfg.grid_step <= 0.1)) v.emplace_back("grid_step must lie in (0, 0.1]");
  if (cfg.ranks.empty()) v.emplace_back("ranks must be nonempty");
  if (cfg.ranks.size() != cfg.lambdas.size()) v.emplace_back("ranks and lambdas must have equal length");
  for (std::size_t i = 0; i < cfg.ranks.size(); ++i) {
    if (cfg.ranks[i] < 1) v.emplace_back("ranks must be positive");
    if (i > 0 && cfg.ranks[i] >= cfg.ranks[i - 1]) v.emplace_back("ranks must be strictly decreasing");
  }
  for (double l : cfg.lambdas)
    if (!(l >= 0.0)) v.emplace_back("lambdas must be nonnegative");
  if (cfg.nmf_max_iters < 1) v.emplace_back("nmf_max_iters must be positive");
  if (!(cfg.nmf_tol >= 0.0)) v.emplace_back("nmf_tol must be nonnegative");
  if (cfg.lambda && !(*cfg.lambda >= 0.0)) v.emplace_back("lambda must be nonnegative");
  if (!(cfg.lambda_scale > 0.0)) v.emplace_back("lambda_scale must be positive");
  if (!(cfg.sigma > 0.0)) v.emplace_back("sigma must be positive");
  if (!(cfg.rho > 0.0 && cfg.rho < 2.0)) v.emplace_back("rho must lie in (0,2)");
  if (cfg.theta && !(*cfg.theta > 0.0)) v.emplace_back("theta must be positive");
  if (!(cfg.tol >= 0.0)) v.emplace_back("tol must be nonnegative");
  if (cfg.max_iters < 1) v.emplace_back("max_iters must be positive");
  if (cfg.folds < 2) v.emplace_back("folds must be at least 2");
  if (cfg.threads < 1) v.emplace_back("threads must be at least 1");
  if (cfg.output_dir.empty()) v.emplace_back("output_dir must be nonempty");
  if (!(cfg.reference_accuracy >= 0.0 && cfg.reference_accuracy <= 100.0))
    v.emplace_back("reference_accuracy must lie in [0,100]");
  return v;
}

/// Applies `key = value` lines to cfg; '#' starts a comment. Syntax, key and
/// type errors are appended to `errors`.
inline void apply_config_text(std::string_view text, PipelineConfig& cfg, std::vector<std::string>& errors) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string trimmed = detail::trim_copy(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    apply_setting(cfg, detail::trim_copy(trimmed.substr(0, eq)), trimmed.substr(eq + 1), errors);
  }
}

/// Parses config text over the defaults. Unknown keys, type errors and
/// domain violations are reported together.
inline PipelineConfig parse_config_text(std::string_view text, PipelineConfig cfg = {}) {
  std::vector<std::string> errors;
  apply_config_text(text, cfg, errors);
  for (auto& v : config_violations(cfg)) errors.push_back(std::move(v));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline PipelineConfig validate_config(const std::string& path) { return parse_config_text(read_text_file(path)); }

/// Canonical text form: every key in a fixed order.
inline std::string serialize_config(const PipelineConfig& cfg) {
  auto list = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) s += ",";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(xs[i])>>) s += detail::format_number(xs[i]);
      else s += std::to_string(xs[i]);
    }
    return s;
  };
  auto num = detail::format_number;
  std::ostringstream out;
  out << "data = " << cfg.data << "\n";
  out << "labels = " << cfg.labels << "\n";
  out << "orientation = " << (cfg.orientation == Orientation::genes_as_rows ? "genes_as_rows" : "samples_as_rows") << "\n";
  out << "delimiter = " << (cfg.delimiter == '\0' ? "auto" : cfg.delimiter == ',' ? "comma" : "tab") << "\n";
  out << "missing = "
      << (cfg.missing == MissingPolicy::reject ? "reject" : cfg.missing == MissingPolicy::impute ? "impute" : "error")
      << "\n";
  out << "standardize = " << (cfg.standardize ? "true" : "false") << "\n";
  out << "positive_label = " << cfg.positive_label << "\n";
  out << "pre_count = " << cfg.pre_count << "\n";
  out << "final_count = " << cfg.final_count << "\n";
  out << "grid_step = " << num(cfg.grid_step) << "\n";
  out << "ranks = " << list(cfg.ranks) << "\n";
  out << "lambdas = " << list(cfg.lambdas) << "\n";
  out << "nmf_max_iters = " << cfg.nmf_max_iters << "\n";
  out << "nmf_tol = " << num(cfg.nmf_tol) << "\n";
  out << "lambda = " << (cfg.lambda ? num(*cfg.lambda) : "auto") << "\n";
  out << "lambda_scale = " << num(cfg.lambda_scale) << "\n";
  out << "sigma = " << num(cfg.sigma) << "\n";
  out << "rho = " << num(cfg.rho) << "\n";
  out << "theta = " << (cfg.theta ? num(*cfg.theta) : "auto") << "\n";
  out << "theta_policy = " << (cfg.theta_policy == ThetaPolicy::spectral ? "spectral" : "frobenius_squared") << "\n";
  out << "tol = " << num(cfg.tol) << "\n";
  out << "max_iters = " << cfg.max_iters << "\n";
  out << "gradient_factor = " << (cfg.gradient_factor == GradientFactor::two ? "two" : "one") << "\n";
  out << "ccr_class_size_normalization = " << (cfg.ccr_class_size_normalization ? "true" : "false") << "\n";
  out << "folds = " << cfg.folds << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "method = " << to_string(cfg.method) << "\n";
  out << "skip_selection = " << (cfg.skip_selection ? "true" : "false") << "\n";
  out << "skip_features = " << (cfg.skip_features ? "true" : "false") << "\n";
  out << "threads = " << cfg.threads << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "reference_accuracy = " << num(cfg.reference_accuracy) << "\n";
  return out.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the settings that affect results (paths, threads and the output
/// directory are excluded).
inline std::string config_hash(const PipelineConfig& cfg) {
  PipelineConfig c = cfg;
  c.data.clear();
  c.labels.clear();
  c.output_dir = "out";
  c.threads = 1;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(serialize_config(c))));
  return buf;
}

inline LoadOptions load_options(const PipelineConfig& cfg) {
  LoadOptions o;
  o.orientation = cfg.orientation;
  o.delimiter = cfg.delimiter;
  o.missing = cfg.missing;
  return o;
}

inline SolverParams solver_params(const PipelineConfig& cfg) {
  SolverParams p;
  p.lambda = cfg.lambda;
  p.lambda_scale = cfg.lambda_scale;
  p.sigma = cfg.sigma;
  p.rho = cfg.rho;
  p.theta = cfg.theta;
  p.theta_policy = cfg.theta_policy;
  p.tol = cfg.tol;
  p.max_iters = cfg.max_iters;
  p.gradient_factor = cfg.gradient_factor;
  return p;
}

inline LpmlOptions lpml_options(const PipelineConfig& cfg) {
  LpmlOptions o;
  o.ranks = cfg.ranks;
  o.lambdas = cfg.lambdas;
  o.seed = cfg.seed;
  o.controls.max_iters = cfg.nmf_max_iters;
  o.controls.tol = cfg.nmf_tol;
  return o;
}

inline PipelineOptions pipeline_options(const PipelineConfig& cfg, const ExpressionDataset& ds) {
  PipelineOptions o;
  o.method = cfg.method;
  o.skip_selection = cfg.skip_selection;
  o.skip_features = cfg.skip_features;
  o.selection.pre_count = cfg.pre_count;
  o.selection.final_count = cfg.final_count;
  o.selection.grid_step = cfg.grid_step;
  o.selection.threads = cfg.threads;
  o.isrc.lpml = lpml_options(cfg);
  o.isrc.solver = solver_params(cfg);
  o.isrc.ccr.class_size_normalization = cfg.ccr_class_size_normalization;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  o.dca_grid_step = cfg.grid_step;
  if (!cfg.positive_label.empty()) {
    const auto idx = ds.class_index(cfg.positive_label);
    if (!idx) throw Error("positive_label '" + cfg.positive_label + "' is not a class of the dataset");
    o.positive_class = *idx;
  }
  return o;
}

}  // namespace issrc

#endif  // ISSRC_CONFIG_HPP
