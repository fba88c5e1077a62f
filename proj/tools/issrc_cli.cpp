#include "issrc/issrc.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace issrc;

namespace {

/// Flags that map onto config keys. Values stay as text so the config
/// parser does all conversion and validation.
struct SettingFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, bool> switches;
  std::map<std::string, CLI::Option*> switch_options;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options[key] = app->add_option(flag, values[key], help);
  }
  void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    switch_options[key] = app->add_flag(flag, switches[key], help);
  }
};

struct Stopwatch {
  std::vector<std::pair<std::string, double>> stages;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    stages.emplace_back(name, std::chrono::duration<double>(now - start).count());
    start = now;
  }
};

struct Run {
  std::string command;
  PipelineConfig cfg;
  std::string seed_source = "default";
  std::string config_path;
  Stopwatch clock;
  std::vector<std::string> outputs;

  fs::path out(const std::string& name) {
    outputs.push_back(name);
    return fs::path(cfg.output_dir) / name;
  }

  void finish(Json extra = Json::object()) {
    Json m = manifest_json(command, cfg, seed_source, clock.stages, {});
    for (auto& [k, v] : extra.items()) m[k] = v;
    outputs.push_back("manifest.json");
    m["outputs"] = outputs;
    write_json(fs::path(cfg.output_dir) / "manifest.json", m);
  }
};

/// Defaults < config file < ISSRC_SEED < command-line flags.
void resolve_config(Run& run, const SettingFlags& flags) {
  std::vector<std::string> errors;
  if (!run.config_path.empty()) {
    try {
      apply_config_text(read_text_file(run.config_path), run.cfg, errors);
      run.seed_source = "config";
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    }
  }
  if (const char* env = std::getenv("ISSRC_SEED"); env && *env) {
    apply_setting(run.cfg, "seed", env, errors);
    run.seed_source = "ISSRC_SEED";
  }
  for (const auto& [key, opt] : flags.options)
    if (opt->count() > 0) {
      apply_setting(run.cfg, key, flags.values.at(key), errors);
      if (key == "seed") run.seed_source = "flag";
    }
  for (const auto& [key, opt] : flags.switch_options)
    if (opt->count() > 0) apply_setting(run.cfg, key, flags.switches.at(key) ? "true" : "false", errors);
  for (auto& v : config_violations(run.cfg)) errors.push_back(std::move(v));
  if (!errors.empty()) throw ConfigError(std::move(errors));
  fs::create_directories(run.cfg.output_dir);
  fs::remove(fs::path(run.cfg.output_dir) / "error.json");
}

void add_data_flags(CLI::App* app, SettingFlags& f) {
  f.add(app, "--data", "data", "Expression matrix file");
  f.add(app, "--labels", "labels", "Labels file (sample_id<delim>label per line)");
  f.add(app, "--orientation", "orientation", "genes_as_rows or samples_as_rows");
  f.add(app, "--delimiter", "delimiter", "auto, comma or tab");
  f.add(app, "--missing", "missing", "Missing values: reject, impute or error");
  f.add_switch(app, "--standardize", "standardize", "Z-score each gene before use");
  f.add(app, "--positive-label", "positive_label", "Label treated as positive (binary tasks)");
}

void add_common_flags(CLI::App* app, SettingFlags& f, Run& run) {
  app->add_option("--config", run.config_path, "key = value config file");
  f.add(app, "--seed", "seed", "Root seed");
  f.add(app, "--threads", "threads", "Worker threads");
  f.add(app, "--out", "output_dir", "Output directory");
}

void add_selection_flags(CLI::App* app, SettingFlags& f) {
  f.add(app, "--pre-count", "pre_count", "Genes kept by BW pre-selection");
  f.add(app, "--final-count", "final_count", "Genes kept by DIF ranking");
  f.add(app, "--grid-step", "grid_step", "Decision-curve threshold step");
}

void add_feature_flags(CLI::App* app, SettingFlags& f) {
  f.add(app, "--ranks", "ranks", "Comma list of layer ranks");
  f.add(app, "--lambdas", "lambdas", "Comma list of layer sparsity weights");
  f.add(app, "--max-iters", "nmf_max_iters", "Iterations per layer");
  f.add(app, "--tol", "nmf_tol", "Relative objective change to stop a layer");
}

void add_solver_flags(CLI::App* app, SettingFlags& f, bool with_rho = true) {
  f.add(app, "--lambda", "lambda", "l1 weight or 'auto'");
  f.add(app, "--sigma", "sigma", "Penalty parameter");
  if (with_rho) f.add(app, "--rho", "rho", "Relaxation factor in (0,2)");
  f.add(app, "--theta", "theta", "Linearization constant or 'auto'");
  f.add(app, "--theta-policy", "theta_policy", "spectral or frobenius_squared");
  f.add(app, "--solver-tol", "tol", "Solver stopping tolerance");
  f.add(app, "--solver-max-iters", "max_iters", "Solver iteration cap");
  f.add(app, "--gradient-factor", "gradient_factor", "two or one");
}

void add_method_flags(CLI::App* app, SettingFlags& f) {
  f.add(app, "--method", "method", "integrated-issrc, issrc or src");
  f.add_switch(app, "--skip-selection", "skip_selection", "Use all genes");
  f.add_switch(app, "--skip-features", "skip_features", "Classify without feature learning");
}

LoadedDataset load_dataset(const PipelineConfig& cfg) {
  if (cfg.data.empty() || cfg.labels.empty()) throw Error("--data and --labels are required");
  auto loaded = load_matrix(cfg.data, cfg.labels, load_options(cfg));
  if (cfg.standardize) loaded.dataset = standardize_genes(loaded.dataset);
  return loaded;
}

ClassIndex positive_of(const PipelineConfig& cfg, const ExpressionDataset& ds) {
  return pipeline_options(cfg, ds).positive_class.value_or(ds.num_classes() - 1);
}

/// Rows of `m` reordered to match `gene_ids`.
Matrix align_genes(const UnlabeledMatrix& m, const std::vector<std::string>& gene_ids) {
  std::map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < m.gene_ids.size(); ++i) row.emplace(m.gene_ids[i], i);
  std::vector<std::size_t> order;
  for (const auto& g : gene_ids) {
    auto it = row.find(g);
    if (it == row.end()) throw Error("test data lacks gene '" + g + "'");
    order.push_back(it->second);
  }
  return select_rows(m.values, order);
}

void write_selection_outputs(Run& run, const GeneScoreTable& table) {
  write_gene_scores(run.out("gene_scores.csv"), table);
  for (auto g : table.selected) {
    const auto& r = table.records[g];
    if (r.dca) write_dca(run.out("dca_" + safe_name(r.gene_id) + ".csv"), *r.dca);
  }
}

int cmd_select_genes(Run& run) {
  auto [ds, log] = load_dataset(run.cfg);
  run.clock.lap("load");
  SelectionOptions sel;
  sel.pre_count = run.cfg.pre_count;
  sel.final_count = run.cfg.final_count;
  sel.grid_step = run.cfg.grid_step;
  sel.threads = run.cfg.threads;
  sel.positive_class = positive_of(run.cfg, ds);
  const auto table = select_genes(ds, sel);
  run.clock.lap("selection");
  write_selection_outputs(run, table);
  const auto selected = ds.subset_genes(table.selected);
  save_dataset(selected, run.out("selected_data.csv").string(), run.out("selected_labels.csv").string());
  Json extra;
  extra["ingest"] = ingest_json(log);
  Json genes = Json::array();
  for (auto g : table.selected) genes.push_back({{"gene_id", ds.gene_ids()[g]}, {"dif", *table.records[g].dif}});
  extra["selected_genes"] = genes;
  run.finish(extra);
  std::cout << "selected " << table.selected.size() << " of " << ds.num_genes() << " genes\n";
  return 0;
}

int cmd_learn_features(Run& run, const std::string& test_path) {
  auto [ds, log] = load_dataset(run.cfg);
  Matrix test(static_cast<Index>(ds.num_genes()), 0);
  std::vector<std::string> test_ids;
  if (!test_path.empty()) {
    const auto t = load_unlabeled(test_path, load_options(run.cfg));
    test = align_genes(t, ds.gene_ids());
    test_ids = t.sample_ids;
  }
  run.clock.lap("load");
  Matrix joined(test.rows(), static_cast<Index>(ds.num_samples()) + test.cols());
  joined << ds.values(), test;
  for (Index r = 0; r < joined.rows(); ++r) {
    const double lo = joined.row(r).minCoeff();
    if (lo < 0.0) joined.row(r).array() -= lo;
  }
  const Index s = static_cast<Index>(ds.num_samples());
  const auto stack = lpml_snmf_fit(joined.leftCols(s), joined.rightCols(test.cols()), lpml_options(run.cfg));
  run.clock.lap("feature_learning");

  std::vector<std::string> ids = ds.sample_ids();
  ids.insert(ids.end(), test_ids.begin(), test_ids.end());
  std::vector<std::string> input_rows = ds.gene_ids();
  write_correlation(run.out("correlation_V.csv"), column_correlation(joined), ids);
  write_quartiles(run.out("quartiles_V.csv"), class_quartiles(joined.leftCols(s), ds.labels()), "V", ds.class_names());
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    const auto tag = std::to_string(l + 1);
    const auto& layer = stack.layer(l);
    write_layer_factors(run.out("factors_L" + tag + ".csv"), layer, ids, stack.train_count());
    write_basis(run.out("basis_L" + tag + ".csv"), layer, input_rows);
    write_correlation(run.out("correlation_H" + tag + ".csv"), column_correlation(layer.h), ids);
    write_quartiles(run.out("quartiles_H" + tag + ".csv"), class_quartiles(stack.train_block(l), ds.labels()),
                    "H" + tag, ds.class_names());
    input_rows.clear();
    for (Index r = 0; r < layer.h.rows(); ++r) input_rows.push_back("component_" + std::to_string(r + 1));
  }
  write_objective_trace(run.out("objective_trace.csv"), stack);
  Json extra;
  extra["ingest"] = ingest_json(log);
  Json layers = Json::array();
  for (const auto& layer : stack.layers())
    layers.push_back({{"rank", layer.w.cols()},
                      {"lambda", layer.lambda},
                      {"iterations", layer.iterations},
                      {"converged", layer.converged},
                      {"final_objective", layer.objective_trace.back()}});
  extra["layers"] = layers;
  run.finish(extra);
  std::cout << "fitted " << stack.depth() << " layers on " << joined.cols() << " samples\n";
  return 0;
}

int cmd_classify(Run& run, const std::string& test_path, const std::string& test_labels_path, bool emit_coefficients) {
  auto [ds, log] = load_dataset(run.cfg);
  if (test_path.empty()) throw Error("--test-data is required");
  const auto test_raw = load_unlabeled(test_path, load_options(run.cfg));
  Matrix test_all = align_genes(test_raw, ds.gene_ids());
  if (run.cfg.standardize) throw Error("--standardize is not supported by classify; standardize the inputs jointly");
  std::optional<std::vector<ClassIndex>> truths;
  if (!test_labels_path.empty()) {
    std::map<std::string, std::string> tokens;
    for (const auto& line : detail::read_lines(test_labels_path)) {
      auto cells = detail::split(line, detail::detect_delimiter(line));
      if (cells.size() == 2) tokens[cells[0]] = cells[1];
    }
    truths.emplace();
    for (const auto& id : test_raw.sample_ids) {
      auto it = tokens.find(id);
      if (it == tokens.end()) throw Error("no test label for sample '" + id + "'");
      auto c = ds.class_index(it->second);
      if (!c) throw Error("unknown label token '" + it->second + "' for test sample '" + id + "'");
      truths->push_back(*c);
    }
  }
  run.clock.lap("load");

  const auto opts = pipeline_options(run.cfg, ds);
  const ClassIndex positive = opts.positive_class.value_or(ds.num_classes() - 1);
  std::vector<std::size_t> genes(ds.num_genes());
  std::iota(genes.begin(), genes.end(), 0);
  if (!opts.skip_selection && opts.method != Method::issrc) {
    SelectionOptions sel = opts.selection;
    sel.positive_class = positive;
    const auto table = select_genes(ds, sel);
    write_selection_outputs(run, table);
    genes = table.selected;
    run.clock.lap("selection");
  }
  const Matrix train = select_rows(ds.values(), genes);
  const Matrix test = select_rows(test_all, genes);
  ClassificationReport report;
  if (opts.method == Method::src) {
    report = src_classify(train, test, ds.labels(), opts.isrc.solver, positive, opts.threads, ds.num_classes());
  } else {
    IsrcOptions isrc = opts.isrc;
    isrc.skip_features = opts.skip_features || opts.method == Method::issrc;
    isrc.positive_class = positive;
    isrc.threads = opts.threads;
    isrc.lpml.seed = derive_seed(run.cfg.seed, SeedStage::features, 0);
    report = integrated_isrc_classify(train, test, ds.labels(), isrc, ds.num_classes());
  }
  run.clock.lap("classification");

  std::vector<std::string> header{"sample_id", "predicted", "true"};
  const std::string score_name = opts.method == Method::src ? "residual_" : "ccr_";
  for (const auto& c : ds.class_names()) header.push_back(score_name + c);
  if (!report.positive_score.empty()) header.push_back("score");
  header.push_back("tie");
  header.push_back("fallback");
  {
    CsvWriter csv(run.out("predictions.csv"), header);
    for (std::size_t l = 0; l < report.predictions.size(); ++l) {
      std::vector<std::string> row{test_raw.sample_ids[l], ds.class_names()[static_cast<std::size_t>(report.predictions[l])],
                                   truths ? ds.class_names()[static_cast<std::size_t>((*truths)[l])] : "NA"};
      for (Index j = 0; j < report.class_scores.rows(); ++j)
        row.push_back(CsvWriter::num(report.class_scores(j, static_cast<Index>(l))));
      if (!report.positive_score.empty()) row.push_back(CsvWriter::num(report.positive_score[l]));
      row.push_back(report.tie_flags[l] ? "true" : "false");
      row.push_back(report.fallback_flags[l] ? "true" : "false");
      csv.row(row);
    }
  }
  if (emit_coefficients && report.coefficients)
    write_coefficients(run.out("coefficients.csv"), *report.coefficients, ds.sample_ids(), test_raw.sample_ids);
  if (report.factors) {
    for (std::size_t l = 0; l < report.factors->depth(); ++l) {
      std::vector<std::string> ids = ds.sample_ids();
      ids.insert(ids.end(), test_raw.sample_ids.begin(), test_raw.sample_ids.end());
      write_layer_factors(run.out("factors_L" + std::to_string(l + 1) + ".csv"), report.factors->layer(l), ids,
                          report.factors->train_count());
    }
    write_objective_trace(run.out("objective_trace.csv"), *report.factors);
  }
  if (truths) {
    Json metrics;
    metrics["method"] = report.method;
    metrics["test_samples"] = truths->size();
    if (ds.num_classes() == 2) {
      metrics["positive_class"] = ds.class_names()[static_cast<std::size_t>(positive)];
      metrics["metrics"] = metrics_json(confusion_metrics(report.predictions, *truths, positive));
      const auto truth01 = one_vs_rest(*truths, positive);
      const auto npos = std::count(truth01.begin(), truth01.end(), 1);
      if (npos > 0 && npos < static_cast<long>(truth01.size())) {
        const auto roc = roc_auc(report.positive_score, truth01);
        metrics["auc"] = roc.auc;
        write_roc(run.out("roc.csv"), roc);
        write_dca(run.out("dca_classifier.csv"), dca_from_risks(report.positive_score, truth01, run.cfg.grid_step));
      }
    } else {
      metrics["accuracy"] = optional_json(multiclass_metrics(report.predictions, *truths, ds.num_classes()).accuracy);
    }
    write_json(run.out("metrics.json"), metrics);
  }
  Json extra;
  extra["ingest"] = ingest_json(log);
  extra["unconverged_solves"] = report.unconverged_solves;
  run.finish(extra);
  std::cout << "classified " << report.predictions.size() << " test samples with " << report.method << "\n";
  return 0;
}

/// Genes chosen most often across folds (ties by gene index).
std::vector<std::size_t> frequent_genes(const CvReport& cv, std::size_t num_genes, std::size_t count) {
  std::vector<std::size_t> freq(num_genes, 0);
  for (const auto& f : cv.folds)
    for (auto g : f.outcome.selected_genes) ++freq[g];
  std::vector<std::size_t> order(num_genes);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
  order.resize(std::min(count, num_genes));
  return order;
}

int cmd_cross_validate(Run& run, bool imbalance, bool fraction, std::size_t repeats) {
  auto [ds, log] = load_dataset(run.cfg);
  run.clock.lap("load");
  const auto opts = pipeline_options(run.cfg, ds);
  const auto plan = stratified_kfold(ds, run.cfg.folds, run.cfg.seed);
  const auto cv = cross_validate(ds, plan, opts);
  run.clock.lap("cross_validation");

  write_json(run.out("metrics.json"), cv_metrics_json(cv, ds));
  {
    std::map<std::size_t, std::size_t> fold_of;
    for (const auto& f : cv.folds)
      for (auto s : f.outcome.test_indices) fold_of[s] = f.fold;
    CsvWriter csv(run.out("predictions.csv"), {"sample_id", "fold", "predicted", "true", "score"});
    for (std::size_t s = 0; s < ds.num_samples(); ++s)
      csv.row({ds.sample_ids()[s], std::to_string(fold_of[s]),
               ds.class_names()[static_cast<std::size_t>(cv.predictions[s])],
               ds.class_names()[static_cast<std::size_t>(ds.labels()[s])], CsvWriter::num(cv.scores[s])});
  }
  if (cv.roc) write_roc(run.out("roc.csv"), *cv.roc);
  if (cv.dca) write_dca(run.out("dca_classifier.csv"), *cv.dca);
  {
    std::vector<std::size_t> freq(ds.num_genes(), 0);
    for (const auto& f : cv.folds)
      for (auto g : f.outcome.selected_genes) ++freq[g];
    CsvWriter csv(run.out("selection_frequency.csv"), {"gene_id", "folds_selected"});
    for (auto g : frequent_genes(cv, ds.num_genes(), ds.num_genes()))
      if (freq[g] > 0) csv.row({ds.gene_ids()[g], std::to_string(freq[g])});
  }
  const auto genes = frequent_genes(cv, ds.num_genes(), run.cfg.skip_selection ? ds.num_genes() : run.cfg.final_count);
  const Matrix samples = select_rows(ds.values(), genes).transpose();
  const Index comps = std::min<Index>(3, std::min(samples.rows(), samples.cols()));
  try {
    write_pca(run.out("pca3.csv"), pca_embed(samples, comps), ds);
  } catch (const Error& e) {
    run.outputs.pop_back();
    std::cerr << "pca3.csv skipped: " << e.what() << "\n";
  }
  run.clock.lap("reports");

  Json sweep_errors = Json::object();
  if (imbalance) {
    try {
      write_imbalance(run.out("imbalance.csv"), imbalance_sweep(ds, opts));
    } catch (const Error& e) {
      run.outputs.pop_back();
      sweep_errors["imbalance"] = e.what();
      std::cerr << "imbalance sweep skipped: " << e.what() << "\n";
    }
    run.clock.lap("imbalance_sweep");
  }
  if (fraction) {
    FractionOptions fo;
    fo.repeats = repeats;
    try {
      write_fraction_sweep(run.out("training_fraction.csv"), training_fraction_sweep(ds, opts, fo));
    } catch (const Error& e) {
      run.outputs.pop_back();
      sweep_errors["training_fraction"] = e.what();
      std::cerr << "training-fraction sweep skipped: " << e.what() << "\n";
    }
    run.clock.lap("fraction_sweep");
  }

  Json extra;
  extra["ingest"] = ingest_json(log);
  Json acc;
  const auto it = cv.fold_summary.find("accuracy");
  const double mean_pct = it != cv.fold_summary.end() ? it->second.mean * 100.0 : 0.0;
  acc["reference_accuracy_pct"] = run.cfg.reference_accuracy;
  acc["mean_fold_accuracy_pct"] = mean_pct;
  acc["pooled_accuracy_pct"] = cv.pooled.accuracy ? *cv.pooled.accuracy * 100.0 : 0.0;
  acc["gap_pct_points"] = run.cfg.reference_accuracy - mean_pct;
  extra["accuracy_vs_reference"] = acc;
  if (!sweep_errors.empty()) extra["sweep_errors"] = sweep_errors;
  run.finish(extra);
  std::cout << "mean fold accuracy " << mean_pct << "% over " << cv.folds.size() << " folds\n";
  return 0;
}

int cmd_bench_solver(Run& run, const std::string& solver, const std::string& rho_list, std::size_t instances,
                     Index rows, Index cols) {
  std::vector<double> rhos;
  std::vector<std::string> errors;
  for (const auto& item : detail::split_list(rho_list)) {
    PipelineConfig probe = run.cfg;
    apply_setting(probe, "rho", item, errors);
    if (!(probe.rho > 0.0 && probe.rho < 2.0)) errors.emplace_back("rho must lie in (0,2)");
    rhos.push_back(probe.rho);
  }
  if (solver != "gsadmm" && solver != "admm" && solver != "both") errors.emplace_back("solver must be gsadmm, admm or both");
  if (instances == 0) errors.emplace_back("instances must be positive");
  if (rows < 1 || cols < 1) errors.emplace_back("rows and cols must be positive");
  if (!errors.empty()) throw ConfigError(errors);

  const auto set = random_instances(instances, rows, cols, run.cfg.seed);
  std::vector<BenchConfig> configs;
  const SolverParams base = solver_params(run.cfg);
  if (solver != "admm")
    for (double r : rhos) {
      SolverParams p = base;
      p.rho = r;
      configs.push_back({SolverKind::gsadmm, p});
    }
  if (solver != "gsadmm") configs.push_back({SolverKind::admm, base});
  const auto report = convergence_report(set, configs);
  run.clock.lap("bench");
  write_solver_bench(run.out("solver_bench.csv"), report);
  write_solver_trace(run.out("solver_trace.csv"), report);
  std::size_t converged = 0;
  for (const auto& r : report) converged += r.converged;
  Json extra;
  extra["instances"] = instances;
  extra["rows"] = rows;
  extra["cols"] = cols;
  extra["runs"] = report.size();
  extra["converged_runs"] = converged;
  run.finish(extra);
  std::cout << converged << " of " << report.size() << " solver runs converged\n";
  return 0;
}

int cmd_stability(Run& run, Index rows, Index cols, double epsilon_scale, std::size_t trials) {
  if (rows < cols || cols < 1) throw ConfigError({"rows must be >= cols >= 1"});
  if (!(epsilon_scale >= 0.0 && epsilon_scale <= 1.0)) throw ConfigError({"epsilon-scale must lie in [0,1]"});
  Rng rng(derive_seed(run.cfg.seed, SeedStage::stability, 1u << 20));
  const auto inst = random_instance(rows, cols, rng);
  Eigen::JacobiSVD<Matrix> svd(inst.dict);
  const auto& sv = svd.singularValues();
  const double epsilon = epsilon_scale * sv(sv.size() - 1) / sv(0);
  const auto reports = stability_check(inst.dict, inst.target, epsilon, trials, run.cfg.seed);
  run.clock.lap("stability");
  write_stability(run.out("stability.csv"), reports);
  const auto violations = std::count_if(reports.begin(), reports.end(), [](const auto& r) { return !r.holds; });
  Json extra;
  extra["rows"] = rows;
  extra["cols"] = cols;
  extra["epsilon"] = epsilon;
  extra["trials"] = trials;
  extra["violations"] = violations;
  run.finish(extra);
  std::cout << violations << " bound violations in " << trials << " trials (epsilon " << epsilon << ")\n";
  return violations == 0 ? 0 : 3;
}

void report_error(const Run& run, const std::string& message, const std::vector<std::string>& violations) {
  const Json err = error_json(run.command, message, violations);
  std::cerr << err.dump() << "\n";
  std::error_code ec;
  const fs::path dir = run.cfg.output_dir.empty() ? fs::path("out") : fs::path(run.cfg.output_dir);
  fs::create_directories(dir, ec);
  if (!ec) {
    std::ofstream out(dir / "error.json");
    if (out) out << err.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse-space sparse representation classification for high-dimensional small-sample data"};
  app.require_subcommand(1);
  Run run;
  std::map<const CLI::App*, SettingFlags> flag_sets;

  auto* sel = app.add_subcommand("select-genes", "Score genes (BW, SNR, AUC, DIF) and pick the informative subset");
  auto& sel_flags = flag_sets[sel];
  add_common_flags(sel, sel_flags, run);
  add_data_flags(sel, sel_flags);
  add_selection_flags(sel, sel_flags);

  std::string test_path, test_labels;
  auto* learn = app.add_subcommand("learn-features", "Fit the two-layer sparse NMF stack");
  auto& learn_flags = flag_sets[learn];
  add_common_flags(learn, learn_flags, run);
  add_data_flags(learn, learn_flags);
  add_feature_flags(learn, learn_flags);
  learn->add_option("--test-data", test_path, "Unlabeled samples factorized jointly with the training data");

  bool emit_coefficients = false;
  auto* cls = app.add_subcommand("classify", "Train on --data/--labels and classify --test-data");
  auto& cls_flags = flag_sets[cls];
  add_common_flags(cls, cls_flags, run);
  add_data_flags(cls, cls_flags);
  add_selection_flags(cls, cls_flags);
  add_feature_flags(cls, cls_flags);
  add_solver_flags(cls, cls_flags);
  add_method_flags(cls, cls_flags);
  cls->add_option("--test-data", test_path, "Test matrix (same gene ids)")->required();
  cls->add_option("--test-labels", test_labels, "Optional test labels for scoring");
  cls->add_flag("--emit-coefficients", emit_coefficients, "Write coefficients.csv");

  bool imbalance = false, fraction = false;
  std::size_t repeats = 1;
  auto* cv = app.add_subcommand("cross-validate", "Stratified k-fold evaluation of the full pipeline");
  auto& cv_flags = flag_sets[cv];
  add_common_flags(cv, cv_flags, run);
  add_data_flags(cv, cv_flags);
  add_selection_flags(cv, cv_flags);
  add_feature_flags(cv, cv_flags);
  add_solver_flags(cv, cv_flags);
  add_method_flags(cv, cv_flags);
  cv_flags.add(cv, "--folds", "folds", "Number of folds");
  cv_flags.add(cv, "--reference-accuracy", "reference_accuracy", "Accuracy (%) the manifest compares against");
  cv->add_flag("--imbalance-sweep", imbalance, "Also run the fixed-size imbalanced test-set sweep");
  cv->add_flag("--fraction-sweep", fraction, "Also run the training-fraction sweep");
  cv->add_option("--fraction-repeats", repeats, "Repeats per training fraction")->check(CLI::PositiveNumber);

  std::string solver = "both", rho_list = "1.0";
  std::size_t instances = 50;
  Index rows = 20, cols = 8;
  auto* bench = app.add_subcommand("bench-solver", "Convergence comparison of GsADMM and ADMM on random lasso problems");
  auto& bench_flags = flag_sets[bench];
  add_common_flags(bench, bench_flags, run);
  add_solver_flags(bench, bench_flags, false);
  bench->add_option("--solver", solver, "gsadmm, admm or both");
  bench->add_option("--rho", rho_list, "Comma list of relaxation factors");
  bench->add_option("--instances", instances, "Number of random instances");
  bench->add_option("--rows", rows, "Dictionary rows");
  bench->add_option("--cols", cols, "Dictionary columns");

  double epsilon_scale = 0.01;
  std::size_t trials = 200;
  Index srows = 50, scols = 10;
  auto* stab = app.add_subcommand("stability-test", "Monte-Carlo check of the least-squares perturbation bound");
  auto& stab_flags = flag_sets[stab];
  add_common_flags(stab, stab_flags, run);
  stab->add_option("--rows", srows, "Dictionary rows");
  stab->add_option("--cols", scols, "Dictionary columns");
  stab->add_option("--epsilon-scale", epsilon_scale, "Perturbation size as a fraction of phi_min/phi_max");
  stab->add_option("--trials", trials, "Number of trials");

  CLI11_PARSE(app, argc, argv);
  const CLI::App* active = app.get_subcommands().front();
  run.command = active->get_name();

  try {
    resolve_config(run, flag_sets.at(active));
    if (*sel) return cmd_select_genes(run);
    if (*learn) return cmd_learn_features(run, test_path);
    if (*cls) return cmd_classify(run, test_path, test_labels, emit_coefficients);
    if (*cv) return cmd_cross_validate(run, imbalance, fraction, repeats);
    if (*bench) return cmd_bench_solver(run, solver, rho_list, instances, rows, cols);
    if (*stab) return cmd_stability(run, srows, scols, epsilon_scale, trials);
  } catch (const ConfigError& e) {
    report_error(run, "invalid configuration", e.violations());
    return 2;
  } catch (const std::exception& e) {
    report_error(run, e.what(), {});
    return 1;
  }
  return 0;
}
