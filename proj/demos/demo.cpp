// Synthetic two-class expression data run through the full pipeline with
// 5-fold cross-validation, compared against plain SRC.
#include "issrc/issrc.hpp"

#include <iomanip>
#include <iostream>

using namespace issrc;

namespace {

ExpressionDataset synthetic(std::size_t genes, std::size_t per_class, std::size_t informative, std::uint64_t seed) {
  Rng rng(seed);
  const auto n = 2 * per_class;
  Matrix values = gaussian_matrix(static_cast<Index>(genes), static_cast<Index>(n), rng).array() + 6.0;
  std::vector<std::string> gene_ids, sample_ids, labels;
  for (std::size_t g = 0; g < genes; ++g) gene_ids.push_back("g" + std::to_string(g));
  for (std::size_t s = 0; s < n; ++s) {
    const bool tumor = s >= per_class;
    sample_ids.push_back("s" + std::to_string(s));
    labels.emplace_back(tumor ? "tumor" : "normal");
    // odd informative genes are up in tumour, even ones in normal tissue
    for (std::size_t g = 0; g < informative; ++g)
      if ((g % 2 == 1) == tumor) values(static_cast<Index>(g), static_cast<Index>(s)) += 2.0;
  }
  return ExpressionDataset::from_tokens(std::move(values), std::move(gene_ids), std::move(sample_ids), labels);
}

}  // namespace

int main() {
  const auto ds = synthetic(300, 20, 6, 7);
  const auto plan = stratified_kfold(ds, 5, 11);

  PipelineOptions options;
  options.seed = 11;
  options.selection.pre_count = 60;
  options.selection.final_count = 10;
  options.isrc.lpml.ranks = {6, 4};
  options.isrc.lpml.lambdas = {0.2, 0.5};

  std::cout << std::fixed << std::setprecision(3);
  for (Method m : {Method::integrated_issrc, Method::issrc, Method::src}) {
    options.method = m;
    const auto cv = cross_validate(ds, plan, options);
    std::cout << std::setw(17) << to_string(m) << "  accuracy " << cv.pooled.accuracy.value_or(0.0);
    if (cv.roc) std::cout << "  auc " << cv.roc->auc;
    std::cout << "\n";
  }
}
