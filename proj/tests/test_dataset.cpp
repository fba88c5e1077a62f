#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

using namespace issrc;
using testutil::TempDir;

TEST(Dataset, ToyCsvParses) {
  TempDir dir;
  const auto data = dir.write("d.csv", "gene,s1,s2,s3\ng1,1,2,3\ng2,4,5,6\n");
  const auto labels = dir.write("l.csv", "s1,A\ns2,A\ns3,B\n");
  const auto [ds, log] = load_matrix(data, labels);
  EXPECT_EQ(ds.num_genes(), 2u);
  EXPECT_EQ(ds.num_samples(), 3u);
  EXPECT_EQ(ds.num_classes(), 2);
  EXPECT_EQ(ds.values()(1, 2), 6.0);
  EXPECT_EQ(log.class_counts.at("A"), 2u);
}

TEST(Dataset, EmptyFileHasNoDataRows) {
  TempDir dir;
  const auto data = dir.write("d.csv", "");
  const auto labels = dir.write("l.csv", "");
  try {
    load_matrix(data, labels);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no data rows"), std::string::npos);
  }
}

TEST(Dataset, SamplesAsRowsAndTabs) {
  TempDir dir;
  const auto data = dir.write("d.tsv", "sample\tg1\tg2\ns1\t1\t2\ns2\t3\t4\n");
  const auto labels = dir.write("l.tsv", "sample\tlabel\ns1\tx\ns2\ty\n");
  LoadOptions opt;
  opt.orientation = Orientation::samples_as_rows;
  const auto ds = load_matrix(data, labels, opt).dataset;
  EXPECT_EQ(ds.gene_ids(), (std::vector<std::string>{"g1", "g2"}));
  EXPECT_EQ(ds.values()(1, 0), 2.0);
}

TEST(Dataset, ParseErrorsNameTheLocation) {
  TempDir dir;
  const auto data = dir.write("d.csv", "gene,s1,s2\ng1,1,oops\n");
  const auto labels = dir.write("l.csv", "s1,A\ns2,B\n");
  try {
    load_matrix(data, labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2, column 3"), std::string::npos) << e.what();
  }
}

TEST(Dataset, MissingPolicies) {
  TempDir dir;
  const auto data = dir.write("d.csv", "gene,s1,s2,s3\ng1,1,NA,3\ng2,4,5,6\n");
  const auto labels = dir.write("l.csv", "s1,A\ns2,A\ns3,B\n");
  LoadOptions opt;
  auto rejected = load_matrix(data, labels, opt);
  EXPECT_EQ(rejected.dataset.num_genes(), 1u);
  EXPECT_EQ(rejected.log.rejected_genes, std::vector<std::string>{"g1"});
  opt.missing = MissingPolicy::impute;
  auto imputed = load_matrix(data, labels, opt);
  EXPECT_EQ(imputed.dataset.values()(0, 1), 2.0);
  opt.missing = MissingPolicy::error;
  EXPECT_THROW(load_matrix(data, labels, opt), Error);
}

TEST(Dataset, LabelProblemsAreErrors) {
  TempDir dir;
  const auto data = dir.write("d.csv", "gene,s1,s2\ng1,1,2\n");
  EXPECT_THROW(load_matrix(data, dir.write("a.csv", "s1,A\n")), Error);
  EXPECT_THROW(load_matrix(data, dir.write("b.csv", "s1,A\ns2,B\ns9,B\n")), Error);
  LoadOptions opt;
  opt.allowed_labels = {"A", "B"};
  EXPECT_THROW(load_matrix(data, dir.write("c.csv", "s1,A\ns2,C\n"), opt), Error);
  EXPECT_THROW(load_matrix(dir.write("dup.csv", "gene,s1,s1\ng1,1,2\n"), dir.write("e.csv", "s1,A\n")), Error);
}

TEST(Dataset, ShiftNonnegativeExamples) {
  Matrix v(3, 3);
  v << -1, 0, 2, 3, 5, 7, -2, -2, -2;
  const auto ds = ExpressionDataset::from_tokens(v, {"a", "b", "c"}, {"x", "y", "z"}, {"A", "B", "B"});
  const auto shifted = shift_nonnegative(ds);
  Matrix expect(3, 3);
  expect << 0, 1, 3, 3, 5, 7, 0, 0, 0;
  EXPECT_EQ(shifted.dataset.values(), expect);
  EXPECT_EQ(shifted.shifts, (std::vector<double>{1.0, 0.0, 2.0}));
}

TEST(Dataset, RoundTripIsBitExact) {
  Rng rng(5);
  Matrix v = gaussian_matrix(7, 9, rng) * 1e3;
  v(0, 0) = 1.0 / 3.0;
  v(1, 1) = -0.0;
  v(2, 2) = 5e-300;
  std::vector<std::string> gids, sids, labels;
  for (int g = 0; g < 7; ++g) gids.push_back("gene" + std::to_string(g));
  for (int s = 0; s < 9; ++s) {
    sids.push_back("s" + std::to_string(s));
    labels.push_back(s % 3 ? "tumor" : "normal");
  }
  const auto ds = ExpressionDataset::from_tokens(v, gids, sids, labels);
  TempDir dir;
  save_dataset(ds, dir.file("d.csv"), dir.file("l.csv"));
  const auto back = load_matrix(dir.file("d.csv"), dir.file("l.csv")).dataset;
  ASSERT_EQ(back.values().rows(), v.rows());
  for (Index i = 0; i < v.size(); ++i)
    EXPECT_EQ(std::memcmp(&back.values().data()[i], &v.data()[i], sizeof(double)), 0) << i;
  EXPECT_EQ(back.labels(), ds.labels());
  EXPECT_EQ(back.sample_ids(), ds.sample_ids());
}

TEST(Dataset, StandardizeUsesSampleSd) {
  Matrix v(2, 4);
  v << 0, 1, 2, 3, 5, 5, 5, 5;
  const auto ds = ExpressionDataset::from_tokens(v, {"a", "b"}, {"1", "2", "3", "4"}, {"A", "A", "B", "B"});
  const auto z = standardize_genes(ds).values();
  EXPECT_NEAR(z.row(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.row(0).squaredNorm() / 3.0, 1.0, 1e-12);
  EXPECT_TRUE(z.row(1).isZero(0.0));
}

TEST(Folds, ColonShapedFoldSizes) {
  std::vector<ClassIndex> labels(62, 0);
  std::fill(labels.begin(), labels.begin() + 40, 1);
  const auto plan = stratified_kfold(labels, 10, 3);
  ASSERT_EQ(plan.folds.size(), 10u);
  for (const auto& f : plan.folds) {
    const auto size = f.test_indices.size();
    EXPECT_TRUE(size == 6 || size == 7);
    const auto tumor = std::count_if(f.test_indices.begin(), f.test_indices.end(), [&](auto i) { return labels[i] == 1; });
    EXPECT_LE(std::abs(static_cast<long>(tumor) - 4), 1);
    EXPECT_LE(std::abs(static_cast<long>(size - tumor) - 2), 1);
  }
}

TEST(Folds, TwoByTwo) {
  const std::vector<ClassIndex> labels{0, 0, 1, 1};
  const auto plan = stratified_kfold(labels, 2, 99);
  for (const auto& f : plan.folds) {
    ASSERT_EQ(f.test_indices.size(), 2u);
    EXPECT_NE(labels[f.test_indices[0]], labels[f.test_indices[1]]);
  }
}

TEST(Folds, RejectsKOfOne) {
  const std::vector<ClassIndex> labels{0, 1};
  EXPECT_THROW(stratified_kfold(labels, 1, 0), Error);
  EXPECT_THROW(stratified_kfold(labels, 3, 0), Error);
}

class FoldProperties : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(FoldProperties, PartitionStratifiedDeterministic) {
  Rng rng(GetParam());
  std::uniform_int_distribution<int> nclass(2, 4), size(5, 40);
  const int c = nclass(rng);
  std::vector<ClassIndex> labels;
  for (int j = 0; j < c; ++j) labels.insert(labels.end(), static_cast<std::size_t>(size(rng)), j);
  shuffle(labels, rng);
  const std::size_t n = labels.size();
  const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 10)(rng);
  const auto plan = stratified_kfold(labels, k, GetParam());

  std::vector<int> seen(n, 0);
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test_indices.size() + f.train_indices.size(), n);
    for (auto i : f.test_indices) ++seen[i];
    for (int j = 0; j < c; ++j) {
      const double global = static_cast<double>(std::count(labels.begin(), labels.end(), j)) / static_cast<double>(n);
      const double local = static_cast<double>(std::count_if(f.test_indices.begin(), f.test_indices.end(),
                                                             [&](auto i) { return labels[i] == j; })) /
                           static_cast<double>(f.test_indices.size());
      EXPECT_LE(std::abs(local - global), 1.0 / static_cast<double>(f.test_indices.size()) + 1e-12);
    }
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));

  const auto again = stratified_kfold(labels, k, GetParam());
  for (std::size_t f = 0; f < k; ++f) EXPECT_EQ(again.folds[f].test_indices, plan.folds[f].test_indices);
}

INSTANTIATE_TEST_SUITE_P(Random, FoldProperties, ::testing::Range<std::uint64_t>(1, 41));
