#pragma once

#include "issrc/issrc.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testutil {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("issrc_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream out(path_ / name);
    out << text;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Two well-separated Gaussian clusters on a positive baseline: genes x samples.
inline issrc::ExpressionDataset separable_fixture(std::size_t genes, std::size_t per_class, std::uint64_t seed,
                                                  double gap = 4.0) {
  issrc::Rng rng(seed);
  const auto n = 2 * per_class;
  issrc::Matrix v = issrc::gaussian_matrix(static_cast<issrc::Index>(genes), static_cast<issrc::Index>(n), rng);
  v.array() += 10.0;
  std::vector<std::string> gids, sids, labels;
  for (std::size_t g = 0; g < genes; ++g) gids.push_back("g" + std::to_string(g));
  for (std::size_t s = 0; s < n; ++s) {
    const bool b = s >= per_class;
    sids.push_back("s" + std::to_string(s));
    labels.emplace_back(b ? "B" : "A");
    for (std::size_t g = 0; g < genes; ++g)
      if ((g % 2 == 1) == b) v(static_cast<issrc::Index>(g), static_cast<issrc::Index>(s)) += gap;
  }
  return issrc::ExpressionDataset::from_tokens(std::move(v), std::move(gids), std::move(sids), labels);
}

inline std::vector<double> row_of(const issrc::Matrix& m, issrc::Index r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (issrc::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

}  // namespace testutil
