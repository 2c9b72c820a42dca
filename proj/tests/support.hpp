#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "hayama/design.hpp"
#include "hayama/util.hpp"

namespace hayama::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hayama") {
    static std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path fixture_dir() { return std::filesystem::path(HAYAMA_FIXTURE_DIR); }

inline Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Random design with `n_bin` sparse 0/1 columns (each entry on with
/// probability `density`) and `n_dense` standard-normal columns.
inline learn::DesignMatrix random_design(std::mt19937_64& rng, std::size_t n, std::size_t n_bin,
                                         std::size_t n_dense, double density = 0.3) {
  learn::DesignMatrix x;
  x.n_rows = n;
  x.n_binary = n_bin;
  x.n_dense = n_dense;
  std::normal_distribution<double> gauss;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n_bin; ++c)
      if (uniform01(rng) < density) x.cols.push_back(static_cast<std::uint32_t>(c));
    x.offsets.push_back(x.cols.size());
    for (std::size_t k = 0; k < n_dense; ++k) x.dense.push_back(gauss(rng));
  }
  for (std::size_t c = 0; c < n_bin + n_dense; ++c) x.names.push_back("c" + std::to_string(c));
  return x;
}

/// Labels drawn from a logistic model over x with the given weights; both
/// classes are forced to appear.
inline std::vector<std::uint8_t> logistic_labels(std::mt19937_64& rng, const learn::DesignMatrix& x,
                                                 const std::vector<double>& w, double bias) {
  std::vector<double> m(x.n_rows);
  x.multiply(w, bias, m);
  std::vector<std::uint8_t> y(x.n_rows);
  for (std::size_t i = 0; i < x.n_rows; ++i) y[i] = uniform01(rng) < 1.0 / (1.0 + std::exp(-m[i]));
  if (x.n_rows >= 2) {
    y[0] = 1;
    y[1] = 0;
  }
  return y;
}

}  // namespace hayama::testing
