#pragma once

#include <random>

#include "pnpcsi/common.hpp"

namespace pnpcsi::testing {

inline CMatrix random_cmatrix(int rows, int cols, std::mt19937_64& rng,
                              double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double re = g(rng);
    const double im = g(rng);
    m.data()[i] = cplx(re, im);
  }
  return m;
}

inline double rel_diff(const CMatrix& a, const CMatrix& b) {
  const double den = std::max(b.norm(), 1e-300);
  return (a - b).norm() / den;
}

}  // namespace pnpcsi::testing

#include <filesystem>
#include <string>
#include <unistd.h>

namespace pnpcsi::testing {

// Per-process scratch directory under the system temp dir.
inline std::string temp_path(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("pnpcsi_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace pnpcsi::testing
