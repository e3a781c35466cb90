#pragma once

// Reconstruction quality metrics.

#include <span>

#include "pnpcsi/common.hpp"

namespace pnpcsi {

// Exact recovery is reported at this level so CSV values stay numeric.
inline constexpr double kNmseFloorDb = -300.0;

// ||est - ref||_F^2 / ||ref||_F^2. Throws NumericError for a zero reference
// and DimensionError for mismatched shapes.
double nmse_ratio(const CMatrix& est, const CMatrix& ref);

// 10 log10(ratio), floored at kNmseFloorDb.
double ratio_to_db(double ratio);

double nmse_db(const CMatrix& est, const CMatrix& ref);

// 10 log10 of the mean per-sample ratio.
double nmse_db(std::span<const CMatrix> est, std::span<const CMatrix> ref);

struct CosResult {
  double value = 0.0;      // mean over kept rows, in [0, 1]
  int excluded_rows = 0;   // reference rows with norm below 1e-12
};

// Mean over rows of |est_r^H ref_r| / (||est_r|| ||ref_r||). Reference rows
// of zero norm are skipped; a zero estimate row scores 0. Throws
// NumericError if every reference row is zero.
CosResult cos_similarity(const CMatrix& est, const CMatrix& ref);

}  // namespace pnpcsi
