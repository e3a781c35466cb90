#include "pnpcsi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pnpcsi {

namespace {

void check_same_shape(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("metric inputs differ in shape: " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

}  // namespace

double nmse_ratio(const CMatrix& est, const CMatrix& ref) {
  check_same_shape(est, ref);
  const double energy = ref.squaredNorm();
  if (!(energy > 0.0)) throw NumericError("NMSE reference has zero norm");
  return (est - ref).squaredNorm() / energy;
}

double ratio_to_db(double ratio) {
  if (std::isnan(ratio)) return ratio;
  if (!(ratio > 0.0)) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

double nmse_db(const CMatrix& est, const CMatrix& ref) {
  return ratio_to_db(nmse_ratio(est, ref));
}

double nmse_db(std::span<const CMatrix> est, std::span<const CMatrix> ref) {
  if (est.size() != ref.size())
    throw DimensionError("NMSE batch sizes differ");
  if (est.empty()) throw InvalidArgument("NMSE of an empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) sum += nmse_ratio(est[i], ref[i]);
  return ratio_to_db(sum / static_cast<double>(est.size()));
}

CosResult cos_similarity(const CMatrix& est, const CMatrix& ref) {
  check_same_shape(est, ref);
  constexpr double kGuard = 1e-12;
  CosResult out;
  double sum = 0.0;
  int kept = 0;
  for (Eigen::Index r = 0; r < ref.rows(); ++r) {
    const double ne = est.row(r).norm();
    const double nr = ref.row(r).norm();
    if (nr < kGuard) {
      ++out.excluded_rows;
      continue;
    }
    ++kept;
    // A vanished estimate row carries no direction: similarity 0.
    if (ne < kGuard) continue;
    // Eigen conjugates the first operand, so this is est_r^H ref_r.
    const cplx inner = est.row(r).dot(ref.row(r));
    sum += std::min(1.0, std::abs(inner) / (ne * nr));
  }
  if (kept == 0) throw NumericError("cosine similarity: every reference row has zero norm");
  out.value = sum / kept;
  return out;
}

}  // namespace pnpcsi
