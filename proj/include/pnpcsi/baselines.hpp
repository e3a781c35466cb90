#pragma once

// Classical comparison estimators: LS, empirical LMMSE and spline
// extrapolation.

#include <span>
#include <string>
#include <vector>

#include "pnpcsi/tasks.hpp"

namespace pnpcsi {

// Frequency-domain LMMSE filter for one antenna column:
// A = R_{h,hp} (R_{hp,hp} + sigma2 I)^-1.
struct LmmseFilter {
  int column = 0;
  std::vector<int> pilot_rows;
  CMatrix a_lmmse;   // N_s x N_sp
  CMatrix r_h_hp;    // N_s x N_sp
  CMatrix r_hp_hp;   // N_sp x N_sp, Hermitian PSD
  double sigma2 = 0.0;
};

// Empirical correlations over `train` for one column. Throws NumericError
// when sigma2 = 0 and R_{hp,hp} is singular, InvalidArgument for an empty
// set or negative sigma2.
LmmseFilter fit_lmmse(std::span<const ChannelMatrix> train,
                      const PilotPattern& pattern, double sigma2, int column);

std::vector<LmmseFilter> fit_lmmse_all(std::span<const ChannelMatrix> train,
                                       const PilotPattern& pattern,
                                       double sigma2);

// Per column h = A_LMMSE h_p^LS. Throws InvalidArgument if the filters were
// fitted for a different pattern.
ChannelMatrix lmmse_estimate(const PilotObservation& obs,
                             const PilotPattern& pattern,
                             const std::vector<LmmseFilter>& filters);

// Joint filter over the whole vectorized grid; only practical at desk scale.
struct JointLmmse {
  std::vector<std::pair<int, int>> pilots;  // (row, col), row-major order
  int n_subcarriers = 0;
  int n_antennas = 0;
  CMatrix a_lmmse;  // (N_s N_t) x N_pilots
  double sigma2 = 0.0;
};

JointLmmse fit_joint_lmmse(std::span<const ChannelMatrix> train,
                           const PilotPattern& pattern, double sigma2);
ChannelMatrix joint_lmmse_estimate(const PilotObservation& obs,
                                   const JointLmmse& filter);

// Full LS baseline: pilot LS plus nearest-pilot fill.
ChannelMatrix ls_estimate(const PilotObservation& obs,
                          const PilotPattern& pattern);

// Spline antenna-extrapolation baseline.
ChannelMatrix spline_extrapolate(const CMatrix& h_tilde,
                                 const AntennaSelection& sel);

// Filter cache in the PNPW tensor container.
void save_filters(const std::string& path,
                  const std::vector<LmmseFilter>& filters);
std::vector<LmmseFilter> load_filters(const std::string& path);

}  // namespace pnpcsi
