#pragma once

// Line shape of velocity-selected stripes in Doppler-detuning space.
//
// Profile abscissa maps to Doppler detuning D = 2 k v through x = c + kappa * D.
// Each resonance line/process selects the box |delta_eff| < a Omega, clipped
// where two processes of the same channel overlap. Selected atoms leave a
// hole at the box and reappear shifted by the kick, both blurred by the cloud
// size sigma.

#include "vstpr/analysis.hpp"
#include "vstpr/imaging.hpp"

#include <optional>
#include <vector>

namespace vstpr {

struct ResonanceContext {
  AtomSpecies species;
  PulseConfig pulse;
  double image_time = 40e-3;
  double kappa = 0;        // m per rad/s
  double cloud_sigma = 0;  // m, no-pulse profile width
  std::vector<int> channels{-1, 0, 1};
};

// kappa defaults to t_map / (2k)
ResonanceContext make_resonance_context(const FrameMeta& meta, double t_map, double cloud_sigma,
                                        std::optional<double> kappa = std::nullopt);

enum ResonanceParam { rp_center = 0, rp_omega, rp_sigma, rp_h1, rp_h0, rp_kappa, rp_count };

struct Window {
  double lo = 0, hi = 0;    // Doppler detuning bounds, rad/s
  double dlo = 0, dhi = 0;  // d/d omega_L
  int process = 1;
  int channel = 0;
};

std::vector<Window> resonance_windows(int channel, double omega_L, const ResonanceContext& ctx);

// y(x) for full parameters (rp_count); optional Jacobian columns for every parameter.
void resonance_model(const std::vector<double>& x, const VectorXd& p, const ResonanceContext& ctx,
                     VectorXd& y, MatrixXd* J, bool central_only = false);

struct ResonanceFitOptions {
  bool free_kappa = false;
  bool free_omega = true;
  bool free_h1 = true;
  bool free_h0 = true;
  std::optional<double> omega_guess;
};

struct ResonanceFit {
  VectorXd params;     // rp_count
  MatrixXd covariance; // rp_count x rp_count, zero for fixed parameters
  double residual_norm = 0, initial_residual_norm = 0;
  double central_amplitude = 0;

  double omega_L() const { return std::abs(params[rp_omega]); }
  double omega_err() const { return std::sqrt(std::max(0.0, covariance(rp_omega, rp_omega))); }
};

ResonanceFit fit_resonance(const Profile& diff, double cloud_center, const ResonanceContext& ctx,
                           const ResonanceFitOptions& opt = {});

struct CalibrationResult {
  double kappa = 0;        // m per rad/s: position per unit two-photon detuning
  double kappa_err = 0;
  double comb_spacing = 0; // m between adjacent orders
  double comb_spacing_err = 0;
  double omega_m = 0;
  double t_map_effective = 0; // 2 k kappa
  int stripes = 0;
  std::string method;
};

// Comb of zero-area stripes only: kappa = spacing / omega_m.
CalibrationResult calibrate_with_sidebands(const Profile& diff, double omega_m, double t_map,
                                           const AtomSpecies& sp);

// Comb estimate refined with the window model on a null-field sideband run.
CalibrationResult calibrate_with_sidebands(const Profile& diff, const Profile& off, const FrameMeta& meta,
                                           double t_map);

struct AnalysisConfig {
  double t_map = 0; // 0: use the frame's image time
  int band_begin = 0;
  int band_end = -1; // -1: through the last row
  // residual drop, in units of the noise variance, needed to keep a dm = 0 component
  double central_threshold = 25.0;
};

// Full frame-level field measurement from a difference profile and its no-pulse reference.
StripeFitResult measure_field(const Profile& diff, const Profile& off, const FrameMeta& meta,
                              const AnalysisConfig& cfg,
                              const std::optional<CalibrationResult>& cal = std::nullopt);

} // namespace vstpr
