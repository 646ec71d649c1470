#pragma once

#include "vstpr/fitting.hpp"
#include "vstpr/imaging.hpp"
#include "vstpr/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vstpr {

enum class FitStatus { resolved, unresolved, failed };
std::string to_string(FitStatus s);

// Robust per-point noise estimate: 1.4826 * MAD of first differences / sqrt(2).
double noise_floor(const std::vector<double>& y);
std::vector<double> boxcar(const std::vector<double>& y, int width);

struct GaussianFit {
  double center = 0, sigma = 0, amplitude = 0;
  MatrixXd covariance;
  double residual_norm = 0, initial_residual_norm = 0;
  double operator()(double x) const;
};

GaussianFit fit_gaussian(const Profile& p);

// Y(x) = A [G(x0 - d) + G(x0 + d) - G(x0 - D) - G(x0 + D)], G Gaussian of width sigma,
// d = 2 v_r dT, D = v_r T_i.
struct DoubletFit {
  double center = 0, sigma = 0, amplitude = 0;
  double inner = 0;    // d
  double outer = 0;    // D
  bool inner_free = false;
  MatrixXd covariance; // (center, sigma, amplitude[, inner])
  double residual_norm = 0, initial_residual_norm = 0;
  int iterations = 0;

  double splitting() const { return 2.0 * std::abs(inner); }
  double operator()(double x) const;
};

struct DoubletOptions {
  bool free_splitting = false;
  std::optional<double> center_guess;
  std::optional<double> sigma_guess;
};

double doublet_model(double x, double center, double sigma, double amplitude, double inner, double outer);

DoubletFit fit_doublet(const Profile& p, double image_time, double dT, const AtomSpecies& sp,
                      const DoubletOptions& opt = {});

// Zero-area pair A [g(x; c, s1) - (s1/s2) g(x; c, s2)].
struct StripeFit {
  double center = 0;
  double sigma = 0;     // s1
  double sigma_neg = 0; // s2
  double amplitude = 0; // peak height A (1 - s1/s2)
  int label = 0;
  MatrixXd covariance;  // (center, amplitude, sigma, s2/s1 - 1)
  double center_err = 0;

  double operator()(double x) const;
  double positive_area() const;
};

struct StripeFitResult {
  FitStatus status = FitStatus::failed;
  std::vector<StripeFit> stripes;
  double residual_norm = 0;
  double initial_residual_norm = 0;
  double separation = 0, separation_err = 0;
  double feature_width = 0; // FWHM of the dominant positive lobe

  // derived field
  double omega_L = 0, omega_L_err = 0;
  double field = 0, field_err = 0;
  double omega_from_separation = 0;
  // unresolved only: |B| <= k w / (T_map gyromag) from the single-feature width
  double field_upper_bound = 0;
  double central_amplitude = 0;
  double central_significance = 0;
  double noise_floor = 0;
  std::string method;
  std::string message;
};

struct ZeroAreaOptions {
  int smoothing = 5;
  double min_separation = 290e-6;  // m, closer maxima merge into one stripe
  double relative_threshold = 0.1; // of the strongest smoothed maximum
  double noise_threshold = 5.0;    // in units of the smoothed noise floor
};

StripeFitResult fit_stripes_zero_area(const Profile& p, const ZeroAreaOptions& opt = {});

struct FieldEstimate {
  double omega_L = 0; // rad/s
  double field = 0;   // G
};

FieldEstimate separation_to_field(double s, double t_map, const AtomSpecies& sp, int dm_pair = 2);

struct ScanPoint {
  double current = 0; // A
  double omega_L = 0; // rad/s
  double sigma = 0;   // optional uncertainty, 0 when unknown
};

struct ScanFitResult {
  double alpha = 0, I0 = 0, B_perp = 0;
  double alpha_err = 0, I0_err = 0, B_perp_err = 0;
  std::vector<double> residuals; // rad/s
  double residual_norm = 0;
  bool ill_conditioned = false;
  std::string warning;

  double omega(double I, const AtomSpecies& sp) const;
};

ScanFitResult fit_hyperbola(const std::vector<ScanPoint>& pts, const AtomSpecies& sp);

// Peak-to-trough of the fitted doublet stripe over the no-pulse profile at the stripe center.
double contrast(const Profile& diff, const Profile& off, double image_time, double dT,
                const AtomSpecies& sp);

} // namespace vstpr
