#pragma once

#include "vstpr/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vstpr {

struct FaradayParams {
  double amplitude = 1.0;
  double decay = 2e-3;    // s
  double phase = 0.0;     // rad
  double offset = 0.0;
  double rate = 2e6;      // samples/s
  double duration = 5e-3; // s
  double noise_sigma = 0.0;

  void validate() const;
};

struct FaradayTrace {
  std::vector<double> t;
  std::vector<double> signal;
  FaradayParams params;
  double omega_L = 0; // rad/s used for synthesis (0 when imported)
};

// A exp(-t/tau) sin(omega_L t + phi) + offset + N(0, noise_sigma)
FaradayTrace synthesize_trace(const FieldVector& B, const AtomSpecies& sp, const FaradayParams& p,
                              std::uint64_t seed);

struct FrequencyEstimate {
  bool precession = false; // false: no spectral peak above the noise floor
  double omega_L = 0, omega_err = 0;
  double amplitude = 0, decay = 0, phase = 0, offset = 0;
  double residual_norm = 0;
  double peak_ratio = 0;   // spectral peak power over median power
  std::string status;      // "ok" | "no-precession"
};

FrequencyEstimate extract_frequency(const FaradayTrace& tr);

} // namespace vstpr
