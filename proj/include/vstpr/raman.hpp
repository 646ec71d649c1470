#pragma once

#include "vstpr/ensemble.hpp"
#include "vstpr/model.hpp"

#include <array>
#include <vector>

namespace vstpr {

enum class PulseMode { instantaneous_pi, rabi_cycling };

struct Sideband {
  int order = 0;
  double amplitude = 1.0;
};

struct PulseConfig {
  double rabi_freq = phys::two_pi * 10e3;        // rad/s
  double duration = 5e-3;                        // s
  double start_time = 15e-3;                     // T_r, s
  double delta12 = 0.0;                          // rad/s
  std::vector<Sideband> sidebands;               // empty: carrier only
  double modulation_freq = phys::two_pi * 100e3; // rad/s
  double light_shift = 0.0;                      // rad/s
  PulseMode mode = PulseMode::instantaneous_pi;
  double dm2_weight_scale = 0.0;

  // Lines actually driven; the bare carrier when no sidebands are configured.
  std::vector<Sideband> lines() const;
  void validate() const;
};

// Net detuning for the process that kicks by process*2 v_r along x (process = +1
// is the default). line_offset shifts delta12 for a sideband line.
double two_photon_detuning(double v_x, int delta_m, double omega_L, const PulseConfig& cfg,
                           const AtomSpecies& sp, int process = +1, double line_offset = 0.0);

double transfer_probability(double delta, double omega, double t);

// Time average of transfer_probability over [0, t].
double mean_transfer_probability(double delta, double omega, double t);

// Weights for delta m = -2..2 (index dm + 2).
std::array<double, 5> channel_weights(const FieldVector& B, const PulseConfig& cfg);

void assign_channels(std::vector<AtomState>& atoms, const FieldVector& B, const PulseConfig& cfg,
                     const AtomSampler& rng);

// Resonance an atom is assigned to: the line/process with the largest
// Rabi envelope a^2 Omega^2 / (a^2 Omega^2 + delta^2).
struct LineChoice {
  int process = +1;
  double amplitude = 1.0;
  double detuning = 0.0;
};

LineChoice nearest_line(double v_x, int delta_m, double omega_L, const PulseConfig& cfg,
                        const AtomSpecies& sp, const std::vector<Sideband>& lines);

// Advances atoms from start_time to start_time + duration, applying the pulse.
void apply_pulse(std::vector<AtomState>& atoms, const FieldVector& B, const PulseConfig& cfg,
                 const AtomSpecies& sp, const AtomSampler& rng, const Vec3& gravity,
                 double image_time);

} // namespace vstpr
