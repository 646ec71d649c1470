#pragma once

#include "vstpr/ensemble.hpp"
#include "vstpr/faraday.hpp"
#include "vstpr/imaging.hpp"
#include "vstpr/model.hpp"
#include "vstpr/raman.hpp"
#include "vstpr/resonance.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vstpr {

struct NullOptions {
  double bracket = 0.25;   // A, golden-section half-range per axis
  double tolerance = 0.01;  // A, golden-section stop width
  int sweeps = 3;
  std::vector<double> refine_offsets{0.030, 0.045, 0.060, 0.075}; // A, both sides
  double converged_step = 0.001; // A, stop when no axis moves more than this
  double probe_bias = 0.15;      // G, transverse field added on z while tuning the beam axis x
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  AtomSpecies species;
  CoilModel coils;
  EnsembleConfig ensemble;
  PulseConfig pulse;
  ImagingConfig imaging;
  AnalysisConfig analysis;
  FaradayParams faraday;
  NullOptions null;
  // sideband comb used by `calibrate` when pulse.sidebands is empty
  std::vector<Sideband> calibration_sidebands{{-3, 1}, {-2, 1}, {-1, 1}, {0, 1}, {1, 1}, {2, 1}, {3, 1}};

  // cross-field checks; throws InvalidConfig listing every offending key
  void validate() const;
  SequenceInputs sequence() const;
};

// key = value lines, '#' comments. Unknown keys are errors.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path);
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& cfg);

std::vector<double> parse_list(const std::string& s);
std::vector<Sideband> parse_sidebands(const std::string& s);

} // namespace vstpr
