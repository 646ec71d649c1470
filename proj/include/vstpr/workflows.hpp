#pragma once

#include "vstpr/analysis.hpp"
#include "vstpr/config.hpp"
#include "vstpr/faraday.hpp"
#include "vstpr/imaging.hpp"
#include "vstpr/resonance.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vstpr {

struct FrameSet {
  Frame on, off, diff;
  Profile diff_profile, off_profile;
};

// Holds the sampled cloud so repeated runs at one seed share it.
class Simulator {
public:
  explicit Simulator(const ExperimentConfig& cfg);

  FrameSet run(const ExperimentConfig& cfg) const;
  FrameSet run() const { return run(cfg_); }
  const ExperimentConfig& config() const { return cfg_; }
  const std::vector<AtomState>& atoms() const { return *atoms_; }

private:
  ExperimentConfig cfg_;
  std::shared_ptr<const std::vector<AtomState>> atoms_;
};

// Profiles over the configured row band.
FrameSet make_profiles(Frame on, Frame off, const AnalysisConfig& a);

StripeFitResult analyze(const FrameSet& fs, const ExperimentConfig& cfg,
                        const std::optional<CalibrationResult>& cal = std::nullopt);

// Null-field run driving the configured calibration sidebands.
ExperimentConfig calibration_config(const ExperimentConfig& cfg);
CalibrationResult calibrate(const Simulator& sim);

struct ScanSample {
  Vec3 currents = Vec3::Zero();
  StripeFitResult fit;
};

struct ScanResult {
  int axis = 2;
  std::vector<ScanSample> samples;
  std::vector<ScanPoint> points; // resolved samples only
  std::optional<ScanFitResult> fit;
  std::string message;
};

std::vector<double> linspace(double from, double to, int steps);

ScanResult current_scan(const Simulator& sim, int axis, const std::vector<double>& currents,
                        const std::optional<CalibrationResult>& cal);

struct TimingPoint {
  double start_time = 0; // T_r
  double ratio = 0;      // T_r / T_i
  double contrast = 0;
  double splitting = 0;  // fitted positive-lobe splitting, m
  double expected_splitting = 0;
  std::string status;
};

// Doublet timing offset |T_i/2 - T_r|.
double doublet_offset(double start_time, double image_time);

std::vector<TimingPoint> timing_sweep(const Simulator& sim, const std::vector<double>& start_times);

struct FaradaySample {
  Vec3 currents = Vec3::Zero();
  double true_field = 0;
  FrequencyEstimate estimate;
};

struct FaradayScanResult {
  int axis = 2;
  std::vector<FaradaySample> samples;
  std::optional<ScanFitResult> fit;
  std::string message;
};

FaradayScanResult faraday_scan(const ExperimentConfig& cfg, int axis, const std::vector<double>& currents);

struct NullStep {
  int sweep = 0;
  int axis = 0;
  std::string stage; // "search" | "refine" | "set"
  Vec3 currents = Vec3::Zero();
  double metric = 0; // |B| estimate, or its upper bound when unresolved, G
  std::string status;
};

struct NullResult {
  Vec3 start = Vec3::Zero();
  Vec3 currents = Vec3::Zero();
  int sweeps = 0;
  bool converged = false;
  std::vector<NullStep> history;
  StripeFitResult final_fit;
  double field_upper_bound = 0; // G
};

using NullObserver = std::function<void(const NullStep&)>;

// Cyclic coordinate descent: golden-section search per axis on the field estimate, then a
// hyperbola fit to points either side of the minimum to locate the compensation current.
NullResult null_field(const Simulator& sim, const std::optional<CalibrationResult>& cal,
                      const NullObserver& observer = {});

int axis_index(const std::string& name);
std::string axis_name(int axis);

} // namespace vstpr
