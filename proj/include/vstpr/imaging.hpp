#pragma once

#include "vstpr/ensemble.hpp"
#include "vstpr/model.hpp"
#include "vstpr/raman.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vstpr {

enum class NoiseMode { none, poisson };

struct ImagingConfig {
  double image_time = 40e-3;            // T_i, s
  Vec3 gravity{0.0, 0.0, -9.81};        // m/s^2
  double pixel_size = 24e-6;            // m
  int width = 1024;                     // columns, along the beam axis x
  int height = 1024;                    // rows, along z (row 0 on top)
  double photon_scale = 10.0;           // counts per atom
  NoiseMode noise = NoiseMode::none;

  void validate() const;
};

enum class FrameKind { pulse_on, pulse_off, difference };

std::string to_string(FrameKind k);

// Everything downstream analysis needs to interpret a frame.
struct FrameMeta {
  FrameKind kind = FrameKind::pulse_off;
  double pixel_size = 24e-6;
  // fractional pixel coordinates of the release point: x = (col + 0.5 - origin_col) * pixel_size,
  // z = (origin_row - row - 0.5) * pixel_size
  double origin_col = 0;
  double origin_row = 0;
  double image_time = 40e-3;
  bool pulse_on = false;
  Vec3 currents = Vec3::Zero();
  Vec3 field = Vec3::Zero();
  std::uint64_t seed = 0;
  std::size_t atom_count = 0;
  std::size_t atoms_outside = 0;
  bool cloud_outside = false;
  double photon_scale = 10.0;
  NoiseMode noise = NoiseMode::none;
  PulseConfig pulse;
  AtomSpecies species;
  std::vector<std::string> parents;
};

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<double> counts; // row-major
  FrameMeta meta;

  double& at(int row, int col) { return counts[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return counts[static_cast<std::size_t>(row) * width + col]; }
  double x_of_col(int col) const { return (col + 0.5 - meta.origin_col) * meta.pixel_size; }
  double total() const;
};

struct Profile {
  std::vector<double> x; // m
  std::vector<double> y; // counts
  std::size_t size() const { return x.size(); }
};

void propagate(std::vector<AtomState>& atoms, double from_t, double to_t, const Vec3& gravity);

// Histogram of current atom positions onto the camera plane (x horizontal, z vertical).
Frame project(const std::vector<AtomState>& atoms, const ImagingConfig& img);

// Pixel coordinates of the release point for a frame centered on the free-fall cloud.
void frame_origin(const ImagingConfig& img, double& origin_col, double& origin_row);

struct SequenceInputs {
  CoilModel coils;
  PulseConfig pulse;
  ImagingConfig imaging;
  AtomSpecies species;
  std::uint64_t seed = 1;
  SamplingMode sampling = SamplingMode::quasi;
};

// release -> T_r -> pulse -> T_i -> projection. `initial` is the sampled cloud at release.
Frame run_sequence(const std::vector<AtomState>& initial, const SequenceInputs& in, bool pulse_on);

Frame difference_frame(const Frame& with_pulse, const Frame& without_pulse);

// Sums rows [row_begin, row_end) per column.
Profile cross_section(const Frame& frame, int row_begin, int row_end);
Profile cross_section(const Frame& frame);

} // namespace vstpr
