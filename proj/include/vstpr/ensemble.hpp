#pragma once

#include "vstpr/model.hpp"

#include <array>
#include <climits>
#include <cstdint>
#include <vector>

namespace vstpr {

enum class SamplingMode { quasi, pseudo };

// Per-atom random coordinates. Each (atom, dim) pair maps to one uniform in
// (0,1) independent of evaluation order.
//   quasi:  randomized Halton sequence, digit permutations drawn from the seed
//   pseudo: counter-based splitmix64 hash of (seed, atom, dim)
class AtomSampler {
public:
  enum Dim { vx = 0, x, channel, flip, z, vz, y, vy, dim_count };

  AtomSampler(std::uint64_t seed, SamplingMode mode);

  double uniform(std::size_t atom, Dim d) const;
  double normal(std::size_t atom, Dim d) const;

  std::uint64_t seed() const { return seed_; }
  SamplingMode mode() const { return mode_; }

private:
  std::uint64_t seed_;
  SamplingMode mode_;
  // perms_[d][j][digit]
  std::array<std::vector<std::vector<std::uint8_t>>, dim_count> perms_;
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

struct EnsembleConfig {
  std::size_t atom_count = 100000;
  double position_sigma = 125e-6; // m
  double temperature = 200e-6;    // K
  std::uint64_t rng_seed = 1;
  SamplingMode sampling = SamplingMode::quasi;

  void validate() const;
};

inline constexpr int channel_unassigned = INT_MIN;

struct AtomState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  int channel = channel_unassigned;
  double flipped_population = 0.0;
};

double velocity_sigma(double temperature, const AtomSpecies& sp);

std::vector<AtomState> sample_ensemble(const EnsembleConfig& cfg, const AtomSpecies& sp);

} // namespace vstpr
