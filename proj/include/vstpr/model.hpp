#pragma once

#include <Eigen/Core>
#include <numbers>

namespace vstpr {

namespace phys {
inline constexpr double hbar = 1.054571817e-34;
inline constexpr double k_B = 1.380649e-23;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
} // namespace phys

using Vec3 = Eigen::Vector3d;

struct AtomSpecies {
  double mass = 1.40999e-25;                     // kg, 85Rb
  double wavelength = 780.24e-9;                 // m
  double gyromag = phys::two_pi * 466.74e3;      // rad/s per gauss

  double k() const { return phys::two_pi / wavelength; }
  double recoil_velocity() const { return phys::hbar * k() / mass; }
  // hbar k^2 / 2M; the two-photon recoil term is 4x this
  double recoil_freq() const { return phys::hbar * k() * k() / (2.0 * mass); }

  void validate() const;
};

struct FieldVector {
  Vec3 B = Vec3::Zero(); // gauss

  static constexpr double default_epsilon = 1e-9;

  double magnitude() const { return B.norm(); }
  bool axis_defined(double eps = default_epsilon) const { return magnitude() >= eps; }
  // unit quantization axis; zero vector when undefined
  Vec3 axis(double eps = default_epsilon) const;
};

// Per axis: B_i = alpha_i (I_i - I0_i) + b_i
struct CoilModel {
  Vec3 alpha{1.524, 1.524, 1.524};   // G/A
  Vec3 I0{0.2431, 0.2431, 0.2431};   // A
  Vec3 current{0.2431, 0.2431, 0.2431};
  Vec3 background = Vec3::Zero();   // G
};

FieldVector field_at(const CoilModel& coils);

double larmor_frequency(const FieldVector& B, const AtomSpecies& sp);
double larmor_frequency(double field_gauss, const AtomSpecies& sp);

// x-velocity of the class with 2k v = dm*omega_L + delta12. dm in [-2, 2].
double resonant_velocity(int delta_m, double omega_L, double delta12, const AtomSpecies& sp);

} // namespace vstpr
