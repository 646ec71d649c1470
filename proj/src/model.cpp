#include "vstpr/model.hpp"
#include "vstpr/errors.hpp"

#include <cmath>
#include <string>

namespace vstpr {

void AtomSpecies::validate() const {
  std::vector<std::string> bad;
  if (!(mass > 0)) bad.push_back("species.mass_kg");
  if (!(wavelength > 0)) bad.push_back("species.wavelength_m");
  if (!(gyromag > 0)) bad.push_back("species.gyromag_hz_per_gauss");
  if (!bad.empty()) throw InvalidConfig("species constants must be positive", bad);
}

Vec3 FieldVector::axis(double eps) const {
  double m = magnitude();
  if (m < eps) return Vec3::Zero();
  return B / m;
}

FieldVector field_at(const CoilModel& c) {
  return FieldVector{c.alpha.cwiseProduct(c.current - c.I0) + c.background};
}

double larmor_frequency(double field_gauss, const AtomSpecies& sp) {
  return sp.gyromag * std::abs(field_gauss);
}

double larmor_frequency(const FieldVector& B, const AtomSpecies& sp) {
  return larmor_frequency(B.magnitude(), sp);
}

double resonant_velocity(int delta_m, double omega_L, double delta12, const AtomSpecies& sp) {
  if (delta_m < -2 || delta_m > 2)
    throw InvalidConfig("delta_m must lie in [-2, 2], got " + std::to_string(delta_m));
  return (delta_m * omega_L + delta12) / (2.0 * sp.k());
}

} // namespace vstpr
