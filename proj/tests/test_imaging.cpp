#include "vstpr/errors.hpp"
#include "vstpr/imaging.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace vstpr;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<AtomState> cloud(std::size_t n, double temperature = 200e-6, std::uint64_t seed = 1) {
  EnsembleConfig c;
  c.atom_count = n;
  c.temperature = temperature;
  c.rng_seed = seed;
  return sample_ensemble(c, AtomSpecies{});
}

SequenceInputs field_run(double gauss_z) {
  SequenceInputs in;
  in.coils.current = in.coils.I0;
  in.coils.current.z() += gauss_z / in.coils.alpha.z();
  return in;
}

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

} // namespace

TEST_SUITE("imaging") {

TEST_CASE("propagate examples") {
  AtomState a;
  a.position = Vec3(1e-4, -2e-4, 3e-4);
  a.velocity = Vec3(0.039, 0, 0);
  std::vector<AtomState> v{a};
  propagate(v, 0.01, 0.01, Vec3(0, 0, -9.81));
  CHECK(v[0].position == a.position);
  CHECK(v[0].velocity == a.velocity);

  propagate(v, 0.0, 0.04, Vec3::Zero());
  CHECK(v[0].position.x() - a.position.x() == Approx(1.560e-3).epsilon(1e-12));

  AtomState b;
  std::vector<AtomState> w{b};
  propagate(w, 0.0, 0.04, Vec3(0, 0, -9.81));
  CHECK(w[0].position.z() == Approx(-7.848e-3).epsilon(1e-12));
  CHECK(w[0].velocity.z() == Approx(-9.81 * 0.04).epsilon(1e-12));

  CHECK_THROWS_AS(propagate(w, 0.02, 0.01, Vec3::Zero()), InvalidConfig);
}

TEST_CASE("propagation composes") {
  auto a = cloud(1000);
  auto b = a;
  Vec3 g(0.1, 0, -9.81);
  propagate(a, 0.0, 0.04, g);
  propagate(b, 0.0, 0.013, g);
  propagate(b, 0.013, 0.04, g);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (a[i].position - b[i].position).norm());
  CHECK(worst < 1e-15);
}

TEST_CASE("raw frame conserves atoms and is non-negative") {
  auto atoms = cloud(50000, 20e-6);
  SequenceInputs in;
  Frame f = run_sequence(atoms, in, false);
  CHECK(f.meta.atoms_outside == 0);
  CHECK(f.total() == Approx(50000 * in.imaging.photon_scale).epsilon(1e-15));
  CHECK(*std::min_element(f.counts.begin(), f.counts.end()) >= 0.0);
  CHECK(f.width == 1024);
  CHECK(f.height == 1024);
}

TEST_CASE("zero Rabi frequency leaves the frame unchanged") {
  auto atoms = cloud(20000);
  SequenceInputs in = field_run(0.2);
  in.pulse.rabi_freq = 0;
  Frame on = run_sequence(atoms, in, true);
  Frame off = run_sequence(atoms, in, false);
  CHECK(on.counts == off.counts);
  Frame d = difference_frame(on, off);
  CHECK(std::all_of(d.counts.begin(), d.counts.end(), [](double c) { return c == 0.0; }));
}

TEST_CASE("photon scale is linear") {
  auto atoms = cloud(10000);
  SequenceInputs in = field_run(0.1);
  Frame a = run_sequence(atoms, in, true);
  in.imaging.photon_scale *= 2;
  Frame b = run_sequence(atoms, in, true);
  bool ok = true;
  for (std::size_t i = 0; i < a.counts.size(); ++i) ok &= b.counts[i] == 2 * a.counts[i];
  CHECK(ok);
}

TEST_CASE("pulse-off frames ignore the field") {
  auto atoms = cloud(10000);
  Frame a = run_sequence(atoms, field_run(0.0), false);
  Frame b = run_sequence(atoms, field_run(0.7), false);
  CHECK(a.counts == b.counts);
}

TEST_CASE("difference frame conserves atom number and records parents") {
  auto atoms = cloud(50000, 20e-6);
  SequenceInputs in = field_run(0.3);
  Frame on = run_sequence(atoms, in, true);
  Frame off = run_sequence(atoms, in, false);
  REQUIRE(on.meta.atoms_outside == 0);
  Frame d = difference_frame(on, off);
  double pos = 0;
  for (double c : d.counts) pos += std::max(0.0, c);
  CHECK(pos > 0);
  CHECK(std::abs(d.total()) <= 1e-9 * pos);
  CHECK(d.meta.kind == FrameKind::difference);
  CHECK(d.meta.parents == std::vector<std::string>{"pulse_on", "pulse_off"});

  Frame z = difference_frame(on, on);
  CHECK(std::all_of(z.counts.begin(), z.counts.end(), [](double c) { return c == 0.0; }));
}

TEST_CASE("difference frame rejects mismatched geometry or seed") {
  auto atoms = cloud(1000);
  SequenceInputs in;
  Frame a = run_sequence(atoms, in, false);
  SequenceInputs in2 = in;
  in2.imaging.pixel_size = 25e-6;
  CHECK_THROWS_AS(difference_frame(a, run_sequence(atoms, in2, false)), GeometryMismatch);
  in2 = in;
  in2.imaging.width = 512;
  CHECK_THROWS_AS(difference_frame(a, run_sequence(atoms, in2, false)), GeometryMismatch);
  in2 = in;
  in2.seed = 9;
  CHECK_THROWS_AS(difference_frame(a, run_sequence(atoms, in2, false)), GeometryMismatch);
}

TEST_CASE("cross sections") {
  Frame f;
  f.width = 32;
  f.height = 20;
  f.counts.assign(32 * 20, 2.5);
  f.meta.origin_col = 16;
  f.meta.pixel_size = 1e-5;
  Profile p = cross_section(f, 3, 10);
  REQUIRE(p.size() == 32);
  for (double y : p.y) CHECK(y == Approx(7 * 2.5));
  CHECK(p.x[16] == Approx(0.5e-5));
  CHECK(p.x[1] - p.x[0] == Approx(1e-5));
  CHECK_THROWS_AS(cross_section(f, 5, 5), InvalidConfig);
  CHECK_THROWS_AS(cross_section(f, -1, 5), InvalidConfig);
  CHECK_THROWS_AS(cross_section(f, 0, 21), InvalidConfig);

  AtomState a;
  ImagingConfig img;
  img.gravity = Vec3::Zero();
  img.width = img.height = 64;
  Frame one = project({a}, img);
  Profile q = cross_section(one);
  int nonzero = 0;
  for (double y : q.y) nonzero += y != 0;
  CHECK(nonzero == 1);
  CHECK(sum(q.y) == Approx(img.photon_scale));
}

TEST_CASE("difference profile has zero area") {
  auto atoms = cloud(50000, 20e-6);
  SequenceInputs in = field_run(0.214);
  Frame d = difference_frame(run_sequence(atoms, in, true), run_sequence(atoms, in, false));
  Profile p = cross_section(d);
  CHECK(std::abs(sum(p.y)) < 1e-9);
}

TEST_CASE("stripes appear near plus and minus v0 T_i") {
  AtomSpecies sp;
  auto atoms = cloud(200000);
  // omega_L = 2 pi x 100 kHz
  double B = 100e3 / 466.74e3;
  SequenceInputs in = field_run(B);
  Frame d = difference_frame(run_sequence(atoms, in, true), run_sequence(atoms, in, false));
  Profile p = cross_section(d);
  double v0 = resonant_velocity(1, larmor_frequency(B, sp), 0.0, sp);
  CHECK(v0 * 0.04 == Approx(1.560e-3).epsilon(1e-3));
  // the depleted class sits at the resonant velocity, the kicked one a recoil kick further out
  auto extremum = [&](double lo, double hi, bool maximum) {
    double best = maximum ? -1e300 : 1e300, at = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p.x[i] > lo && p.x[i] < hi && (maximum ? p.y[i] > best : p.y[i] < best)) {
        best = p.y[i];
        at = p.x[i];
      }
    return at;
  };
  double xr = v0 * 0.04;
  for (double s : {-1.0, 1.0}) {
    double mid = 0.5 * (extremum(s > 0 ? 0.5 * xr : -2 * xr, s > 0 ? 2 * xr : -0.5 * xr, true) +
                        extremum(s > 0 ? 0.5 * xr : -2 * xr, s > 0 ? 2 * xr : -0.5 * xr, false));
    // within one recoil displacement v_r (T_i - T_r) = 0.15 mm plus a pixel or two
    CHECK(std::abs(mid - s * xr) < 0.2e-3);
  }
}

TEST_CASE("zero-temperature momentum classes separate by at least two sigma") {
  AtomSpecies sp;
  auto atoms = cloud(20000, 0.0);
  SequenceInputs in;
  in.coils.current = in.coils.I0;
  in.pulse.start_time = 1e-3;
  in.pulse.duration = 1e-4;
  in.pulse.rabi_freq = 2 * kPi * 20e3;
  in.imaging.image_time = 0.125e-3 / sp.recoil_velocity();
  in.imaging.gravity = Vec3::Zero();
  Frame on = run_sequence(atoms, in, true);
  Frame off = run_sequence(atoms, in, false);
  auto centroid = [](const Frame& f) {
    Profile p = cross_section(f);
    double m = 0, w = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m += p.x[i] * p.y[i];
      w += p.y[i];
    }
    return m / w;
  };
  double shift = std::abs(centroid(on) - centroid(off));
  double expect = 2 * sp.recoil_velocity() * (in.imaging.image_time - in.pulse.start_time - 0.5 * in.pulse.duration);
  CHECK(shift == Approx(expect).epsilon(0.02));
  CHECK(2 * sp.recoil_velocity() * in.imaging.image_time >= 2 * 125e-6);
}

TEST_CASE("cloud leaving the frame is flagged") {
  auto atoms = cloud(1000, 0.0);
  SequenceInputs in;
  in.imaging.width = in.imaging.height = 16;
  for (auto& a : atoms) a.position.x() += 1.0;
  Frame f = run_sequence(atoms, in, false);
  CHECK(f.meta.cloud_outside);
  CHECK(f.meta.atoms_outside == 1000);
  CHECK(f.total() == 0.0);
}

TEST_CASE("imaging validation") {
  ImagingConfig img;
  img.pixel_size = 0;
  CHECK_THROWS_AS(img.validate(), InvalidConfig);
  img = {};
  img.width = 8;
  CHECK_THROWS_AS(img.validate(), InvalidConfig);
  SequenceInputs in;
  in.pulse.start_time = 0.039;
  auto atoms = cloud(10);
  CHECK_THROWS_AS(run_sequence(atoms, in, true), InvalidConfig);
}

TEST_CASE("poisson noise is seeded") {
  auto atoms = cloud(20000);
  SequenceInputs in;
  in.imaging.noise = NoiseMode::poisson;
  Frame a = run_sequence(atoms, in, false);
  Frame b = run_sequence(atoms, in, false);
  CHECK(a.counts == b.counts);
  in.imaging.noise = NoiseMode::none;
  Frame c = run_sequence(atoms, in, false);
  CHECK(a.counts != c.counts);
  CHECK(a.total() == Approx(c.total()).epsilon(0.01));
}

}
