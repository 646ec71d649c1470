#include "vstpr/ensemble.hpp"
#include "vstpr/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace vstpr;
using doctest::Approx;

TEST_SUITE("ensemble") {

TEST_CASE("velocity sigma oracle") {
  AtomSpecies sp;
  double expect = std::sqrt(1.380649e-23 * 200e-6 / 1.40999e-25);
  CHECK(velocity_sigma(200e-6, sp) == Approx(expect).epsilon(1e-14));
  CHECK(expect == Approx(0.13994).epsilon(1e-4));
  CHECK(velocity_sigma(0.0, sp) == 0.0);
}

TEST_CASE("zero temperature gives zero velocities") {
  EnsembleConfig c;
  c.atom_count = 5000;
  c.temperature = 0;
  auto atoms = sample_ensemble(c, AtomSpecies{});
  bool zero = true;
  for (const auto& a : atoms) zero &= a.velocity == Vec3::Zero();
  CHECK(zero);
}

TEST_CASE("same seed gives bitwise identical ensembles, other seed differs") {
  for (auto mode : {SamplingMode::quasi, SamplingMode::pseudo}) {
    EnsembleConfig c;
    c.atom_count = 20000;
    c.sampling = mode;
    auto a = sample_ensemble(c, AtomSpecies{});
    auto b = sample_ensemble(c, AtomSpecies{});
    REQUIRE(a.size() == b.size());
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i)
      same &= a[i].position == b[i].position && a[i].velocity == b[i].velocity;
    CHECK(same);
    c.rng_seed = 2;
    auto d = sample_ensemble(c, AtomSpecies{});
    int differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].velocity != d[i].velocity;
    CHECK(differ > 19000);
  }
}

TEST_CASE("channels start unassigned and flipped population is zero") {
  EnsembleConfig c;
  c.atom_count = 100;
  for (const auto& a : sample_ensemble(c, AtomSpecies{})) {
    CHECK(a.channel == channel_unassigned);
    CHECK(a.flipped_population == 0.0);
  }
}

TEST_CASE("invalid configs are rejected") {
  EnsembleConfig c;
  c.atom_count = 0;
  CHECK_THROWS_AS(sample_ensemble(c, AtomSpecies{}), InvalidConfig);
  c = {};
  c.position_sigma = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = {};
  c.temperature = -1;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
}

TEST_CASE("moments of 1e6 atoms") {
  for (auto mode : {SamplingMode::quasi, SamplingMode::pseudo}) {
    EnsembleConfig c;
    c.atom_count = 1000000;
    c.sampling = mode;
    AtomSpecies sp;
    auto atoms = sample_ensemble(c, sp);
    double sv = velocity_sigma(c.temperature, sp);
    const double n = static_cast<double>(atoms.size());
    for (int ax = 0; ax < 3; ++ax) {
      double m = 0, m2 = 0, p = 0, p2 = 0;
      for (const auto& a : atoms) {
        m += a.velocity[ax];
        m2 += a.velocity[ax] * a.velocity[ax];
        p += a.position[ax];
        p2 += a.position[ax] * a.position[ax];
      }
      m /= n;
      p /= n;
      double var = m2 / n - m * m;
      double pvar = p2 / n - p * p;
      CHECK(std::abs(m) < 5 * sv / std::sqrt(n));
      CHECK(std::abs(var / (sv * sv) - 1) < 0.02);
      CHECK(std::abs(p) < 5 * c.position_sigma / std::sqrt(n));
      CHECK(std::abs(std::sqrt(pvar) / c.position_sigma - 1) < 0.01);
    }
  }
}

TEST_CASE("quasi uniforms stay inside the open unit interval") {
  AtomSampler s(7, SamplingMode::quasi);
  bool inside = true;
  for (std::size_t i = 0; i < 10000; ++i)
    for (int d = 0; d < AtomSampler::dim_count; ++d) {
      double u = s.uniform(i, static_cast<AtomSampler::Dim>(d));
      inside &= u > 0.0 && u < 1.0;
    }
  CHECK(inside);
}

}
