#include "vstpr/errors.hpp"
#include "vstpr/workflows.hpp"

#include <doctest.h>

#include <cmath>

using namespace vstpr;
using doctest::Approx;

namespace {

ExperimentConfig config(std::size_t atoms = 50000) {
  ExperimentConfig c;
  c.ensemble.atom_count = atoms;
  return c;
}

} // namespace

TEST_SUITE("workflows") {

TEST_CASE("linspace") {
  auto v = linspace(0.1, 0.4, 4);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == 0.1);
  CHECK(v[3] == Approx(0.4));
  CHECK(v[1] == Approx(0.2));
  CHECK(linspace(2.0, 5.0, 1) == std::vector<double>{2.0});
  CHECK_THROWS_AS(linspace(0, 1, 0), InvalidConfig);
}

TEST_CASE("axis names") {
  CHECK(axis_index("x") == 0);
  CHECK(axis_index("z") == 2);
  CHECK(axis_name(1) == "y");
  CHECK_THROWS_AS(axis_index("w"), InvalidConfig);
}

TEST_CASE("simulator reuses its cloud and is deterministic") {
  auto c = config(20000);
  Simulator sim(c);
  CHECK(sim.atoms().size() == 20000);
  auto a = sim.run(), b = sim.run();
  CHECK(a.diff.counts == b.diff.counts);
  CHECK(a.diff_profile.y == b.diff_profile.y);
  auto c2 = c;
  c2.seed = 2;
  auto d = sim.run(c2);
  CHECK(d.off.counts != a.off.counts);
  CHECK(Simulator(c2).run().off.counts == d.off.counts);
}

TEST_CASE("zero Rabi frequency gives an empty difference frame") {
  auto c = config(20000);
  c.pulse.rabi_freq = 0;
  c.coils.current.z() += 0.1;
  auto fs = Simulator(c).run();
  for (double v : fs.diff.counts) REQUIRE(v == 0.0);
  auto r = analyze(fs, c);
  CHECK(r.status == FitStatus::unresolved);
}

TEST_CASE("row band restricts the profiles") {
  auto c = config(20000);
  Simulator sim(c);
  auto all = sim.run();
  c.analysis.band_begin = 500;
  c.analysis.band_end = 524;
  auto band = sim.run(c);
  double sa = 0, sb = 0;
  for (double v : all.off_profile.y) sa += v;
  for (double v : band.off_profile.y) sb += v;
  CHECK(sb > 0);
  CHECK(sb < 0.5 * sa);
  double manual = 0;
  for (int r = 500; r < 524; ++r)
    for (int col = 0; col < band.off.width; ++col) manual += band.off.at(r, col);
  CHECK(sb == Approx(manual));
}

TEST_CASE("calibration run configuration") {
  auto c = config();
  c.coils.current = Vec3(0.3, 0.3, 0.3);
  auto cc = calibration_config(c);
  CHECK(cc.coils.current == c.coils.I0);
  CHECK(cc.pulse.sidebands.size() == 7);
  c.pulse.sidebands = {{-1, 1}, {0, 1}, {1, 1}};
  CHECK(calibration_config(c).pulse.sidebands.size() == 3);
}

TEST_CASE("calibration is close to the nominal mapping") {
  auto c = config(100000);
  Simulator sim(c);
  auto cal = calibrate(sim);
  CHECK(cal.kappa == Approx(0.04 / (2 * c.species.k())).epsilon(0.01));
  CHECK(cal.stripes == 7);
}

TEST_CASE("doublet offset") {
  CHECK(doublet_offset(0.01, 0.04) == Approx(0.01));
  CHECK(doublet_offset(0.03, 0.04) == Approx(0.01));
  CHECK(doublet_offset(0.02, 0.04) == 0.0);
}

TEST_CASE("timing sweep contrast peaks at half the image time") {
  auto c = config(100000);
  c.pulse.duration = 200e-6;
  c.pulse.rabi_freq = 3.14159265358979323846 / 200e-6;
  Simulator sim(c);
  auto pts = timing_sweep(sim, {0.25 * 0.04, 0.5 * 0.04});
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].contrast > pts[0].contrast);
  CHECK(pts[0].status == "ok");
  double expect = 4 * c.species.recoil_velocity() * (0.02 - 0.01 - 100e-6);
  CHECK(pts[0].expected_splitting == Approx(expect));
  CHECK(pts[0].splitting == Approx(expect).epsilon(0.05));
  CHECK(pts[0].ratio == Approx(0.25));
}

TEST_CASE("current scan recovers the coil constants") {
  auto c = config(100000);
  c.coils.current.y() += 0.12 / c.coils.alpha.y();
  Simulator sim(c);
  auto cal = calibrate(sim);
  auto r = current_scan(sim, 2, linspace(0.2431 - 0.15, 0.2431 + 0.15, 10), cal);
  REQUIRE(r.fit);
  CHECK(r.samples.size() == 10);
  CHECK(r.points.size() >= 8);
  CHECK(r.fit->alpha == Approx(1.524).epsilon(0.005));
  CHECK(std::abs(r.fit->I0 - 0.2431) < 0.5e-3);
  CHECK(r.fit->B_perp == Approx(0.12).epsilon(0.05));
}

TEST_CASE("scan with too few resolved points reports it") {
  auto c = config(20000);
  Simulator sim(c);
  auto r = current_scan(sim, 2, {0.2431, 0.2432, 0.2433}, std::nullopt);
  CHECK_FALSE(r.fit);
  CHECK_FALSE(r.message.empty());
}

TEST_CASE("Faraday scan recovers the coil constants") {
  auto c = config();
  c.coils.current.y() += 0.12 / c.coils.alpha.y();
  auto r = faraday_scan(c, 2, linspace(0.2431 - 0.15, 0.2431 + 0.15, 10));
  REQUIRE(r.fit);
  CHECK(r.fit->alpha == Approx(1.524).epsilon(1e-4));
  CHECK(r.fit->I0 == Approx(0.2431).epsilon(1e-4));
  for (const auto& s : r.samples) CHECK(s.estimate.precession);
}

TEST_CASE("null from the compensation point stays there") {
  auto c = config(20000);
  Simulator sim(c);
  int sets = 0;
  auto r = null_field(sim, std::nullopt, [&](const NullStep& s) { sets += s.stage == "set"; });
  CHECK(r.converged);
  CHECK(sets == 3 * r.sweeps);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(r.currents[i] - 0.2431) < 2e-3);
  CHECK(r.final_fit.status == FitStatus::unresolved);
  CHECK(r.field_upper_bound > 0);
  CHECK(r.start == c.coils.current);
}

}
