#include "vstpr/errors.hpp"
#include "vstpr/imaging.hpp"
#include "vstpr/resonance.hpp"

#include <doctest.h>

#include <cmath>

using namespace vstpr;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

ResonanceContext context() {
  FrameMeta meta;
  return make_resonance_context(meta, 0.0, 1.5e-3);
}

std::vector<double> xs(double half, int n) {
  std::vector<double> x;
  for (int i = 0; i < n; ++i) x.push_back(-half + 2 * half * (i + 0.5) / n);
  return x;
}

VectorXd params(double omega) {
  VectorXd p(rp_count);
  p << 2e-5, omega, 1.3e-4, 50.0, 20.0, context().kappa;
  return p;
}

struct Run {
  Profile diff, off;
  FrameMeta meta;
};

Run simulate(const std::vector<AtomState>& atoms, double field_z, std::vector<Sideband> sidebands = {}) {
  SequenceInputs in;
  in.coils.current = in.coils.I0;
  in.coils.current.z() += field_z / in.coils.alpha.z();
  in.pulse.sidebands = std::move(sidebands);
  Frame on = run_sequence(atoms, in, true), off = run_sequence(atoms, in, false);
  Frame d = difference_frame(on, off);
  return {cross_section(d), cross_section(off), d.meta};
}

std::vector<Sideband> comb() {
  std::vector<Sideband> s;
  for (int n = -3; n <= 3; ++n) s.push_back({n, 1.0});
  return s;
}

const std::vector<AtomState>& cloud() {
  static const std::vector<AtomState> atoms = [] {
    EnsembleConfig c;
    c.atom_count = 100000;
    return sample_ensemble(c, AtomSpecies{});
  }();
  return atoms;
}

} // namespace

TEST_SUITE("resonance") {

TEST_CASE("default kappa maps the image time") {
  auto ctx = context();
  AtomSpecies sp;
  CHECK(ctx.kappa == Approx(0.04 / (2 * sp.k())));
  FrameMeta meta;
  CHECK(make_resonance_context(meta, 0.035, 1e-3).kappa == Approx(0.035 / (2 * sp.k())));
  CHECK(make_resonance_context(meta, 0.0, 1e-3, 3e-9).kappa == 3e-9);
  meta.pulse.dm2_weight_scale = 0.5;
  CHECK(make_resonance_context(meta, 0.0, 1e-3).channels.size() == 5);
}

TEST_CASE("windows at zero field straddle the recoil shift") {
  auto ctx = context();
  AtomSpecies sp;
  auto w = resonance_windows(0, 0.0, ctx);
  REQUIRE(w.size() == 2);
  double base = 4 * sp.recoil_freq(), W = ctx.pulse.rabi_freq;
  CHECK(w[0].lo == Approx(-base - W));
  CHECK(w[0].hi == Approx(-base + W));
  CHECK(w[1].lo == Approx(base - W));
  CHECK(w[0].process == 1);
  CHECK(w[1].process == -1);
}

TEST_CASE("overlapping windows are clipped at the envelope crossing") {
  auto ctx = context();
  AtomSpecies sp;
  // the two processes of channel 1 meet at omega_L = 4 delta_r
  double w0 = 4 * sp.recoil_freq();
  auto w = resonance_windows(1, w0, ctx);
  REQUIRE(w.size() == 2);
  CHECK(w[0].hi == Approx(w[1].lo));
  for (const auto& a : w) CHECK(a.hi > a.lo);
}

TEST_CASE("sideband lines give one window pair per order") {
  auto ctx = context();
  ctx.pulse.sidebands = comb();
  auto w = resonance_windows(0, 0.0, ctx);
  CHECK(w.size() == 14);
}

TEST_CASE("model has zero net area") {
  auto ctx = context();
  auto x = xs(15e-3, 3000);
  VectorXd y;
  resonance_model(x, params(2 * kPi * 100e3), ctx, y, nullptr);
  double s = 0, a = 0;
  for (int i = 0; i < y.size(); ++i) {
    s += y[i];
    a += std::abs(y[i]);
  }
  CHECK(a > 0);
  CHECK(std::abs(s) < 1e-9 * a);
}

TEST_CASE("model Jacobian matches finite differences") {
  auto ctx = context();
  auto x = xs(6e-3, 400);
  VectorXd p = params(2 * kPi * 60e3), y, yp, ym;
  MatrixXd J;
  resonance_model(x, p, ctx, y, &J);
  VectorXd scale(rp_count);
  scale << 1e-4, 1e3, 1e-4, 1.0, 1.0, p[rp_kappa];
  for (int k = 0; k < rp_count; ++k) {
    double h = 1e-6 * scale[k];
    VectorXd q = p;
    q[k] += h;
    resonance_model(x, q, ctx, yp, nullptr);
    q[k] -= 2 * h;
    resonance_model(x, q, ctx, ym, nullptr);
    VectorXd fd = (yp - ym) / (2 * h);
    CAPTURE(k);
    CHECK((fd - J.col(k)).norm() <= 1e-5 * (J.col(k).norm() + 1e-9 * fd.norm() + 1e-12));
  }
}

TEST_CASE("central-only model keeps the dm = 0 channel") {
  auto ctx = context();
  auto x = xs(6e-3, 300);
  VectorXd p = params(2 * kPi * 100e3), all, c;
  p[rp_h1] = 0;
  resonance_model(x, p, ctx, all, nullptr);
  resonance_model(x, p, ctx, c, nullptr, true);
  CHECK((all - c).norm() < 1e-12 * all.norm());
}

TEST_CASE("fit recovers a synthetic model") {
  auto ctx = context();
  Profile d;
  d.x = xs(12e-3, 1000);
  VectorXd truth = params(2 * kPi * 83e3), y;
  resonance_model(d.x, truth, ctx, y, nullptr);
  d.y.assign(y.data(), y.data() + y.size());
  auto f = fit_resonance(d, 0.0, ctx);
  CHECK(f.omega_L() == Approx(truth[rp_omega]).epsilon(1e-6));
  CHECK(f.params[rp_center] == Approx(truth[rp_center]).epsilon(1e-5));
  CHECK(f.params[rp_h1] == Approx(50.0).epsilon(1e-5));
  CHECK(f.residual_norm <= f.initial_residual_norm);
}

TEST_CASE("comb calibration spacing") {
  AtomSpecies sp;
  auto r = simulate(cloud(), 0.0, comb());
  auto c = calibrate_with_sidebands(r.diff, 2 * kPi * 100e3, 0.04, sp);
  CHECK(c.stripes == 7);
  CHECK(c.comb_spacing == Approx(1.560e-3).epsilon(0.01));
  CHECK(c.kappa > 0);
  auto refined = calibrate_with_sidebands(r.diff, r.off, r.meta, 0.0);
  CHECK(refined.method == "resonance_comb");
  CHECK(refined.kappa == Approx(0.04 / (2 * sp.k())).epsilon(0.01));
  CHECK(refined.t_map_effective == Approx(2 * sp.k() * refined.kappa));
}

TEST_CASE("calibration needs a comb") {
  AtomSpecies sp;
  auto r = simulate(cloud(), 0.0);
  CHECK_THROWS_AS(calibrate_with_sidebands(r.diff, 2 * kPi * 100e3, 0.04, sp), FitFailed);
  CHECK_THROWS_AS(calibrate_with_sidebands(r.diff, 0.0, 0.04, sp), InvalidConfig);
}

TEST_CASE("calibrated measurement reproduces the configured field") {
  auto c = simulate(cloud(), 0.0, comb());
  auto cal = calibrate_with_sidebands(c.diff, c.off, c.meta, 0.0);
  AtomSpecies sp;
  double B = 100e3 / 466.74e3;
  auto r = simulate(cloud(), B);
  auto m = measure_field(r.diff, r.off, r.meta, {}, cal);
  REQUIRE(m.status == FitStatus::resolved);
  CHECK(m.omega_L / (2 * kPi) == Approx(100e3).epsilon(0.002));
  CHECK(m.field == Approx(B).epsilon(0.002));
  CHECK(m.separation == Approx(3.121e-3).epsilon(0.02));
  auto u = measure_field(r.diff, r.off, r.meta, {});
  CHECK(u.field == Approx(B).epsilon(0.01));
}

TEST_CASE("zero field is unresolved with a small upper bound") {
  auto r = simulate(cloud(), 0.0);
  auto m = measure_field(r.diff, r.off, r.meta, {});
  CHECK(m.status == FitStatus::unresolved);
  CHECK(m.field_upper_bound > 0);
  // limited by the Rabi window width at the default 10 kHz
  CHECK(m.field_upper_bound < 0.05);
}

TEST_CASE("empty difference profile") {
  auto r = simulate(cloud(), 0.1);
  for (double& v : r.diff.y) v = 0;
  auto m = measure_field(r.diff, r.off, r.meta, {});
  CHECK(m.status == FitStatus::unresolved);
}

}
