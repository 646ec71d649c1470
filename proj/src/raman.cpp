#include "vstpr/raman.hpp"
#include "vstpr/errors.hpp"
#include "vstpr/parallel.hpp"

#include <cmath>
#include <set>

namespace vstpr {

std::vector<Sideband> PulseConfig::lines() const {
  if (sidebands.empty()) return {Sideband{0, 1.0}};
  return sidebands;
}

void PulseConfig::validate() const {
  std::vector<std::string> bad;
  if (!(rabi_freq >= 0)) bad.push_back("pulse.rabi_freq_hz");
  if (!(duration >= 0)) bad.push_back("pulse.duration_s");
  if (!(start_time >= 0)) bad.push_back("pulse.start_time_s");
  if (!(dm2_weight_scale >= 0)) bad.push_back("pulse.dm2_weight_scale");
  if (!(modulation_freq >= 0)) bad.push_back("pulse.modulation_freq_hz");
  std::set<int> orders;
  for (const auto& s : sidebands)
    if (!orders.insert(s.order).second) {
      bad.push_back("pulse.sidebands");
      break;
    }
  if (!bad.empty()) throw InvalidConfig("invalid pulse configuration", bad);
}

double two_photon_detuning(double v_x, int delta_m, double omega_L, const PulseConfig& cfg,
                           const AtomSpecies& sp, int process, double line_offset) {
  const double p = process >= 0 ? 1.0 : -1.0;
  return p * (2.0 * sp.k() * v_x - cfg.delta12 - line_offset) + 4.0 * sp.recoil_freq() +
         cfg.light_shift - delta_m * omega_L;
}

double transfer_probability(double delta, double omega, double t) {
  if (omega <= 0 || t <= 0) return 0.0;
  double W2 = omega * omega + delta * delta;
  double s = std::sin(0.5 * std::sqrt(W2) * t);
  return std::clamp(omega * omega / W2 * s * s, 0.0, 1.0);
}

double mean_transfer_probability(double delta, double omega, double t) {
  if (omega <= 0) return 0.0;
  double W2 = omega * omega + delta * delta;
  if (t <= 0) return 0.0;
  double wt = std::sqrt(W2) * t;
  double sinc = wt < 1e-8 ? 1.0 - wt * wt / 6.0 : std::sin(wt) / wt;
  return omega * omega / W2 * 0.5 * (1.0 - sinc);
}

std::array<double, 5> channel_weights(const FieldVector& B, const PulseConfig& cfg) {
  std::array<double, 5> w{};
  if (!B.axis_defined()) {
    int n = cfg.dm2_weight_scale > 0 ? 5 : 3;
    for (int dm = -2; dm <= 2; ++dm)
      if (n == 5 || std::abs(dm) <= 1) w[dm + 2] = 1.0 / n;
    return w;
  }
  double c = B.axis().x();
  double c2 = c * c, s2 = std::max(0.0, 1.0 - c2);
  w[2] = c2;
  w[1] = w[3] = 0.5 * s2;
  w[0] = w[4] = cfg.dm2_weight_scale * 0.5 * s2;
  double sum = 0;
  for (double v : w) sum += v;
  for (double& v : w) v /= sum;
  return w;
}

void assign_channels(std::vector<AtomState>& atoms, const FieldVector& B, const PulseConfig& cfg,
                     const AtomSampler& rng) {
  auto w = channel_weights(B, cfg);
  std::array<double, 5> cum{};
  double acc = 0;
  for (int i = 0; i < 5; ++i) cum[i] = (acc += w[i]);
  parallel_for(atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double u = rng.uniform(i, AtomSampler::channel);
      int k = 0;
      while (k < 4 && (u >= cum[k] || w[k] == 0.0)) ++k;
      while (w[k] == 0.0 && k > 0) --k;
      atoms[i].channel = k - 2;
    }
  });
}

LineChoice nearest_line(double v_x, int delta_m, double omega_L, const PulseConfig& cfg,
                        const AtomSpecies& sp, const std::vector<Sideband>& lines) {
  LineChoice best;
  double best_env = -1.0;
  const double O2 = cfg.rabi_freq * cfg.rabi_freq;
  for (const auto& ln : lines) {
    double a2O2 = ln.amplitude * ln.amplitude * O2;
    for (int p : {+1, -1}) {
      double d = two_photon_detuning(v_x, delta_m, omega_L, cfg, sp, p,
                                     ln.order * cfg.modulation_freq);
      double env = a2O2 > 0 ? a2O2 / (a2O2 + d * d) : 0.0;
      if (env > best_env) {
        best_env = env;
        best = LineChoice{p, std::abs(ln.amplitude), d};
      }
    }
  }
  return best;
}

void apply_pulse(std::vector<AtomState>& atoms, const FieldVector& B, const PulseConfig& cfg,
                 const AtomSpecies& sp, const AtomSampler& rng, const Vec3& gravity,
                 double image_time) {
  cfg.validate();
  if (cfg.start_time + cfg.duration >= image_time)
    throw InvalidConfig("pulse ends at or after the imaging time",
                        {"pulse.start_time_s", "pulse.duration_s", "imaging.image_time_s"});
  const double omega_L = larmor_frequency(B, sp);
  const double tau = cfg.duration;
  const double kick = 2.0 * sp.recoil_velocity();
  const auto lines = cfg.lines();
  const Vec3 half_g = 0.5 * gravity;
  for (const auto& a : atoms)
    if (a.channel == channel_unassigned) throw InvalidConfig("apply_pulse requires assigned channels");

  parallel_for(atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto& a = atoms[i];
      LineChoice lc = nearest_line(a.velocity.x(), a.channel, omega_L, cfg, sp, lines);
      const double Om = lc.amplitude * cfg.rabi_freq;
      const double dv = lc.process * kick;
      if (cfg.mode == PulseMode::instantaneous_pi) {
        // kick at mid-pulse
        bool flip = Om > 0 && std::abs(lc.detuning) < Om;
        double h = 0.5 * tau;
        a.position += a.velocity * h + half_g * h * h;
        a.velocity += gravity * h;
        if (flip) a.velocity.x() += dv;
        a.position += a.velocity * h + half_g * h * h;
        a.velocity += gravity * h;
        a.flipped_population = flip ? 1.0 : 0.0;
      } else {
        double P = transfer_probability(lc.detuning, Om, tau);
        double Pbar = mean_transfer_probability(lc.detuning, Om, tau);
        a.position += a.velocity * tau + half_g * tau * tau;
        a.position.x() += dv * Pbar * tau;
        a.velocity += gravity * tau;
        if (P > 0 && rng.uniform(i, AtomSampler::flip) < P) a.velocity.x() += dv;
        a.flipped_population = P;
      }
    }
  });
}

} // namespace vstpr
