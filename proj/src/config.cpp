#include "vstpr/config.hpp"
#include "vstpr/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vstpr {

namespace {

constexpr double kTwoPi = phys::two_pi;

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::string t = trim(v);
  double d = 0;
  auto r = std::from_chars(t.data(), t.data() + t.size(), d);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw InvalidConfig(key + ": expected a number, got '" + v + "'", {key});
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  std::string t = trim(v);
  long long d = 0;
  auto r = std::from_chars(t.data(), t.data() + t.size(), d);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size())
    throw InvalidConfig(key + ": expected an integer, got '" + v + "'", {key});
  return d;
}

Vec3 to_vec3(const std::string& key, const std::string& v) {
  std::vector<double> l;
  try {
    l = parse_list(v);
  } catch (const InvalidConfig&) {
    throw InvalidConfig(key + ": expected three comma-separated numbers", {key});
  }
  if (l.size() != 3) throw InvalidConfig(key + ": expected three comma-separated numbers", {key});
  return Vec3(l[0], l[1], l[2]);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }

std::string fmt_sidebands(const std::vector<Sideband>& sb) {
  std::string s;
  for (std::size_t i = 0; i < sb.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(sb[i].order) + ":" + fmt(sb[i].amplitude);
  }
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;
struct Key {
  Setter set;
  Getter get;
};

#define NUM(field, scale)                                                                       \
  Key {                                                                                         \
    [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v) * (scale); }, \
        [](const ExperimentConfig& c) { return fmt(c.field / (scale)); }                        \
  }

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> k = {
      {"seed", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                  long long s = to_int(k, v);
                  if (s < 0) throw InvalidConfig("seed must be non-negative", {k});
                  c.seed = static_cast<std::uint64_t>(s);
                },
                [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"species.mass_kg", NUM(species.mass, 1.0)},
      {"species.wavelength_m", NUM(species.wavelength, 1.0)},
      {"species.gyromag_hz_per_gauss", NUM(species.gyromag, kTwoPi)},
      {"coils.alpha_g_per_a", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.coils.alpha = to_vec3(k, v); },
                               [](const ExperimentConfig& c) { return fmt3(c.coils.alpha); }}},
      {"coils.i0_a", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.coils.I0 = to_vec3(k, v); },
                      [](const ExperimentConfig& c) { return fmt3(c.coils.I0); }}},
      {"coils.current_a", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.coils.current = to_vec3(k, v); },
                           [](const ExperimentConfig& c) { return fmt3(c.coils.current); }}},
      {"coils.background_g", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.coils.background = to_vec3(k, v); },
                              [](const ExperimentConfig& c) { return fmt3(c.coils.background); }}},
      {"ensemble.atom_count", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                 long long n = to_int(k, v);
                                 if (n < 0) throw InvalidConfig("ensemble.atom_count must be >= 1", {k});
                                 c.ensemble.atom_count = static_cast<std::size_t>(n);
                               },
                               [](const ExperimentConfig& c) { return std::to_string(c.ensemble.atom_count); }}},
      {"ensemble.position_sigma_m", NUM(ensemble.position_sigma, 1.0)},
      {"ensemble.temperature_k", NUM(ensemble.temperature, 1.0)},
      {"ensemble.sampling", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               std::string t = trim(v);
                               if (t == "quasi") c.ensemble.sampling = SamplingMode::quasi;
                               else if (t == "pseudo") c.ensemble.sampling = SamplingMode::pseudo;
                               else throw InvalidConfig(k + ": expected quasi or pseudo", {k});
                             },
                             [](const ExperimentConfig& c) {
                               return std::string(c.ensemble.sampling == SamplingMode::quasi ? "quasi" : "pseudo");
                             }}},
      {"pulse.rabi_freq_hz", NUM(pulse.rabi_freq, kTwoPi)},
      {"pulse.duration_s", NUM(pulse.duration, 1.0)},
      {"pulse.start_time_s", NUM(pulse.start_time, 1.0)},
      {"pulse.delta12_hz", NUM(pulse.delta12, kTwoPi)},
      {"pulse.sidebands", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.pulse.sidebands = parse_sidebands(v); },
                           [](const ExperimentConfig& c) { return fmt_sidebands(c.pulse.sidebands); }}},
      {"pulse.modulation_freq_hz", NUM(pulse.modulation_freq, kTwoPi)},
      {"pulse.light_shift_hz", NUM(pulse.light_shift, kTwoPi)},
      {"pulse.mode", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                        std::string t = trim(v);
                        if (t == "instantaneous_pi") c.pulse.mode = PulseMode::instantaneous_pi;
                        else if (t == "rabi_cycling") c.pulse.mode = PulseMode::rabi_cycling;
                        else throw InvalidConfig(k + ": expected instantaneous_pi or rabi_cycling", {k});
                      },
                      [](const ExperimentConfig& c) {
                        return std::string(c.pulse.mode == PulseMode::instantaneous_pi ? "instantaneous_pi" : "rabi_cycling");
                      }}},
      {"pulse.dm2_weight_scale", NUM(pulse.dm2_weight_scale, 1.0)},
      {"imaging.image_time_s", NUM(imaging.image_time, 1.0)},
      {"imaging.gravity_m_s2", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.imaging.gravity = to_vec3(k, v); },
                                [](const ExperimentConfig& c) { return fmt3(c.imaging.gravity); }}},
      {"imaging.pixel_size_m", NUM(imaging.pixel_size, 1.0)},
      {"imaging.width_px", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.imaging.width = static_cast<int>(to_int(k, v)); },
                            [](const ExperimentConfig& c) { return std::to_string(c.imaging.width); }}},
      {"imaging.height_px", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.imaging.height = static_cast<int>(to_int(k, v)); },
                             [](const ExperimentConfig& c) { return std::to_string(c.imaging.height); }}},
      {"imaging.photon_scale", NUM(imaging.photon_scale, 1.0)},
      {"imaging.noise", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                           std::string t = trim(v);
                           if (t == "none") c.imaging.noise = NoiseMode::none;
                           else if (t == "poisson") c.imaging.noise = NoiseMode::poisson;
                           else throw InvalidConfig(k + ": expected none or poisson", {k});
                         },
                         [](const ExperimentConfig& c) {
                           return std::string(c.imaging.noise == NoiseMode::none ? "none" : "poisson");
                         }}},
      {"analysis.t_map_s", NUM(analysis.t_map, 1.0)},
      {"analysis.band_rows", {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                std::string t = trim(v);
                                if (t == "all") {
                                  c.analysis.band_begin = 0;
                                  c.analysis.band_end = -1;
                                  return;
                                }
                                auto l = parse_list(t);
                                if (l.size() != 2) throw InvalidConfig(k + ": expected 'all' or 'begin, end' (end exclusive)", {k});
                                c.analysis.band_begin = static_cast<int>(l[0]);
                                c.analysis.band_end = static_cast<int>(l[1]);
                              },
                              [](const ExperimentConfig& c) {
                                if (c.analysis.band_end < 0) return std::string("all");
                                return std::to_string(c.analysis.band_begin) + ", " + std::to_string(c.analysis.band_end);
                              }}},
      {"analysis.central_threshold", NUM(analysis.central_threshold, 1.0)},
      {"faraday.amplitude", NUM(faraday.amplitude, 1.0)},
      {"faraday.decay_s", NUM(faraday.decay, 1.0)},
      {"faraday.phase_rad", NUM(faraday.phase, 1.0)},
      {"faraday.offset", NUM(faraday.offset, 1.0)},
      {"faraday.rate_hz", NUM(faraday.rate, 1.0)},
      {"faraday.duration_s", NUM(faraday.duration, 1.0)},
      {"faraday.noise_sigma", NUM(faraday.noise_sigma, 1.0)},
      {"null.bracket_a", NUM(null.bracket, 1.0)},
      {"null.tolerance_a", NUM(null.tolerance, 1.0)},
      {"null.sweeps", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.null.sweeps = static_cast<int>(to_int(k, v)); },
                       [](const ExperimentConfig& c) { return std::to_string(c.null.sweeps); }}},
      {"null.refine_offsets_a", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.null.refine_offsets = parse_list(v); },
                                 [](const ExperimentConfig& c) {
                                   std::string s;
                                   for (std::size_t i = 0; i < c.null.refine_offsets.size(); ++i)
                                     s += (i ? ", " : "") + fmt(c.null.refine_offsets[i]);
                                   return s;
                                 }}},
      {"null.converged_step_a", NUM(null.converged_step, 1.0)},
      {"null.probe_bias_g", NUM(null.probe_bias, 1.0)},
      {"calibration.sidebands", {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.calibration_sidebands = parse_sidebands(v); },
                                 [](const ExperimentConfig& c) { return fmt_sidebands(c.calibration_sidebands); }}},
  };
  return k;
}

#undef NUM

} // namespace

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_double("list", item));
  }
  return out;
}

std::vector<Sideband> parse_sidebands(const std::string& s) {
  std::vector<Sideband> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    auto colon = item.find(':');
    Sideband sb;
    if (colon == std::string::npos) {
      sb.order = static_cast<int>(to_int("pulse.sidebands", item));
    } else {
      sb.order = static_cast<int>(to_int("pulse.sidebands", item.substr(0, colon)));
      sb.amplitude = to_double("pulse.sidebands", item.substr(colon + 1));
    }
    out.push_back(sb);
  }
  return out;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto it = keys().find(key);
  if (it == keys().end()) throw InvalidConfig("unknown configuration key '" + key + "'", {key});
  it->second.set(cfg, key, value);
}

ExperimentConfig parse_config(const std::string& text, ExperimentConfig cfg) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : keys()) out += k + " = " + v.get(cfg) + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> bad;
  std::string why;
  auto collect = [&](auto&& fn) {
    try {
      fn();
    } catch (const InvalidConfig& e) {
      bad.insert(bad.end(), e.fields().begin(), e.fields().end());
      why += std::string(why.empty() ? "" : "; ") + e.what();
    }
  };
  collect([&] { species.validate(); });
  collect([&] { ensemble.validate(); });
  collect([&] { pulse.validate(); });
  collect([&] { imaging.validate(); });
  collect([&] { faraday.validate(); });
  if (!(coils.alpha.array() > 0).all()) {
    bad.push_back("coils.alpha_g_per_a");
    why += std::string(why.empty() ? "" : "; ") + "coil slopes must be positive";
  }
  if (!(imaging.image_time > pulse.start_time + pulse.duration)) {
    for (auto k : {"imaging.image_time_s", "pulse.start_time_s", "pulse.duration_s"}) bad.push_back(k);
    why += std::string(why.empty() ? "" : "; ") + "image time must follow the end of the pulse";
  }
  double fL = larmor_frequency(field_at(coils), species) / kTwoPi;
  if (faraday.rate > 0 && !(faraday.rate > 2.0 * fL)) {
    bad.push_back("faraday.rate_hz");
    why += std::string(why.empty() ? "" : "; ") + "faraday sample rate below Nyquist for the configured field";
  }
  if (analysis.band_end >= 0 &&
      (analysis.band_begin < 0 || analysis.band_end > imaging.height || analysis.band_end <= analysis.band_begin)) {
    bad.push_back("analysis.band_rows");
    why += std::string(why.empty() ? "" : "; ") + "row band must be non-empty and inside the frame";
  }
  if (!(analysis.t_map >= 0)) bad.push_back("analysis.t_map_s");
  if (null.sweeps < 1) bad.push_back("null.sweeps");
  if (!(null.bracket > 0)) bad.push_back("null.bracket_a");
  if (!(null.tolerance > 0)) bad.push_back("null.tolerance_a");
  if (!(null.probe_bias > 0)) bad.push_back("null.probe_bias_g");
  if (!bad.empty()) throw InvalidConfig(why.empty() ? "invalid configuration" : why, bad);
}

SequenceInputs ExperimentConfig::sequence() const {
  SequenceInputs in;
  in.coils = coils;
  in.pulse = pulse;
  in.imaging = imaging;
  in.species = species;
  in.seed = seed;
  in.sampling = ensemble.sampling;
  return in;
}

} // namespace vstpr
