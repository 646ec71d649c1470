#include "vstpr/io.hpp"
#include "vstpr/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vstpr {

namespace {

constexpr double kTwoPi = phys::two_pi;

Json vec(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

Json matrix(const MatrixXd& m) {
  Json out = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Numeric rows of a CSV file; a non-numeric first line is treated as a header.
std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw InvalidConfig("'" + path + "': non-numeric row '" + line + "'");
    }
    first = false;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string noise_name(NoiseMode m) { return m == NoiseMode::none ? "none" : "poisson"; }

FrameKind kind_from(const std::string& s) {
  if (s == "pulse_on") return FrameKind::pulse_on;
  if (s == "pulse_off") return FrameKind::pulse_off;
  if (s == "difference") return FrameKind::difference;
  throw InvalidConfig("unknown frame kind '" + s + "'", {"kind"});
}

void png_to_vector(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

} // namespace

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write '" + path + "'");
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sidecar_path(const std::string& pgm_path) {
  auto dot = pgm_path.find_last_of('.');
  auto slash = pgm_path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return pgm_path + ".json";
  return pgm_path.substr(0, dot) + ".json";
}

std::string encode_pgm(const Frame& f, PgmScale* used) {
  auto [lo, hi] = std::minmax_element(f.counts.begin(), f.counts.end());
  PgmScale s;
  if (lo != f.counts.end()) {
    s.offset = *lo;
    s.scale = *hi > *lo ? (*hi - *lo) / 65535.0 : 1.0;
  }
  std::string out = "P5\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n65535\n";
  out.reserve(out.size() + 2 * f.counts.size());
  for (double c : f.counts) {
    auto v = static_cast<std::uint16_t>(std::clamp(std::lround((c - s.offset) / s.scale), 0L, 65535L));
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  if (used) *used = s;
  return out;
}

void write_pgm(const Frame& f, const std::string& path) {
  PgmScale s;
  write_text(path, encode_pgm(f, &s));
  Json side;
  side["scale"] = s.scale;
  side["offset"] = s.offset;
  side["width"] = f.width;
  side["height"] = f.height;
  side["meta"] = to_json(f.meta);
  write_text(sidecar_path(path), dump(side));
}

Frame read_pgm(const std::string& path) {
  std::string data = read_text(path);
  std::istringstream in(data);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 65535)
    throw InvalidConfig("'" + path + "': expected a 16-bit binary PGM");
  in.get();
  auto pos = static_cast<std::size_t>(in.tellg());
  if (data.size() < pos + 2 * static_cast<std::size_t>(w) * h) throw InvalidConfig("'" + path + "': truncated PGM");

  Frame f;
  f.width = w;
  f.height = h;
  PgmScale s;
  std::ifstream side(sidecar_path(path));
  if (side) {
    Json j = Json::parse(side);
    s.scale = j.at("scale").get<double>();
    s.offset = j.at("offset").get<double>();
    f.meta = meta_from_json(j.at("meta"));
  }
  f.counts.resize(static_cast<std::size_t>(w) * h);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos);
  for (std::size_t i = 0; i < f.counts.size(); ++i) {
    unsigned v = (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    f.counts[i] = s.offset + s.scale * v;
  }
  return f;
}

std::vector<std::uint8_t> encode_png(const Frame& f) {
  double lo = 0, hi = 0;
  if (!f.counts.empty()) {
    auto [a, b] = std::minmax_element(f.counts.begin(), f.counts.end());
    lo = *a;
    hi = *b;
  }
  if (f.meta.kind == FrameKind::difference) {
    double m = std::max(std::abs(lo), std::abs(hi));
    lo = -m;
    hi = m;
  }
  double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> pixels(f.counts.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * (f.counts[i] - lo) / span), 0L, 255L));

  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_to_vector, nullptr);
  png_set_IHDR(png, info, f.width, f.height, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < f.height; ++r) png_write_row(png, pixels.data() + static_cast<std::size_t>(r) * f.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const Frame& f, const std::string& path) {
  auto bytes = encode_png(f);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

void write_frame_csv(const Frame& f, const std::string& path) {
  std::string out;
  out.reserve(f.counts.size() * 4);
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) {
      if (c) out += ',';
      out += fmt(f.at(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

Frame read_frame_csv(const std::string& path) {
  auto rows = read_csv(path);
  Frame f;
  f.height = static_cast<int>(rows.size());
  f.width = rows.empty() ? 0 : static_cast<int>(rows[0].size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != f.width) throw InvalidConfig("'" + path + "': ragged frame CSV");
    f.counts.insert(f.counts.end(), r.begin(), r.end());
  }
  f.meta.origin_col = f.width / 2.0;
  f.meta.origin_row = f.height / 2.0;
  f.meta.kind = FrameKind::difference;
  return f;
}

std::string profile_csv(const Profile& p) {
  std::string out = "x_m,counts\n";
  for (std::size_t i = 0; i < p.size(); ++i) out += fmt(p.x[i]) + "," + fmt(p.y[i]) + "\n";
  return out;
}

void write_profile_csv(const Profile& p, const std::string& path) { write_text(path, profile_csv(p)); }

Profile read_profile_csv(const std::string& path) {
  Profile p;
  for (const auto& r : read_csv(path)) {
    if (r.size() != 2) throw InvalidConfig("'" + path + "': expected two columns");
    p.x.push_back(r[0]);
    p.y.push_back(r[1]);
  }
  return p;
}

void write_trace_csv(const FaradayTrace& tr, const std::string& path) {
  std::string out = "t_s,signal\n";
  for (std::size_t i = 0; i < tr.t.size(); ++i) out += fmt(tr.t[i]) + "," + fmt(tr.signal[i]) + "\n";
  write_text(path, out);
}

FaradayTrace read_trace_csv(const std::string& path) {
  FaradayTrace tr;
  for (const auto& r : read_csv(path)) {
    if (r.size() != 2) throw InvalidConfig("'" + path + "': expected two columns");
    tr.t.push_back(r[0]);
    tr.signal.push_back(r[1]);
  }
  if (tr.t.size() >= 2) {
    tr.params.rate = (tr.t.size() - 1) / (tr.t.back() - tr.t.front());
    tr.params.duration = tr.t.size() / tr.params.rate;
  }
  return tr;
}

Json to_json(const PulseConfig& p) {
  Json j;
  j["rabi_freq_hz"] = p.rabi_freq / kTwoPi;
  j["duration_s"] = p.duration;
  j["start_time_s"] = p.start_time;
  j["delta12_hz"] = p.delta12 / kTwoPi;
  j["modulation_freq_hz"] = p.modulation_freq / kTwoPi;
  j["light_shift_hz"] = p.light_shift / kTwoPi;
  j["mode"] = p.mode == PulseMode::instantaneous_pi ? "instantaneous_pi" : "rabi_cycling";
  j["dm2_weight_scale"] = p.dm2_weight_scale;
  Json sb = Json::array();
  for (const auto& s : p.sidebands) sb.push_back({{"order", s.order}, {"amplitude", s.amplitude}});
  j["sidebands"] = sb;
  return j;
}

namespace {
PulseConfig pulse_from_json(const Json& j) {
  PulseConfig p;
  p.rabi_freq = j.at("rabi_freq_hz").get<double>() * kTwoPi;
  p.duration = j.at("duration_s").get<double>();
  p.start_time = j.at("start_time_s").get<double>();
  p.delta12 = j.at("delta12_hz").get<double>() * kTwoPi;
  p.modulation_freq = j.at("modulation_freq_hz").get<double>() * kTwoPi;
  p.light_shift = j.at("light_shift_hz").get<double>() * kTwoPi;
  p.mode = j.at("mode").get<std::string>() == "rabi_cycling" ? PulseMode::rabi_cycling : PulseMode::instantaneous_pi;
  p.dm2_weight_scale = j.at("dm2_weight_scale").get<double>();
  for (const auto& s : j.at("sidebands")) p.sidebands.push_back({s.at("order").get<int>(), s.at("amplitude").get<double>()});
  return p;
}
} // namespace

Json to_json(const FrameMeta& m) {
  Json j;
  j["kind"] = to_string(m.kind);
  j["pixel_size_m"] = m.pixel_size;
  j["origin_col"] = m.origin_col;
  j["origin_row"] = m.origin_row;
  j["image_time_s"] = m.image_time;
  j["pulse_on"] = m.pulse_on;
  j["currents_a"] = vec(m.currents);
  j["field_g"] = vec(m.field);
  j["seed"] = m.seed;
  j["atom_count"] = m.atom_count;
  j["atoms_outside"] = m.atoms_outside;
  j["cloud_outside"] = m.cloud_outside;
  j["photon_scale"] = m.photon_scale;
  j["noise"] = noise_name(m.noise);
  j["pulse"] = to_json(m.pulse);
  j["species"] = {{"mass_kg", m.species.mass},
                  {"wavelength_m", m.species.wavelength},
                  {"gyromag_hz_per_gauss", m.species.gyromag / kTwoPi}};
  j["parents"] = m.parents;
  return j;
}

FrameMeta meta_from_json(const Json& j) {
  try {
    FrameMeta m;
    m.kind = kind_from(j.at("kind").get<std::string>());
    m.pixel_size = j.at("pixel_size_m").get<double>();
    m.origin_col = j.at("origin_col").get<double>();
    m.origin_row = j.at("origin_row").get<double>();
    m.image_time = j.at("image_time_s").get<double>();
    m.pulse_on = j.at("pulse_on").get<bool>();
    m.currents = vec_from(j.at("currents_a"));
    m.field = vec_from(j.at("field_g"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.atom_count = j.at("atom_count").get<std::size_t>();
    m.atoms_outside = j.at("atoms_outside").get<std::size_t>();
    m.cloud_outside = j.at("cloud_outside").get<bool>();
    m.photon_scale = j.at("photon_scale").get<double>();
    m.noise = j.at("noise").get<std::string>() == "poisson" ? NoiseMode::poisson : NoiseMode::none;
    m.pulse = pulse_from_json(j.at("pulse"));
    const auto& s = j.at("species");
    m.species.mass = s.at("mass_kg").get<double>();
    m.species.wavelength = s.at("wavelength_m").get<double>();
    m.species.gyromag = s.at("gyromag_hz_per_gauss").get<double>() * kTwoPi;
    m.parents = j.at("parents").get<std::vector<std::string>>();
    return m;
  } catch (const Json::exception& e) {
    throw InvalidConfig(std::string("frame metadata: ") + e.what(), {"meta"});
  }
}

Json to_json(const StripeFitResult& r) {
  Json j;
  j["status"] = to_string(r.status);
  j["method"] = r.method;
  j["message"] = r.message;
  Json stripes = Json::array();
  for (const auto& s : r.stripes) {
    stripes.push_back({{"center_m", s.center},
                       {"center_err_m", s.center_err},
                       {"sigma_m", s.sigma},
                       {"sigma_neg_m", s.sigma_neg},
                       {"amplitude", s.amplitude},
                       {"label", s.label},
                       {"covariance", matrix(s.covariance)}});
  }
  j["stripes"] = stripes;
  j["residual_norm"] = r.residual_norm;
  j["initial_residual_norm"] = r.initial_residual_norm;
  j["separation_m"] = r.separation;
  j["separation_err_m"] = r.separation_err;
  j["feature_width_m"] = r.feature_width;
  j["larmor_hz"] = r.omega_L / kTwoPi;
  j["larmor_err_hz"] = r.omega_L_err / kTwoPi;
  j["larmor_from_separation_hz"] = r.omega_from_separation / kTwoPi;
  j["field_g"] = r.field;
  j["field_err_g"] = r.field_err;
  j["field_upper_bound_g"] = r.field_upper_bound;
  j["central_amplitude"] = r.central_amplitude;
  j["central_significance"] = r.central_significance;
  j["noise_floor"] = r.noise_floor;
  return j;
}

Json to_json(const ScanFitResult& r) {
  Json j;
  j["alpha_g_per_a"] = r.alpha;
  j["alpha_err_g_per_a"] = r.alpha_err;
  j["i0_a"] = r.I0;
  j["i0_err_a"] = r.I0_err;
  j["b_perp_g"] = r.B_perp;
  j["b_perp_err_g"] = r.B_perp_err;
  Json res = Json::array();
  for (double v : r.residuals) res.push_back(v / kTwoPi);
  j["residuals_hz"] = res;
  j["residual_norm_hz"] = r.residual_norm / kTwoPi;
  j["ill_conditioned"] = r.ill_conditioned;
  j["warning"] = r.warning;
  return j;
}

Json to_json(const CalibrationResult& r) {
  Json j;
  j["kappa_m_per_rad_s"] = r.kappa;
  j["kappa_err_m_per_rad_s"] = r.kappa_err;
  j["comb_spacing_m"] = r.comb_spacing;
  j["comb_spacing_err_m"] = r.comb_spacing_err;
  j["modulation_freq_hz"] = r.omega_m / kTwoPi;
  j["t_map_effective_s"] = r.t_map_effective;
  j["stripes"] = r.stripes;
  j["method"] = r.method;
  return j;
}

CalibrationResult calibration_from_json(const Json& j) {
  try {
    CalibrationResult r;
    r.kappa = j.at("kappa_m_per_rad_s").get<double>();
    r.kappa_err = j.at("kappa_err_m_per_rad_s").get<double>();
    r.comb_spacing = j.at("comb_spacing_m").get<double>();
    r.comb_spacing_err = j.at("comb_spacing_err_m").get<double>();
    r.omega_m = j.at("modulation_freq_hz").get<double>() * kTwoPi;
    r.t_map_effective = j.at("t_map_effective_s").get<double>();
    r.stripes = j.at("stripes").get<int>();
    r.method = j.at("method").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw InvalidConfig(std::string("calibration: ") + e.what(), {"calibration"});
  }
}

Json to_json(const FrequencyEstimate& r) {
  Json j;
  j["status"] = r.status;
  j["precession"] = r.precession;
  j["larmor_hz"] = r.omega_L / kTwoPi;
  j["larmor_err_hz"] = r.omega_err / kTwoPi;
  j["amplitude"] = r.amplitude;
  j["decay_s"] = r.decay;
  j["phase_rad"] = r.phase;
  j["offset"] = r.offset;
  j["residual_norm"] = r.residual_norm;
  j["peak_ratio"] = r.peak_ratio;
  return j;
}

Json to_json(const FaradayParams& p) {
  return {{"amplitude", p.amplitude}, {"decay_s", p.decay},        {"phase_rad", p.phase},
          {"offset", p.offset},       {"rate_hz", p.rate},          {"duration_s", p.duration},
          {"noise_sigma", p.noise_sigma}};
}

Json to_json(const Profile& p) { return {{"x_m", p.x}, {"counts", p.y}}; }

} // namespace vstpr
