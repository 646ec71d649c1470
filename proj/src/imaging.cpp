#include "vstpr/imaging.hpp"
#include "vstpr/errors.hpp"
#include "vstpr/parallel.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace vstpr {

void ImagingConfig::validate() const {
  std::vector<std::string> bad;
  if (!(image_time > 0)) bad.push_back("imaging.image_time_s");
  if (!(pixel_size > 0)) bad.push_back("imaging.pixel_size_m");
  if (width < 16) bad.push_back("imaging.width");
  if (height < 16) bad.push_back("imaging.height");
  if (!(photon_scale > 0)) bad.push_back("imaging.photon_scale");
  if (!bad.empty()) throw InvalidConfig("invalid imaging configuration", bad);
}

std::string to_string(FrameKind k) {
  switch (k) {
  case FrameKind::pulse_on: return "pulse_on";
  case FrameKind::pulse_off: return "pulse_off";
  case FrameKind::difference: return "difference";
  }
  return "unknown";
}

double Frame::total() const {
  double s = 0;
  for (double c : counts) s += c;
  return s;
}

void propagate(std::vector<AtomState>& atoms, double from_t, double to_t, const Vec3& gravity) {
  if (to_t < from_t) throw InvalidConfig("propagate: to_t precedes from_t");
  const double dt = to_t - from_t;
  if (dt == 0) return;
  const Vec3 dx_g = 0.5 * gravity * dt * dt, dv_g = gravity * dt;
  parallel_for(atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      atoms[i].position += atoms[i].velocity * dt + dx_g;
      atoms[i].velocity += dv_g;
    }
  });
}

void frame_origin(const ImagingConfig& img, double& origin_col, double& origin_row) {
  double zc = 0.5 * img.gravity.z() * img.image_time * img.image_time;
  origin_col = 0.5 * img.width;
  origin_row = 0.5 * img.height + zc / img.pixel_size;
}

Frame project(const std::vector<AtomState>& atoms, const ImagingConfig& img) {
  Frame f;
  f.width = img.width;
  f.height = img.height;
  f.meta.pixel_size = img.pixel_size;
  frame_origin(img, f.meta.origin_col, f.meta.origin_row);
  f.meta.photon_scale = img.photon_scale;
  f.meta.image_time = img.image_time;

  const std::size_t npix = static_cast<std::size_t>(img.width) * img.height;
  const double inv = 1.0 / img.pixel_size;
  // integer tallies: the merge order cannot change the result
  std::vector<std::uint32_t> hits(npix, 0);
  std::size_t outside = 0;
  for (const auto& a : atoms) {
    double c = std::floor(f.meta.origin_col + a.position.x() * inv);
    double r = std::floor(f.meta.origin_row - a.position.z() * inv);
    if (c < 0 || r < 0 || c >= img.width || r >= img.height) {
      ++outside;
      continue;
    }
    ++hits[static_cast<std::size_t>(r) * img.width + static_cast<std::size_t>(c)];
  }
  f.counts.resize(npix);
  for (std::size_t i = 0; i < npix; ++i) f.counts[i] = hits[i] * img.photon_scale;
  f.meta.atom_count = atoms.size();
  f.meta.atoms_outside = outside;
  f.meta.cloud_outside = !atoms.empty() && outside == atoms.size();
  return f;
}

namespace {

void add_poisson(Frame& f, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  for (double& c : f.counts) {
    if (c <= 0) continue;
    std::poisson_distribution<long long> d(c);
    c = static_cast<double>(d(eng));
  }
}

} // namespace

Frame run_sequence(const std::vector<AtomState>& initial, const SequenceInputs& in, bool pulse_on) {
  in.imaging.validate();
  in.pulse.validate();
  if (in.pulse.start_time + in.pulse.duration >= in.imaging.image_time)
    throw InvalidConfig("pulse ends at or after the imaging time",
                        {"pulse.start_time_s", "pulse.duration_s", "imaging.image_time_s"});
  std::vector<AtomState> atoms = initial;
  const Vec3 g = in.imaging.gravity;
  FieldVector B = field_at(in.coils);
  if (pulse_on) {
    AtomSampler rng(in.seed, in.sampling);
    propagate(atoms, 0.0, in.pulse.start_time, g);
    assign_channels(atoms, B, in.pulse, rng);
    apply_pulse(atoms, B, in.pulse, in.species, rng, g, in.imaging.image_time);
    propagate(atoms, in.pulse.start_time + in.pulse.duration, in.imaging.image_time, g);
  } else {
    propagate(atoms, 0.0, in.imaging.image_time, g);
  }
  Frame f = project(atoms, in.imaging);
  f.meta.kind = pulse_on ? FrameKind::pulse_on : FrameKind::pulse_off;
  f.meta.pulse_on = pulse_on;
  f.meta.currents = in.coils.current;
  f.meta.field = B.B;
  f.meta.seed = in.seed;
  f.meta.noise = in.imaging.noise;
  f.meta.pulse = in.pulse;
  f.meta.species = in.species;
  if (in.imaging.noise == NoiseMode::poisson)
    add_poisson(f, hash_combine(in.seed, pulse_on ? 0x0a11ULL : 0x0ff0ULL));
  return f;
}

Frame difference_frame(const Frame& on, const Frame& off) {
  if (on.width != off.width || on.height != off.height || on.meta.pixel_size != off.meta.pixel_size ||
      on.meta.origin_col != off.meta.origin_col || on.meta.origin_row != off.meta.origin_row)
    throw GeometryMismatch("difference_frame: frames have different geometry");
  if (on.meta.seed != off.meta.seed)
    throw GeometryMismatch("difference_frame: frames come from different seeds");
  Frame d;
  d.width = on.width;
  d.height = on.height;
  d.meta = on.meta;
  d.meta.kind = FrameKind::difference;
  d.meta.atoms_outside = std::max(on.meta.atoms_outside, off.meta.atoms_outside);
  d.meta.parents = {to_string(on.meta.kind), to_string(off.meta.kind)};
  d.counts.resize(on.counts.size());
  for (std::size_t i = 0; i < d.counts.size(); ++i) d.counts[i] = on.counts[i] - off.counts[i];
  return d;
}

Profile cross_section(const Frame& f, int row_begin, int row_end) {
  if (row_end <= row_begin) throw InvalidConfig("cross_section: empty row band");
  if (row_begin < 0 || row_end > f.height)
    throw InvalidConfig("cross_section: band outside the frame");
  Profile p;
  p.x.resize(f.width);
  p.y.assign(f.width, 0.0);
  for (int c = 0; c < f.width; ++c) p.x[c] = f.x_of_col(c);
  for (int r = row_begin; r < row_end; ++r)
    for (int c = 0; c < f.width; ++c) p.y[c] += f.at(r, c);
  return p;
}

Profile cross_section(const Frame& f) { return cross_section(f, 0, f.height); }

} // namespace vstpr
