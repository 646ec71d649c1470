#include "vstpr/ensemble.hpp"
#include "vstpr/errors.hpp"
#include "vstpr/parallel.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>

namespace vstpr {

namespace {

constexpr std::array<unsigned, AtomSampler::dim_count> kBases = {2, 3, 5, 7, 11, 13, 17, 19};

int digits_for(unsigned base) {
  return static_cast<int>(std::ceil(53.0 / std::log2(static_cast<double>(base))));
}

} // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2));
  return splitmix64(s);
}

AtomSampler::AtomSampler(std::uint64_t seed, SamplingMode mode) : seed_(seed), mode_(mode) {
  if (mode_ != SamplingMode::quasi) return;
  for (int d = 0; d < dim_count; ++d) {
    unsigned b = kBases[d];
    int nd = digits_for(b);
    std::uint64_t state = hash_combine(seed, 0x5eed0000ULL + d);
    auto& pd = perms_[d];
    pd.resize(nd);
    for (int j = 0; j < nd; ++j) {
      auto& p = pd[j];
      p.resize(b);
      for (unsigned i = 0; i < b; ++i) p[i] = static_cast<std::uint8_t>(i);
      for (unsigned i = b - 1; i > 0; --i) {
        unsigned r = static_cast<unsigned>(splitmix64(state) % (i + 1));
        std::swap(p[i], p[r]);
      }
    }
  }
}

double AtomSampler::uniform(std::size_t atom, Dim d) const {
  double u;
  if (mode_ == SamplingMode::quasi) {
    const unsigned b = kBases[d];
    const auto& pd = perms_[d];
    std::uint64_t n = atom + 1;
    double inv = 1.0 / b, f = inv;
    u = 0.0;
    for (const auto& p : pd) {
      u += p[n % b] * f;
      n /= b;
      f *= inv;
    }
  } else {
    std::uint64_t h = hash_combine(hash_combine(seed_, atom), 0xd1b54a32d192ed03ULL + d);
    u = (h >> 11) * 0x1.0p-53;
  }
  constexpr double lo = 1e-15;
  return std::clamp(u, lo, 1.0 - lo);
}

double AtomSampler::normal(std::size_t atom, Dim d) const {
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * uniform(atom, d));
}

void EnsembleConfig::validate() const {
  std::vector<std::string> bad;
  if (atom_count < 1) bad.push_back("ensemble.atom_count");
  if (!(position_sigma > 0)) bad.push_back("ensemble.position_sigma_m");
  if (!(temperature >= 0)) bad.push_back("ensemble.temperature_k");
  if (!bad.empty()) throw InvalidConfig("invalid ensemble configuration", bad);
}

double velocity_sigma(double temperature, const AtomSpecies& sp) {
  return std::sqrt(phys::k_B * temperature / sp.mass);
}

std::vector<AtomState> sample_ensemble(const EnsembleConfig& cfg, const AtomSpecies& sp) {
  cfg.validate();
  const double sx = cfg.position_sigma;
  const double sv = velocity_sigma(cfg.temperature, sp);
  AtomSampler rng(cfg.rng_seed, cfg.sampling);
  std::vector<AtomState> atoms(cfg.atom_count);
  using D = AtomSampler;
  parallel_for(atoms.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      auto& a = atoms[i];
      a.position = Vec3(sx * rng.normal(i, D::x), sx * rng.normal(i, D::y), sx * rng.normal(i, D::z));
      if (sv > 0)
        a.velocity = Vec3(sv * rng.normal(i, D::vx), sv * rng.normal(i, D::vy), sv * rng.normal(i, D::vz));
    }
  });
  return atoms;
}

} // namespace vstpr
