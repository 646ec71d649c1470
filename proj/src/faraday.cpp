#include "vstpr/faraday.hpp"
#include "vstpr/errors.hpp"
#include "vstpr/fitting.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

namespace vstpr {

void FaradayParams::validate() const {
  std::vector<std::string> bad;
  if (!(decay > 0)) bad.push_back("faraday.decay_s");
  if (!(rate > 0)) bad.push_back("faraday.rate_hz");
  if (!(duration > 0)) bad.push_back("faraday.duration_s");
  if (!(noise_sigma >= 0)) bad.push_back("faraday.noise_sigma");
  if (!bad.empty()) throw InvalidConfig("invalid faraday configuration", bad);
}

FaradayTrace synthesize_trace(const FieldVector& B, const AtomSpecies& sp, const FaradayParams& p,
                              std::uint64_t seed) {
  p.validate();
  const double w = larmor_frequency(B, sp);
  if (!(p.rate > w / std::numbers::pi))
    throw InvalidConfig("sample rate below the Nyquist rate of the precession", {"faraday.rate_hz"});
  FaradayTrace tr;
  tr.params = p;
  tr.omega_L = w;
  const std::size_t n = static_cast<std::size_t>(std::floor(p.duration * p.rate));
  tr.t.resize(n);
  tr.signal.resize(n);
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double t = i / p.rate;
    tr.t[i] = t;
    double s = p.amplitude * std::exp(-t / p.decay) * std::sin(w * t + p.phase) + p.offset;
    if (p.noise_sigma > 0) s += p.noise_sigma * noise(eng);
    tr.signal[i] = s;
  }
  return tr;
}

FrequencyEstimate extract_frequency(const FaradayTrace& tr) {
  FrequencyEstimate out;
  const std::size_t n = tr.signal.size();
  if (n < 16) throw InvalidConfig("trace too short for frequency extraction");
  for (std::size_t i = 1; i < n; ++i)
    if (!(tr.t[i] > tr.t[i - 1])) throw InvalidConfig("trace sample times must increase");
  const double dt = (tr.t.back() - tr.t.front()) / (n - 1);
  double mean = 0;
  for (double v : tr.signal) mean += v;
  mean /= n;

  std::size_t nfft = 1;
  while (nfft < 4 * n) nfft <<= 1;
  std::vector<double> buf(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    buf[i] = (tr.signal[i] - mean) * hann;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, buf);
  const std::size_t half = nfft / 2;
  std::vector<double> pw(half);
  for (std::size_t k = 0; k < half; ++k) pw[k] = std::norm(spectrum[k]);
  // skip the lowest bins, dominated by the window and the decay envelope
  std::size_t kmin = std::max<std::size_t>(2, 2 * nfft / n);
  std::size_t kp = kmin;
  for (std::size_t k = kmin; k < half - 1; ++k)
    if (pw[k] > pw[kp]) kp = k;
  std::vector<double> sorted(pw.begin() + kmin, pw.end());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double med = sorted[sorted.size() / 2];
  out.peak_ratio = med > 0 ? pw[kp] / med : (pw[kp] > 0 ? INFINITY : 0.0);
  if (!(out.peak_ratio > 100.0)) {
    out.status = "no-precession";
    return out;
  }
  double a = std::log(pw[kp - 1]), b = std::log(pw[kp]), c = std::log(pw[kp + 1]);
  double den = a - 2 * b + c;
  double frac = den != 0 ? 0.5 * (a - c) / den : 0.0;
  double w0 = 2.0 * std::numbers::pi * (kp + frac) / (nfft * dt);

  // linear start for amplitude/phase/offset at fixed (w0, tau0)
  const double tau0 = tr.params.decay > 0 ? tr.params.decay : (tr.t.back() - tr.t.front());
  MatrixXd A(n, 3);
  VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = tr.t[i], e = std::exp(-t / tau0);
    A(i, 0) = e * std::sin(w0 * t);
    A(i, 1) = e * std::cos(w0 * t);
    A(i, 2) = 1.0;
    y[i] = tr.signal[i];
  }
  Eigen::Vector3d lin = A.colPivHouseholderQr().solve(y);
  double amp0 = std::hypot(lin[0], lin[1]);
  double ph0 = std::atan2(lin[1], lin[0]);

  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    const double Am = q[0], tau = q[1], w = q[2], ph = q[3], o = q[4];
    for (std::size_t i = 0; i < n; ++i) {
      double t = tr.t[i], e = std::exp(-t / tau), s = std::sin(w * t + ph), co = std::cos(w * t + ph);
      r[i] = Am * e * s + o - tr.signal[i];
      if (J) {
        (*J)(i, 0) = e * s;
        (*J)(i, 1) = Am * e * s * t / (tau * tau);
        (*J)(i, 2) = Am * e * co * t;
        (*J)(i, 3) = Am * e * co;
        (*J)(i, 4) = 1.0;
      }
    }
  };
  VectorXd q0(5);
  q0 << amp0, tau0, w0, ph0, lin[2];
  LmOptions lo;
  lo.scale = VectorXd(5);
  lo.scale << amp0 + 1e-300, tau0, w0, 1.0, amp0 + 1e-300;
  auto res = levenberg_marquardt(f, q0, static_cast<int>(n), lo);
  out.precession = true;
  out.status = "ok";
  out.amplitude = res.params[0];
  out.decay = res.params[1];
  out.omega_L = std::abs(res.params[2]);
  out.omega_err = std::sqrt(std::max(0.0, res.covariance(2, 2)));
  out.phase = res.params[3];
  out.offset = res.params[4];
  out.residual_norm = res.residual_norm;
  if (out.amplitude < 0) {
    out.amplitude = -out.amplitude;
    out.phase += std::numbers::pi;
  }
  out.phase = std::remainder(out.phase, 2.0 * std::numbers::pi);
  return out;
}

} // namespace vstpr
