#include "vstpr/analysis.hpp"
#include "vstpr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vstpr {

namespace {

constexpr double kFwhm = 2.3548200450309493; // 2 sqrt(2 ln 2)
const double kSqrt2Pi = std::sqrt(2.0 * std::numbers::pi);

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

double pixel_pitch(const Profile& p) {
  return p.size() > 1 ? std::abs(p.x[1] - p.x[0]) : 1.0;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// FWHM around index i of a peaked curve, linear interpolation at the crossings.
double fwhm_at(const Profile& p, const std::vector<double>& y, std::size_t i) {
  double half = 0.5 * y[i];
  std::size_t l = i, r = i;
  while (l > 0 && y[l] > half) --l;
  while (r + 1 < y.size() && y[r] > half) ++r;
  auto cross = [&](std::size_t a, std::size_t b) {
    double ya = y[a], yb = y[b];
    double t = (ya == yb) ? 0.5 : (half - ya) / (yb - ya);
    return p.x[a] + t * (p.x[b] - p.x[a]);
  };
  double xl = l < i ? cross(l, l + 1) : p.x[i];
  double xr = r > i ? cross(r - 1, r) : p.x[i];
  return std::max(xr - xl, pixel_pitch(p));
}

} // namespace

std::string to_string(FitStatus s) {
  switch (s) {
  case FitStatus::resolved: return "resolved";
  case FitStatus::unresolved: return "unresolved";
  case FitStatus::failed: return "failed";
  }
  return "failed";
}

double noise_floor(const std::vector<double>& y) {
  if (y.size() < 3) return 0.0;
  std::vector<double> d(y.size() - 1);
  for (std::size_t i = 0; i + 1 < y.size(); ++i) d[i] = y[i + 1] - y[i];
  double m = median(d);
  for (double& v : d) v = std::abs(v - m);
  return 1.4826 * median(d) / std::numbers::sqrt2;
}

std::vector<double> boxcar(const std::vector<double>& y, int width) {
  const int n = static_cast<int>(y.size()), h = width / 2;
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    int a = std::max(0, i - h), b = std::min(n - 1, i + h);
    double s = 0;
    for (int j = a; j <= b; ++j) s += y[j];
    out[i] = s / (b - a + 1);
  }
  return out;
}

// ---- single Gaussian ----

double GaussianFit::operator()(double x) const {
  double u = (x - center) / sigma;
  return amplitude * std::exp(-0.5 * u * u);
}

GaussianFit fit_gaussian(const Profile& p) {
  const int m = static_cast<int>(p.size());
  if (m < 4) throw InvalidConfig("fit_gaussian: profile too short");
  double w = 0, mx = 0, mxx = 0;
  for (int i = 0; i < m; ++i) {
    double v = std::max(0.0, p.y[i]);
    w += v;
    mx += v * p.x[i];
  }
  if (!(w > 0)) throw FitFailed("fit_gaussian: profile has no positive weight", 0.0);
  mx /= w;
  for (int i = 0; i < m; ++i) {
    double v = std::max(0.0, p.y[i]);
    mxx += v * (p.x[i] - mx) * (p.x[i] - mx);
  }
  double s0 = std::max(std::sqrt(mxx / w), pixel_pitch(p));
  double a0 = *std::max_element(p.y.begin(), p.y.end());

  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    for (int i = 0; i < m; ++i) {
      double u = (p.x[i] - q[0]) / q[1];
      double e = std::exp(-0.5 * u * u);
      r[i] = q[2] * e - p.y[i];
      if (J) {
        (*J)(i, 0) = q[2] * e * u / q[1];
        (*J)(i, 1) = q[2] * e * u * u / q[1];
        (*J)(i, 2) = e;
      }
    }
  };
  LmOptions opt;
  opt.scale = VectorXd::Constant(3, 0.0);
  opt.scale << s0, s0, std::abs(a0) + 1e-300;
  auto res = levenberg_marquardt(f, Eigen::Vector3d(mx, s0, a0), m, opt);
  GaussianFit g;
  g.center = res.params[0];
  g.sigma = std::abs(res.params[1]);
  g.amplitude = res.params[2];
  g.covariance = res.covariance;
  g.residual_norm = res.residual_norm;
  g.initial_residual_norm = res.initial_residual_norm;
  return g;
}

// ---- recoil doublet stripe ----

double doublet_model(double x, double c, double s, double A, double d, double D) {
  auto g = [s](double z) { return std::exp(-0.5 * z * z / (s * s)); };
  return A * (g(x - c + d) + g(x - c - d) - g(x - c + D) - g(x - c - D));
}

double DoubletFit::operator()(double x) const { return doublet_model(x, center, sigma, amplitude, inner, outer); }

DoubletFit fit_doublet(const Profile& p, double T_i, double dT, const AtomSpecies& sp,
                      const DoubletOptions& opt) {
  const int m = static_cast<int>(p.size());
  if (m < 8) throw InvalidConfig("fit_doublet: profile too short");
  const double vr = sp.recoil_velocity();
  const double D = vr * T_i;
  const double d_geo = 2.0 * vr * dT;

  auto ys = boxcar(p.y, 5);
  std::size_t ipk = argmax(ys);
  double c0 = opt.center_guess ? *opt.center_guess : p.x[ipk];
  if (opt.center_guess) {
    // nearest sample to the guess
    ipk = 0;
    for (int i = 1; i < m; ++i)
      if (std::abs(p.x[i] - c0) < std::abs(p.x[ipk] - c0)) ipk = i;
  }
  double s0 = opt.sigma_guess ? *opt.sigma_guess : std::max(fwhm_at(p, ys, ipk) / kFwhm, 2.0 * pixel_pitch(p));
  double d0 = opt.free_splitting ? std::max(std::abs(d_geo), 0.2 * s0) : d_geo;
  double unit = doublet_model(c0, c0, s0, 1.0, d0, D);
  double a0 = unit != 0 ? ys[ipk] / unit : ys[ipk];

  const bool free_d = opt.free_splitting;
  const int n = free_d ? 4 : 3;
  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    const double c = q[0], s = q[1], A = q[2], d = free_d ? q[3] : d_geo;
    const double is2 = 1.0 / (s * s);
    const double off[4] = {-d, d, -D, D};
    const double sgn[4] = {1, 1, -1, -1};
    for (int i = 0; i < m; ++i) {
      double y = 0, dc = 0, ds = 0, dA = 0;
      double gz[4], zz[4];
      for (int k = 0; k < 4; ++k) {
        double z = p.x[i] - c - off[k];
        double g = std::exp(-0.5 * z * z * is2);
        gz[k] = g;
        zz[k] = z;
        dA += sgn[k] * g;
        dc += sgn[k] * g * z * is2;
        ds += sgn[k] * g * z * z * is2 / s;
      }
      y = A * dA;
      r[i] = y - p.y[i];
      if (J) {
        (*J)(i, 0) = A * dc;
        (*J)(i, 1) = A * ds;
        (*J)(i, 2) = dA;
        if (free_d) (*J)(i, 3) = A * (-gz[0] * zz[0] + gz[1] * zz[1]) * is2;
      }
    }
  };
  VectorXd q0(n);
  q0.head<3>() << c0, s0, a0;
  if (free_d) q0[3] = d0;
  LmOptions lo;
  lo.scale = VectorXd::Constant(n, s0);
  lo.scale[2] = std::abs(a0) + 1e-300;
  auto res = levenberg_marquardt(f, q0, m, lo);

  DoubletFit out;
  out.center = res.params[0];
  out.sigma = std::abs(res.params[1]);
  out.amplitude = res.params[2];
  out.inner = free_d ? res.params[3] : d_geo;
  out.outer = D;
  out.inner_free = free_d;
  out.covariance = res.covariance;
  out.residual_norm = res.residual_norm;
  out.initial_residual_norm = res.initial_residual_norm;
  out.iterations = res.iterations;
  return out;
}

// ---- zero-area stripes ----
//
// A [g(s1) - (s1/s2) g(s2)] rewritten with peak height B = A (1 - s1/s2) and
// s2 = s1 (1 + eps):  y = B g1 (1 - Q),  Q = t k E(a),  t = u^2 / 2 s1^2,
// k = (2 + eps)/(1 + eps)^2,  a = t eps k,  E(a) = expm1(a)/a.
// eps -> 0 is the finite limit B g1 (1 - 2t); the area is zero for every eps.

namespace {

struct ZaTerms {
  double y, dB, dt, deps;
};

ZaTerms za_terms(double u, double B, double s, double eps) {
  const double t = 0.5 * u * u / (s * s);
  const double op = 1.0 + eps;
  const double k = (2.0 + eps) / (op * op);
  const double kp = -(3.0 + eps) / (op * op * op);
  const double a = t * eps * k;
  const double g1 = std::exp(-t);
  const double g2 = std::exp(-t / (op * op));
  double gE, gEp;
  if (std::abs(a) < 1e-3) {
    gE = g1 * (1.0 + a / 2.0 + a * a / 6.0);
    gEp = g1 * (0.5 + a / 3.0 + a * a / 8.0);
  } else {
    gE = (g2 - g1) / a;
    gEp = (a * g2 - (g2 - g1)) / (a * a);
  }
  ZaTerms z;
  double g1Q = t * k * gE;
  z.dB = g1 - g1Q;
  z.y = B * z.dB;
  z.dt = B * (-g1 + g1Q - k * g2);
  z.deps = -B * t * (kp * gE + k * gEp * t * (k + eps * kp));
  return z;
}

} // namespace

double StripeFit::operator()(double x) const {
  double eps = sigma_neg / sigma - 1.0;
  return za_terms(x - center, amplitude, sigma, eps).y;
}

double StripeFit::positive_area() const {

  const double span = 6.0 * sigma_neg;
  const int n = 20000;
  double a = 0;
  for (int i = 0; i <= n; ++i) {
    double x = center - span + 2.0 * span * i / n;
    double w = (i == 0 || i == n) ? 0.5 : 1.0;
    a += w * std::max(0.0, (*this)(x));
  }
  return a * 2.0 * span / n;
}

StripeFitResult fit_stripes_zero_area(const Profile& p, const ZeroAreaOptions& opt) {
  StripeFitResult out;
  out.method = "zero_area";
  const int m = static_cast<int>(p.size());
  if (m < 8) throw InvalidConfig("fit_stripes_zero_area: profile too short");
  const double px = pixel_pitch(p);

  auto ys = boxcar(p.y, opt.smoothing);
  out.noise_floor = noise_floor(p.y);
  double ymax = *std::max_element(ys.begin(), ys.end());
  double thr = std::max(opt.relative_threshold * ymax,
                        opt.noise_threshold * out.noise_floor / std::sqrt(double(opt.smoothing)));
  std::vector<std::size_t> cand;
  if (ymax > 0)
    for (int i = 1; i + 1 < m; ++i)
      if (ys[i] > thr && ys[i] >= ys[i - 1] && ys[i] > ys[i + 1]) cand.push_back(i);
  std::sort(cand.begin(), cand.end(), [&](auto a, auto b) { return ys[a] > ys[b]; });
  std::vector<std::size_t> peaks;
  for (auto c : cand) {
    bool near = false;
    for (auto q : peaks) near |= std::abs(p.x[c] - p.x[q]) < opt.min_separation;
    if (!near) peaks.push_back(c);
  }
  if (peaks.empty()) {
    out.status = FitStatus::unresolved;
    out.message = "no stripe above threshold";
    return out;
  }
  std::sort(peaks.begin(), peaks.end());
  const int ns = static_cast<int>(peaks.size());
  const int n = 4 * ns;

  // per stripe: center, peak height, s1, eps (the family continues through eps = 0)
  VectorXd q0(n), scale(n);
  for (int k = 0; k < ns; ++k) {
    double s1 = std::max(fwhm_at(p, ys, peaks[k]) / kFwhm, 1.5 * px);
    q0.segment<4>(4 * k) << p.x[peaks[k]], ys[peaks[k]], s1, 1.5;
    scale.segment<4>(4 * k) << s1, std::abs(ys[peaks[k]]) + 1e-300, s1, 1.0;
  }
  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    if (J) J->setZero();
    for (int i = 0; i < m; ++i) r[i] = -p.y[i];
    for (int k = 0; k < ns; ++k) {
      const double c = q[4 * k], B = q[4 * k + 1], s = q[4 * k + 2], eps = q[4 * k + 3];
      for (int i = 0; i < m; ++i) {
        double u = p.x[i] - c;
        auto z = za_terms(u, B, s, eps);
        r[i] += z.y;
        if (J) {
          double t = 0.5 * u * u / (s * s);
          (*J)(i, 4 * k) = z.dt * (-u / (s * s));
          (*J)(i, 4 * k + 1) = z.dB;
          (*J)(i, 4 * k + 2) = z.dt * (-2.0 * t / s);
          (*J)(i, 4 * k + 3) = z.deps;
        }
      }
    }
  };
  LmOptions lo;
  lo.scale = scale;
  LmResult res;
  try {
    res = levenberg_marquardt(f, q0, m, lo);
  } catch (const FitFailed& e) {
    out.status = FitStatus::failed;
    out.residual_norm = e.last_residual();
    out.message = e.what();
    return out;
  }
  out.residual_norm = res.residual_norm;
  out.initial_residual_norm = res.initial_residual_norm;
  for (int k = 0; k < ns; ++k) {
    StripeFit s;
    s.center = res.params[4 * k];
    s.amplitude = res.params[4 * k + 1];
    s.sigma = std::abs(res.params[4 * k + 2]);
    s.sigma_neg = s.sigma * std::abs(1.0 + res.params[4 * k + 3]);
    s.covariance = res.covariance.block(4 * k, 4 * k, 4, 4);
    s.center_err = std::sqrt(std::max(0.0, s.covariance(0, 0)));
    out.stripes.push_back(s);
  }

  // labels: a stripe within 3 sigma of x = 0 is the longitudinal (dm = 0) one
  // and it must sit clearly closer to 0 than to its neighbours (a symmetric pair is +-1)
  int central = -1;
  for (int k = 0; k < ns; ++k) {
    const auto& s = out.stripes[k];
    double gap = 1e300;
    for (int j = 0; j < ns; ++j)
      if (j != k) gap = std::min(gap, std::abs(out.stripes[j].center - s.center));
    if (std::abs(s.center) < 3.0 * s.sigma && std::abs(s.center) < 0.25 * gap &&
        (central < 0 || std::abs(s.center) < std::abs(out.stripes[central].center)))
      central = k;
  }
  std::vector<int> left, right; // both in ascending x
  for (int k = 0; k < ns; ++k)
    if (k != central) (out.stripes[k].center < 0 ? left : right).push_back(k);
  if (central >= 0) out.stripes[central].label = 0;
  for (std::size_t i = 0; i < left.size(); ++i)
    out.stripes[left[left.size() - 1 - i]].label = -static_cast<int>(i + 1);
  for (std::size_t i = 0; i < right.size(); ++i) out.stripes[right[i]].label = static_cast<int>(i + 1);
  int ip = -1, im = -1, idom = 0;
  for (int k = 0; k < ns; ++k) {
    if (out.stripes[k].label == 1) ip = k;
    if (out.stripes[k].label == -1) im = k;
    if (std::abs(out.stripes[k].amplitude) > std::abs(out.stripes[idom].amplitude))
      idom = k;
  }
  out.feature_width = kFwhm * out.stripes[idom].sigma;
  if (central >= 0) out.central_amplitude = out.stripes[central].amplitude;
  if (ip >= 0 && im >= 0) {
    out.status = FitStatus::resolved;
    out.separation = out.stripes[ip].center - out.stripes[im].center;
    double v = res.covariance(4 * ip, 4 * ip) + res.covariance(4 * im, 4 * im) -
               2.0 * res.covariance(4 * ip, 4 * im);
    out.separation_err = std::sqrt(std::max(0.0, v));
  } else {
    out.status = FitStatus::unresolved;
    out.message = "fewer than two side stripes resolved";
  }
  return out;
}

// ---- field conversions and scans ----

FieldEstimate separation_to_field(double s, double t_map, const AtomSpecies& sp, int dm_pair) {
  if (!(s >= 0)) throw InvalidConfig("separation must be non-negative");
  if (!(t_map > 0)) throw InvalidConfig("mapping time must be positive", {"analysis.t_map_s"});
  if (dm_pair <= 0) throw InvalidConfig("dm_pair must be positive");
  FieldEstimate e;
  e.omega_L = 2.0 * sp.k() * s / (dm_pair * t_map);
  e.field = e.omega_L / sp.gyromag;
  return e;
}

double ScanFitResult::omega(double I, const AtomSpecies& sp) const {
  double u = alpha * (I - I0);
  return sp.gyromag * std::sqrt(u * u + B_perp * B_perp);
}

ScanFitResult fit_hyperbola(const std::vector<ScanPoint>& pts_in, const AtomSpecies& sp) {
  if (pts_in.size() < 4) throw InvalidConfig("fit_hyperbola needs at least 4 points");
  auto pts = pts_in;
  std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.current < b.current; });
  const int m = static_cast<int>(pts.size());
  const double g = sp.gyromag;

  std::size_t imin = 0;
  for (int i = 1; i < m; ++i)
    if (pts[i].omega_L < pts[imin].omega_L) imin = i;
  ScanFitResult out;
  if (imin == 0 || imin == pts.size() - 1) {
    out.ill_conditioned = true;
    out.warning = "all points lie on one side of the minimum";
  }
  double I0 = pts[imin].current;
  double a0 = 0;
  for (int i : {0, m - 1}) {
    double dI = std::abs(pts[i].current - I0);
    if (dI > 0) a0 = std::max(a0, (pts[i].omega_L - pts[imin].omega_L) / (g * dI));
  }
  if (!(a0 > 0)) a0 = 1.0;
  double b0 = std::max(pts[imin].omega_L / g, 1e-6);

  ResidualFn f = [&](const VectorXd& q, VectorXd& r, MatrixXd* J) {
    const double a = q[0], i0 = q[1], b = q[2];
    for (int i = 0; i < m; ++i) {
      double dI = pts[i].current - i0;
      double s = std::max(std::sqrt(a * a * dI * dI + b * b), 1e-300);
      double w = pts[i].sigma > 0 ? 1.0 / pts[i].sigma : 1.0;
      r[i] = w * (g * s - pts[i].omega_L);
      if (J) {
        (*J)(i, 0) = w * g * a * dI * dI / s;
        (*J)(i, 1) = -w * g * a * a * dI / s;
        (*J)(i, 2) = w * g * b / s;
      }
    }
  };
  LmOptions lo;
  lo.scale = Eigen::Vector3d(a0, 1e-3, std::max(b0, 1e-3));
  auto res = levenberg_marquardt(f, Eigen::Vector3d(a0, I0, b0), m, lo);
  out.alpha = std::abs(res.params[0]);
  out.I0 = res.params[1];
  out.B_perp = std::abs(res.params[2]);
  out.alpha_err = std::sqrt(std::max(0.0, res.covariance(0, 0)));
  out.I0_err = std::sqrt(std::max(0.0, res.covariance(1, 1)));
  out.B_perp_err = std::sqrt(std::max(0.0, res.covariance(2, 2)));
  out.residual_norm = res.residual_norm;
  for (const auto& pt : pts_in) out.residuals.push_back(out.omega(pt.current, sp) - pt.omega_L);
  return out;
}

double contrast(const Profile& diff, const Profile& off, double T_i, double dT, const AtomSpecies& sp) {
  double peak = 0;
  for (double v : diff.y) peak = std::max(peak, std::abs(v));
  if (peak == 0) return 0.0;
  DoubletFit fit;
  GaussianFit ref;
  try {
    DoubletOptions o;
    o.free_splitting = true;
    fit = fit_doublet(diff, T_i, dT, sp, o);
    ref = fit_gaussian(off);
  } catch (const FitFailed&) {
    return 0.0;
  }
  double span = std::abs(fit.outer) + std::abs(fit.inner) + 4.0 * fit.sigma;
  double hi = -1e300, lo = 1e300;
  for (int i = 0; i <= 2000; ++i) {
    double x = fit.center - span + 2.0 * span * i / 2000.0;
    double v = fit(x);
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  double base = ref(fit.center);
  return base > 0 ? (hi - lo) / base : 0.0;
}

} // namespace vstpr
