#include "feklab/weights.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace feklab {

namespace {
constexpr double PI = 3.141592653589793238462643383279502884;

double log1p_exp(double s) {  // log(1 + e^s) without overflow
  if (s > 36.0) return s + std::log1p(std::exp(-s));
  return std::log1p(std::exp(s));
}
}  // namespace

Weight Weight::custom_radial(std::vector<double> s, std::vector<double> phi,
                             std::optional<double> tail) {
  if (s.size() < 2 || s.size() != phi.size())
    throw std::invalid_argument("custom_radial: need matching grids with >= 2 nodes");
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s[i] > s[i - 1])) throw std::invalid_argument("custom_radial: grid must be strictly increasing");
  Weight w;
  w.kind = WeightKind::CustomRadial;
  w.s_grid = std::move(s);
  w.phi_hat = std::move(phi);
  w.tail_slope = tail;
  return w;
}

double Weight::radial_hat(double s) const {
  switch (kind) {
    case WeightKind::Quadratic:
      return scale * std::exp(s) + shift;
    case WeightKind::HalfQuadratic:
      return 0.5 * scale * std::exp(s) + shift;
    case WeightKind::FubiniStudy:
      return scale * log1p_exp(s) + shift;
    case WeightKind::TorusLog:
      return scale * std::max(0.0, s) + shift;
    case WeightKind::IndicatorRadial: {
      const double lo = r_min > 0 ? 2.0 * std::log(r_min) : -kInf;
      const double hi = 2.0 * std::log(r_max);
      return (s >= lo - 1e-14 && s <= hi + 1e-14) ? shift : kInf;
    }
    case WeightKind::CustomRadial:
      return scale * interp_linear(s_grid, phi_hat, s) + shift;
  }
  throw std::logic_error("radial_hat: unknown kind");
}

double Weight::operator()(const cplx* z, int n) const {
  switch (kind) {
    case WeightKind::Quadratic: {
      double r2 = 0;
      for (int c = 0; c < n; ++c) r2 += std::norm(z[c]);
      return scale * r2 + shift;
    }
    case WeightKind::HalfQuadratic: {
      double r2 = 0;
      for (int c = 0; c < n; ++c) r2 += std::norm(z[c]);
      return 0.5 * scale * r2 + shift;
    }
    case WeightKind::FubiniStudy: {
      double r2 = 0;
      for (int c = 0; c < n; ++c) r2 += std::norm(z[c]);
      return scale * std::log1p(r2) + shift;
    }
    case WeightKind::TorusLog: {
      double m = 0.0;  // log+ includes 0
      for (int c = 0; c < n; ++c) {
        const double n2 = std::norm(z[c]);
        if (n2 > 1.0) m = std::max(m, std::log(n2));
      }
      return scale * m + shift;
    }
    case WeightKind::IndicatorRadial:
    case WeightKind::CustomRadial: {
      if (n != 1) throw std::invalid_argument("radial weight kinds require n = 1");
      const double n2 = std::norm(z[0]);
      return radial_hat(n2 > 0 ? std::log(n2) : -kInf);
    }
  }
  throw std::logic_error("Weight: unknown kind");
}

std::optional<std::vector<double>> Weight::gradient(const cplx* z, int n) const {
  std::vector<double> g(static_cast<std::size_t>(2) * n, 0.0);
  switch (kind) {
    case WeightKind::Quadratic:
    case WeightKind::HalfQuadratic: {
      const double f = (kind == WeightKind::Quadratic ? 2.0 : 1.0) * scale;
      for (int c = 0; c < n; ++c) {
        g[2 * c] = f * z[c].real();
        g[2 * c + 1] = f * z[c].imag();
      }
      return g;
    }
    case WeightKind::FubiniStudy: {
      double r2 = 0;
      for (int c = 0; c < n; ++c) r2 += std::norm(z[c]);
      const double f = 2.0 * scale / (1.0 + r2);
      for (int c = 0; c < n; ++c) {
        g[2 * c] = f * z[c].real();
        g[2 * c + 1] = f * z[c].imag();
      }
      return g;
    }
    case WeightKind::TorusLog: {
      int arg = -1;
      double best = 1.0;
      for (int c = 0; c < n; ++c) {
        const double n2 = std::norm(z[c]);
        if (n2 > best) {
          best = n2;
          arg = c;
        }
      }
      if (arg >= 0) {
        g[2 * arg] = 2.0 * scale * z[arg].real() / best;
        g[2 * arg + 1] = 2.0 * scale * z[arg].imag() / best;
      }
      return g;  // 0 inside the unit polydisc
    }
    case WeightKind::IndicatorRadial: {
      const double r = std::abs(z[0]);
      if (r < r_min - 1e-14 || r > r_max + 1e-14) return std::nullopt;
      return g;  // zero inside the carrier
    }
    case WeightKind::CustomRadial: {
      if (n != 1) return std::nullopt;
      const double n2 = std::norm(z[0]);
      if (n2 == 0.0) return g;
      const double s = std::log(n2);
      const double h = 1e-6;
      const double slope = (radial_hat(s + h) - radial_hat(s - h)) / (2 * h);
      // d phi/dx = phi_hat'(s) * 2x/|z|^2
      g[0] = slope * 2.0 * z[0].real() / n2;
      g[1] = slope * 2.0 * z[0].imag() / n2;
      return g;
    }
  }
  return std::nullopt;
}

std::optional<double> Weight::growth_slope() const {
  switch (kind) {
    case WeightKind::Quadratic:
    case WeightKind::HalfQuadratic:
      return kInf;
    case WeightKind::FubiniStudy:
      return scale;
    case WeightKind::TorusLog:
      return scale;
    case WeightKind::IndicatorRadial:
      return kInf;  // +inf off a compact carrier
    case WeightKind::CustomRadial:
      if (tail_slope) return scale * (*tail_slope);
      return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

BaseMeasure BaseMeasure::interval(double a, double b) {
  if (!(b > a)) throw std::invalid_argument("interval: need b > a");
  BaseMeasure m = of_kind(BaseKind::Interval);
  m.a = a;
  m.b = b;
  return m;
}

BaseMeasure BaseMeasure::radial_density_s(std::vector<double> s, std::vector<double> logw) {
  if (s.size() < 2 || s.size() != logw.size())
    throw std::invalid_argument("radial_density_s: need matching grids");
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s[i] > s[i - 1])) throw std::invalid_argument("radial_density_s: grid must increase");
  BaseMeasure m = of_kind(BaseKind::RadialDensityS);
  m.s_grid = std::move(s);
  m.log_w = std::move(logw);
  return m;
}

bool BaseMeasure::is_probability() const {
  switch (kind) {
    case BaseKind::Gaussian:
    case BaseKind::Circle:
    case BaseKind::Arcsine:
    case BaseKind::UniformDisc:
      return true;
    case BaseKind::Interval:
      return std::abs((b - a) - 1.0) < 1e-12;
    default:
      return false;
  }
}

int BaseMeasure::point_dim() const {
  switch (kind) {
    case BaseKind::LebesgueC:
    case BaseKind::Gaussian:
    case BaseKind::UniformDisc:
    case BaseKind::RadialDensityS:
      return 2 * n;
    default:
      return 1;
  }
}

double BaseMeasure::log_density(const cplx* z, int nn) const {
  switch (kind) {
    case BaseKind::LebesgueC:
      return 0.0;
    case BaseKind::LebesgueR:
      return 0.0;
    case BaseKind::Gaussian: {
      double s = 0.0;
      for (int c = 0; c < nn; ++c) s += std::norm(z[c]);
      return -s / (sigma * sigma) - nn * std::log(PI * sigma * sigma);
    }
    case BaseKind::Circle:
      return 0.0;  // wrt its own normalized arc length; carrier handled by samplers
    case BaseKind::Interval: {
      const double x = z[0].real();
      return (x >= a && x <= b) ? 0.0 : -kInf;
    }
    case BaseKind::Arcsine: {
      const double x = z[0].real();
      if (x <= -1.0 || x >= 1.0) return -kInf;
      return -std::log(PI) - 0.5 * std::log1p(-x * x);
    }
    case BaseKind::UniformDisc: {
      const double r2 = std::norm(z[0]);
      return r2 <= R * R ? -std::log(PI * R * R) : -kInf;
    }
    case BaseKind::RadialDensityS: {
      // density wrt Lebesgue on C: w(s) / (pi e^s) at s = log|z|^2
      const double n2 = std::norm(z[0]);
      if (n2 == 0.0) return -kInf;
      const double s = std::log(n2);
      if (s < s_grid.front() || s > s_grid.back()) return -kInf;
      return interp_linear(s_grid, log_w, s) - std::log(PI) - s;
    }
  }
  throw std::logic_error("log_density: unknown kind");
}

bool BaseMeasure::radial_available() const {
  switch (kind) {
    case BaseKind::LebesgueC:
    case BaseKind::Gaussian:
    case BaseKind::UniformDisc:
    case BaseKind::RadialDensityS:
      return n == 1;
    default:
      return false;
  }
}

double BaseMeasure::radial_log_w(double s) const {
  switch (kind) {
    case BaseKind::LebesgueC:
      return std::log(PI) + s;
    case BaseKind::Gaussian:
      return s - 2.0 * std::log(sigma) - std::exp(s) / (sigma * sigma);
    case BaseKind::UniformDisc:
      return s <= 2.0 * std::log(R) + 1e-14 ? s - 2.0 * std::log(R) : -kInf;
    case BaseKind::RadialDensityS:
      if (s < s_grid.front() - 1e-12 || s > s_grid.back() + 1e-12) return -kInf;
      return interp_linear(s_grid, log_w, s);
    default:
      throw std::invalid_argument("radial_log_w: base measure is not radial-planar");
  }
}

cplx BaseMeasure::sample_point(std::mt19937_64& eng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (kind) {
    case BaseKind::Gaussian: {
      std::normal_distribution<double> g(0.0, sigma / std::sqrt(2.0));
      return {g(eng), g(eng)};
    }
    case BaseKind::Circle: {
      const double th = 2.0 * PI * u(eng);
      return std::polar(1.0, th);
    }
    case BaseKind::UniformDisc: {
      const double r = R * std::sqrt(u(eng));
      return std::polar(r, 2.0 * PI * u(eng));
    }
    case BaseKind::Interval:
      return {a + (b - a) * u(eng), 0.0};
    case BaseKind::Arcsine:
      return {std::sin(PI * (u(eng) - 0.5)), 0.0};
    default:
      throw std::invalid_argument("sample_point: base measure is not a (sampleable) probability");
  }
}

// ---------------------------------------------------------------------------

AdmissibilityVerdict admissibility_check(const Weight& w, const BaseMeasure& base, double beta,
                                         int n) {
  AdmissibilityVerdict v;
  if (!(beta > 0.0)) {
    v.status = AdmissibilityStatus::CannotClassify;
    v.detail = "classifier requires beta > 0 (beta = +inf allowed)";
    return v;
  }

  // Iterated-exponential cap: only custom profiles can violate it.
  if (w.kind == WeightKind::CustomRadial) {
    for (std::size_t i = 0; i < w.s_grid.size(); ++i) {
      const double s = w.s_grid[i];
      if (s > 1.0 && w.phi_hat[i] > 1e6 * std::exp(std::exp(s))) {
        v.status = AdmissibilityStatus::FailsIteratedExponential;
        v.detail = "profile exceeds the iterated-exponential growth cap";
        return v;
      }
    }
  }

  const auto wslope = w.growth_slope();
  if (!wslope) {
    v.status = AdmissibilityStatus::CannotClassify;
    v.detail = "custom radial weight with undeclared tail slope";
    return v;
  }

  // Growth slope of -beta^{-1} log(dV/dLeb): zero for Lebesgue kinds, +inf
  // for Gaussian decay and for compactly carried bases (the condition is
  // vacuous at large |z| there), and read from the declared tail of a custom
  // radial density (log_w - s is the log density wrt Lebesgue in s).
  double pslope = 0.0;
  switch (base.kind) {
    case BaseKind::LebesgueC:
    case BaseKind::LebesgueR:
      pslope = 0.0;
      break;
    case BaseKind::RadialDensityS: {
      const std::size_t L = base.s_grid.size() - 1;
      double g;
      if (std::isinf(base.log_w[L]) && base.log_w[L] < 0)
        g = -kInf;  // carrier ends before the grid does
      else
        g = (base.log_w[L] - base.log_w[L - 1]) / (base.s_grid[L] - base.s_grid[L - 1]) - 1.0;
      if (std::isinf(g))
        pslope = g < 0 ? kInf : -kInf;
      else
        pslope = std::isinf(beta) ? 0.0 : -g / beta;
      break;
    }
    default:
      pslope = kInf;
      break;
  }

  if (std::isinf(*wslope) && std::isinf(pslope) && *wslope > 0.0 && pslope < 0.0) {
    v.status = AdmissibilityStatus::CannotClassify;
    v.detail = "super-logarithmic weight against a super-logarithmically growing base density; "
               "growth slopes do not decompose";
    return v;
  }
  const double total = *wslope + pslope;
  const double need = 1.0 + (std::isinf(beta) ? 0.0 : n / beta);
  for (double eps : {0.5, 0.1, 0.01}) {
    if (total > need + eps) {
      v.status = AdmissibilityStatus::Ok;
      v.epsilon = eps;
      v.detail = "growth slope " + format_double(total) + " > " + format_double(need + eps);
      return v;
    }
  }
  v.status = AdmissibilityStatus::FailsGrowth;
  v.detail = "growth slope " + format_double(total) + " <= " + format_double(need + 0.01);
  return v;
}

// ---------------------------------------------------------------------------

RadialProfile weighted_extremal_radial(const Weight& w, const std::vector<double>& s_grid) {
  const int M = static_cast<int>(s_grid.size());
  if (M < 3) throw std::invalid_argument("weighted_extremal_radial: grid too small");
  for (int i = 1; i < M; ++i)
    if (!(s_grid[i] > s_grid[i - 1]))
      throw std::invalid_argument("weighted_extremal_radial: grid must increase");

  // Finite sample points of phi_hat only (indicator carriers leave +inf gaps).
  std::vector<int> fin;
  std::vector<double> phi(M);
  for (int i = 0; i < M; ++i) {
    phi[i] = w.radial_hat(s_grid[i]);
    if (std::isfinite(phi[i])) fin.push_back(i);
  }
  if (fin.size() < 2)
    throw std::invalid_argument("weighted_extremal_radial: weight is +inf on (almost) all of the grid");

  // Lower convex hull of the finite points (monotone chain; slopes increase).
  std::vector<int> hull;
  for (int idx : fin) {
    while (hull.size() >= 2) {
      const int p = hull[hull.size() - 2], q = hull[hull.size() - 1];
      const double cross = (s_grid[q] - s_grid[p]) * (phi[idx] - phi[p]) -
                           (phi[q] - phi[p]) * (s_grid[idx] - s_grid[p]);
      if (cross <= 0.0)
        hull.pop_back();  // q above the chord p->idx
      else
        break;
    }
    hull.push_back(idx);
  }

  // Slope clipping.  Hull slopes are nondecreasing: to the left of the last
  // vertex with incoming slope < 0 the constrained envelope is constant (the
  // hull minimum); past the last vertex with incoming slope <= 1 it is the
  // slope-one tangent ray.  Both replacements stay below phi_hat and contact
  // survives at the anchor vertices.
  const int H = static_cast<int>(hull.size());
  int left = 0;
  while (left + 1 < H) {
    const double sl = (phi[hull[left + 1]] - phi[hull[left]]) / (s_grid[hull[left + 1]] - s_grid[hull[left]]);
    if (sl >= 0.0) break;
    ++left;
  }
  int right = H - 1;
  while (right > left) {
    const double sl = (phi[hull[right]] - phi[hull[right - 1]]) / (s_grid[hull[right]] - s_grid[hull[right - 1]]);
    if (sl <= 1.0) break;
    --right;
  }

  RadialProfile out;
  out.s = s_grid;
  out.psi.resize(M);
  const double cL = phi[hull[left]];          // constant level on the left
  const int aR = hull[right];                 // slope-1 anchor on the right
  int seg = left;                             // current hull segment
  for (int i = 0; i < M; ++i) {
    const double s = s_grid[i];
    if (s <= s_grid[hull[left]]) {
      out.psi[i] = cL;
    } else if (s >= s_grid[aR]) {
      out.psi[i] = phi[aR] + (s - s_grid[aR]);
    } else {
      while (seg + 1 <= right && s_grid[hull[seg + 1]] < s) ++seg;
      const int p = hull[seg], q = hull[seg + 1];
      if (i == q || i == p) {
        out.psi[i] = phi[i];  // exact contact at hull vertices
      } else {
        const double t = (s - s_grid[p]) / (s_grid[q] - s_grid[p]);
        out.psi[i] = phi[p] + t * (phi[q] - phi[p]);
      }
    }
  }
  out.slopes_from_psi();
  // Guard against rounding pushing cell slopes out of [0, 1].
  for (auto& mm : out.m) mm = std::min(1.0, std::max(0.0, mm));
  return out;
}

}  // namespace feklab
