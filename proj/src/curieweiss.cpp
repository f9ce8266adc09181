#include "feklab/curieweiss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "feklab/common.hpp"

namespace feklab {

namespace {

double sign_of(CWSign s) { return s == CWSign::Ferro ? 1.0 : -1.0; }

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("curie-weiss: need finite beta > 0");
}

// ((1+m)/2) log((1+m)/2) + ((1-m)/2) log((1-m)/2), with 0 log 0 = 0.
double entropy_term(double m) {
  auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
  return xlogx(0.5 * (1.0 + m)) + xlogx(0.5 * (1.0 - m));
}

// d^2F/dm^2 = -s + 1/(beta (1 - m^2)); +inf at the endpoints.
double f_second(double m, double beta, double s) {
  const double om = (1.0 - m) * (1.0 + m);
  if (om <= 0.0) return kInf;
  return -s + 1.0 / (beta * om);
}

double fixed_point_gap(double m, double beta, double h, double s) {
  return m - std::tanh(s * beta * (m + h));
}

}  // namespace

double cw_free_energy(double m, double beta, double h, CWSign sign) {
  check_beta(beta);
  if (!(std::abs(m) <= 1.0))
    throw std::invalid_argument("cw_free_energy: magnetization outside [-1, 1]");
  const double s = sign_of(sign);
  return s * (-0.5 * m * m - h * m) + entropy_term(m) / beta;
}

std::vector<CWFixedPoint> cw_magnetization(double beta, double h, CWSign sign) {
  check_beta(beta);
  const double s = sign_of(sign);
  auto g = [&](double m) { return fixed_point_gap(m, beta, h, s); };

  // Sign scan on a symmetric interior grid, then bisection.  Roots never sit
  // at +-1 (tanh < 1), so the interior margin loses nothing.
  constexpr int kScan = 4096;
  constexpr double kEdge = 1.0 - 1e-13;
  std::vector<double> roots;
  double prev_m = -kEdge, prev_g = g(prev_m);
  for (int i = 1; i <= kScan; ++i) {
    const double cur_m = -kEdge + 2.0 * kEdge * i / kScan;
    const double cur_g = g(cur_m);
    if (prev_g == 0.0) {
      roots.push_back(prev_m);
    } else if ((prev_g < 0.0) != (cur_g < 0.0)) {
      double a = prev_m, b = cur_m, ga = prev_g;
      while (b - a > 1e-12) {
        const double mid = 0.5 * (a + b), gm = g(mid);
        if (gm == 0.0) {
          a = b = mid;
          break;
        }
        if ((ga < 0.0) == (gm < 0.0)) {
          a = mid;
          ga = gm;
        } else {
          b = mid;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    prev_m = cur_m;
    prev_g = cur_g;
  }
  if (prev_g == 0.0) roots.push_back(prev_m);

  // dedupe near-coincident roots
  std::sort(roots.begin(), roots.end());
  std::vector<double> uniq;
  for (double r : roots)
    if (uniq.empty() || r - uniq.back() > 1e-9) uniq.push_back(r);

  // h = 0: the equation is exactly odd, so present the root set with the Z2
  // symmetry enforced (negative roots are the mirrors of the positive ones)
  if (h == 0.0) {
    std::vector<double> sym;
    for (double r : uniq)
      if (r > 1e-9) sym.push_back(r);
    uniq.clear();
    for (auto it = sym.rbegin(); it != sym.rend(); ++it) uniq.push_back(-*it);
    uniq.push_back(0.0);
    for (double r : sym) uniq.push_back(r);
  }

  std::vector<CWFixedPoint> out;
  for (double r : uniq) {
    CWFixedPoint fp;
    fp.m = r;
    fp.stable = f_second(r, beta, s) >= -1e-12;
    fp.f = cw_free_energy(r, beta, h, sign);
    out.push_back(fp);
  }
  return out;
}

CWFiniteN cw_finite_n(double beta, double h, long long N, double window_lo, double window_hi,
                      CWSign sign) {
  check_beta(beta);
  if (N < 1 || N > 1000000)
    throw std::invalid_argument("cw_finite_n: N outside [1, 10^6]");
  if (!(window_lo <= window_hi) || window_lo < -1.0 || window_hi > 1.0)
    throw std::invalid_argument("cw_finite_n: window outside [-1, 1]");
  const double s = sign_of(sign);
  const double nd = static_cast<double>(N);

  CWFiniteN res;
  res.m.resize(N + 1);
  res.log_p.resize(N + 1);
  const double lg_n = std::lgamma(nd + 1.0);
  double max_lw = -kInf;
  for (long long j = 0; j <= N; ++j) {
    const double m = (2.0 * j - nd) / nd;
    const double lw = lg_n - std::lgamma(static_cast<double>(j) + 1.0) -
                      std::lgamma(nd - static_cast<double>(j) + 1.0) +
                      s * beta * nd * (0.5 * m * m + h * m);
    res.m[j] = m;
    res.log_p[j] = lw;
    max_lw = std::max(max_lw, lw);
  }
  KahanSum zsum;
  for (long long j = 0; j <= N; ++j) zsum.add(std::exp(res.log_p[j] - max_lw));
  res.log_z = max_lw + std::log(zsum.value());
  for (long long j = 0; j <= N; ++j) res.log_p[j] -= res.log_z;
  res.free_energy_n = -res.log_z / (beta * nd);

  KahanSum win, energy;
  bool window_hit = false;
  for (long long j = 0; j <= N; ++j) {
    const double p = std::exp(res.log_p[j]);
    energy.add(p * s * (-0.5 * res.m[j] * res.m[j] - h * res.m[j]));
    if (res.m[j] >= window_lo && res.m[j] <= window_hi) {
      win.add(p);
      window_hit = true;
    }
  }
  res.mean_energy = energy.value();
  res.window_prob = window_hit ? std::min(1.0, win.value()) : 0.0;
  res.rate = window_hit ? -std::log(res.window_prob) / (beta * nd) : kInf;

  // inf over the window of F - min F: the global minimum sits at a stable
  // fixed point, the window infimum at a fixed point inside or at an endpoint
  const std::vector<CWFixedPoint> fps = cw_magnetization(beta, h, sign);
  double f_min = kInf;
  for (const CWFixedPoint& fp : fps) f_min = std::min(f_min, fp.f);
  double f_win = std::min(cw_free_energy(window_lo, beta, h, sign),
                          cw_free_energy(window_hi, beta, h, sign));
  for (const CWFixedPoint& fp : fps)
    if (fp.m >= window_lo && fp.m <= window_hi) f_win = std::min(f_win, fp.f);
  res.f_gap = f_win - f_min;
  return res;
}

std::string cw_phase_table_csv(const std::vector<double>& betas, const std::vector<double>& hs,
                               CWSign sign) {
  std::string csv = "beta,h,m,stable,f\n";
  for (double beta : betas)
    for (double h : hs)
      for (const CWFixedPoint& fp : cw_magnetization(beta, h, sign)) {
        csv += format_double(beta);
        csv += ',';
        csv += format_double(h);
        csv += ',';
        csv += format_double(fp.m);
        csv += ',';
        csv += fp.stable ? '1' : '0';
        csv += ',';
        csv += format_double(fp.f);
        csv += '\n';
      }
  return csv;
}

}  // namespace feklab
