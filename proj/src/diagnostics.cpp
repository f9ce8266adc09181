#include "feklab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace feklab {

namespace {

constexpr int kSlices = 64;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Adaptive Simpson with the classic Richardson acceptance test.  The
// integrands here (|F_1 - F_2| for CDFs) are piecewise smooth with isolated
// kinks, which the subdivision resolves on its own.
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol) {
  if (!(b > a)) return 0.0;
  const double fa = f(a), fm = f(0.5 * (a + b)), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 28);
}

// Exact integral of |F_1 - F_2| for two uniform empirical CDFs given their
// sorted supports: a two-pointer sweep over the merged breakpoints.
double w1_sorted(const std::vector<double>& xs, const std::vector<double>& ys) {
  const int nx = static_cast<int>(xs.size()), ny = static_cast<int>(ys.size());
  int i = 0, j = 0;
  double pos = std::min(xs[0], ys[0]);
  KahanSum acc;
  while (i < nx || j < ny) {
    const double nx_pos = i < nx ? xs[i] : kInf;
    const double ny_pos = j < ny ? ys[j] : kInf;
    const double next = std::min(nx_pos, ny_pos);
    acc.add(std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny) * (next - pos));
    pos = next;
    if (nx_pos <= ny_pos) ++i;
    if (ny_pos <= nx_pos) ++j;
  }
  return acc.value();
}

// Exact integral of |F_emp - F| for a sorted empirical support against a
// continuous CDF on [lo, hi] (F constant 0 / 1 outside).
double w1_sorted_vs_cdf(const std::vector<double>& xs, const std::function<double(double)>& F,
                        double lo, double hi) {
  const int n = static_cast<int>(xs.size());
  const double a = std::min(lo, xs.front());
  const double b = std::max(hi, xs.back());
  auto cdf = [&](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    return clamp01(F(x));
  };
  KahanSum acc;
  double pos = a;
  const double width = std::max(b - a, 1e-300);
  for (int i = 0; i <= n; ++i) {
    const double next = i < n ? xs[i] : b;
    if (next > pos) {
      const double level = static_cast<double>(i) / n;
      const double tol = std::max(1e-14, 1e-11 * (next - pos) / width);
      acc.add(integrate_adaptive([&](double x) { return std::abs(cdf(x) - level); }, pos, next,
                                 tol));
      pos = next;
    }
  }
  return acc.value();
}

double slice_angle(int j) { return (j + 0.5) * kPi / kSlices; }

}  // namespace

// ---------------------------------------------------------------------------
// EmpiricalMeasure

EmpiricalMeasure::EmpiricalMeasure(std::vector<Eigen::VectorXd> atoms)
    : atoms_(std::move(atoms)) {
  if (atoms_.empty()) throw std::invalid_argument("EmpiricalMeasure: no atoms");
  dim_ = static_cast<int>(atoms_[0].size());
  if (dim_ != 1 && dim_ != 2)
    throw std::invalid_argument("EmpiricalMeasure: atoms must live in R^1 or R^2");
  mean_ = Eigen::VectorXd::Zero(dim_);
  KahanSum m2;
  for (const auto& a : atoms_) {
    if (a.size() != dim_) throw std::invalid_argument("EmpiricalMeasure: mixed dimensions");
    if (!a.allFinite()) throw std::invalid_argument("EmpiricalMeasure: non-finite atom");
    mean_ += a;
    m2.add(a.squaredNorm());
    radii_.push_back(a.norm());
  }
  mean_ /= static_cast<double>(atoms_.size());
  second_moment_ = m2.value() / static_cast<double>(atoms_.size());
  std::sort(radii_.begin(), radii_.end());
}

EmpiricalMeasure EmpiricalMeasure::from_reals(const std::vector<double>& xs) {
  std::vector<Eigen::VectorXd> atoms;
  for (double x : xs) {
    Eigen::VectorXd p(1);
    p(0) = x;
    atoms.push_back(p);
  }
  return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure EmpiricalMeasure::from_complex(const std::vector<cplx>& zs) {
  std::vector<Eigen::VectorXd> atoms;
  for (const cplx& z : zs) {
    Eigen::VectorXd p(2);
    p << z.real(), z.imag();
    atoms.push_back(p);
  }
  return EmpiricalMeasure(std::move(atoms));
}

EmpiricalMeasure EmpiricalMeasure::from_configuration(const Configuration& cfg) {
  if (cfg.n != 1)
    throw std::invalid_argument("EmpiricalMeasure: only n = 1 configurations flatten to atoms");
  std::vector<cplx> zs(cfg.pts.begin(), cfg.pts.end());
  if (cfg.mode == ConfigMode::Complex) return from_complex(zs);
  std::vector<double> xs;
  for (const cplx& z : zs) xs.push_back(z.real());
  return from_reals(xs);
}

double EmpiricalMeasure::radial_cdf(double r) const {
  const auto it = std::upper_bound(radii_.begin(), radii_.end(), r);
  return static_cast<double>(it - radii_.begin()) / static_cast<double>(radii_.size());
}

std::vector<double> EmpiricalMeasure::projected(double theta) const {
  std::vector<double> out;
  out.reserve(atoms_.size());
  if (dim_ == 1) {
    for (const auto& a : atoms_) out.push_back(a(0));
  } else {
    const double c = std::cos(theta), s = std::sin(theta);
    for (const auto& a : atoms_) out.push_back(c * a(0) + s * a(1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// ClosedFormMeasure

ClosedFormMeasure ClosedFormMeasure::uniform_interval(double a, double b) {
  if (!(b > a)) throw std::invalid_argument("uniform_interval: need a < b");
  ClosedFormMeasure m;
  m.kind_ = Kind::Uniform;
  m.lo_ = a;
  m.hi_ = b;
  return m;
}

ClosedFormMeasure ClosedFormMeasure::arcsine(double a, double b) {
  if (!(b > a)) throw std::invalid_argument("arcsine: need a < b");
  ClosedFormMeasure m;
  m.kind_ = Kind::Arcsine;
  m.lo_ = a;
  m.hi_ = b;
  return m;
}

ClosedFormMeasure ClosedFormMeasure::cdf_1d(std::function<double(double)> cdf, double lo,
                                            double hi) {
  if (!(hi > lo)) throw std::invalid_argument("cdf_1d: need lo < hi");
  if (!cdf) throw std::invalid_argument("cdf_1d: empty CDF");
  ClosedFormMeasure m;
  m.kind_ = Kind::Custom;
  m.lo_ = lo;
  m.hi_ = hi;
  m.custom_ = std::move(cdf);
  return m;
}

ClosedFormMeasure ClosedFormMeasure::circle(double radius) {
  if (!(radius > 0)) throw std::invalid_argument("circle: need radius > 0");
  ClosedFormMeasure m;
  m.kind_ = Kind::Circle;
  m.dim_ = 2;
  m.lo_ = 0.0;
  m.hi_ = radius;
  m.atom_r_ = {radius};
  m.atom_w_ = {1.0};
  return m;
}

ClosedFormMeasure ClosedFormMeasure::disc(double radius) {
  if (!(radius > 0)) throw std::invalid_argument("disc: need radius > 0");
  ClosedFormMeasure m;
  m.kind_ = Kind::Disc;
  m.dim_ = 2;
  m.lo_ = 0.0;
  m.hi_ = radius;
  return m;
}

ClosedFormMeasure ClosedFormMeasure::radial(const RadialProfile& profile) {
  const double total = profile.total_mass();
  if (!(total > 0)) throw std::invalid_argument("radial: profile carries no mass");
  ClosedFormMeasure m;
  m.kind_ = Kind::RadialMixture;
  m.dim_ = 2;
  m.lo_ = 0.0;
  for (int i = 0; i < profile.size(); ++i) {
    const double w = profile.node_mass(i);
    if (w > 1e-15 * total) {
      m.atom_r_.push_back(std::exp(0.5 * profile.s[i]));
      m.atom_w_.push_back(w / total);
    }
  }
  if (m.atom_r_.empty()) throw std::invalid_argument("radial: profile carries no node mass");
  // renormalize after the drop of sub-roundoff nodes
  double sum = 0.0;
  for (double w : m.atom_w_) sum += w;
  for (double& w : m.atom_w_) w /= sum;
  m.hi_ = m.atom_r_.back();
  return m;
}

double ClosedFormMeasure::cdf(double x) const {
  if (dim_ != 1) throw std::logic_error("cdf: planar law has no 1D CDF");
  if (x <= lo_) return 0.0;
  if (x >= hi_) return 1.0;
  switch (kind_) {
    case Kind::Uniform:
      return (x - lo_) / (hi_ - lo_);
    case Kind::Arcsine: {
      const double t = (2.0 * x - lo_ - hi_) / (hi_ - lo_);
      return 0.5 + std::asin(std::min(1.0, std::max(-1.0, t))) / kPi;
    }
    case Kind::Custom:
      return clamp01(custom_(x));
    default:
      throw std::logic_error("cdf: unreachable");
  }
}

double ClosedFormMeasure::radial_cdf(double r) const {
  if (dim_ != 2) throw std::logic_error("radial_cdf: 1D law");
  if (kind_ == Kind::Disc) {
    if (r <= 0) return 0.0;
    return clamp01((r / hi_) * (r / hi_));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < atom_r_.size() && atom_r_[i] <= r; ++i) acc += atom_w_[i];
  return acc;
}

namespace {
// CDF at t of the projection of the uniform circle of radius R on a line
// through the origin (the arcsine law on [-R, R]).
double circle_projection_cdf(double t, double R) {
  if (t <= -R) return 0.0;
  if (t >= R) return 1.0;
  return 0.5 + std::asin(t / R) / kPi;
}
}  // namespace

double ClosedFormMeasure::projected_cdf(double t) const {
  if (dim_ != 2) throw std::logic_error("projected_cdf: 1D law");
  if (kind_ == Kind::Disc) {
    const double R = hi_;
    if (t <= -R) return 0.0;
    if (t >= R) return 1.0;
    const double u = t / R;
    return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / kPi;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < atom_r_.size(); ++i) {
    const double r = atom_r_[i];
    acc += atom_w_[i] * (r > 0 ? circle_projection_cdf(t, r) : (t >= 0.0 ? 1.0 : 0.0));
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Wasserstein-1

double wasserstein1(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("wasserstein1: dimension mismatch");
  if (a.dimension() == 1) return w1_sorted(a.projected(0.0), b.projected(0.0));
  KahanSum acc;
  for (int j = 0; j < kSlices; ++j) {
    const double th = slice_angle(j);
    acc.add(w1_sorted(a.projected(th), b.projected(th)));
  }
  return acc.value() / kSlices;
}

double wasserstein1(const EmpiricalMeasure& a, const ClosedFormMeasure& b) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("wasserstein1: dimension mismatch");
  if (a.dimension() == 1)
    return w1_sorted_vs_cdf(a.projected(0.0), [&](double x) { return b.cdf(x); }, b.lo(),
                            b.hi());
  const double R = b.hi();
  KahanSum acc;
  for (int j = 0; j < kSlices; ++j) {
    acc.add(w1_sorted_vs_cdf(a.projected(slice_angle(j)),
                             [&](double t) { return b.projected_cdf(t); }, -R, R));
  }
  return acc.value() / kSlices;
}

double wasserstein1(const ClosedFormMeasure& a, const ClosedFormMeasure& b) {
  if (a.dimension() != b.dimension())
    throw std::invalid_argument("wasserstein1: dimension mismatch");
  std::vector<double> cuts;
  std::function<double(double)> Fa, Fb;
  double lo, hi;
  if (a.dimension() == 1) {
    lo = std::min(a.lo(), b.lo());
    hi = std::max(a.hi(), b.hi());
    cuts = {a.lo(), a.hi(), b.lo(), b.hi()};
    Fa = [&](double x) { return x <= a.lo() ? 0.0 : (x >= a.hi() ? 1.0 : a.cdf(x)); };
    Fb = [&](double x) { return x <= b.lo() ? 0.0 : (x >= b.hi() ? 1.0 : b.cdf(x)); };
  } else {
    // radial-vs-radial: exact via the radial CDFs (angularly aligned coupling)
    lo = 0.0;
    hi = std::max(a.hi(), b.hi());
    cuts = a.radial_atoms();
    cuts.insert(cuts.end(), b.radial_atoms().begin(), b.radial_atoms().end());
    cuts.push_back(a.hi());
    cuts.push_back(b.hi());
    Fa = [&](double r) { return a.radial_cdf(r); };
    Fb = [&](double r) { return b.radial_cdf(r); };
  }
  cuts.push_back(lo);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  KahanSum acc;
  const double width = std::max(hi - lo, 1e-300);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double s0 = std::max(lo, cuts[i]), s1 = std::min(hi, cuts[i + 1]);
    if (s1 <= s0) continue;
    const double tol = std::max(1e-14, 1e-11 * (s1 - s0) / width);
    // open the segment slightly so step CDFs are sampled on their plateaus,
    // not on the jump values at the cut points
    const double eps = 1e-12 * (1.0 + std::abs(s0) + std::abs(s1));
    if (s1 - eps <= s0 + eps) continue;
    acc.add(integrate_adaptive([&](double x) { return std::abs(Fa(x) - Fb(x)); }, s0 + eps,
                               s1 - eps, tol));
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Histograms and relative entropy

bool Histogram::same_binning(const Histogram& o) const {
  auto close = [](const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) return false;
    for (std::size_t i = 0; i < u.size(); ++i)
      if (std::abs(u[i] - v[i]) > 1e-12 * (1.0 + std::abs(u[i]))) return false;
    return true;
  };
  return close(x_edges, o.x_edges) && close(y_edges, o.y_edges);
}

namespace {

double sample_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double f = pos - static_cast<double>(i);
  return v[i] * (1.0 - f) + v[i + 1] * f;
}

std::vector<double> uniform_edges(double lo, double hi, int bins) {
  std::vector<double> e(bins + 1);
  for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
  return e;
}

int bin_of(double x, double lo, double hi, int bins) {
  const int i = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
  return std::min(bins - 1, std::max(0, i));
}

void check_range(double lo, double hi, int bins) {
  if (!(hi > lo)) throw std::invalid_argument("histogram: need lo < hi");
  if (bins < 1) throw std::invalid_argument("histogram: need at least one bin");
}

}  // namespace

Histogram histogram_1d(const std::vector<double>& xs, double lo, double hi, int bins) {
  if (xs.empty()) throw std::invalid_argument("histogram: empty sample");
  check_range(lo, hi, bins);
  Histogram h;
  h.x_edges = uniform_edges(lo, hi, bins);
  h.mass = Eigen::VectorXd::Zero(bins);
  for (double x : xs) h.mass(bin_of(x, lo, hi, bins)) += 1.0;
  h.mass /= static_cast<double>(xs.size());
  return h;
}

Histogram histogram_1d(const std::vector<double>& xs, int bins) {
  if (xs.empty()) throw std::invalid_argument("histogram: empty sample");
  double lo = sample_quantile(xs, 0.0005), hi = sample_quantile(xs, 0.9995);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return histogram_1d(xs, lo, hi, bins);
}

Histogram histogram_radial(const EmpiricalMeasure& emp, int bins) {
  const std::vector<double>& r = emp.sorted_radii();
  double hi = sample_quantile(r, 0.999);
  if (!(hi > 0)) hi = 1.0;
  return histogram_1d(r, 0.0, hi, bins);
}

Histogram histogram_planar(const EmpiricalMeasure& emp, double lo_x, double hi_x, double lo_y,
                           double hi_y, int bins) {
  if (emp.dimension() != 2) throw std::invalid_argument("histogram_planar: need planar atoms");
  check_range(lo_x, hi_x, bins);
  check_range(lo_y, hi_y, bins);
  Histogram h;
  h.x_edges = uniform_edges(lo_x, hi_x, bins);
  h.y_edges = uniform_edges(lo_y, hi_y, bins);
  h.mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bins) * bins);
  for (const auto& a : emp.atoms()) {
    const int ix = bin_of(a(0), lo_x, hi_x, bins);
    const int iy = bin_of(a(1), lo_y, hi_y, bins);
    h.mass(static_cast<Eigen::Index>(ix) * bins + iy) += 1.0;
  }
  h.mass /= static_cast<double>(emp.count());
  return h;
}

Histogram histogram_planar(const EmpiricalMeasure& emp, int bins) {
  if (emp.dimension() != 2) throw std::invalid_argument("histogram_planar: need planar atoms");
  std::vector<double> xs, ys;
  for (const auto& a : emp.atoms()) {
    xs.push_back(a(0));
    ys.push_back(a(1));
  }
  auto expand = [](double& lo, double& hi) {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
  };
  double lx = sample_quantile(xs, 0.0005), hx = sample_quantile(xs, 0.9995);
  double ly = sample_quantile(ys, 0.0005), hy = sample_quantile(ys, 0.9995);
  expand(lx, hx);
  expand(ly, hy);
  return histogram_planar(emp, lx, hx, ly, hy, bins);
}

Histogram histogram_from_density(const std::function<double(double)>& density, double lo,
                                 double hi, int bins, int panels_per_bin) {
  check_range(lo, hi, bins);
  if (panels_per_bin < 1) throw std::invalid_argument("histogram: need at least one panel");
  Histogram h;
  h.x_edges = uniform_edges(lo, hi, bins);
  h.mass = Eigen::VectorXd::Zero(bins);
  KahanSum total;
  for (int b = 0; b < bins; ++b) {
    const double a0 = h.x_edges[b], a1 = h.x_edges[b + 1];
    const double hp = (a1 - a0) / panels_per_bin;
    KahanSum m;
    for (int p = 0; p < panels_per_bin; ++p) {
      const double u0 = a0 + p * hp, u1 = u0 + hp, um = 0.5 * (u0 + u1);
      const double f0 = density(u0), f1 = density(u1), fm = density(um);
      if (f0 < 0 || f1 < 0 || fm < 0)
        throw std::invalid_argument("histogram: negative density");
      m.add(hp / 6.0 * (f0 + 4.0 * fm + f1));
    }
    h.mass(b) = std::max(0.0, m.value());
    total.add(h.mass(b));
  }
  if (!(total.value() > 0)) throw std::invalid_argument("histogram: density carries no mass");
  h.mass /= total.value();
  return h;
}

double relative_entropy(const Histogram& mu, const Histogram& base) {
  if (mu.mass.size() == 0 || base.mass.size() == 0)
    throw std::invalid_argument("relative_entropy: empty histogram");
  if (!mu.same_binning(base))
    throw std::invalid_argument("relative_entropy: binnings differ");
  auto check_prob = [](const Histogram& h, const char* who) {
    if (h.mass.minCoeff() < -1e-15 || std::abs(h.mass.sum() - 1.0) > 1e-9)
      throw std::invalid_argument(std::string("relative_entropy: ") + who +
                                  " is not a probability histogram");
  };
  check_prob(mu, "mu");
  check_prob(base, "base");
  KahanSum acc;
  for (Eigen::Index i = 0; i < mu.mass.size(); ++i) {
    const double p = mu.mass(i), q = base.mass(i);
    if (p <= 0.0) continue;
    if (q <= 0.0) return kInf;
    acc.add(p * std::log(p / q));
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Brute-force partition functions

namespace {

// m-point Gauss-Legendre rule on [-1, 1] via the Jacobi matrix.
void gauss_legendre(int m, std::vector<double>& x, std::vector<double>& w) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i < m; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  x.resize(m);
  w.resize(m);
  for (int i = 0; i < m; ++i) {
    x[i] = es.eigenvalues()(i);
    w[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
}

struct Node2 {
  double x, y, a;  // position and GL-weighted one-particle factor
};

// One-particle factors w_x w_y exp(-beta phi + log rho) on the tensor grid of
// the rectangle [x0, x1] x [y0, y1].
std::vector<Node2> particle_nodes(const EnsembleModel& model, double x0, double x1, double y0,
                                  double y1, int m, double extra_pow) {
  std::vector<double> gx, gw;
  gauss_legendre(m, gx, gw);
  std::vector<Node2> out;
  out.reserve(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i) {
    const double x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * gx[i];
    const double wx = 0.5 * (x1 - x0) * gw[i];
    for (int j = 0; j < m; ++j) {
      const double y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * gx[j];
      const double wy = 0.5 * (y1 - y0) * gw[j];
      const cplx z(x, y);
      const double lg = -model.beta * model.weight(&z, 1) + model.base.log_density(&z, 1);
      double a = std::isfinite(lg) ? wx * wy * std::exp(lg) : 0.0;
      if (extra_pow > 0.0 && a != 0.0)
        a *= std::pow(2.0 * std::max(1.0, std::abs(z)), extra_pow);
      out.push_back({x, y, a});
    }
  }
  return out;
}

double rect_mass(const EnsembleModel& model, double x0, double x1, double y0, double y1, int m,
                 double extra_pow) {
  KahanSum s;
  for (const Node2& nd : particle_nodes(model, x0, x1, y0, y1, m, extra_pow)) s.add(nd.a);
  return s.value();
}

}  // namespace

PartitionResult partition_bruteforce(const EnsembleModel& model, const QuadSpec& quad) {
  if (model.n() != 1 || model.mode != ConfigMode::Complex)
    throw std::invalid_argument("partition_bruteforce: planar n = 1 models only");
  const int N = model.N();
  if (N != 2 && N != 3)
    throw std::invalid_argument("partition_bruteforce: desk-size regime is N in {2, 3}");
  const int k = model.k();
  if (k < 1) throw std::invalid_argument("partition_bruteforce: need k >= 1");
  if (!(model.beta >= 0.0) || !std::isfinite(model.beta))
    throw std::invalid_argument("partition_bruteforce: need finite beta >= 0");
  if (model.base.point_dim() != 2)
    throw std::invalid_argument("partition_bruteforce: base measure must be planar");
  const double R = quad.radius;
  const int m = quad.nodes;
  if (!(R > 0) || m < 4 || m > 200)
    throw std::invalid_argument("partition_bruteforce: bad quadrature spec");
  std::vector<int> order = quad.particle_order;
  if (order.empty()) {
    order.resize(N);
    for (int i = 0; i < N; ++i) order[i] = i;
  }
  {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < N; ++i)
      if (sorted[i] != i)
        throw std::invalid_argument("partition_bruteforce: particle_order is not a permutation");
  }

  PartitionResult res;

  // truncation audit: relative tail of the dominating product-form integrand
  // g = exp(-beta phi) rho (2 max(1,|z|))^{(2 beta / k)(N - 1)} over the
  // annulus box(2R) \ box(R)
  if (model.beta > 0.0) {
    const double p = 2.0 * model.beta / k * (N - 1);
    const double in = rect_mass(model, -R, R, -R, R, m, p);
    if (!(in > 0))
      throw std::runtime_error("partition_bruteforce: carrier mass vanishes on the box");
    double out = 0.0;
    out += rect_mass(model, -2 * R, -R, -2 * R, 2 * R, m, p);
    out += rect_mass(model, R, 2 * R, -2 * R, 2 * R, m, p);
    out += rect_mass(model, -R, R, -2 * R, -R, m, p);
    out += rect_mass(model, -R, R, R, 2 * R, m, p);
    res.tail_ratio = N * out / in;
    if (!(res.tail_ratio < 1e-10))
      throw std::runtime_error(
          "partition_bruteforce: truncation-tail above tolerance; enlarge the box");
  }

  const std::vector<Node2> nodes = particle_nodes(model, -R, R, -R, R, m, 0.0);
  const long long M = static_cast<long long>(nodes.size());
  const double e = model.beta / k;  // |D|^{2 beta / k} = prod d2_pair^{beta/k}

  auto d2 = [&](const Node2& u, const Node2& v) {
    return sq(u.x - v.x) + sq(u.y - v.y);
  };
  // beta = k (exponent 1) is the determinantal regime and the hot path
  auto pair_pow = [e](double d2prod) { return e == 1.0 ? d2prod : std::pow(d2prod, e); };

  KahanSum z;
  long long evals = 0;
  if (N == 2) {
    std::vector<const Node2*> pt(2);
    for (long long i0 = 0; i0 < M; ++i0) {
      pt[order[0]] = &nodes[i0];
      for (long long i1 = 0; i1 < M; ++i1) {
        pt[order[1]] = &nodes[i1];
        const double a = pt[0]->a * pt[1]->a;
        if (a == 0.0) continue;
        z.add(a * pair_pow(d2(*pt[0], *pt[1])));
        ++evals;
      }
    }
  } else {
    std::vector<const Node2*> pt(3);
    for (long long i0 = 0; i0 < M; ++i0) {
      pt[order[0]] = &nodes[i0];
      for (long long i1 = 0; i1 < M; ++i1) {
        pt[order[1]] = &nodes[i1];
        for (long long i2 = 0; i2 < M; ++i2) {
          pt[order[2]] = &nodes[i2];
          const double a = pt[0]->a * pt[1]->a * pt[2]->a;
          if (a == 0.0) continue;
          z.add(a * pair_pow(d2(*pt[0], *pt[1]) * d2(*pt[0], *pt[2]) * d2(*pt[1], *pt[2])));
          ++evals;
        }
      }
    }
  }
  res.z = z.value();
  res.evaluations = evals;
  if (!(res.z > 0.0))
    throw std::runtime_error("partition_bruteforce: nonpositive partition sum (solver-failure)");
  res.log_z = std::log(res.z);
  res.free_energy_proxy = -res.log_z / (static_cast<double>(k) * N);
  return res;
}

}  // namespace feklab
