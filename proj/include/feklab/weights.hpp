#pragma once
// Weight functions (external fields), reference base measures, the growth
// admissibility classifier, and the slope-constrained convex envelope that
// realizes the weighted extremal potential for radial data.
//
// A weight phi and base measure dV are admissible at inverse temperature beta
// when phi - beta^{-1} log(dV/dLeb) grows at least like (1 + n/beta + eps)
// log|z|^2 for some eps > 0 (plus an iterated-exponential cap); this is what
// makes the N-point partition functions finite.  The classifier works on
// exact growth slopes for the presets and declared tail slopes for custom
// radial weights, and reports the largest passing margin from {0.5, 0.1,
// 0.01} rather than a bare yes/no.

#include <complex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "feklab/common.hpp"
#include "feklab/radial_profile.hpp"

namespace feklab {

enum class WeightKind {
  Quadratic,        // scale * |z|^2
  HalfQuadratic,    // scale * |z|^2 / 2
  FubiniStudy,      // scale * log(1 + |z|^2)
  TorusLog,         // scale * max_c log+ |z_c|^2
  IndicatorRadial,  // 0 on the annulus r_min <= |z| <= r_max, +inf outside
  CustomRadial,     // phi_hat(s) sampled on a grid, linear interpolation
};

struct Weight {
  WeightKind kind = WeightKind::Quadratic;
  double scale = 1.0;
  double shift = 0.0;
  // IndicatorRadial carrier
  double r_min = 0.0, r_max = 1.0;
  // CustomRadial profile in s = log r^2, strictly increasing grid
  std::vector<double> s_grid, phi_hat;
  std::optional<double> tail_slope;  // declared growth slope of a custom profile

  static Weight preset(WeightKind k, double scale) {
    Weight w;
    w.kind = k;
    w.scale = scale;
    return w;
  }
  static Weight quadratic(double scale = 1.0) { return preset(WeightKind::Quadratic, scale); }
  static Weight half_quadratic(double scale = 1.0) {
    return preset(WeightKind::HalfQuadratic, scale);
  }
  static Weight fubini_study(double scale = 1.0) { return preset(WeightKind::FubiniStudy, scale); }
  static Weight torus_log() { return preset(WeightKind::TorusLog, 1.0); }
  static Weight indicator_disc(double R) {
    Weight w;
    w.kind = WeightKind::IndicatorRadial;
    w.r_min = 0.0;
    w.r_max = R;
    return w;
  }
  static Weight indicator_annulus(double r0, double r1) {
    Weight w;
    w.kind = WeightKind::IndicatorRadial;
    w.r_min = r0;
    w.r_max = r1;
    return w;
  }
  static Weight custom_radial(std::vector<double> s, std::vector<double> phi,
                              std::optional<double> tail = std::nullopt);

  // phi(z) for a point of C^n; may be +inf (indicator outside its carrier).
  double operator()(const cplx* z, int n) const;
  double operator()(const cplx& z) const { return (*this)(&z, 1); }

  // Radial profile value phi_hat(s); valid for every kind except TorusLog with
  // n >= 2 (which is toric but not radial).  Indicator returns +inf off-carrier.
  double radial_hat(double s) const;

  // Gradient wrt real coordinates (layout dx_1, dy_1, ..., dx_n, dy_n);
  // analytic for the presets, centered differences on the profile for
  // CustomRadial.  Empty when undefined (indicator off-carrier / kink).
  std::optional<std::vector<double>> gradient(const cplx* z, int n) const;

  // Indicator weights are only lower semicontinuous; gradient-based samplers
  // and pointwise density evaluations refuse them.
  bool lsc_only() const { return kind == WeightKind::IndicatorRadial; }
  // Growth slope g with phi(z) ~ g log|z|^2 (+inf for super-log growth);
  // empty when unclassifiable (custom profile without a declared tail).
  std::optional<double> growth_slope() const;
};

enum class BaseKind {
  LebesgueC,      // Lebesgue on C^n (improper)
  LebesgueR,      // Lebesgue on R (improper, real-line mode)
  Gaussian,       // prod_c (pi sigma^2)^{-1} exp(-|z_c|^2 / sigma^2), probability
  Circle,         // uniform probability on the unit circle
  Interval,       // Lebesgue on [a, b] of the real line (mass b - a)
  Arcsine,        // probability 1/(pi sqrt(1-x^2)) on [-1, 1]
  UniformDisc,    // probability on |z| <= R
  RadialDensityS, // radial measure on C given by log w(s), the pushforward
                  // density in s = log|z|^2 (so lebesgue has log w = s + log pi)
};

struct BaseMeasure {
  BaseKind kind = BaseKind::LebesgueC;
  int n = 1;
  double sigma = 1.0;       // Gaussian
  double a = -1.0, b = 1.0; // Interval
  double R = 1.0;           // UniformDisc
  std::vector<double> s_grid, log_w;  // RadialDensityS

  static BaseMeasure of_kind(BaseKind k, int n = 1) {
    BaseMeasure m;
    m.kind = k;
    m.n = n;
    return m;
  }
  static BaseMeasure lebesgue_c(int n = 1) { return of_kind(BaseKind::LebesgueC, n); }
  static BaseMeasure lebesgue_r() { return of_kind(BaseKind::LebesgueR); }
  static BaseMeasure gaussian(double sigma = 1.0, int n = 1) {
    BaseMeasure m = of_kind(BaseKind::Gaussian, n);
    m.sigma = sigma;
    return m;
  }
  static BaseMeasure circle() { return of_kind(BaseKind::Circle); }
  static BaseMeasure interval(double a, double b);
  static BaseMeasure arcsine() { return of_kind(BaseKind::Arcsine); }
  static BaseMeasure uniform_disc(double R = 1.0) {
    BaseMeasure m = of_kind(BaseKind::UniformDisc);
    m.R = R;
    return m;
  }
  static BaseMeasure radial_density_s(std::vector<double> s, std::vector<double> logw);

  bool is_probability() const;
  // Carrier dimension per point: 2n for planar kinds, 1 for line/circle kinds.
  int point_dim() const;

  // log density of one point wrt the carrier's natural reference measure
  // (Lebesgue on C^n, Lebesgue on the line, normalized arc length on the
  // circle); -inf off the carrier.
  double log_density(const cplx* z, int n) const;
  double log_density(const cplx& z) const { return log_density(&z, 1); }

  // Pushforward density w(s) in s = log|z|^2 for radial planar kinds (n = 1):
  // measure of {s in A} = int_A w(s) ds.  Throws for non-radial kinds.
  double radial_log_w(double s) const;
  bool radial_available() const;

  // One point drawn from the measure; requires a probability kind.
  cplx sample_point(std::mt19937_64& eng) const;
};

enum class AdmissibilityStatus { Ok, FailsGrowth, FailsIteratedExponential, CannotClassify };

struct AdmissibilityVerdict {
  AdmissibilityStatus status = AdmissibilityStatus::CannotClassify;
  double epsilon = 0.0;  // largest margin in {0.5, 0.1, 0.01} that passes
  std::string detail;
  bool ok() const { return status == AdmissibilityStatus::Ok; }
};

AdmissibilityVerdict admissibility_check(const Weight& w, const BaseMeasure& base, double beta,
                                         int n);

// Largest convex minorant of phi_hat on the grid with slopes constrained to
// [0, 1]: the log-coordinate form of the weighted extremal potential
// sup { psi psh, logarithmic growth, psi <= phi }.  Contact holds exactly at
// the returned profile's mass-carrying nodes.
RadialProfile weighted_extremal_radial(const Weight& w, const std::vector<double>& s_grid);

}  // namespace feklab
