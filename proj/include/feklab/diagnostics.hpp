#pragma once
// Empirical-measure statistics: Wasserstein-1 distances against closed-form
// reference laws, relative entropy on declared binnings, and brute-force
// partition functions for desk-size ensembles.
//
// Distance conventions.  In one dimension (and for radial-vs-radial planar
// pairs) W1 is computed exactly as the integral of |F_1 - F_2|.  For planar
// inputs that are not both radial, the value is a sliced estimate: the
// average of exact 1D distances over 64 fixed equiangular projections.  The
// sliced value is a lower bound on the true planar W1 and is reported as an
// estimate, not a metric evaluation.

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "feklab/common.hpp"
#include "feklab/energy.hpp"
#include "feklab/radial_profile.hpp"

namespace feklab {

// N atoms with uniform weights 1/N in R^d (d = 1 line, d = 2 plane).
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::vector<Eigen::VectorXd> atoms);
  static EmpiricalMeasure from_reals(const std::vector<double>& xs);
  static EmpiricalMeasure from_complex(const std::vector<cplx>& zs);
  // Flattens every point of every record; requires n = 1.  RealLine /
  // RealTropical configurations become 1D atom sets, Complex becomes planar.
  static EmpiricalMeasure from_configuration(const Configuration& cfg);

  int count() const { return static_cast<int>(atoms_.size()); }
  int dimension() const { return dim_; }
  const std::vector<Eigen::VectorXd>& atoms() const { return atoms_; }

  const std::vector<double>& sorted_radii() const { return radii_; }
  double radial_cdf(double r) const;  // fraction of atoms with |x| <= r
  const Eigen::VectorXd& mean() const { return mean_; }
  double second_moment() const { return second_moment_; }  // mean of |x|^2

  // Coordinates projected on the unit direction (cos t, sin t) (d = 2) or on
  // the line itself (d = 1), sorted ascending.
  std::vector<double> projected(double theta) const;

 private:
  std::vector<Eigen::VectorXd> atoms_;
  int dim_ = 1;
  std::vector<double> radii_;
  Eigen::VectorXd mean_;
  double second_moment_ = 0.0;
};

// Reference laws with closed-form CDFs.  1D kinds expose cdf(); planar kinds
// are rotation-invariant and expose the radial CDF together with the CDF of
// any 1D projection (the same for every direction).
class ClosedFormMeasure {
 public:
  static ClosedFormMeasure uniform_interval(double a, double b);
  static ClosedFormMeasure arcsine(double a = -1.0, double b = 1.0);
  static ClosedFormMeasure cdf_1d(std::function<double(double)> cdf, double lo, double hi);
  static ClosedFormMeasure circle(double radius = 1.0);  // uniform on |z| = R
  static ClosedFormMeasure disc(double radius = 1.0);    // uniform on |z| <= R
  // Monge-Ampere measure of a radial profile, normalized to probability: a
  // mixture of uniform circles at the profile's mass-carrying radii.
  static ClosedFormMeasure radial(const RadialProfile& profile);

  int dimension() const { return dim_; }
  bool radial() const { return dim_ == 2; }
  double lo() const { return lo_; }  // support bounds: 1D support or [0, R]
  double hi() const { return hi_; }

  double cdf(double x) const;            // 1D kinds only
  double radial_cdf(double r) const;     // planar kinds only
  double projected_cdf(double t) const;  // planar kinds only
  // Radii where the radial CDF jumps (guides exact step integration).
  const std::vector<double>& radial_atoms() const { return atom_r_; }

 private:
  enum class Kind { Uniform, Arcsine, Custom, Circle, Disc, RadialMixture };
  Kind kind_ = Kind::Uniform;
  int dim_ = 1;
  double lo_ = -1.0, hi_ = 1.0;
  std::function<double(double)> custom_;
  std::vector<double> atom_r_, atom_w_;  // mixture radii (ascending) and masses
};

// Exact in 1D (integral of |F_1 - F_2| over the merged breakpoints /
// adaptive quadrature against closed-form CDFs); sliced-64 for planar pairs
// that are not both closed-form radial.  Throws on dimension mismatch.
double wasserstein1(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
double wasserstein1(const EmpiricalMeasure& a, const ClosedFormMeasure& b);
inline double wasserstein1(const ClosedFormMeasure& a, const EmpiricalMeasure& b) {
  return wasserstein1(b, a);
}
double wasserstein1(const ClosedFormMeasure& a, const ClosedFormMeasure& b);

// ---------------------------------------------------------------------------
// Relative entropy on declared binnings.

// A declared binning with bin masses.  1D histograms keep y_edges empty;
// planar histograms are row-major over (x bin, y bin).  Masses are
// probabilities (callers building from counts normalize by N).
struct Histogram {
  std::vector<double> x_edges;  // ascending, size bx + 1
  std::vector<double> y_edges;  // empty (1D) or ascending, size by + 1
  Eigen::VectorXd mass;         // size bx (1D) or bx * by (planar), sums to 1

  int bins_x() const { return static_cast<int>(x_edges.size()) - 1; }
  int bins_y() const { return y_edges.empty() ? 1 : static_cast<int>(y_edges.size()) - 1; }
  bool planar() const { return !y_edges.empty(); }
  bool same_binning(const Histogram& o) const;
};

// Sample histograms.  Out-of-range samples are clamped into the edge bins so
// the masses stay a probability vector.  The default range is the 99.9% mass
// box (per-axis 0.05% and 99.95% sample quantiles); bins default to 64 per
// axis per the fixed binning policy.
Histogram histogram_1d(const std::vector<double>& xs, int bins = 64);
Histogram histogram_1d(const std::vector<double>& xs, double lo, double hi, int bins = 64);
Histogram histogram_radial(const EmpiricalMeasure& emp, int bins = 64);
Histogram histogram_planar(const EmpiricalMeasure& emp, int bins = 64);
Histogram histogram_planar(const EmpiricalMeasure& emp, double lo_x, double hi_x, double lo_y,
                           double hi_y, int bins = 64);
// Bin masses of a 1D density by composite Simpson (normalized afterwards).
Histogram histogram_from_density(const std::function<double(double)>& density, double lo,
                                 double hi, int bins = 64, int panels_per_bin = 64);

// D(mu | base) = sum_i p_i log(p_i / q_i) over the shared binning; +infinity
// as soon as mu charges a bin of base-mass zero.  Throws on empty histograms
// or mismatched binnings.
double relative_entropy(const Histogram& mu, const Histogram& base);

// ---------------------------------------------------------------------------
// Brute-force partition functions.

struct QuadSpec {
  double radius = 6.0;  // truncation half-width per real axis
  int nodes = 40;       // Gauss-Legendre nodes per real axis
  // Optional relabeling of which tensor loop level feeds which particle;
  // permutations change the summation order only (used to audit symmetry).
  std::vector<int> particle_order;
};

struct PartitionResult {
  double z = 0.0;
  double log_z = 0.0;
  double free_energy_proxy = 0.0;  // -(1/(k N)) log Z
  double tail_ratio = 0.0;         // audited relative truncation defect bound
  long long evaluations = 0;
};

// Z = int |D|^{2 beta/k} exp(-beta sum phi) dV^N over the truncation box
// [-R, R]^{2N} by tensor Gauss-Legendre.  Requires n = 1 planar mode and
// N in {2, 3} (the desk-size regime).  For beta > 0 the truncation is audited
// with a product-form dominating integrand; a relative defect bound above
// 1e-10 throws (truncation-tail).  beta = 0 integrates dV alone, so the box
// itself defines the measure and no audit applies.
PartitionResult partition_bruteforce(const EnsembleModel& model, const QuadSpec& quad = {});

}  // namespace feklab
