#pragma once
// Convex bodies with exact vertex-max support functions, scaled-lattice point
// clouds, the assignment-based tropical interaction energy, the barycentric
// R invariant whose negative is the critical inverse temperature, the
// tropical Gibbs sampler with its partition-mass divergence diagnostic, and
// the 1D real Monge-Ampere boundary-value problem with the second boundary
// condition (gradient image prescribed to be the body).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feklab/sampler.hpp"

namespace feklab {

// A full-dimensional convex body given by vertices.  The support function
// phi_P(x) = max_v x.v is exact for the hull of the vertex list.  The
// barycenter is the volume centroid of the hull (n <= 2); for n >= 3 only
// centrally symmetric vertex sets are accepted, where the centroid is the
// symmetry center.  Exact membership tests are available for n <= 2.
class ConvexBody {
 public:
  ConvexBody(int n, std::vector<Eigen::VectorXd> vertices);

  static ConvexBody interval(double a, double b);   // [a, b] in R^1
  static ConvexBody box(int n, double half_width);  // [-w, w]^n
  static ConvexBody simplex(int n);                 // conv{0, e_1, ..., e_n}
  // {"n": int, "vertices": [[...], ...]}
  static ConvexBody from_json(const std::string& text);

  int dimension() const { return n_; }
  const std::vector<Eigen::VectorXd>& vertices() const { return verts_; }
  const Eigen::VectorXd& barycenter() const { return barycenter_; }
  double volume() const { return volume_; }  // NaN for n >= 3 (no consumer)
  bool origin_interior() const { return origin_interior_; }

  double support(const Eigen::Ref<const Eigen::VectorXd>& x) const;  // phi_P(x)
  double support1(double x) const;                                   // n = 1 shorthand
  // Hull membership within an absolute tolerance (n <= 2 only).
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol = 1e-12) const;
  ConvexBody scaled(double lambda) const;

  double interval_min() const;  // n = 1 accessors
  double interval_max() const;
  std::string describe() const;

 private:
  int n_ = 1;
  std::vector<Eigen::VectorXd> verts_;
  Eigen::VectorXd barycenter_;
  double volume_ = 0.0;
  bool origin_interior_ = false;
  // n = 2 membership data: ordered hull with unit outward edge normals.
  std::vector<Eigen::Vector2d> hull_;
  std::vector<Eigen::Vector2d> edge_normal_;
  std::vector<double> edge_offset_;
};

// R_P = |q| / |q - b_P| where q is the boundary point hit by the ray from the
// barycenter through the origin; exactly 1 when |b_P| < 1e-14.  The critical
// negative inverse temperature of the tropical Gibbs family is -R_P.
double r_invariant(const ConvexBody& body);

// Points of P intersected with the scaled integer lattice (1/k) Z^n, found by
// a bounding-box scan with the membership test; ascending lexicographic
// order.  For the unit simplex the count equals basis_size(n, k).
struct LatticeCloud {
  int n = 1;
  int k = 1;
  std::vector<Eigen::VectorXd> points;
  Eigen::VectorXd mean;  // arithmetic mean of the cloud (finite-k barycenter)
  int count() const { return static_cast<int>(points.size()); }
};
LatticeCloud lattice_cloud(const ConvexBody& body, int k);

// Tropical interaction energy of N sites against an N-point cloud:
//   value = (1/N) max_sigma sum_i x_i . p_sigma(i),
// with the maximum over permutations solved by assignment and ties broken by
// the lexicographically smallest permutation (assignment[i] is the cloud
// index given to site i).
struct TropicalEnergy {
  double value = 0.0;
  std::vector<int> assignment;
};
TropicalEnergy e_trop(const std::vector<Eigen::VectorXd>& x, const LatticeCloud& cloud);

// Importance-sampled estimates of the truncated partition mass
//   Z_R = int_{[-R,R]^N} exp(beta * A(x) - (1+beta) sum_i phi_P(x_i)) dx
// (A = unnormalized optimal assignment value) at a ladder of radii.  The
// proposal is the per-coordinate law exp(beta*pbar*x - (1+beta)*phi_P(x)),
// whose product bounds the integrand through A >= pbar * sum x_i, so the
// weights are bounded; common random numbers couple the radii.  Successive
// ratios stabilizing near 1 evidence Z < infinity; ratios growing past 1.2 at
// every step evidence divergence (beta at or below -R_P).  n = 1, beta < 0.
struct TruncationDiagnostic {
  std::vector<double> radii;
  std::vector<double> log_mass;  // log Z_R estimates
  std::vector<double> ratio;     // Z_{R_{t+1}} / Z_{R_t}
  bool divergent = false;        // every ratio above 1.2
  long samples_per_radius = 0;
};
TruncationDiagnostic tropical_z_diagnostic(const ConvexBody& body, int k, double beta,
                                           std::uint64_t seed, long samples_per_radius = 200000,
                                           std::vector<double> radii = {5.0, 10.0, 20.0});

// Random-walk Metropolis for the tropical Gibbs density
//   exp(beta * A(x) - (1+beta) sum_i phi(x_i))        (phi defaults to phi_P)
// on (R^n)^{N_k}.  Full-configuration Gaussian proposals (the energy is
// piecewise linear, so there is no useful gradient), step adapted to 0.234
// during burn-in, chains parallel and bitwise independent of the worker
// count.  When beta <= -R_P the partition function is infinite and the run
// refuses to sample: it returns no samples and attaches the divergence
// diagnostic instead.
struct TropicalGibbsOptions {
  double burn_in_frac = 0.2;
  long thin = 0;         // 0: max(1, sweeps / 10000)
  double init_step = 0;  // 0: auto
  int workers = 1;
  // Optional convex weight replacing the support function; must grow like
  // phi_P + O(1) for the stated integrability threshold to apply.
  std::function<double(const Eigen::VectorXd&)> weight;
};
struct TropicalGibbsResult {
  std::vector<SampleRecord> samples;  // configurations in RealTropical mode
  std::vector<ChainStats> stats;
  double acceptance = 0.0;  // pooled, after burn-in
  long burn_in = 0;
  long thin = 0;
  double r_p = 0.0;
  std::optional<TruncationDiagnostic> diagnostic;
};
TropicalGibbsResult tropical_gibbs(const ConvexBody& body, int k, double beta, long sweeps,
                                   int chains, std::uint64_t seed,
                                   const TropicalGibbsOptions& opt = {});

// Convex solution of the 1D real Monge-Ampere problem
//   u'' = C exp(beta (u - phi)) exp(-phi)   on the grid,
// subject to the second boundary condition u'(-inf) = a, u'(+inf) = b for the
// interval body P = [a, b] (a < 0 < b).  At beta = 0 the constant is explicit
// (C = (b-a) / int e^{-phi}); otherwise C = 1 and the normalization is
// absorbed by the additive level of u.  beta must exceed -R_P, except the
// critical pair beta = -1 with symmetric P, where the equation collapses to
// u'' = e^{-u} (the weight cancels) and the translation gauge is fixed by
// centering at the minimizer of the weight.
struct RealMaOptions {
  std::function<double(double)> weight;  // empty: support function of P
  double newton_tol = 1e-11;
  int max_newton = 80;
};
struct RealMaSolution {
  Eigen::VectorXd x, u, du;
  double beta = 0.0;
  double c_constant = 1.0;    // explicit constant at beta = 0, 1 otherwise
  double residual = 0.0;      // max interior |D2 u - rhs|
  double bc_residual = 0.0;   // max(|u'(x_min) - a|, |b - u'(x_max)|)
  int newton_iters = 0;
  std::vector<double> stages;  // continuation ladder in beta
};
RealMaSolution solve_real_ma_1d(const ConvexBody& body, double beta,
                                const Eigen::VectorXd& x_grid, const RealMaOptions& opt = {});

}  // namespace feklab
