#pragma once
// Discrete optimal transport for the bilinear cost c(x, y) = -x.y: exact
// plans via the assignment solver (equal-size uniform marginals) or a dense
// transportation simplex (general marginals, certified by dual potentials),
// and the 1D monotone quantile map onto the uniform measure of an interval.
// The uniform-empirical cost against an N-point cloud equals minus the
// tropical interaction energy of the configuration.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace feklab {

// Finitely supported probability measure: non-negative weights summing to 1
// within 1e-12, points all of one dimension.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<Eigen::VectorXd> points, Eigen::VectorXd weights);
  static DiscreteMeasure uniform(std::vector<Eigen::VectorXd> points);

  const std::vector<Eigen::VectorXd>& points() const { return points_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  int size() const { return static_cast<int>(points_.size()); }
  int dimension() const { return static_cast<int>(points_.front().size()); }
  bool is_uniform() const;

 private:
  std::vector<Eigen::VectorXd> points_;
  Eigen::VectorXd weights_;
};

struct PlanEntry {
  int i = 0;
  int j = 0;
  double mass = 0.0;
};

struct TransportPlan {
  std::vector<PlanEntry> entries;  // positive-mass entries, row-major order
  double cost = 0.0;               // integral of -x.y against the plan
  double marginal_residual = 0.0;  // max deviation of plan marginals
  Eigen::VectorXd u, v;            // optimal dual potentials (certificate)
};

// Minimizes int c dgamma, c = -x.y, over couplings of mu0 and mu1.  Equal
// uniform marginals route to the assignment solver; everything else to the
// transportation simplex.  Sizes capped at 500 x 500.
TransportPlan ot_cost(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1);

// The general-marginal path, callable directly (used to cross-check the two
// paths against each other on equal-size uniform instances).
TransportPlan ot_cost_simplex(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1);

// CSV serialization "i,j,mass" with a header row.
std::string plan_to_csv(const TransportPlan& plan);

// Monotone rearrangement T = F_P^{-1} o F_mu pushing mu onto the uniform
// measure of [a, b]; equivalently T(x) = a + (b - a) F_mu(x).  T is the
// gradient of a convex potential and realizes the optimal transport for the
// bilinear cost.
class MonotoneMap {
 public:
  double operator()(double x) const;  // T(x)
  double source_cdf(double x) const;  // F_mu(x)
  double quantile(double q) const;    // generalized inverse of F_mu
  double target_min() const { return a_; }
  double target_max() const { return b_; }

 private:
  friend MonotoneMap monotone_map_1d(const DiscreteMeasure&, double, double);
  friend MonotoneMap monotone_map_1d(const std::function<double(double)>&, double, double, double,
                                     double, int);
  double a_ = 0.0, b_ = 1.0;
  bool discrete_ = false;
  std::vector<double> atoms_;      // discrete: sorted distinct atoms
  std::vector<double> grid_, cdf_; // continuous: quadrature table
};

// Empirical source with distinct atoms (F_mu is the empirical CDF).
MonotoneMap monotone_map_1d(const DiscreteMeasure& mu, double a, double b);

// Atomless source given by a density supported (up to negligible tails)
// inside [lo, hi]; the CDF is built by composite-Simpson quadrature on
// grid_n nodes and normalized.
MonotoneMap monotone_map_1d(const std::function<double(double)>& density, double lo, double hi,
                            double a, double b, int grid_n = 100001);

}  // namespace feklab
