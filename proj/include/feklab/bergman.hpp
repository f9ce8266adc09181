#pragma once
// Weighted Gram matrices, Christoffel (reproducing-kernel) functions, exact
// determinantal sampling, and Bernstein-Markov growth diagnostics for the
// determinantal regime beta = k.
//
// The scalar product is <p, q> = int p conj(q) e^{-k phi} dV over the base
// measure; everything downstream (kernels, densities, samples) is built from
// an orthonormalization of the monomial span with respect to it.  Three
// internal paths keep that orthonormalization well conditioned:
//   - Diagonal: radial planar measures with radial weights make monomials
//     exactly orthogonal, so only (log-scaled) norms are needed.
//   - Recurrence: real-line measures use a Lanczos/Stieltjes recurrence with
//     full reorthogonalization on the quadrature nodes; the working basis is
//     orthonormal by construction, which sidesteps the catastrophic
//     conditioning of monomial Grams on intervals.
//   - General: recombined bases form the full Hermitian Gram and factor it;
//     condition estimates above 1e14 are refused.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "feklab/energy.hpp"

namespace feklab {

struct QuadratureRule {
  std::vector<cplx> nodes;      // evaluation points (imaginary part 0 on the line)
  std::vector<double> weights;  // base-measure masses (weight factor excluded)
  int doublings = 0;            // refinement steps taken until stabilization
  std::string scheme;
};

// Builds a rule for int f dV adapted to the base measure; min_nodes forces a
// finer starting resolution (used for independent cross-checks).
QuadratureRule build_quadrature(const BaseMeasure& base, const Weight& w, int k,
                                int min_nodes = 0);

enum class GramPath { Diagonal, Recurrence, General };

struct GramFactorization {
  MultiIndexBasis basis;
  Weight weight;
  BaseMeasure base;
  int k = 0;
  GramPath path = GramPath::General;
  QuadratureRule quad;

  // Diagonal path: log of the squared norms of the monomials.
  std::vector<double> log_diag;
  // Recurrence path: x pi_j = sum_{i <= j+1} hess(i, j) pi_i, pi_0 = pi0.
  Eigen::MatrixXd hess;
  double pi0 = 1.0;
  // General path: Gram and its lower Cholesky factor in the recombined basis.
  Eigen::MatrixXcd G, L;
  Eigen::MatrixXcd recombine;

  double cond = 1.0;       // condition estimate of the working Gram
  double herm_err = 0.0;   // relative Hermiticity defect before symmetrization
  double residual = 0.0;   // ||G - L L*|| / ||G|| (or ||Ghat - I|| for recurrence)

  int size() const { return basis.size(); }
  // Values of the orthonormalized polynomial family at z.
  Eigen::VectorXcd kernel_vector(cplx z) const;
  // K(z, z) = sum_i |p_i(z)|^2.
  double kernel_diag(cplx z) const;
  // Squared norm of sum_i c_i p_i, i.e. |c|^2 in the working basis.
  double norm2(const Eigen::VectorXcd& c) const;
};

// k is taken from the basis (the determinantal coupling beta = k).  A
// recombination matrix replaces the working basis by recombine * (monomials)
// before orthonormalization; christoffel output must be invariant under it.
GramFactorization gram_factorize(const MultiIndexBasis& basis, const Weight& w,
                                 const BaseMeasure& base,
                                 const Eigen::MatrixXcd* recombination = nullptr);

struct ChristoffelValue {
  double kernel_weighted;  // K(z, z) e^{-k phi(z)}
  double psi;              // k^{-1} log K(z, z)
};
ChristoffelValue christoffel(const GramFactorization& g, cplx z);

// Trace identity check: int K(x, x) e^{-k phi} dV evaluated on an independent
// rule at least twice as fine as the factorization's.
double gram_trace(const GramFactorization& g);

struct DppStats {
  long long trials = 0;
  long long accepts = 0;
  long long bound_violations = 0;
  double efficiency() const {
    return trials > 0 ? static_cast<double>(accepts) / static_cast<double>(trials) : 0.0;
  }
};

// Exact sample of the N_k-point projection process with kernel
// K(x, y) e^{-k phi(x)/2 - k phi(y)/2} via the sequential conditional
// recursion; rejection proposals come from the base measure (or a gaussian
// surrogate for improper bases) under a scanned bound.
Configuration dpp_sample(const GramFactorization& g, std::uint64_t seed,
                         DppStats* stats = nullptr);

struct BmRow {
  int k = 0;
  double sup_rho = 0.0;
};
struct BmDiag {
  std::vector<BmRow> rows;
  double growth_exponent = 0.0;  // least-squares slope of log sup rho vs k
};

// rho_k(x) = K(x, x) e^{-k phi(x)} / N_k, the normalized Bergman density with
// respect to the base measure, evaluated over the carrier grid.
BmDiag bernstein_markov_diag(const Weight& w, const BaseMeasure& base,
                             const std::vector<int>& k_list,
                             const std::vector<cplx>& grid);

}  // namespace feklab
