#pragma once
// Interaction energies and Hamiltonians of point configurations.
//
// For a configuration z = (z_1..z_N) with N = dim P_k the determinantal
// energy is E = -(1/(N k)) log|D(z)|^2 and the weighted Hamiltonian is
// H = -(1/k) log|D(z)|^2 + sum_i phi(z_i); the associated Gibbs measure at
// inverse temperature beta has density proportional to
// |D|^{2 beta/k} exp(-beta sum phi) against dV^{(x) N}.  A Monte-Carlo
// estimator for the expected one-point potential (1/k) E log|D(z, w_2..w_N)|^2
// (an harmonic-analysis "Green formula" representation of the Bergman-type
// potential, defined up to an additive constant) completes the module.

#include <optional>
#include <vector>

#include "feklab/polybasis.hpp"
#include "feklab/weights.hpp"

namespace feklab {

struct EnsembleModel {
  MultiIndexBasis basis;
  Weight weight;
  BaseMeasure base;
  double beta = 1.0;  // +inf allowed (zero-temperature / Fekete regime)
  ConfigMode mode = ConfigMode::Complex;

  int n() const { return basis.n; }
  int k() const { return basis.k; }
  int N() const { return basis.size(); }
  AdmissibilityVerdict admissibility() const {
    return admissibility_check(weight, base, beta, basis.n);
  }
};

// E^(N) = -(1/(N k)) log|D|^2; +inf on colliding configurations.
double determinantal_energy(const EnsembleModel& m, const Configuration& cfg);

// H = -(1/k) log|D|^2 + sum_i phi(z_i); +inf on collisions or off lsc
// carriers.  k = 0 (single-point basis) degenerates to H = sum phi.
double weighted_hamiltonian(const EnsembleModel& m, const Configuration& cfg);

// Gradient of H wrt the real point coordinates (same layout as
// grad_log_abs_det2); empty when the determinant or weight gradient is
// undefined at cfg.
std::optional<std::vector<double>> grad_weighted_hamiltonian(const EnsembleModel& m,
                                                             const Configuration& cfg);

// log of the unnormalized Gibbs density of cfg against the reference measure
// underlying dV^{(x) N}: beta-weighted Hamiltonian plus the base log
// densities.  -inf off carriers.
double log_gibbs_density(const EnsembleModel& m, const Configuration& cfg);

struct GreenEstimate {
  std::vector<cplx> grid;
  std::vector<double> value;  // centered to mean zero over the grid
  std::vector<double> se;     // per-point standard error of the (uncentered) mean
  int samples = 0;
};

// Monte-Carlo estimate of z -> (1/k) E_{dV^{N-1}} log|D(z, w_2..w_N)|^2 on a
// grid, companions drawn iid from the (probability) base measure.  The sample
// budget is split into per-block substreams, so the result is independent of
// any parallel scheduling.  Requires samples >= 100 and a sampleable
// probability base.
GreenEstimate green_formula_estimate(const EnsembleModel& m, const std::vector<cplx>& grid,
                                     int samples, std::uint64_t seed);

}  // namespace feklab
