#pragma once
// Curie-Weiss mean-field spin model: the exactly solvable calibration of the
// Gibbs / free-energy / large-deviation pipeline.
//
// Ferro sign: F_beta(m) = -m^2/2 - h m + (1/beta) Ent(m) with
// Ent(m) = ((1+m)/2) log((1+m)/2) + ((1-m)/2) log((1-m)/2); the antiferro
// model flips the energy term's sign (H_af = -H_f) while the entropy keeps
// its 1/beta prefactor.  Critical points solve m = tanh(s beta (m + h)).
// Finite-N laws are exact binomial enumerations in log space; window rates
// are reported at speed beta N, the speed at which -(1/(beta N)) log P
// converges to the free-energy gap of the window.

#include <string>
#include <vector>

namespace feklab {

enum class CWSign { Ferro, Antiferro };

struct CWParams {
  double beta = 1.0;
  double h = 0.0;
  long long N = 1;
  CWSign sign = CWSign::Ferro;
};

// F_beta(m) on [-1, 1]; the entropy limits at m = +-1 use 0 log 0 = 0.
// Throws for |m| > 1 or beta <= 0.
double cw_free_energy(double m, double beta, double h, CWSign sign = CWSign::Ferro);

struct CWFixedPoint {
  double m = 0.0;
  bool stable = false;  // local minimum of F (second-derivative sign)
  double f = 0.0;       // F at m
};

// All solutions of m = tanh(s beta (m + h)), ascending in m, found by sign
// scan plus bracketing bisection to 1e-12.  At h = 0 the root set is
// symmetrized exactly (the Z2 symmetry m -> -m of the equation).
std::vector<CWFixedPoint> cw_magnetization(double beta, double h, CWSign sign = CWSign::Ferro);

struct CWFiniteN {
  std::vector<double> m;      // support (2j - N)/N, j = 0..N
  std::vector<double> log_p;  // exact normalized log-probabilities
  double log_z = 0.0;         // log sum of unnormalized weights
  double free_energy_n = 0.0; // -(1/(beta N)) log Z
  double window_prob = 0.0;   // P(m_N in [window_lo, window_hi])
  double rate = 0.0;          // -(1/(beta N)) log window_prob
  double f_gap = 0.0;         // inf over the window of F - global min F
  double mean_energy = 0.0;   // E[ s (-m^2/2 - h m) ] under the exact law
};

// Exact law of the magnetization of N spins:
// P(m_j) proportional to binom(N, j) exp(s beta N (m_j^2/2 + h m_j)).
// Throws for invalid windows (outside [-1, 1] or lo > hi), beta <= 0, or
// N outside [1, 10^6].
CWFiniteN cw_finite_n(double beta, double h, long long N, double window_lo, double window_hi,
                      CWSign sign = CWSign::Ferro);

// Phase-diagram table: one CSV row per fixed point of each (beta, h) pair,
// schema "beta,h,m,stable,f", rows ordered beta-major then h then m.
std::string cw_phase_table_csv(const std::vector<double>& betas, const std::vector<double>& hs,
                               CWSign sign = CWSign::Ferro);

}  // namespace feklab
