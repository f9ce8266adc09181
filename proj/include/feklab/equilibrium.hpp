#pragma once
// Radial equilibrium potentials.
//
// In log coordinates s = log|z|^2 the mean-field equation MA(psi) =
// e^{beta (psi - phi)} dV reduces to the two-point boundary value problem
//
//    psi''(s) = e^{beta (psi(s) - phi_hat(s))} w(s),  psi'(-inf) = 0,
//    psi'(+inf) = 1,
//
// where w is the pushforward density of dV in s.  The unique vertical level
// that balances total mass 1 is found automatically by the boundary
// conditions.  beta -> 0 is the linear (Calabi-Yau type) problem MA(psi) = dV
// normalized by int (psi - phi) dV = 0, and beta -> inf recovers the
// slope-constrained envelope from the weights module.

#include <string>
#include <vector>

#include "feklab/radial_profile.hpp"
#include "feklab/weights.hpp"

namespace feklab {

struct MfeOptions {
  double s_min = -12.0, s_max = 12.0;
  int grid_points = 4001;
  double tol = 1e-10;          // max norm of the per-cell mass residual
  int max_newton = 200;        // per continuation stage
  double edge_mass_tol = 1e-6; // larger boundary-cell mass means the grid clips the measure
};

// Damped Newton with beta-doubling continuation from the envelope initial
// guess.  Throws std::runtime_error on Newton stagnation ("no-convergence")
// or when mass leaks off the grid ("bad-grid").  Requires beta > 0, a radial
// weight and a radial-planar base.
RadialProfile solve_mfe_radial(const Weight& w, const BaseMeasure& base, double beta,
                               const MfeOptions& opt = {});

// beta = 0: direct double integration of MA(psi) = dV with the stated
// normalization; requires a probability base (mass exactly 1).
RadialProfile solve_cy_radial(const Weight& w, const BaseMeasure& base, const MfeOptions& opt = {});

// Reference laws with closed forms, for tests and distance diagnostics.
struct ReferenceLaw {
  enum class Kind { Arcsine, Semicircle, UniformDisc, FubiniStudySphere } kind;
  double R = 1.0;  // UniformDisc radius

  static ReferenceLaw arcsine() { return {Kind::Arcsine, 1.0}; }
  static ReferenceLaw semicircle() { return {Kind::Semicircle, 1.0}; }
  static ReferenceLaw uniform_disc(double R = 1.0) { return {Kind::UniformDisc, R}; }
  static ReferenceLaw fs_sphere() { return {Kind::FubiniStudySphere, 1.0}; }

  bool on_real_line() const { return kind == Kind::Arcsine || kind == Kind::Semicircle; }
  // CDF on the line (real-line kinds) / of the radius (planar kinds).
  double cdf(double x) const;
  double density(double x) const;
  double second_moment() const;  // E x^2 on the line, E |z|^2 planar
  double support_hi() const;     // +1 / R / +inf
};

// Closed-form measure by name: "arcsine", "semicircle", "uniform-disc",
// "uniform-disc(R)", "fubini-study-sphere".  Throws on unknown names.
ReferenceLaw preset_equilibrium(const std::string& name);

struct SweepRow {
  double beta = 0.0;
  double sup_gap_envelope = 0.0;  // sup_s |psi_beta - psi_envelope|
  double mass_residual = 0.0;     // |total MA mass - 1|
  double support_radius = 0.0;    // radius containing all but 1e-3 of the mass
  bool failed = false;            // solver error for this row (others unaffected)
  std::string error;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<RadialProfile> profiles;
};

SweepResult temperature_sweep(const Weight& w, const BaseMeasure& base,
                              const std::vector<double>& betas, const MfeOptions& opt = {});

}  // namespace feklab
