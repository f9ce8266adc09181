#include "feklab/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "feklab/common.hpp"

namespace feklab {

namespace {

struct Grid {
  std::vector<double> s, phi, logw;
  double h = 0.0;
};

Grid make_grid(const Weight& w, const BaseMeasure& base, const MfeOptions& opt) {
  if (!(opt.s_min < opt.s_max) || opt.grid_points < 9)
    throw std::invalid_argument("radial solver: need s_min < s_max and at least 9 grid points");
  if (!base.radial_available())
    throw std::invalid_argument("radial solver: base measure has no radial pushforward density");
  Grid g;
  g.s = linspace(opt.s_min, opt.s_max, opt.grid_points);
  g.h = g.s[1] - g.s[0];
  g.phi.resize(g.s.size());
  g.logw.resize(g.s.size());
  for (size_t i = 0; i < g.s.size(); ++i) {
    g.phi[i] = w.radial_hat(g.s[i]);
    g.logw[i] = base.radial_log_w(g.s[i]);
  }
  return g;
}

// Density e^{beta (psi - phi)} w at a node, with 0 for +inf weight or
// off-carrier base and a hard cap so intermediate Newton iterates cannot
// overflow (the line search backs off before the cap matters at a solution).
constexpr double kLogRhsCap = 300.0;

double node_rhs(double beta, double psi, double phi, double logw) {
  if (!std::isfinite(phi) || !std::isfinite(logw)) return 0.0;
  const double log_rhs = beta * (psi - phi) + logw;
  return std::exp(std::min(log_rhs, kLogRhsCap));
}

// d rhs / d psi; zero in the capped regime, where rhs no longer responds.
double node_rhs_deriv(double beta, double rhs) {
  return rhs >= std::exp(kLogRhsCap) ? 0.0 : beta * rhs;
}

// Max-norm of the per-cell mass residual (interior) and the slope boundary
// conditions: F_0 = psi'(s_min), F_i = h * (psi'' - rhs), F_M = psi'(s_max)-1.
double assemble_residual(const Grid& g, double beta, const std::vector<double>& psi,
                         std::vector<double>& F, std::vector<double>& rhs) {
  const size_t M = psi.size() - 1;
  const double h = g.h;
  F[0] = (psi[1] - psi[0]) / h;
  F[M] = (psi[M] - psi[M - 1]) / h - 1.0;
  double norm = std::max(std::abs(F[0]), std::abs(F[M]));
  for (size_t i = 1; i < M; ++i) {
    rhs[i] = node_rhs(beta, psi[i], g.phi[i], g.logw[i]);
    F[i] = (psi[i + 1] - 2.0 * psi[i] + psi[i - 1]) / h - h * rhs[i];
    norm = std::max(norm, std::abs(F[i]));
  }
  return norm;
}

// Tridiagonal solve (Thomas); diag is overwritten.
void solve_tridiag(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& sup,
                   std::vector<double>& x) {
  const size_t n = diag.size();
  for (size_t i = 1; i < n; ++i) {
    const double m = sub[i] / diag[i - 1];
    diag[i] -= m * sup[i - 1];
    x[i] -= m * x[i - 1];
  }
  x[n - 1] /= diag[n - 1];
  for (size_t i = n - 1; i-- > 0;) x[i] = (x[i] - sup[i] * x[i + 1]) / diag[i];
}

// One continuation stage: damped Newton at fixed beta.  Returns false on
// stagnation.
bool newton_stage(const Grid& g, double beta, std::vector<double>& psi, const MfeOptions& opt) {
  const size_t M = psi.size() - 1;
  const double h = g.h;
  std::vector<double> F(M + 1), rhs(M + 1, 0.0), trialF(M + 1), trial_rhs(M + 1, 0.0);
  std::vector<double> sub(M + 1), diag(M + 1), sup(M + 1), step(M + 1);
  double norm = assemble_residual(g, beta, psi, F, rhs);
  for (int it = 0; it < opt.max_newton; ++it) {
    if (norm < opt.tol) return true;
    // J = second-difference operator minus the density's diagonal response.
    diag[0] = -1.0 / h;
    sup[0] = 1.0 / h;
    sub[M] = -1.0 / h;
    diag[M] = 1.0 / h;
    for (size_t i = 1; i < M; ++i) {
      sub[i] = 1.0 / h;
      sup[i] = 1.0 / h;
      diag[i] = -2.0 / h - h * node_rhs_deriv(beta, rhs[i]);
    }
    for (size_t i = 0; i <= M; ++i) step[i] = -F[i];
    solve_tridiag(sub, diag, sup, step);

    bool accepted = false;
    std::vector<double> trial(M + 1);
    for (double t = 1.0; t >= 1.0 / 4096.0; t *= 0.5) {
      for (size_t i = 0; i <= M; ++i) trial[i] = psi[i] + t * step[i];
      const double trial_norm = assemble_residual(g, beta, trial, trialF, trial_rhs);
      if (trial_norm < norm * (1.0 - 1e-4 * t) || trial_norm < opt.tol) {
        psi.swap(trial);
        F.swap(trialF);
        rhs.swap(trial_rhs);
        norm = trial_norm;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return norm < opt.tol;
}

void check_edges(const Grid& g, double beta, const std::vector<double>& psi,
                 const MfeOptions& opt) {
  const size_t M = psi.size() - 1;
  const double lo = g.h * node_rhs(beta, psi[1], g.phi[1], g.logw[1]);
  const double hi = g.h * node_rhs(beta, psi[M - 1], g.phi[M - 1], g.logw[M - 1]);
  if (lo > opt.edge_mass_tol || hi > opt.edge_mass_tol)
    throw std::runtime_error(
        "radial solver: bad grid, boundary cells carry mass " + std::to_string(lo) + " / " +
        std::to_string(hi) + " (widen [s_min, s_max])");
}

RadialProfile pack_profile(const Grid& g, const std::vector<double>& psi) {
  RadialProfile out;
  out.s = g.s;
  out.psi = psi;
  const size_t M = psi.size() - 1;
  out.m.resize(M + 1);
  for (size_t i = 0; i < M; ++i) out.m[i] = (psi[i + 1] - psi[i]) / g.h;
  out.m[M] = out.m[M - 1];
  for (double& v : out.m) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace

RadialProfile solve_mfe_radial(const Weight& w, const BaseMeasure& base, double beta,
                               const MfeOptions& opt) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw std::invalid_argument("solve_mfe_radial: beta must be positive and finite");
  // Definite admissibility failures are refused; unclassifiable combinations
  // (e.g. manufactured densities) proceed and rely on the mass checks.
  const AdmissibilityVerdict verdict = admissibility_check(w, base, beta, 1);
  if (verdict.status == AdmissibilityStatus::FailsGrowth ||
      verdict.status == AdmissibilityStatus::FailsIteratedExponential)
    throw std::invalid_argument("solve_mfe_radial: inadmissible model: " + verdict.detail);
  const Grid g = make_grid(w, base, opt);

  // Start from the slope-constrained envelope (the beta -> inf profile) at a
  // high inverse temperature, where the envelope is near the solution, and
  // halve beta down to the target.  Descending keeps every stage at least as
  // confined as the target, so a model that is only admissible at or above
  // its target temperature never passes through an unsolvable stage.
  std::vector<double> stages;
  for (double b = beta; b < 32.0; b *= 2.0) stages.push_back(b);
  if (stages.empty() || stages.back() < beta) stages.push_back(std::max(beta, 32.0));
  std::reverse(stages.begin(), stages.end());

  std::vector<double> psi = weighted_extremal_radial(w, g.s).psi;
  for (double b : stages) {
    if (!newton_stage(g, b, psi, opt))
      throw std::runtime_error("solve_mfe_radial: no convergence at beta = " + std::to_string(b) +
                               " (residual tolerance " + format_double(opt.tol) + ")");
  }
  check_edges(g, beta, psi, opt);
  return pack_profile(g, psi);
}

RadialProfile solve_cy_radial(const Weight& w, const BaseMeasure& base, const MfeOptions& opt) {
  // Custom radial densities pass through here; the quadrature-mass check
  // below rejects them when they are not (numerically) probability measures.
  if (!base.is_probability() && base.kind != BaseKind::RadialDensityS)
    throw std::invalid_argument("solve_cy_radial: base measure must be a probability measure");
  const Grid g = make_grid(w, base, opt);
  const size_t M = g.s.size() - 1;
  const double h = g.h;

  // psi'' = w with psi'(s_min) = 0: integrate twice with midpoint cell
  // masses, then shift so that int (psi - phi) dV = 0 under the same rule.
  std::vector<double> mid(M), cell_mass(M, 0.0);
  for (size_t c = 0; c < M; ++c) {
    mid[c] = 0.5 * (g.s[c] + g.s[c + 1]);
    const double lw = base.radial_log_w(mid[c]);
    if (std::isfinite(lw)) cell_mass[c] = h * std::exp(lw);
  }
  if (cell_mass.front() > opt.edge_mass_tol || cell_mass.back() > opt.edge_mass_tol)
    throw std::runtime_error("solve_cy_radial: bad grid, base measure leaks past the boundary");
  KahanSum total_acc;
  for (double mu : cell_mass) total_acc.add(mu);
  const double total = total_acc.value();
  if (std::abs(total - 1.0) > 5e-3)
    throw std::runtime_error("solve_cy_radial: grid quadrature mass " + format_double(total) +
                             " is too far from 1");
  // Project the quadrature masses onto the probability simplex (the base is a
  // probability measure; the deviation is pure quadrature error), so the
  // returned profile carries total mass 1 exactly.
  for (double& mu : cell_mass) mu /= total;

  // slope on cell c is psi'(mid_c) = sum_{j<c} mu_j + mu_c / 2; the first and
  // last cells are empty to edge_mass_tol, so pinning their slopes to the
  // exact boundary conditions 0 and 1 perturbs psi by at most h * tol.
  std::vector<double> psi(M + 1, 0.0), slope(M, 0.0);
  KahanSum sl;
  for (size_t c = 0; c < M; ++c) {
    slope[c] = sl.value() + 0.5 * cell_mass[c];
    sl.add(cell_mass[c]);
  }
  slope.front() = 0.0;
  slope.back() = 1.0;
  for (size_t c = 0; c < M; ++c) psi[c + 1] = psi[c] + h * slope[c];
  KahanSum shift;
  for (size_t c = 0; c < M; ++c) {
    if (cell_mass[c] <= 0.0) continue;
    const double phi_mid = w.radial_hat(mid[c]);
    if (!std::isfinite(phi_mid))
      throw std::invalid_argument("solve_cy_radial: weight is +inf on the base measure's carrier");
    shift.add(cell_mass[c] * (0.5 * (psi[c] + psi[c + 1]) - phi_mid));
  }
  const double c0 = shift.value() / total;
  for (double& v : psi) v -= c0;

  RadialProfile out;
  out.s = g.s;
  out.psi = psi;
  out.m = slope;
  out.m.push_back(slope.back());
  return out;
}

double ReferenceLaw::cdf(double x) const {
  switch (kind) {
    case Kind::Arcsine:
      if (x <= -1.0) return 0.0;
      if (x >= 1.0) return 1.0;
      return 0.5 + std::asin(x) / kPi;
    case Kind::Semicircle:
      if (x <= -1.0) return 0.0;
      if (x >= 1.0) return 1.0;
      return 0.5 + (x * std::sqrt(1.0 - x * x) + std::asin(x)) / kPi;
    case Kind::UniformDisc:
      if (x <= 0.0) return 0.0;
      if (x >= R) return 1.0;
      return x * x / (R * R);
    case Kind::FubiniStudySphere: {
      if (x <= 0.0) return 0.0;
      const double r2 = x * x;
      return r2 / (1.0 + r2);
    }
  }
  return 0.0;
}

double ReferenceLaw::density(double x) const {
  switch (kind) {
    case Kind::Arcsine:
      if (std::abs(x) >= 1.0) return 0.0;
      return 1.0 / (kPi * std::sqrt(1.0 - x * x));
    case Kind::Semicircle:
      if (std::abs(x) >= 1.0) return 0.0;
      return 2.0 / kPi * std::sqrt(1.0 - x * x);
    case Kind::UniformDisc:
      if (x <= 0.0 || x >= R) return 0.0;
      return 2.0 * x / (R * R);  // radial density of |z|
    case Kind::FubiniStudySphere: {
      if (x <= 0.0) return 0.0;
      const double d = 1.0 + x * x;
      return 2.0 * x / (d * d);
    }
  }
  return 0.0;
}

double ReferenceLaw::second_moment() const {
  switch (kind) {
    case Kind::Arcsine:
      return 0.5;
    case Kind::Semicircle:
      return 0.25;
    case Kind::UniformDisc:
      return R * R / 2.0;
    case Kind::FubiniStudySphere:
      return kInf;  // E |z|^2 diverges (heavy 1/r^3 tail of the radius)
  }
  return 0.0;
}

double ReferenceLaw::support_hi() const {
  switch (kind) {
    case Kind::Arcsine:
    case Kind::Semicircle:
      return 1.0;
    case Kind::UniformDisc:
      return R;
    case Kind::FubiniStudySphere:
      return kInf;
  }
  return 0.0;
}

SweepResult temperature_sweep(const Weight& w, const BaseMeasure& base,
                              const std::vector<double>& betas, const MfeOptions& opt) {
  SweepResult out;
  const std::vector<double> s = linspace(opt.s_min, opt.s_max, opt.grid_points);
  const RadialProfile env = weighted_extremal_radial(w, s);
  for (double beta : betas) {
    SweepRow row;
    row.beta = beta;
    RadialProfile prof;
    try {
      prof = solve_mfe_radial(w, base, beta, opt);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
      out.rows.push_back(row);
      out.profiles.emplace_back();
      continue;
    }
    for (size_t i = 0; i < prof.psi.size(); ++i)
      row.sup_gap_envelope = std::max(row.sup_gap_envelope, std::abs(prof.psi[i] - env.psi[i]));
    const double total = prof.total_mass();
    row.mass_residual = std::abs(total - 1.0);
    row.support_radius = std::exp(prof.s.back() / 2.0);
    for (size_t i = 0; i < prof.s.size(); ++i) {
      if (prof.cdf_s(prof.s[i]) >= (1.0 - 1e-3) * total) {
        row.support_radius = std::exp(prof.s[i] / 2.0);
        break;
      }
    }
    out.rows.push_back(row);
    out.profiles.push_back(std::move(prof));
  }
  return out;
}

ReferenceLaw preset_equilibrium(const std::string& name) {
  if (name == "arcsine") return ReferenceLaw::arcsine();
  if (name == "semicircle") return ReferenceLaw::semicircle();
  if (name == "fubini-study-sphere") return ReferenceLaw::fs_sphere();
  if (name == "uniform-disc") return ReferenceLaw::uniform_disc(1.0);
  if (name.rfind("uniform-disc(", 0) == 0 && name.back() == ')') {
    const std::string arg = name.substr(13, name.size() - 14);
    try {
      const double R = std::stod(arg);
      if (R > 0.0 && std::isfinite(R)) return ReferenceLaw::uniform_disc(R);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("preset_equilibrium: bad radius in '" + name + "'");
  }
  throw std::invalid_argument("preset_equilibrium: unknown measure '" + name + "'");
}

}  // namespace feklab
