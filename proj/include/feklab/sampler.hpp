#pragma once
// MCMC engines for the Gibbs ensembles: joint-update random-walk Metropolis
// and Metropolis-adjusted Langevin with burn-in step adaptation, annealing
// schedules, and the zero-temperature Fekete-point search (annealed walk +
// deterministic gradient polish + point/candidate exchange).

#include <cstdint>
#include <string>
#include <vector>

#include "feklab/energy.hpp"

namespace feklab {

enum class ScheduleKind { Fixed, BetaRamp, Geometric };

struct Schedule {
  ScheduleKind kind = ScheduleKind::Fixed;
  double beta = 1.0;  // Fixed value / ramp target / geometric start
  double rho = 1.02;  // geometric ratio, > 1
  double ramp_start_frac = 0.1;

  static Schedule fixed(double beta);
  // Linear ramp from beta * start_frac up to beta across burn-in, then fixed;
  // the post-burn-in samples target the fixed-beta Gibbs law.
  static Schedule beta_ramp(double beta, double start_frac = 0.1);
  // beta_t = beta0 * rho^t, unbounded: an annealing schedule toward the
  // zero-temperature (Fekete) regime.  Never yields equilibrium samples.
  static Schedule geometric(double beta0, double rho);

  double beta_at(long long sweep, long long burn_in) const;
  bool is_annealing() const { return kind == ScheduleKind::Geometric; }
};

enum class ProposalKind { Auto, Mala, Rwm };

struct RunOptions {
  ProposalKind proposal = ProposalKind::Auto;
  double burn_in_frac = 0.2;
  int thin = 0;             // 0 means max(1, sweeps / 10000)
  double init_step = 0.0;   // 0 means heuristic
  double init_slack = 20.0; // initial draws satisfy phi <= phi_min + slack
  int workers = 1;          // never affects output, only wall time
};

struct ChainStats {
  int chain = 0;
  long long proposed = 0, accepted = 0;            // post burn-in
  long long burn_proposed = 0, burn_accepted = 0;  // during burn-in
  double step = 0.0;                               // final step size
  bool used_mala = false;
  double acceptance() const {
    return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  }
};

struct SampleRecord {
  int chain = 0;
  long long sweep = 0;
  Configuration config;
};

struct RunResult {
  std::vector<SampleRecord> samples;
  std::vector<ChainStats> stats;
  double acceptance = 0.0;  // pooled post burn-in
  long long burn_in = 0;
  int thin = 1;
};

// Runs `chains` independent chains of `sweeps` joint-update proposals each.
// Deterministic per-chain RNG substreams make the output bitwise independent
// of the worker count.  Throws std::invalid_argument for inadmissible or
// unsupported models, std::runtime_error for bad-init (no finite-energy
// start) and step-size-failure (post-adaptation acceptance below 0.05).
RunResult run_chain(const EnsembleModel& model, const Schedule& schedule, long long sweeps,
                    int chains, std::uint64_t seed, const RunOptions& opt = {});

struct Carrier {
  enum class Kind { Circle, Interval, Disc, Box } kind = Kind::Circle;
  double a = -1.0, b = 1.0;  // interval endpoints
  double R = 1.0;            // disc radius / box half-width

  static Carrier circle();
  static Carrier interval(double a, double b);
  static Carrier disc(double R);
  static Carrier box(double half_width);
  std::string describe() const;
};

struct FeketeOptions {
  int restarts = 4;
  long long anneal_sweeps = 3000;
  double beta0 = 64.0, rho = 1.004;
  int polish_max_iter = 600;
  int exchange_candidates = 48;
  int exchange_rounds = 30;
};

struct FeketeResult {
  Configuration config;
  double hamiltonian = kInf;          // minimized objective H
  double energy = kInf;               // determinantal energy E^(N)
  double energy_after_anneal = kInf;  // best restart, before polishing
  int singular_restarts = 0;
};

// Minimizes H = -(1/k) log|D|^2 + sum phi over the carrier (the beta = +inf
// regime; model.beta must be +inf).  The circle carrier is parametrized by
// angles so the constraint is exact; other carriers project after every move.
// Throws search-failure when every restart stays singular.
FeketeResult fekete_search(const EnsembleModel& model, const Carrier& carrier,
                           const FeketeOptions& opt, std::uint64_t seed);

}  // namespace feklab
