#include "feklab/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <thread>

#include "feklab/rng.hpp"

namespace feklab {

namespace {

// ---------------------------------------------------------------------------
// Coordinate parametrization.  Configurations are flattened to real vectors:
// planar points as (x, y) pairs per complex coordinate, real-line points as
// bare reals, circle points as angles (so the constraint is exact).

enum class Param { Planar, Line, Angle };

struct Space {
  const EnsembleModel* mp = nullptr;
  Param param = Param::Planar;
  int n = 1, N = 0, per_point = 0, dim = 0;

  void fill_config(const std::vector<double>& x, Configuration& cfg) const {
    cfg.n = n;
    cfg.mode = mp->mode;
    cfg.pts.resize(static_cast<std::size_t>(N) * n);
    for (int p = 0; p < N; ++p) {
      const double* xp = x.data() + static_cast<std::size_t>(p) * per_point;
      switch (param) {
        case Param::Planar:
          for (int c = 0; c < n; ++c) cfg.pts[static_cast<std::size_t>(p) * n + c] = {xp[2 * c], xp[2 * c + 1]};
          break;
        case Param::Line:
          for (int c = 0; c < n; ++c) cfg.pts[static_cast<std::size_t>(p) * n + c] = {xp[c], 0.0};
          break;
        case Param::Angle:
          cfg.pts[p] = {std::cos(xp[0]), std::sin(xp[0])};
          break;
      }
    }
  }

  // Maps the (dx1, dy1, ..., dxn, dyn)-per-point Hamiltonian gradient into
  // parameter coordinates, scaled by `scale`, accumulated into g.
  void add_mapped_grad(const std::vector<double>& grad_h, const std::vector<double>& x,
                       double scale, std::vector<double>& g) const {
    for (int p = 0; p < N; ++p) {
      const double* gp = grad_h.data() + static_cast<std::size_t>(p) * 2 * n;
      double* out = g.data() + static_cast<std::size_t>(p) * per_point;
      const double* xp = x.data() + static_cast<std::size_t>(p) * per_point;
      switch (param) {
        case Param::Planar:
          for (int c = 0; c < 2 * n; ++c) out[c] += scale * gp[c];
          break;
        case Param::Line:
          for (int c = 0; c < n; ++c) out[c] += scale * gp[2 * c];
          break;
        case Param::Angle: {
          const double cx = std::cos(xp[0]), cy = std::sin(xp[0]);
          out[0] += scale * (cx * gp[1] - cy * gp[0]);
          break;
        }
      }
    }
  }
};

Space make_space(const EnsembleModel& m, Param param) {
  Space sp;
  sp.mp = &m;
  sp.param = param;
  sp.n = m.n();
  sp.N = m.N();
  sp.per_point = param == Param::Planar ? 2 * sp.n : (param == Param::Line ? sp.n : 1);
  sp.dim = sp.per_point * sp.N;
  if (param == Param::Angle && sp.n != 1)
    throw std::invalid_argument("sampler: circle parametrization requires n = 1");
  return sp;
}

Param param_for_chain(const EnsembleModel& m) {
  if (m.base.kind == BaseKind::Circle) {
    if (m.mode != ConfigMode::Complex)
      throw std::invalid_argument("run_chain: circle base requires complex mode");
    return Param::Angle;
  }
  switch (m.mode) {
    case ConfigMode::Complex:
      return Param::Planar;
    case ConfigMode::RealLine:
      return Param::Line;
    default:
      throw std::invalid_argument("run_chain: unsupported configuration mode");
  }
}

// ---------------------------------------------------------------------------
// Base-measure potential P(x) = -sum_i log(density of point i) in parameter
// coordinates; +inf off the carrier.  grad returns false when P is not
// differentiable for this base (never the case for the supported kinds).

double base_potential_point(const BaseMeasure& b, Param param, const double* xp, int n) {
  switch (b.kind) {
    case BaseKind::LebesgueC:
    case BaseKind::LebesgueR:
      return 0.0;
    case BaseKind::Circle:
      return 0.0;  // reference measure is the circle measure itself
    case BaseKind::Gaussian: {
      double acc = 0.0;
      if (param == Param::Planar) {
        for (int c = 0; c < n; ++c)
          acc += (xp[2 * c] * xp[2 * c] + xp[2 * c + 1] * xp[2 * c + 1]) / (b.sigma * b.sigma);
      } else {
        for (int c = 0; c < n; ++c) acc += xp[c] * xp[c] / (b.sigma * b.sigma);
      }
      return acc;
    }
    case BaseKind::UniformDisc: {
      const double r2 = xp[0] * xp[0] + xp[1] * xp[1];
      return r2 <= b.R * b.R ? 0.0 : kInf;
    }
    case BaseKind::Interval:
      return (xp[0] >= b.a && xp[0] <= b.b) ? 0.0 : kInf;
    case BaseKind::Arcsine: {
      const double d = 1.0 - xp[0] * xp[0];
      return d > 0.0 ? 0.5 * std::log(d) : kInf;  // -log density up to constants
    }
    case BaseKind::RadialDensityS: {
      const double r2 = xp[0] * xp[0] + xp[1] * xp[1];
      if (r2 <= 0.0) return kInf;
      const double s = std::log(r2);
      const double lw = b.radial_log_w(s);
      if (!std::isfinite(lw)) return kInf;
      return -(lw - s);  // log pi constant dropped
    }
  }
  return kInf;
}

void base_potential_grad_point(const BaseMeasure& b, Param param, const double* xp, int n,
                               double* out) {
  switch (b.kind) {
    case BaseKind::Gaussian: {
      const double f = 2.0 / (b.sigma * b.sigma);
      if (param == Param::Planar)
        for (int c = 0; c < 2 * n; ++c) out[c] += f * xp[c];
      else
        for (int c = 0; c < n; ++c) out[c] += f * xp[c];
      return;
    }
    case BaseKind::Arcsine: {
      const double d = 1.0 - xp[0] * xp[0];
      out[0] += -xp[0] / d;
      return;
    }
    case BaseKind::RadialDensityS: {
      const double r2 = xp[0] * xp[0] + xp[1] * xp[1];
      const double s = std::log(r2);
      const double h = 1e-6;
      const double dw = (b.radial_log_w(s + h) - b.radial_log_w(s - h)) / (2.0 * h);
      const double dPds = -(dw - 1.0);
      out[0] += dPds * 2.0 * xp[0] / r2;
      out[1] += dPds * 2.0 * xp[1] / r2;
      return;
    }
    default:
      return;  // flat potential
  }
}

// ---------------------------------------------------------------------------
// Target evaluation: U(x; beta) = beta * H(x) + P(x), with H cached.

struct Eval {
  double H = kInf;  // Hamiltonian
  double P = kInf;  // base potential
  bool finite() const { return std::isfinite(H) && std::isfinite(P); }
  double U(double beta) const { return finite() ? beta * H + P : kInf; }
};

struct Target {
  Space space;
  Configuration scratch;

  Eval eval(const std::vector<double>& x) {
    Eval e;
    e.P = 0.0;
    for (int p = 0; p < space.N && std::isfinite(e.P); ++p)
      e.P += base_potential_point(space.mp->base, space.param,
                                  x.data() + static_cast<std::size_t>(p) * space.per_point,
                                  space.n);
    if (!std::isfinite(e.P)) return e;
    space.fill_config(x, scratch);
    e.H = weighted_hamiltonian(*space.mp, scratch);
    return e;
  }

  // beta * grad H + grad P; empty optional when the Hamiltonian gradient is
  // unavailable (singular configuration or non-smooth weight).
  std::optional<std::vector<double>> grad(const std::vector<double>& x, double beta) {
    auto g = grad_h_only(x, beta);
    if (!g) return std::nullopt;
    for (int p = 0; p < space.N; ++p)
      base_potential_grad_point(space.mp->base, space.param,
                                x.data() + static_cast<std::size_t>(p) * space.per_point,
                                space.n, g->data() + static_cast<std::size_t>(p) * space.per_point);
    return g;
  }

  // Hamiltonian gradient alone, in parameter coordinates (used by the Fekete
  // search, where the base measure plays no role).
  std::optional<std::vector<double>> grad_h_only(const std::vector<double>& x, double scale) {
    space.fill_config(x, scratch);
    auto gh = grad_weighted_hamiltonian(*space.mp, scratch);
    if (!gh) return std::nullopt;
    std::vector<double> g(x.size(), 0.0);
    space.add_mapped_grad(*gh, x, scale, g);
    return g;
  }

  double hamiltonian(const std::vector<double>& x) {
    space.fill_config(x, scratch);
    return weighted_hamiltonian(*space.mp, scratch);
  }
};

// ---------------------------------------------------------------------------
// Initialization: i.i.d. draws from the base (or a unit Gaussian for improper
// bases) kept only while phi <= phi_min + slack, so chains start inside the
// effective potential well.

double weight_min_estimate(const Weight& w, int n) {
  if (n > 1 && w.kind == WeightKind::TorusLog) return 0.0;
  double best = kInf;
  for (int i = 0; i <= 400; ++i) {
    const double s = -12.0 + 24.0 * i / 400.0;
    best = std::min(best, w.radial_hat(s));
  }
  return std::isfinite(best) ? best : 0.0;
}

cplx draw_proposal_coord(const BaseMeasure& b, ConfigMode mode, std::mt19937_64& eng) {
  if (b.is_probability()) return b.sample_point(eng);
  std::normal_distribution<double> nd(0.0, 0.5);
  if (mode == ConfigMode::RealLine) return {nd(eng) * 2.0, 0.0};
  return {nd(eng), nd(eng)};
}

std::vector<double> draw_initial(Target& tgt, std::mt19937_64& eng, double slack, Eval& ev) {
  const Space& sp = tgt.space;
  const EnsembleModel& m = *sp.mp;
  const double phi_min = weight_min_estimate(m.weight, sp.n);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  std::vector<double> x(sp.dim, 0.0);
  std::vector<cplx> pt(sp.n);
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (int p = 0; p < sp.N; ++p) {
      double* xp = x.data() + static_cast<std::size_t>(p) * sp.per_point;
      if (sp.param == Param::Angle) {
        xp[0] = ang(eng);
        continue;
      }
      for (int tries = 0;; ++tries) {
        for (int c = 0; c < sp.n; ++c) pt[c] = draw_proposal_coord(m.base, m.mode, eng);
        if (m.weight(pt.data(), sp.n) <= phi_min + slack) break;
        if (tries > 2000)
          throw std::runtime_error("run_chain: bad-init, no draw satisfies the weight window");
      }
      if (sp.param == Param::Planar)
        for (int c = 0; c < sp.n; ++c) {
          xp[2 * c] = pt[c].real();
          xp[2 * c + 1] = pt[c].imag();
        }
      else
        for (int c = 0; c < sp.n; ++c) xp[c] = pt[c].real();
    }
    ev = tgt.eval(x);
    if (ev.finite()) return x;
  }
  throw std::runtime_error("run_chain: bad-init, Hamiltonian not finite at any initial draw");
}

// ---------------------------------------------------------------------------
// One adaptive MH chain.

struct StepperConfig {
  bool mala = false;
  double target = 0.234;
  double step = 0.1;
  long long adapt_count = 0;

  void adapt(double accepted) {
    ++adapt_count;
    const double gamma = 1.0 / std::pow(10.0 + static_cast<double>(adapt_count), 0.66);
    step = std::clamp(step * std::exp(gamma * (accepted - target)), 1e-14, 1e6);
  }
};

struct ChainOutcome {
  std::vector<SampleRecord> records;
  ChainStats stats;
};

ChainOutcome run_single_chain(const EnsembleModel& model, const Schedule& sched,
                              long long sweeps, const RunOptions& opt, int chain_index,
                              std::uint64_t seed, bool want_mala, long long burn_in, int thin) {
  Target tgt;
  tgt.space = make_space(model, param_for_chain(model));
  std::mt19937_64 eng = make_engine(seed, static_cast<std::uint64_t>(chain_index));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Eval cur;
  std::vector<double> x = draw_initial(tgt, eng, opt.init_slack, cur);

  StepperConfig st;
  st.mala = want_mala;
  st.target = want_mala ? 0.574 : 0.234;
  const double beta0 = sched.beta_at(0, burn_in);
  st.step = opt.init_step > 0.0
                ? opt.init_step
                : 0.5 / std::sqrt(std::max(1.0, beta0) * static_cast<double>(tgt.space.dim));

  ChainOutcome out;
  out.stats.chain = chain_index;
  out.stats.used_mala = want_mala;

  std::vector<double> prop(tgt.space.dim), grad_cur, grad_prop;
  if (want_mala) {
    auto g = tgt.grad(x, beta0);
    if (!g) throw std::runtime_error("run_chain: gradient unavailable at the initial point");
    grad_cur = std::move(*g);
  }

  for (long long sweep = 0; sweep < sweeps; ++sweep) {
    const double beta = sched.beta_at(sweep, burn_in);
    if (want_mala && sweep > 0) {
      // Refresh the drift for the current beta (cheap relative to H).
      auto g = tgt.grad(x, beta);
      if (g) grad_cur = std::move(*g);
    }
    bool accepted = false;
    if (want_mala) {
      const double sd = std::sqrt(2.0 * st.step);
      for (int i = 0; i < tgt.space.dim; ++i)
        prop[i] = x[i] - st.step * grad_cur[i] + sd * normal(eng);
      const Eval pe = tgt.eval(prop);
      if (pe.finite()) {
        auto gp = tgt.grad(prop, beta);
        if (gp) {
          grad_prop = std::move(*gp);
          double fwd = 0.0, back = 0.0;  // -log q up to the common constant
          for (int i = 0; i < tgt.space.dim; ++i) {
            const double df = prop[i] - x[i] + st.step * grad_cur[i];
            const double db = x[i] - prop[i] + st.step * grad_prop[i];
            fwd += df * df;
            back += db * db;
          }
          const double loga = cur.U(beta) - pe.U(beta) + (fwd - back) / (4.0 * st.step);
          if (std::log(unif(eng)) < loga) {
            x = prop;
            cur = pe;
            grad_cur = grad_prop;
            accepted = true;
          }
        }
      }
    } else {
      for (int i = 0; i < tgt.space.dim; ++i) prop[i] = x[i] + st.step * normal(eng);
      if (tgt.space.param == Param::Angle)
        for (double& v : prop) v = std::fmod(std::fmod(v, 2.0 * kPi) + 2.0 * kPi, 2.0 * kPi);
      const Eval pe = tgt.eval(prop);
      const double loga = cur.U(beta) - pe.U(beta);
      if (pe.finite() && std::log(unif(eng)) < loga) {
        x = prop;
        cur = pe;
        accepted = true;
      }
    }

    const bool in_burn = sweep < burn_in;
    if (in_burn || sched.is_annealing()) st.adapt(accepted ? 1.0 : 0.0);
    if (in_burn) {
      ++out.stats.burn_proposed;
      out.stats.burn_accepted += accepted ? 1 : 0;
    } else {
      ++out.stats.proposed;
      out.stats.accepted += accepted ? 1 : 0;
      if ((sweep - burn_in) % thin == 0) {
        SampleRecord rec;
        rec.chain = chain_index;
        rec.sweep = sweep;
        tgt.space.fill_config(x, rec.config);
        out.records.push_back(std::move(rec));
      }
    }

    if ((sweep + 1) % 1000 == 0) {
      // Cached-Hamiltonian audit: the cache must match a fresh evaluation.
      const Eval fresh = tgt.eval(x);
      if (std::abs(fresh.H - cur.H) > 1e-10 * std::max(1.0, std::abs(fresh.H)))
        throw std::logic_error("run_chain: cached Hamiltonian diverged from recomputation");
      cur = fresh;
    }
  }
  out.stats.step = st.step;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Schedule Schedule::fixed(double beta) {
  Schedule s;
  s.kind = ScheduleKind::Fixed;
  s.beta = beta;
  return s;
}

Schedule Schedule::beta_ramp(double beta, double start_frac) {
  if (!(start_frac > 0.0 && start_frac <= 1.0))
    throw std::invalid_argument("schedule: ramp start fraction must lie in (0, 1]");
  Schedule s;
  s.kind = ScheduleKind::BetaRamp;
  s.beta = beta;
  s.ramp_start_frac = start_frac;
  return s;
}

Schedule Schedule::geometric(double beta0, double rho) {
  if (!(rho > 1.0)) throw std::invalid_argument("schedule: annealing ratio must exceed 1");
  if (!(beta0 > 0.0)) throw std::invalid_argument("schedule: annealing start must be positive");
  Schedule s;
  s.kind = ScheduleKind::Geometric;
  s.beta = beta0;
  s.rho = rho;
  return s;
}

double Schedule::beta_at(long long sweep, long long burn_in) const {
  switch (kind) {
    case ScheduleKind::Fixed:
      return beta;
    case ScheduleKind::BetaRamp: {
      if (burn_in <= 0 || sweep >= burn_in) return beta;
      const double f = static_cast<double>(sweep + 1) / static_cast<double>(burn_in);
      return beta * (ramp_start_frac + (1.0 - ramp_start_frac) * f);
    }
    case ScheduleKind::Geometric:
      return beta * std::pow(rho, static_cast<double>(sweep));
  }
  return beta;
}

RunResult run_chain(const EnsembleModel& model, const Schedule& schedule, long long sweeps,
                    int chains, std::uint64_t seed, const RunOptions& opt) {
  if (sweeps < 10) throw std::invalid_argument("run_chain: need at least 10 sweeps");
  if (chains < 1) throw std::invalid_argument("run_chain: need at least one chain");
  if (!(opt.burn_in_frac >= 0.0 && opt.burn_in_frac < 1.0))
    throw std::invalid_argument("run_chain: burn-in fraction must lie in [0, 1)");

  // Admissibility at the schedule's largest finite beta; definite failures
  // are refused, unclassifiable models proceed at the caller's risk.
  if (!schedule.is_annealing()) {
    EnsembleModel probe = model;
    probe.beta = schedule.beta;
    const AdmissibilityVerdict v = probe.admissibility();
    if (v.status == AdmissibilityStatus::FailsGrowth ||
        v.status == AdmissibilityStatus::FailsIteratedExponential)
      throw std::invalid_argument("run_chain: inadmissible model: " + v.detail);
  }

  const Param param = param_for_chain(model);
  bool mala_ok = param != Param::Angle && !model.weight.lsc_only();
  if (mala_ok) {
    // Probe the gradient once on a generic configuration.
    Target probe;
    probe.space = make_space(model, param);
    std::mt19937_64 eng = make_engine(seed, 0xfeed);
    Eval ev;
    try {
      std::vector<double> x0 = draw_initial(probe, eng, opt.init_slack, ev);
      mala_ok = probe.grad(x0, 1.0).has_value();
    } catch (const std::runtime_error&) {
      mala_ok = false;
    }
  }
  bool want_mala;
  switch (opt.proposal) {
    case ProposalKind::Auto:
      want_mala = mala_ok;
      break;
    case ProposalKind::Mala:
      if (!mala_ok)
        throw std::invalid_argument(
            "run_chain: MALA requested but the model has no usable gradient");
      want_mala = true;
      break;
    case ProposalKind::Rwm:
    default:
      want_mala = false;
      break;
  }

  const long long burn_in = static_cast<long long>(opt.burn_in_frac * static_cast<double>(sweeps));
  const int thin = opt.thin > 0 ? opt.thin : static_cast<int>(std::max<long long>(1, sweeps / 10000));

  std::vector<ChainOutcome> outcomes(chains);
  std::vector<std::exception_ptr> errors(chains);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= chains) return;
      try {
        outcomes[c] =
            run_single_chain(model, schedule, sweeps, opt, c, seed, want_mala, burn_in, thin);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(opt.workers, 1, chains);
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  RunResult res;
  res.burn_in = burn_in;
  res.thin = thin;
  long long acc = 0, prop = 0;
  for (auto& oc : outcomes) {
    acc += oc.stats.accepted;
    prop += oc.stats.proposed;
    res.stats.push_back(oc.stats);
    for (auto& r : oc.records) res.samples.push_back(std::move(r));
  }
  res.acceptance = prop > 0 ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
  if (!schedule.is_annealing() && prop >= 1000 && res.acceptance < 0.05)
    throw std::runtime_error("run_chain: step-size-failure, post-adaptation acceptance " +
                             format_double(res.acceptance) + " below 0.05");
  return res;
}

// ---------------------------------------------------------------------------
// Fekete search.

Carrier Carrier::circle() { return Carrier{}; }

Carrier Carrier::interval(double a, double b) {
  if (!(b > a)) throw std::invalid_argument("carrier: need b > a");
  Carrier c;
  c.kind = Kind::Interval;
  c.a = a;
  c.b = b;
  return c;
}

Carrier Carrier::disc(double R) {
  if (!(R > 0.0)) throw std::invalid_argument("carrier: need R > 0");
  Carrier c;
  c.kind = Kind::Disc;
  c.R = R;
  return c;
}

Carrier Carrier::box(double half_width) {
  if (!(half_width > 0.0)) throw std::invalid_argument("carrier: need positive half width");
  Carrier c;
  c.kind = Kind::Box;
  c.R = half_width;
  return c;
}

std::string Carrier::describe() const {
  switch (kind) {
    case Kind::Circle:
      return "circle";
    case Kind::Interval:
      return "interval[" + format_double(a) + "," + format_double(b) + "]";
    case Kind::Disc:
      return "disc(" + format_double(R) + ")";
    case Kind::Box:
      return "box(" + format_double(R) + ")";
  }
  return "?";
}

namespace {

void project_to_carrier(const Carrier& car, Param param, std::vector<double>& x, int per_point) {
  const int N = static_cast<int>(x.size()) / per_point;
  for (int p = 0; p < N; ++p) {
    double* xp = x.data() + static_cast<std::size_t>(p) * per_point;
    switch (car.kind) {
      case Carrier::Kind::Circle:
        // Angles parametrize the carrier exactly and the objective is
        // periodic; wrapping would only distort step-length accounting.
        break;
      case Carrier::Kind::Interval:
        xp[0] = std::clamp(xp[0], car.a, car.b);
        break;
      case Carrier::Kind::Disc: {
        const double r = std::hypot(xp[0], xp[1]);
        if (r > car.R) {
          xp[0] *= car.R / r;
          xp[1] *= car.R / r;
        }
        break;
      }
      case Carrier::Kind::Box:
        xp[0] = std::clamp(xp[0], -car.R, car.R);
        xp[1] = std::clamp(xp[1], -car.R, car.R);
        break;
    }
  }
  (void)param;
}

void random_carrier_point(const Carrier& car, std::mt19937_64& eng, double* xp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (car.kind) {
    case Carrier::Kind::Circle:
      xp[0] = 2.0 * kPi * u(eng);
      break;
    case Carrier::Kind::Interval:
      xp[0] = car.a + (car.b - car.a) * u(eng);
      break;
    case Carrier::Kind::Disc: {
      const double r = car.R * std::sqrt(u(eng));
      const double th = 2.0 * kPi * u(eng);
      xp[0] = r * std::cos(th);
      xp[1] = r * std::sin(th);
      break;
    }
    case Carrier::Kind::Box:
      xp[0] = car.R * (2.0 * u(eng) - 1.0);
      xp[1] = car.R * (2.0 * u(eng) - 1.0);
      break;
  }
}

double fekete_objective(Target& tgt, const std::vector<double>& x) {
  return tgt.hamiltonian(x);  // base potential plays no role at beta = +inf
}

// Deterministic projected gradient descent with backtracking; accepts only
// strict improvements, so the objective is non-increasing by construction.
double polish(Target& tgt, const Carrier& car, std::vector<double>& x, double f,
              int max_iter) {
  double t0 = 1e-3;
  for (int it = 0; it < max_iter; ++it) {
    auto g = tgt.grad_h_only(x, 1.0);
    if (!g) return f;
    double gnorm2 = 0.0;
    for (double v : *g) gnorm2 += v * v;
    if (gnorm2 < 1e-26) return f;
    bool improved = false;
    std::vector<double> trial(x.size());
    for (double t = t0; t > 1e-18; t *= 0.5) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] - t * (*g)[i];
      project_to_carrier(car, tgt.space.param, trial, tgt.space.per_point);
      // Sufficient decrease against the projected step (gradient components
      // of clamped coordinates must not enter the Armijo bound).
      double moved2 = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = trial[i] - x[i];
        moved2 += d * d;
      }
      if (moved2 == 0.0) break;
      const double ft = fekete_objective(tgt, trial);
      if (ft < f - 1e-4 * moved2 / t) {
        x.swap(trial);
        const double gain = f - ft;
        f = ft;
        t0 = std::min(t * 2.0, 1.0);
        improved = true;
        if (gain < 1e-13 * std::max(1.0, std::abs(f))) return f;
        break;
      }
    }
    if (!improved) return f;
  }
  return f;
}

// Replaces single points by better candidates (random carrier draws plus
// local perturbations); accepts only strict improvements.
double exchange(Target& tgt, const Carrier& car, std::mt19937_64& eng, std::vector<double>& x,
                double f, const FeketeOptions& opt) {
  const int per = tgt.space.per_point;
  const int N = tgt.space.N;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> trial(x.size());
  for (int round = 0; round < opt.exchange_rounds; ++round) {
    bool improved = false;
    for (int p = 0; p < N; ++p) {
      double best_f = f;
      std::vector<double> best_pt;
      trial = x;
      double* tp = trial.data() + static_cast<std::size_t>(p) * per;
      for (int c = 0; c < opt.exchange_candidates; ++c) {
        if (c < opt.exchange_candidates / 2) {
          random_carrier_point(car, eng, tp);
        } else {
          const double scale = std::pow(10.0, -2.0 - (c % 3));
          for (int d = 0; d < per; ++d)
            tp[d] = x[static_cast<std::size_t>(p) * per + d] + scale * normal(eng);
        }
        project_to_carrier(car, tgt.space.param, trial, per);
        const double ft = fekete_objective(tgt, trial);
        if (ft < best_f - 1e-15) {
          best_f = ft;
          best_pt.assign(tp, tp + per);
        }
      }
      if (!best_pt.empty()) {
        std::copy(best_pt.begin(), best_pt.end(),
                  x.begin() + static_cast<std::size_t>(p) * per);
        f = best_f;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return f;
}

}  // namespace

FeketeResult fekete_search(const EnsembleModel& model, const Carrier& carrier,
                           const FeketeOptions& opt, std::uint64_t seed) {
  if (!std::isinf(model.beta) || model.beta < 0)
    throw std::invalid_argument("fekete_search: model.beta must be +inf");
  if (model.n() != 1)
    throw std::invalid_argument("fekete_search: carriers are one-dimensional (n = 1)");
  if (model.k() < 1) throw std::invalid_argument("fekete_search: need k >= 1");
  const bool line = carrier.kind == Carrier::Kind::Interval;
  if (line && model.mode != ConfigMode::RealLine)
    throw std::invalid_argument("fekete_search: interval carrier requires real-line mode");
  if (!line && model.mode != ConfigMode::Complex)
    throw std::invalid_argument("fekete_search: planar carriers require complex mode");

  Target tgt;
  tgt.space = make_space(
      model, carrier.kind == Carrier::Kind::Circle ? Param::Angle
                                                   : (line ? Param::Line : Param::Planar));
  const int per = tgt.space.per_point;

  FeketeResult best;
  for (int r = 0; r < opt.restarts; ++r) {
    std::mt19937_64 eng = make_engine(seed, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> x(tgt.space.dim);
    double f = kInf;
    for (int tries = 0; tries < 50 && !std::isfinite(f); ++tries) {
      for (int p = 0; p < tgt.space.N; ++p)
        random_carrier_point(carrier, eng, x.data() + static_cast<std::size_t>(p) * per);
      f = fekete_objective(tgt, x);
    }
    if (!std::isfinite(f)) {
      ++best.singular_restarts;
      continue;
    }

    // Annealed random-walk phase with continuous step adaptation.
    StepperConfig st;
    st.step = 0.1;
    std::vector<double> prop(x.size());
    for (long long t = 0; t < opt.anneal_sweeps; ++t) {
      const double beta_t = opt.beta0 * std::pow(opt.rho, static_cast<double>(t));
      for (std::size_t i = 0; i < x.size(); ++i) prop[i] = x[i] + st.step * normal(eng);
      project_to_carrier(carrier, tgt.space.param, prop, per);
      const double fp = fekete_objective(tgt, prop);
      const bool acc = std::isfinite(fp) && std::log(unif(eng)) < beta_t * (f - fp);
      if (acc) {
        x = prop;
        f = fp;
      }
      st.adapt(acc ? 1.0 : 0.0);
    }

    Configuration cfg;
    tgt.space.fill_config(x, cfg);
    const double e_anneal = determinantal_energy(model, cfg);

    f = polish(tgt, carrier, x, f, opt.polish_max_iter);
    f = exchange(tgt, carrier, eng, x, f, opt);
    f = polish(tgt, carrier, x, f, opt.polish_max_iter);

    if (f < best.hamiltonian) {
      best.hamiltonian = f;
      tgt.space.fill_config(x, best.config);
      best.energy = determinantal_energy(model, best.config);
      best.energy_after_anneal = e_anneal;
    }
  }
  if (!std::isfinite(best.hamiltonian))
    throw std::runtime_error("fekete_search: search-failure, all restarts singular");
  return best;
}

}  // namespace feklab
