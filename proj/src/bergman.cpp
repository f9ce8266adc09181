#include "feklab/bergman.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "feklab/rng.hpp"

namespace feklab {

namespace {

// ---------------------------------------------------------------------------
// Quadrature.

// 16-point Gauss-Legendre rule on [-1, 1] via the Jacobi matrix.
struct GL16 {
  double x[16], w[16];
  GL16() {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(16, 16);
    for (int i = 1; i < 16; ++i) {
      const double b = i / std::sqrt(4.0 * i * i - 1.0);
      J(i, i - 1) = J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    for (int i = 0; i < 16; ++i) {
      x[i] = es.eigenvalues()(i);
      w[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
  }
};
const GL16& gl16() {
  static const GL16 rule;
  return rule;
}

double weight_at(const Weight& w, cplx z) {
  return w(&z, 1);
}

// Composite 16-point Gauss-Legendre nodes/weights on [lo, hi] with `panels`
// panels, appended to (xs, ws) with an extra caller-supplied density.
template <typename Density>
void composite_gl(double lo, double hi, int panels, Density dens, std::vector<double>& xs,
                  std::vector<double>& ws) {
  const GL16& g = gl16();
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double a = lo + p * h;
    for (int i = 0; i < 16; ++i) {
      const double x = a + 0.5 * h * (g.x[i] + 1.0);
      const double d = dens(x);
      if (d <= 0.0) continue;
      xs.push_back(x);
      ws.push_back(0.5 * h * g.w[i] * d);
    }
  }
}

// Largest radius past which the integrand r^{4k+2} e^{-k phi} (base density
// included) is below exp(-800) of its peak; throws when no such radius exists.
double planar_cut_radius(const Weight& w, const BaseMeasure& base, int k) {
  if (base.kind == BaseKind::UniformDisc) return base.R;
  double phi_min = kInf;
  std::vector<double> s(1201), decay(1201);
  for (int i = 0; i <= 1200; ++i) {
    s[i] = -30.0 + 60.0 * i / 1200.0;
    double d = k * w.radial_hat(s[i]);
    if (base.kind == BaseKind::Gaussian) d += std::exp(s[i]) / (base.sigma * base.sigma);
    decay[i] = d;
    if (std::isfinite(d)) phi_min = std::min(phi_min, d - (2.0 * k + 1.0) * std::max(0.0, s[i]));
  }
  if (!std::isfinite(phi_min))
    throw std::invalid_argument("build_quadrature: weight is +inf on the whole carrier");
  for (int i = 1200; i >= 0; --i) {
    const double margin = decay[i] - (2.0 * k + 1.0) * std::max(0.0, s[i]) - phi_min;
    if (!(margin > 800.0)) {
      if (i == 1200)
        throw std::invalid_argument(
            "build_quadrature: Gram integral does not converge on the unbounded carrier");
      return std::exp(0.5 * s[i + 1]);
    }
  }
  return std::exp(0.5 * s.front());
}

double line_cut_radius(const Weight& w, int k) {
  double phi_min = kInf;
  std::vector<double> xs(1201), phi(1201);
  for (int i = 0; i <= 1200; ++i) {
    xs[i] = std::exp(-15.0 + 30.0 * i / 1200.0);
    phi[i] = k * std::max(weight_at(w, {xs[i], 0.0}), weight_at(w, {-xs[i], 0.0}));
    if (std::isfinite(phi[i]))
      phi_min = std::min(phi_min, phi[i] - (4.0 * k + 2.0) * std::max(0.0, std::log(xs[i])));
  }
  if (!std::isfinite(phi_min))
    throw std::invalid_argument("build_quadrature: weight is +inf on the whole line");
  for (int i = 1200; i >= 0; --i) {
    const double margin = phi[i] - (4.0 * k + 2.0) * std::max(0.0, std::log(xs[i])) - phi_min;
    if (!(margin > 800.0)) {
      if (i == 1200)
        throw std::invalid_argument(
            "build_quadrature: Gram integral does not converge on the real line");
      return xs[i + 1];
    }
  }
  return xs.front();
}

// One concrete rule at a given resolution level.
QuadratureRule rule_at_level(const BaseMeasure& base, const Weight& w, int k, int level) {
  QuadratureRule q;
  switch (base.kind) {
    case BaseKind::Circle: {
      const int M = std::max(64, 2 * k + 2) << level;
      q.scheme = "circle-trapezoid";
      q.nodes.reserve(M);
      q.weights.assign(M, 1.0 / M);
      for (int m = 0; m < M; ++m) {
        const double th = 2.0 * kPi * m / M;
        q.nodes.push_back({std::cos(th), std::sin(th)});
      }
      return q;
    }
    case BaseKind::Arcsine: {
      const int M = std::max(64, 2 * k + 2) << level;
      q.scheme = "chebyshev-gauss";
      for (int m = 0; m < M; ++m) {
        q.nodes.push_back({std::cos(kPi * (2.0 * m + 1.0) / (2.0 * M)), 0.0});
        q.weights.push_back(1.0 / M);
      }
      return q;
    }
    case BaseKind::Interval: {
      const int panels = std::max(8, (k + 3) / 4) << level;
      q.scheme = "interval-composite-gl";
      std::vector<double> xs, ws;
      composite_gl(base.a, base.b, panels, [&](double) { return 1.0 / (base.b - base.a); },
                   xs, ws);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        q.nodes.push_back({xs[i], 0.0});
        q.weights.push_back(ws[i]);
      }
      return q;
    }
    case BaseKind::LebesgueR: {
      const double L = line_cut_radius(w, k);
      const int panels = std::max(16, k / 2) << level;
      q.scheme = "line-composite-gl";
      std::vector<double> xs, ws;
      composite_gl(-L, L, panels, [](double) { return 1.0; }, xs, ws);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        q.nodes.push_back({xs[i], 0.0});
        q.weights.push_back(ws[i]);
      }
      return q;
    }
    case BaseKind::Gaussian:
    case BaseKind::UniformDisc:
    case BaseKind::LebesgueC:
    case BaseKind::RadialDensityS: {
      const double r_cut = base.kind == BaseKind::RadialDensityS
                               ? std::exp(0.5 * base.s_grid.back())
                               : planar_cut_radius(w, base, k);
      const double r_lo =
          base.kind == BaseKind::RadialDensityS ? std::exp(0.5 * base.s_grid.front()) : 0.0;
      const int panels = std::max(16, k / 2) << level;
      const int M_ang = std::max(8, 2 * k + 4);
      q.scheme = "polar-composite-gl";
      auto radial_density = [&](double r) -> double {
        switch (base.kind) {
          case BaseKind::LebesgueC:
            return 2.0 * kPi * r;
          case BaseKind::Gaussian:
            return (2.0 * r / (base.sigma * base.sigma)) *
                   std::exp(-r * r / (base.sigma * base.sigma));
          case BaseKind::UniformDisc:
            return 2.0 * r / (base.R * base.R);
          case BaseKind::RadialDensityS: {
            // nu_r(dr) = w(s) ds with s = 2 log r
            const double s = 2.0 * std::log(r);
            const double lw = base.radial_log_w(s);
            return std::isfinite(lw) ? std::exp(lw) * 2.0 / r : 0.0;
          }
          default:
            return 0.0;
        }
      };
      std::vector<double> rs, ws;
      composite_gl(r_lo, r_cut, panels, radial_density, rs, ws);
      for (std::size_t i = 0; i < rs.size(); ++i)
        for (int a = 0; a < M_ang; ++a) {
          const double th = 2.0 * kPi * (a + 0.5) / M_ang;
          q.nodes.push_back({rs[i] * std::cos(th), rs[i] * std::sin(th)});
          q.weights.push_back(ws[i] / M_ang);
        }
      return q;
    }
  }
  throw std::logic_error("build_quadrature: unknown base measure kind");
}

// Moment fingerprint used by the node-doubling convergence test: weighted
// power sums determine every Gram entry for the supported measure classes.
std::vector<double> moment_fingerprint(const QuadratureRule& q, const Weight& w, int k,
                                       bool real_line) {
  const int top = real_line ? 2 * k : k;
  std::vector<KahanSum> acc(top + 1);
  for (std::size_t m = 0; m < q.nodes.size(); ++m) {
    const double phi = weight_at(w, q.nodes[m]);
    if (!std::isfinite(phi)) continue;
    const double base = q.weights[m] * std::exp(-static_cast<double>(k) * phi);
    if (base == 0.0) continue;
    const double t = real_line ? q.nodes[m].real() : std::norm(q.nodes[m]);
    double pw = base;
    for (int j = 0; j <= top; ++j) {
      acc[j].add(pw);
      pw *= t;
    }
  }
  std::vector<double> out(top + 1);
  for (int j = 0; j <= top; ++j) out[j] = acc[j].value();
  return out;
}

bool is_real_line_base(const BaseMeasure& b) {
  return b.kind == BaseKind::LebesgueR || b.kind == BaseKind::Interval ||
         b.kind == BaseKind::Arcsine;
}

}  // namespace

QuadratureRule build_quadrature(const BaseMeasure& base, const Weight& w, int k,
                                int min_nodes) {
  const bool real_line = is_real_line_base(base);
  QuadratureRule prev = rule_at_level(base, w, k, 0);
  std::vector<double> fp_prev = moment_fingerprint(prev, w, k, real_line);
  for (int level = 1; level <= 10; ++level) {
    QuadratureRule next = rule_at_level(base, w, k, level);
    std::vector<double> fp_next = moment_fingerprint(next, w, k, real_line);
    bool stable = true;
    for (std::size_t j = 0; j < fp_prev.size() && stable; ++j) {
      // Odd moments of symmetric measures vanish analytically; compare at the
      // Cauchy-Schwarz scale sqrt(m_2a m_2b) of the Gram entry they feed.
      double scale = std::max(std::abs(fp_prev[j]), std::abs(fp_next[j]));
      if (real_line) {
        const std::size_t a = 2 * (j / 2), b = 2 * ((j + 1) / 2);
        if (b < fp_next.size() && fp_next[a] > 0.0 && fp_next[b] > 0.0)
          scale = std::max(scale, std::sqrt(fp_next[a] * fp_next[b]));
      }
      if (std::abs(fp_prev[j] - fp_next[j]) > 1e-12 * scale + 1e-300) stable = false;
    }
    if (stable && static_cast<int>(next.nodes.size()) >= min_nodes) {
      next.doublings = level;
      return next;
    }
    prev = std::move(next);
    fp_prev = std::move(fp_next);
  }
  throw std::runtime_error("build_quadrature: Gram entries did not stabilize to 1e-12");
}

// ---------------------------------------------------------------------------
// Factorization paths.

namespace {

std::vector<double> weighted_masses(const QuadratureRule& q, const Weight& w, int k) {
  std::vector<double> om(q.nodes.size(), 0.0);
  for (std::size_t m = 0; m < q.nodes.size(); ++m) {
    const double phi = weight_at(w, q.nodes[m]);
    if (std::isfinite(phi)) om[m] = q.weights[m] * std::exp(-static_cast<double>(k) * phi);
  }
  return om;
}

void factor_diagonal(GramFactorization& g) {
  const int N = g.size();
  const auto om = weighted_masses(g.quad, g.weight, g.k);
  std::vector<KahanSum> diag(N);
  for (std::size_t m = 0; m < g.quad.nodes.size(); ++m) {
    if (om[m] == 0.0) continue;
    const double r2 = std::norm(g.quad.nodes[m]);
    double pw = om[m];
    for (int j = 0; j < N; ++j) {
      diag[j].add(pw);
      pw *= r2;
    }
  }
  g.log_diag.resize(N);
  double lo = kInf, hi = -kInf;
  for (int j = 0; j < N; ++j) {
    const double d = diag[j].value();
    if (!(d > 0.0) || !std::isfinite(d))
      throw std::runtime_error("gram_factorize: condition-refused, degenerate moment " +
                               std::to_string(j));
    g.log_diag[j] = std::log(d);
    lo = std::min(lo, g.log_diag[j]);
    hi = std::max(hi, g.log_diag[j]);
  }
  g.cond = std::exp(hi - lo);
  g.herm_err = 0.0;
  g.residual = 0.0;
  if (g.cond > 1e14)
    throw std::runtime_error("gram_factorize: condition-refused, estimate " +
                             format_double(g.cond));
}

void factor_recurrence(GramFactorization& g) {
  const int N = g.size();
  const auto om = weighted_masses(g.quad, g.weight, g.k);
  const int M = static_cast<int>(om.size());
  Eigen::VectorXd x(M), omega(M);
  for (int m = 0; m < M; ++m) {
    x(m) = g.quad.nodes[m].real();
    omega(m) = om[m];
  }
  const double mass = omega.sum();
  if (!(mass > 0.0))
    throw std::runtime_error("gram_factorize: condition-refused, measure numerically zero");

  // Lanczos with full reorthogonalization in the weighted node inner product;
  // column j of hess holds the expansion of x * pi_j over pi_0 .. pi_{j+1}.
  Eigen::MatrixXd Q(M, N);
  g.hess = Eigen::MatrixXd::Zero(N, N);
  g.pi0 = 1.0 / std::sqrt(mass);
  Q.col(0).setConstant(g.pi0);
  for (int j = 0; j + 1 < N; ++j) {
    Eigen::VectorXd t = x.cwiseProduct(Q.col(j));
    const double scale2 = t.cwiseProduct(omega).dot(t);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double c = Q.col(i).cwiseProduct(omega).dot(t);
        g.hess(i, j) += c;
        t -= c * Q.col(i);
      }
    const double b2 = t.cwiseProduct(omega).dot(t);
    if (!(b2 > 1e-28 * std::max(scale2, 1e-300)))
      throw std::runtime_error(
          "gram_factorize: condition-refused, recurrence breakdown at degree " +
          std::to_string(j + 1));
    g.hess(j + 1, j) = std::sqrt(b2);
    Q.col(j + 1) = t / g.hess(j + 1, j);
  }

  // Orthonormality audit doubles as the factorization residual.
  double worst = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = i; j < N; ++j) {
      const double v = Q.col(i).cwiseProduct(omega).dot(Q.col(j));
      worst = std::max(worst, std::abs(v - (i == j ? 1.0 : 0.0)));
    }
  g.residual = worst;
  g.herm_err = 0.0;
  g.cond = 1.0 + worst;
}

void factor_general(GramFactorization& g) {
  const int N = g.size();
  const auto om = weighted_masses(g.quad, g.weight, g.k);
  const int M = static_cast<int>(om.size());
  Eigen::MatrixXcd P(M, N);
  for (int m = 0; m < M; ++m) {
    const cplx z = g.quad.nodes[m];
    for (int j = 0; j < N; ++j) P(m, j) = g.basis.eval(j, &z);
  }
  if (g.recombine.size() > 0) P = P * g.recombine.transpose();
  Eigen::MatrixXcd G(N, N);
  // G_{ij} = int e_i conj(e_j) dmu, so that L^{-1} e is orthonormal.
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      cplx acc = 0.0;
      for (int m = 0; m < M; ++m)
        if (om[m] != 0.0) acc += om[m] * P(m, i) * std::conj(P(m, j));
      G(i, j) = acc;
    }
  const double gmax = G.cwiseAbs().maxCoeff();
  g.herm_err = (G - G.adjoint()).cwiseAbs().maxCoeff() / std::max(gmax, 1e-300);
  if (g.herm_err > 1e-12)
    throw std::runtime_error("gram_factorize: Gram is not Hermitian to tolerance");
  G = 0.5 * (G + Eigen::MatrixXcd(G.adjoint()));
  Eigen::LLT<Eigen::MatrixXcd> llt(G);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gram_factorize: condition-refused, Cholesky failed");
  g.G = G;
  g.L = llt.matrixL();
  double dlo = kInf, dhi = 0.0;
  for (int i = 0; i < N; ++i) {
    const double d = std::abs(g.L(i, i));
    dlo = std::min(dlo, d);
    dhi = std::max(dhi, d);
  }
  g.cond = (dhi / dlo) * (dhi / dlo);
  if (g.cond > 1e14)
    throw std::runtime_error("gram_factorize: condition-refused, estimate " +
                             format_double(g.cond));
  g.residual = (G - g.L * g.L.adjoint()).cwiseAbs().maxCoeff() / std::max(gmax, 1e-300);
  if (g.residual > 1e-10)
    throw std::runtime_error("gram_factorize: factorization residual too large");
}

double log_kernel_diag(const GramFactorization& g, cplx z) {
  if (g.path == GramPath::Diagonal) {
    if (std::norm(z) == 0.0) return -g.log_diag[0];  // only the constant term survives
    const double s = std::log(std::norm(z));
    double best = -kInf;
    const int N = g.size();
    for (int j = 0; j < N; ++j) best = std::max(best, j * s - g.log_diag[j]);
    KahanSum acc;
    for (int j = 0; j < N; ++j) acc.add(std::exp(j * s - g.log_diag[j] - best));
    return best + std::log(acc.value());
  }
  const Eigen::VectorXcd p = g.kernel_vector(z);
  return std::log(p.squaredNorm());
}

}  // namespace

Eigen::VectorXcd GramFactorization::kernel_vector(cplx z) const {
  const int N = size();
  Eigen::VectorXcd p(N);
  switch (path) {
    case GramPath::Diagonal: {
      cplx zp = 1.0;
      for (int j = 0; j < N; ++j) {
        p(j) = zp * std::exp(-0.5 * log_diag[j]);
        zp *= z;
      }
      return p;
    }
    case GramPath::Recurrence: {
      p(0) = pi0;
      for (int j = 0; j + 1 < N; ++j) {
        cplx t = z * p(j);
        for (int i = 0; i <= j; ++i) t -= hess(i, j) * p(i);
        p(j + 1) = t / hess(j + 1, j);
      }
      return p;
    }
    case GramPath::General: {
      Eigen::VectorXcd e(N);
      for (int j = 0; j < N; ++j) e(j) = basis.eval(j, &z);
      if (recombine.size() > 0) e = recombine * e;
      return L.triangularView<Eigen::Lower>().solve(e);
    }
  }
  throw std::logic_error("kernel_vector: unknown path");
}

double GramFactorization::kernel_diag(cplx z) const {
  if (path == GramPath::Diagonal) return std::exp(log_kernel_diag(*this, z));
  return kernel_vector(z).squaredNorm();
}

double GramFactorization::norm2(const Eigen::VectorXcd& c) const { return c.squaredNorm(); }

GramFactorization gram_factorize(const MultiIndexBasis& basis, const Weight& w,
                                 const BaseMeasure& base,
                                 const Eigen::MatrixXcd* recombination) {
  if (basis.n != 1)
    throw std::invalid_argument("gram_factorize: only one complex dimension is supported");
  GramFactorization g;
  g.basis = basis;
  g.weight = w;
  g.base = base;
  g.k = basis.k;
  g.quad = build_quadrature(base, w, basis.k);
  if (recombination != nullptr) {
    if (recombination->rows() != basis.size() || recombination->cols() != basis.size())
      throw std::invalid_argument("gram_factorize: recombination matrix has wrong shape");
    g.recombine = *recombination;
    g.path = GramPath::General;
    factor_general(g);
  } else if (is_real_line_base(base)) {
    g.path = GramPath::Recurrence;
    factor_recurrence(g);
  } else {
    g.path = GramPath::Diagonal;
    factor_diagonal(g);
  }
  return g;
}

ChristoffelValue christoffel(const GramFactorization& g, cplx z) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw std::invalid_argument("christoffel: point must be finite");
  const double logK = log_kernel_diag(g, z);
  const double phi = weight_at(g.weight, z);
  ChristoffelValue out;
  out.kernel_weighted = std::exp(logK - g.k * phi);
  out.psi = g.k > 0 ? logK / g.k : 0.0;
  return out;
}

double gram_trace(const GramFactorization& g) {
  const QuadratureRule fine =
      build_quadrature(g.base, g.weight, g.k, 2 * static_cast<int>(g.quad.nodes.size()));
  const auto om = weighted_masses(fine, g.weight, g.k);
  KahanSum acc;
  for (std::size_t m = 0; m < fine.nodes.size(); ++m) {
    if (om[m] == 0.0) continue;
    acc.add(om[m] * g.kernel_diag(fine.nodes[m]));
  }
  return acc.value();
}

// ---------------------------------------------------------------------------
// Exact projection-DPP sampling.

Configuration dpp_sample(const GramFactorization& g, std::uint64_t seed, DppStats* stats) {
  const int N = g.size();
  const int M = static_cast<int>(g.quad.nodes.size());
  std::mt19937_64 eng = make_engine(seed, 0xd99ULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Node cache for bound scans and kernel deflation.
  Eigen::MatrixXcd P(M, N);
  std::vector<double> expw(M);
  for (int m = 0; m < M; ++m) {
    P.row(m) = g.kernel_vector(g.quad.nodes[m]).transpose();
    const double phi = weight_at(g.weight, g.quad.nodes[m]);
    expw[m] = std::isfinite(phi) ? std::exp(-static_cast<double>(g.k) * phi) : 0.0;
  }
  Eigen::VectorXd R(M);  // residual kernel diagonal at the nodes
  for (int m = 0; m < M; ++m) R(m) = P.row(m).squaredNorm();

  // Proposal: the base measure itself when it is a sampleable probability,
  // otherwise a gaussian surrogate matched to the first-intensity spread.
  const bool base_proposal = g.base.is_probability();
  const bool real_line = is_real_line_base(g.base);
  double surrogate_sigma = 1.0;
  if (!base_proposal) {
    const auto om = weighted_masses(g.quad, g.weight, g.k);
    KahanSum m2, m0;
    for (int m = 0; m < M; ++m) {
      if (om[m] == 0.0) continue;
      m0.add(om[m] * R(m));
      m2.add(om[m] * R(m) * std::norm(g.quad.nodes[m]));
    }
    surrogate_sigma = std::sqrt(std::max(1e-12, 2.0 * m2.value() / m0.value()));
  }
  auto draw = [&]() -> cplx {
    if (base_proposal) return g.base.sample_point(eng);
    if (real_line) return {surrogate_sigma * normal(eng), 0.0};
    return {surrogate_sigma * normal(eng) / std::sqrt(2.0),
            surrogate_sigma * normal(eng) / std::sqrt(2.0)};
  };
  auto proposal_log_density = [&](cplx z) -> double {
    if (base_proposal) return 0.0;  // accept ratio is taken w.r.t. the base itself
    if (real_line) {
      const double x = z.real();
      return -0.5 * x * x / (surrogate_sigma * surrogate_sigma) -
             std::log(surrogate_sigma * std::sqrt(2.0 * kPi));
    }
    const double s2 = 0.5 * surrogate_sigma * surrogate_sigma;
    return -std::norm(z) / (2.0 * s2) - std::log(2.0 * kPi * s2);
  };

  DppStats st;
  Configuration cfg;
  cfg.n = 1;
  cfg.mode = real_line ? ConfigMode::RealLine : ConfigMode::Complex;
  std::vector<Eigen::VectorXcd> selected;  // orthonormal coefficient vectors

  for (int t = 0; t < N; ++t) {
    // Scanned bound for u(x) = R_t(x) e^{-k phi(x)} [/ q(x)].
    double bound = 0.0;
    for (int m = 0; m < M; ++m) {
      double u = std::max(0.0, R(m)) * expw[m];
      if (!base_proposal) u /= std::exp(proposal_log_density(g.quad.nodes[m]));
      bound = std::max(bound, u);
    }
    bound = std::max(bound * 2.0, 1e-300);

    long long trials_step = 0;
    for (;;) {
      if (++trials_step > 2000000)
        throw std::runtime_error(
            "dpp_sample: proposal-failure, rejection efficiency below 1e-6");
      ++st.trials;
      const cplx y = draw();
      const double phi = weight_at(g.weight, y);
      if (!std::isfinite(phi)) continue;
      const Eigen::VectorXcd p = g.kernel_vector(y);
      double resid = p.squaredNorm();
      Eigen::VectorXcd coef(static_cast<int>(selected.size()));
      for (std::size_t i = 0; i < selected.size(); ++i) {
        coef(static_cast<int>(i)) = selected[i].dot(p);  // conj(selected) . p
        resid -= std::norm(coef(static_cast<int>(i)));
      }
      resid = std::max(0.0, resid);
      double u = resid * std::exp(-static_cast<double>(g.k) * phi);
      if (!base_proposal) u /= std::exp(proposal_log_density(y));
      if (u > bound) {
        ++st.bound_violations;
        bound *= 4.0;
        continue;
      }
      if (unif(eng) * bound >= u) continue;
      // accept: orthonormalize the new direction and deflate the node cache
      Eigen::VectorXcd dir = p;
      for (std::size_t i = 0; i < selected.size(); ++i)
        dir -= coef(static_cast<int>(i)) * selected[i];
      const double nrm = dir.norm();
      if (!(nrm > 1e-12 * std::sqrt(p.squaredNorm()))) continue;  // numerically degenerate
      ++st.accepts;
      dir /= nrm;
      selected.push_back(dir);
      for (int m = 0; m < M; ++m) {
        const cplx c = dir.dot(P.row(m).transpose());
        R(m) = std::max(0.0, R(m) - std::norm(c));
      }
      cfg.pts.push_back(y);
      break;
    }
  }
  if (stats != nullptr) *stats = st;
  return cfg;
}

// ---------------------------------------------------------------------------

BmDiag bernstein_markov_diag(const Weight& w, const BaseMeasure& base,
                             const std::vector<int>& k_list,
                             const std::vector<cplx>& grid) {
  if (k_list.empty() || grid.empty())
    throw std::invalid_argument("bernstein_markov_diag: need at least one k and one point");
  BmDiag out;
  for (int k : k_list) {
    auto g = gram_factorize(MultiIndexBasis::make(1, k), w, base);
    double sup = 0.0;
    for (const cplx& z : grid) {
      const double phi = weight_at(w, z);
      if (!std::isfinite(phi)) continue;
      const double rho =
          std::exp(log_kernel_diag(g, z) - k * phi - std::log(static_cast<double>(g.size())));
      sup = std::max(sup, rho);
    }
    out.rows.push_back({k, sup});
  }
  // least-squares slope of log sup against k
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(out.rows.size());
  for (const auto& r : out.rows) {
    const double y = std::log(std::max(r.sup_rho, 1e-300));
    sx += r.k;
    sy += y;
    sxx += static_cast<double>(r.k) * r.k;
    sxy += r.k * y;
  }
  out.growth_exponent = n > 1 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
  return out;
}

}  // namespace feklab
