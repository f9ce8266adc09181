#include "feklab/tropical.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <random>
#include <stdexcept>
#include <thread>

#include <Eigen/Sparse>

#include "json.hpp"

#include "feklab/assignment.hpp"
#include "feklab/common.hpp"
#include "feklab/rng.hpp"

namespace feklab {

namespace {

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew monotone chain; returns the hull in counter-clockwise order with
// strictly convex turns (collinear vertices dropped).
std::vector<Eigen::Vector2d> convex_hull2(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
    return p.x() < q.x() || (p.x() == q.x() && p.y() < q.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
                          return p.x() == q.x() && p.y() == q.y();
                        }),
            pts.end());
  const int m = static_cast<int>(pts.size());
  if (m < 3) throw std::invalid_argument("convex body: fewer than 3 distinct planar vertices");
  std::vector<Eigen::Vector2d> hull(2 * m);
  int h = 0;
  for (int i = 0; i < m; ++i) {
    while (h >= 2 && cross2(hull[h - 2], hull[h - 1], pts[i]) <= 0.0) --h;
    hull[h++] = pts[i];
  }
  const int lower = h + 1;
  for (int i = m - 2; i >= 0; --i) {
    while (h >= lower && cross2(hull[h - 2], hull[h - 1], pts[i]) <= 0.0) --h;
    hull[h++] = pts[i];
  }
  hull.resize(h - 1);
  return hull;
}

double vertex_scale(const std::vector<Eigen::VectorXd>& verts) {
  double s = 1.0;
  for (const auto& v : verts) s = std::max(s, v.lpNorm<Eigen::Infinity>());
  return s;
}

}  // namespace

ConvexBody::ConvexBody(int n, std::vector<Eigen::VectorXd> vertices) : n_(n), verts_(std::move(vertices)) {
  if (n_ < 1) throw std::invalid_argument("convex body: dimension must be >= 1");
  if (verts_.empty()) throw std::invalid_argument("convex body: vertex list is empty");
  for (const auto& v : verts_)
    if (v.size() != n_) throw std::invalid_argument("convex body: vertex dimension mismatch");

  // Full-dimensionality of the hull: the affine span of the vertices must be
  // all of R^n.
  {
    Eigen::MatrixXd diffs(n_, static_cast<int>(verts_.size()) - 1);
    for (int i = 1; i < static_cast<int>(verts_.size()); ++i) diffs.col(i - 1) = verts_[i] - verts_[0];
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(diffs);
    qr.setThreshold(1e-10);
    if (diffs.cols() < n_ || qr.rank() < n_)
      throw std::invalid_argument("convex body: vertex hull is not full-dimensional");
  }

  const double scale = vertex_scale(verts_);
  if (n_ == 1) {
    double a = verts_[0](0), b = verts_[0](0);
    for (const auto& v : verts_) {
      a = std::min(a, v(0));
      b = std::max(b, v(0));
    }
    barycenter_ = Eigen::VectorXd::Constant(1, 0.5 * (a + b));
    volume_ = b - a;
    origin_interior_ = (a < 0.0 && b > 0.0);
  } else if (n_ == 2) {
    std::vector<Eigen::Vector2d> pts(verts_.size());
    for (std::size_t i = 0; i < verts_.size(); ++i) pts[i] = verts_[i].head<2>();
    hull_ = convex_hull2(pts);
    const int m = static_cast<int>(hull_.size());
    // Shoelace area and area centroid of the CCW hull polygon.
    double area2 = 0.0, cx = 0.0, cy = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto& p = hull_[i];
      const auto& q = hull_[(i + 1) % m];
      const double cr = p.x() * q.y() - q.x() * p.y();
      area2 += cr;
      cx += (p.x() + q.x()) * cr;
      cy += (p.y() + q.y()) * cr;
    }
    volume_ = 0.5 * area2;
    barycenter_ = Eigen::Vector2d(cx / (3.0 * area2), cy / (3.0 * area2));
    edge_normal_.resize(m);
    edge_offset_.resize(m);
    bool inside = true;
    for (int i = 0; i < m; ++i) {
      const Eigen::Vector2d e = hull_[(i + 1) % m] - hull_[i];
      Eigen::Vector2d nrm(e.y(), -e.x());  // outward for a CCW polygon
      nrm.normalize();
      edge_normal_[i] = nrm;
      edge_offset_[i] = nrm.dot(hull_[i]);
      if (edge_offset_[i] <= 1e-12 * scale) inside = false;  // 0 . n <= offset with margin
    }
    origin_interior_ = inside;
  } else {
    // n >= 3: the volume centroid of a general vertex polytope needs hull
    // machinery with no consumer here; accept centrally symmetric vertex sets
    // only, where the centroid is the symmetry center.
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n_);
    for (const auto& v : verts_) m += v;
    m /= static_cast<double>(verts_.size());
    for (const auto& v : verts_) {
      const Eigen::VectorXd mirror = 2.0 * m - v;
      bool found = false;
      for (const auto& w : verts_)
        if ((w - mirror).lpNorm<Eigen::Infinity>() <= 1e-9 * scale) {
          found = true;
          break;
        }
      if (!found)
        throw std::invalid_argument(
            "convex body: for n >= 3 only centrally symmetric vertex sets are supported");
    }
    barycenter_ = m;
    volume_ = std::numeric_limits<double>::quiet_NaN();
    // A full-dimensional symmetric body contains its center in the interior.
    origin_interior_ = (m.lpNorm<Eigen::Infinity>() <= 1e-14);
  }
}

ConvexBody ConvexBody::interval(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("convex body: interval needs a < b");
  std::vector<Eigen::VectorXd> v(2, Eigen::VectorXd(1));
  v[0](0) = a;
  v[1](0) = b;
  return ConvexBody(1, std::move(v));
}

ConvexBody ConvexBody::box(int n, double half_width) {
  if (n < 1 || n > 16) throw std::invalid_argument("convex body: box dimension out of range");
  if (!(half_width > 0.0)) throw std::invalid_argument("convex body: box needs half_width > 0");
  std::vector<Eigen::VectorXd> v;
  for (int mask = 0; mask < (1 << n); ++mask) {
    Eigen::VectorXd p(n);
    for (int c = 0; c < n; ++c) p(c) = (mask >> c) & 1 ? half_width : -half_width;
    v.push_back(std::move(p));
  }
  return ConvexBody(n, std::move(v));
}

ConvexBody ConvexBody::simplex(int n) {
  if (n < 1) throw std::invalid_argument("convex body: simplex dimension must be >= 1");
  std::vector<Eigen::VectorXd> v;
  v.push_back(Eigen::VectorXd::Zero(n));
  for (int c = 0; c < n; ++c) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    p(c) = 1.0;
    v.push_back(std::move(p));
  }
  return ConvexBody(n, std::move(v));
}

ConvexBody ConvexBody::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("convex body: bad JSON: ") + e.what());
  }
  if (!j.contains("n") || !j.contains("vertices"))
    throw std::invalid_argument("convex body: JSON needs fields 'n' and 'vertices'");
  const int n = j.at("n").get<int>();
  std::vector<Eigen::VectorXd> verts;
  for (const auto& row : j.at("vertices")) {
    Eigen::VectorXd v(n);
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("convex body: vertex row length mismatch");
    for (int c = 0; c < n; ++c) v(c) = row.at(c).get<double>();
    verts.push_back(std::move(v));
  }
  return ConvexBody(n, std::move(verts));
}

double ConvexBody::support(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != n_) throw std::invalid_argument("convex body: support direction dimension mismatch");
  double best = -kInf;
  for (const auto& v : verts_) best = std::max(best, v.dot(x));
  return best;
}

double ConvexBody::support1(double x) const {
  if (n_ != 1) throw std::invalid_argument("convex body: support1 needs a 1D body");
  double best = -kInf;
  for (const auto& v : verts_) best = std::max(best, v(0) * x);
  return best;
}

bool ConvexBody::contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tol) const {
  if (x.size() != n_) throw std::invalid_argument("convex body: membership dimension mismatch");
  if (n_ == 1) return x(0) >= interval_min() - tol && x(0) <= interval_max() + tol;
  if (n_ == 2) {
    for (std::size_t e = 0; e < edge_normal_.size(); ++e)
      if (edge_normal_[e].dot(x.head<2>()) > edge_offset_[e] + tol) return false;
    return true;
  }
  throw std::logic_error("convex body: membership test implemented for n <= 2 only");
}

ConvexBody ConvexBody::scaled(double lambda) const {
  if (!(lambda > 0.0)) throw std::invalid_argument("convex body: scale factor must be positive");
  std::vector<Eigen::VectorXd> v = verts_;
  for (auto& p : v) p *= lambda;
  return ConvexBody(n_, std::move(v));
}

double ConvexBody::interval_min() const {
  if (n_ != 1) throw std::invalid_argument("convex body: interval accessor on a non-interval body");
  double a = verts_[0](0);
  for (const auto& v : verts_) a = std::min(a, v(0));
  return a;
}

double ConvexBody::interval_max() const {
  if (n_ != 1) throw std::invalid_argument("convex body: interval accessor on a non-interval body");
  double b = verts_[0](0);
  for (const auto& v : verts_) b = std::max(b, v(0));
  return b;
}

std::string ConvexBody::describe() const {
  if (n_ == 1)
    return "interval[" + format_double(interval_min()) + "," + format_double(interval_max()) + "]";
  return "body(n=" + std::to_string(n_) + ", " + std::to_string(verts_.size()) + " vertices)";
}

double r_invariant(const ConvexBody& body) {
  if (!body.origin_interior())
    throw std::invalid_argument("r_invariant: the origin must lie in the interior of the body");
  const Eigen::VectorXd b = body.barycenter();
  if (b.norm() < 1e-14) return 1.0;
  // The ray from the barycenter through the origin is t -> (1 - t) b, t >= 0;
  // the origin sits at t = 1.  Bracket the boundary crossing and bisect the
  // membership predicate.
  auto inside = [&](double t) { return body.contains((1.0 - t) * b, 0.0); };
  double lo = 1.0, hi = 2.0;
  while (inside(hi)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw std::runtime_error("r_invariant: body appears unbounded along the ray");
  }
  for (int it = 0; it < 200 && (hi - lo) > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (inside(mid) ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  // q = (1 - t) b, so |q| = (t - 1)|b| and |q - b| = t |b|.
  return (t - 1.0) / t;
}

LatticeCloud lattice_cloud(const ConvexBody& body, int k) {
  if (k < 1) throw std::invalid_argument("lattice_cloud: k must be >= 1");
  const int n = body.dimension();
  if (n > 2)
    throw std::invalid_argument("lattice_cloud: enumeration implemented for n <= 2 (no consumer above)");
  LatticeCloud cloud;
  cloud.n = n;
  cloud.k = k;
  // Coordinate bounds from the support function.
  std::vector<long> jlo(n), jhi(n);
  double scan = 1.0;
  for (int c = 0; c < n; ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e(c) = 1.0;
    const double hi = body.support(e);
    e(c) = -1.0;
    const double lo = -body.support(e);
    jlo[c] = static_cast<long>(std::ceil(k * lo - 1e-9));
    jhi[c] = static_cast<long>(std::floor(k * hi + 1e-9));
    scan *= static_cast<double>(std::max<long>(0, jhi[c] - jlo[c] + 1));
  }
  if (scan > 4e6) throw std::invalid_argument("lattice_cloud: cloud would exceed 10^6 points");
  Eigen::VectorXd x(n);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  if (n == 1) {
    for (long j = jlo[0]; j <= jhi[0]; ++j) {
      x(0) = static_cast<double>(j) / k;
      if (body.contains(x, 1e-12)) {
        cloud.points.push_back(x);
        mean += x;
      }
    }
  } else {
    for (long j0 = jlo[0]; j0 <= jhi[0]; ++j0)
      for (long j1 = jlo[1]; j1 <= jhi[1]; ++j1) {
        x(0) = static_cast<double>(j0) / k;
        x(1) = static_cast<double>(j1) / k;
        if (body.contains(x, 1e-12)) {
          cloud.points.push_back(x);
          mean += x;
        }
      }
  }
  if (cloud.points.empty()) throw std::invalid_argument("lattice_cloud: empty intersection");
  if (cloud.points.size() > 1000000u)
    throw std::invalid_argument("lattice_cloud: cloud would exceed 10^6 points");
  cloud.mean = mean / static_cast<double>(cloud.points.size());
  return cloud;
}

namespace {

// Unnormalized optimal assignment value A(x) = max_sigma sum_i x_i . p_sigma(i)
// for the columns of x against the cloud points.
double assignment_total(const Eigen::MatrixXd& x, const std::vector<Eigen::VectorXd>& p,
                        Eigen::MatrixXd& cost_scratch) {
  const int N = static_cast<int>(p.size());
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) cost_scratch(i, j) = -x.col(i).dot(p[j]);
  return -solve_assignment(cost_scratch).cost;
}

}  // namespace

TropicalEnergy e_trop(const std::vector<Eigen::VectorXd>& x, const LatticeCloud& cloud) {
  const int N = cloud.count();
  if (static_cast<int>(x.size()) != N)
    throw std::invalid_argument("e_trop: site count must equal the cloud size");
  for (const auto& xi : x)
    if (xi.size() != cloud.n) throw std::invalid_argument("e_trop: site dimension mismatch");

  Eigen::MatrixXd cost(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) cost(i, j) = -x[i].dot(cloud.points[j]);
  const AssignmentResult base = solve_assignment(cost);
  const double scale = 1.0 + cost.cwiseAbs().maxCoeff();
  std::vector<int> sigma = lex_smallest_optimal(cost, base, 1e-9 * scale);
  // Guard against tolerance misclassification: the lex choice must not be
  // worse than the certified matching beyond roundoff.
  double lex_cost = 0.0;
  for (int i = 0; i < N; ++i) lex_cost += cost(i, sigma[i]);
  if (lex_cost > base.cost + 1e-12 * scale * N) sigma = base.row_to_col;

  TropicalEnergy out;
  out.assignment = std::move(sigma);
  double total = 0.0;
  for (int i = 0; i < N; ++i) total += x[i].dot(cloud.points[out.assignment[i]]);
  out.value = total / N;
  return out;
}

TruncationDiagnostic tropical_z_diagnostic(const ConvexBody& body, int k, double beta,
                                           std::uint64_t seed, long samples_per_radius,
                                           std::vector<double> radii) {
  if (body.dimension() != 1)
    throw std::invalid_argument("tropical_z_diagnostic: implemented for 1D bodies");
  if (!body.origin_interior())
    throw std::invalid_argument("tropical_z_diagnostic: the origin must be interior");
  if (!(beta < 0.0))
    throw std::invalid_argument(
        "tropical_z_diagnostic: the partition function is finite for beta >= 0; the diagnostic "
        "targets the negative-temperature regime");
  if (samples_per_radius < 100)
    throw std::invalid_argument("tropical_z_diagnostic: need at least 100 samples per radius");
  if (radii.size() < 2) throw std::invalid_argument("tropical_z_diagnostic: need at least 2 radii");
  for (std::size_t t = 0; t < radii.size(); ++t)
    if (!(radii[t] > 0.0) || (t > 0 && !(radii[t] > radii[t - 1])))
      throw std::invalid_argument("tropical_z_diagnostic: radii must be positive and increasing");

  const LatticeCloud cloud = lattice_cloud(body, k);
  const int N = cloud.count();
  const double a = body.interval_min(), b = body.interval_max();
  const double pbar = cloud.mean(0);
  // Per-coordinate proposal exp(beta*pbar*x - (1+beta)*phi_P(x)) with
  // phi_P(x) = a x for x < 0 and b x for x > 0; piecewise-exponential rates.
  const double alpha_m = beta * pbar - (1.0 + beta) * a;  // left piece e^{alpha_m x}
  const double alpha_p = beta * pbar - (1.0 + beta) * b;  // right piece e^{alpha_p x}

  TruncationDiagnostic diag;
  diag.radii = radii;
  diag.samples_per_radius = samples_per_radius;

  Eigen::MatrixXd x(1, N), cost(N, N);
  for (double R : radii) {
    const double im = std::abs(alpha_m) < 1e-13 ? R : -std::expm1(-alpha_m * R) / alpha_m;
    const double ip = std::abs(alpha_p) < 1e-13 ? R : std::expm1(alpha_p * R) / alpha_p;
    const double z1 = im + ip;
    const double pi_m = im / z1;
    // Same substream for every radius: common random numbers couple the
    // estimates, so the ratios are far more stable than the levels.
    auto eng = make_engine(seed, 0x7a0bULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    KahanSum acc;
    for (long m = 0; m < samples_per_radius; ++m) {
      double s = 0.0;
      for (int i = 0; i < N; ++i) {
        const double u = unif(eng);
        double xi;
        if (u < pi_m) {
          const double uu = u / pi_m;
          xi = std::abs(alpha_m) < 1e-13
                   ? -R + uu * R
                   : std::log(std::exp(-alpha_m * R) + uu * (-std::expm1(-alpha_m * R))) / alpha_m;
        } else {
          const double uu = (u - pi_m) / (1.0 - pi_m);
          xi = std::abs(alpha_p) < 1e-13 ? uu * R : std::log1p(uu * std::expm1(alpha_p * R)) / alpha_p;
        }
        x(0, i) = xi;
        s += xi;
      }
      const double big_a = assignment_total(x, cloud.points, cost);
      const double arg = beta * (big_a - pbar * s);
      if (arg > 1e-6)
        throw std::logic_error("tropical_z_diagnostic: product bound violated (solver defect)");
      acc.add(std::exp(std::min(arg, 0.0)));
    }
    const double mean_w = acc.value() / static_cast<double>(samples_per_radius);
    diag.log_mass.push_back(N * std::log(z1) + std::log(mean_w));
  }
  for (std::size_t t = 0; t + 1 < diag.log_mass.size(); ++t)
    diag.ratio.push_back(std::exp(diag.log_mass[t + 1] - diag.log_mass[t]));
  diag.divergent = !diag.ratio.empty() &&
                   std::all_of(diag.ratio.begin(), diag.ratio.end(), [](double r) { return r > 1.2; });
  return diag;
}

TropicalGibbsResult tropical_gibbs(const ConvexBody& body, int k, double beta, long sweeps,
                                   int chains, std::uint64_t seed, const TropicalGibbsOptions& opt) {
  if (sweeps < 10) throw std::invalid_argument("tropical_gibbs: need at least 10 sweeps");
  if (chains < 1) throw std::invalid_argument("tropical_gibbs: need at least one chain");
  if (opt.workers < 1) throw std::invalid_argument("tropical_gibbs: workers must be >= 1");
  if (!(opt.burn_in_frac >= 0.0 && opt.burn_in_frac < 1.0))
    throw std::invalid_argument("tropical_gibbs: burn_in_frac must lie in [0, 1)");
  if (!body.origin_interior())
    throw std::invalid_argument("tropical_gibbs: the origin must lie in the interior of the body");

  const LatticeCloud cloud = lattice_cloud(body, k);
  const int n = cloud.n;
  const int N = cloud.count();
  if (N > 300)
    throw std::invalid_argument("tropical_gibbs: cloud larger than 300 points (assignment per sweep)");

  TropicalGibbsResult result;
  result.r_p = r_invariant(body);

  if (!(beta > -result.r_p)) {
    // Z is infinite at and below the critical inverse temperature; refuse to
    // sample and hand back the divergence evidence instead.
    if (body.dimension() != 1)
      throw std::invalid_argument(
          "tropical_gibbs: beta at or below -R_P and the divergence diagnostic is 1D-only");
    if (opt.weight)
      throw std::invalid_argument(
          "tropical_gibbs: beta at or below -R_P; the diagnostic uses the default weight");
    result.diagnostic = tropical_z_diagnostic(body, k, beta, seed, 50000);
    return result;
  }

  const long burn_in = static_cast<long>(opt.burn_in_frac * sweeps);
  const long thin = opt.thin > 0 ? opt.thin : std::max<long>(1, sweeps / 10000);
  result.burn_in = burn_in;
  result.thin = thin;

  const double scale = vertex_scale(body.vertices());
  const double step0 = opt.init_step > 0 ? opt.init_step : 1.2 / std::sqrt(double(n) * N);

  std::vector<std::vector<SampleRecord>> per_chain(chains);
  result.stats.assign(chains, ChainStats{});

  auto run_one = [&](int chain) {
    auto eng = make_engine(seed, static_cast<std::uint64_t>(chain));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::MatrixXd x(n, N), xp(n, N), cost(N, N);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < n; ++c) x(c, i) = (1.0 + scale) * normal(eng);

    auto energy = [&](const Eigen::MatrixXd& y) {
      double phi_total = 0.0;
      for (int i = 0; i < N; ++i)
        phi_total += opt.weight ? opt.weight(Eigen::VectorXd(y.col(i))) : body.support(y.col(i));
      const double big_a = beta == 0.0 ? 0.0 : assignment_total(y, cloud.points, cost);
      return -beta * big_a + (1.0 + beta) * phi_total;
    };

    double T = energy(x);
    double step = step0;
    ChainStats st;
    st.chain = chain;
    st.used_mala = false;
    long adapt_count = 0;

    for (long sweep = 0; sweep < sweeps; ++sweep) {
      const bool in_burn = sweep < burn_in;
      for (int i = 0; i < N; ++i)
        for (int c = 0; c < n; ++c) xp(c, i) = x(c, i) + step * normal(eng);
      const double Tp = energy(xp);
      const bool accept = std::log(unif(eng)) < T - Tp;
      if (accept) {
        x.swap(xp);
        T = Tp;
      }
      if (in_burn) {
        ++st.burn_proposed;
        if (accept) ++st.burn_accepted;
        const double gamma = 1.0 / std::pow(10.0 + (adapt_count++), 0.66);
        step = std::clamp(step * std::exp(gamma * ((accept ? 1.0 : 0.0) - 0.234)), 1e-12, 1e6);
      } else {
        ++st.proposed;
        if (accept) ++st.accepted;
        if ((sweep - burn_in) % thin == 0) {
          SampleRecord rec;
          rec.chain = chain;
          rec.sweep = sweep;
          rec.config.n = n;
          rec.config.mode = ConfigMode::RealTropical;
          rec.config.pts.resize(static_cast<std::size_t>(n) * N);
          for (int i = 0; i < N; ++i)
            for (int c = 0; c < n; ++c) rec.config.pts[static_cast<std::size_t>(i) * n + c] = cplx(x(c, i), 0.0);
          per_chain[chain].push_back(std::move(rec));
        }
      }
    }
    st.step = step;
    result.stats[chain] = st;
  };

  const int workers = std::min(opt.workers, chains);
  if (workers == 1) {
    for (int c = 0; c < chains; ++c) run_one(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(chains);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int c = next.fetch_add(1); c < chains; c = next.fetch_add(1)) {
          try {
            run_one(c);
          } catch (...) {
            errors[c] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  long prop = 0, acc = 0;
  for (const auto& st : result.stats) {
    prop += st.proposed;
    acc += st.accepted;
  }
  result.acceptance = prop > 0 ? static_cast<double>(acc) / prop : 0.0;
  for (auto& v : per_chain)
    for (auto& rec : v) result.samples.push_back(std::move(rec));
  return result;
}

// ---------------------------------------------------------------------------
// 1D real Monge-Ampere boundary-value problem.

namespace {

double logcosh(double y) {
  const double ay = std::abs(y);
  return ay + std::log1p(std::exp(-2.0 * ay)) - std::log(2.0);
}

struct MaGrid {
  Eigen::VectorXd x, h;        // nodes and spacings
  Eigen::VectorXd cl, cc, cr;  // interior second-difference coefficients
  int m = 0;
};

MaGrid make_ma_grid(const Eigen::VectorXd& xg) {
  MaGrid g;
  g.m = static_cast<int>(xg.size());
  if (g.m < 5) throw std::invalid_argument("solve_real_ma_1d: grid needs at least 5 nodes");
  g.x = xg;
  g.h.resize(g.m - 1);
  for (int i = 0; i + 1 < g.m; ++i) {
    g.h(i) = xg(i + 1) - xg(i);
    if (!(g.h(i) > 0.0)) throw std::invalid_argument("solve_real_ma_1d: grid must be strictly increasing");
  }
  g.cl = Eigen::VectorXd::Zero(g.m);
  g.cc = Eigen::VectorXd::Zero(g.m);
  g.cr = Eigen::VectorXd::Zero(g.m);
  for (int i = 1; i + 1 < g.m; ++i) {
    const double hl = g.h(i - 1), hr = g.h(i);
    g.cl(i) = 2.0 / (hl * (hl + hr));
    g.cr(i) = 2.0 / (hr * (hl + hr));
    g.cc(i) = -(g.cl(i) + g.cr(i));
  }
  return g;
}

// Damped Newton on F(u) = 0 with a sparse Jacobian assembled by the callback.
// Returns false on stagnation (caller decides whether that is fatal).
bool newton_sparse(
    const MaGrid& g, Eigen::VectorXd& u,
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&,
                             std::vector<Eigen::Triplet<double>>*)>& assemble,
    double tol_abs, int max_iter, int* iters_out) {
  const int m = g.m;
  Eigen::VectorXd f(m), ftrial(m), utrial(m);
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::SparseMatrix<double> jac(m, m);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  // Evaluating the second difference of u costs ~eps * |cc| * |u| in
  // cancellation noise; the residual cannot be driven below that floor.
  const double ccmax = g.cc.cwiseAbs().maxCoeff();
  for (int it = 0; it < max_iter; ++it) {
    trips.clear();
    assemble(u, f, &trips);
    const double fmax = f.lpNorm<Eigen::Infinity>();
    const double floor_abs = 8.0 * std::numeric_limits<double>::epsilon() * ccmax *
                             (1.0 + u.cwiseAbs().maxCoeff());
    const double stop = std::max(tol_abs, floor_abs);
    if (iters_out) *iters_out = it;
    if (fmax < stop) return true;
    jac.setZero();
    jac.setFromTriplets(trips.begin(), trips.end());
    lu.compute(jac);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd delta = lu.solve(-f);
    if (!delta.allFinite()) return false;
    const double f2 = f.squaredNorm();
    double t = 1.0;
    bool moved = false;
    for (int halve = 0; halve < 40; ++halve) {
      utrial = u + t * delta;
      assemble(utrial, ftrial, nullptr);
      if (ftrial.allFinite() && ftrial.squaredNorm() < (1.0 - 1e-4 * t) * f2) {
        u = utrial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    // Stagnation just above the roundoff floor is convergence, not failure.
    if (!moved) return fmax < 10.0 * stop;
  }
  return false;
}

}  // namespace

RealMaSolution solve_real_ma_1d(const ConvexBody& body, double beta, const Eigen::VectorXd& x_grid,
                                const RealMaOptions& opt) {
  if (body.dimension() != 1)
    throw std::invalid_argument("solve_real_ma_1d: implemented for interval bodies (n = 1)");
  if (!body.origin_interior())
    throw std::invalid_argument("solve_real_ma_1d: the origin must lie in the interior of the body");
  const double a = body.interval_min(), b = body.interval_max();
  const double r_p = r_invariant(body);
  const bool ke_case = std::abs(beta + 1.0) < 1e-12 && std::abs(a + b) < 1e-12 * (b - a);
  if (beta < -r_p - 1e-12 || (!ke_case && beta <= -r_p + 1e-12))
    throw std::invalid_argument(
        "solve_real_ma_1d: beta at or below the critical inverse temperature -R_P (only the "
        "symmetric beta = -1 pair is solvable there)");

  MaGrid g = make_ma_grid(x_grid);
  const int m = g.m;
  auto phi = [&](double x) { return opt.weight ? opt.weight(x) : body.support1(x); };
  Eigen::VectorXd phiv(m);
  for (int i = 0; i < m; ++i) phiv(i) = phi(g.x(i));

  // The grid must reach into the decay region of the base density e^{-phi}.
  {
    double mx = -kInf;
    for (int i = 0; i < m; ++i) mx = std::max(mx, -phiv(i));
    if (std::exp(-phiv(0) - mx) > 1e-7 || std::exp(-phiv(m - 1) - mx) > 1e-7)
      throw std::invalid_argument("solve_real_ma_1d: grid does not cover the transition region");
  }

  RealMaSolution sol;
  sol.beta = beta;
  sol.x = g.x;

  Eigen::VectorXd u(m);

  auto finish = [&](double c_constant, const std::function<double(int, const Eigen::VectorXd&)>& rhs,
                    int iters, std::vector<double> stages) {
    sol.c_constant = c_constant;
    sol.newton_iters = iters;
    sol.stages = std::move(stages);
    sol.u = u;
    sol.du.resize(m);
    for (int i = 1; i + 1 < m; ++i) {
      const double dl = (u(i) - u(i - 1)) / g.h(i - 1);
      const double dr = (u(i + 1) - u(i)) / g.h(i);
      sol.du(i) = (g.h(i - 1) * dr + g.h(i) * dl) / (g.h(i - 1) + g.h(i));
    }
    sol.du(0) = (u(1) - u(0)) / g.h(0);
    sol.du(m - 1) = (u(m - 1) - u(m - 2)) / g.h(m - 2);
    sol.bc_residual = std::max(std::abs(sol.du(0) - a), std::abs(b - sol.du(m - 1)));
    double res = 0.0;
    for (int i = 1; i + 1 < m; ++i) {
      const double d2 = g.cl(i) * u(i - 1) + g.cc(i) * u(i) + g.cr(i) * u(i + 1);
      res = std::max(res, std::abs(d2 - rhs(i, u)));
    }
    sol.residual = res;
    // Convexity guard on the reported derivative, with slack for the roundoff
    // floor of first differences (eps * |u| / h).
    {
      const double umax = u.cwiseAbs().maxCoeff();
      const double hmin = g.h.minCoeff();
      const double slack = std::max(1e-12, 256.0 * std::numeric_limits<double>::epsilon() * umax / hmin);
      for (int i = 0; i + 1 < m; ++i)
        if (sol.du(i + 1) < sol.du(i) - slack)
          throw std::logic_error("solve_real_ma_1d: output derivative lost monotonicity");
    }
    if (sol.bc_residual > 1e-6)
      throw std::runtime_error(
          "solve_real_ma_1d: solver-failure, second boundary condition missed by more than 1e-6 "
          "(extend the grid)");
    return sol;
  };

  if (std::abs(beta) < 1e-15) {
    // Explicit-constant path: u'' = C e^{-phi}, C = (b - a) / int e^{-phi}.
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w(i) = std::exp(-phiv(i));
    double mass = 0.0;
    for (int i = 0; i + 1 < m; ++i) mass += 0.5 * (w(i) + w(i + 1)) * g.h(i);
    const double c0 = (b - a) / mass;
    Eigen::VectorXd du(m);
    du(0) = a;
    double cum = 0.0;
    for (int i = 1; i < m; ++i) {
      cum += 0.5 * (w(i - 1) + w(i)) * g.h(i - 1);
      du(i) = a + c0 * cum;
    }
    u(0) = 0.0;
    for (int i = 1; i < m; ++i) u(i) = u(i - 1) + 0.5 * (du(i - 1) + du(i)) * g.h(i - 1);
    return finish(c0, [&](int i, const Eigen::VectorXd&) { return c0 * w(i); }, 0, {0.0});
  }

  if (ke_case) {
    // beta = -1 with a symmetric body: the weight cancels and u'' = e^{-u}.
    // The translation gauge is u'(x_m) = 0 at the grid node nearest the
    // minimizer of the weight; that row replaces the left Neumann condition,
    // so every interior equation stays enforced and the left slope emerges.
    int m_idx = 0;
    for (int i = 1; i < m; ++i)
      if (phiv(i) < phiv(m_idx)) m_idx = i;
    m_idx = std::clamp(m_idx, 1, m - 2);
    const double xm = g.x(m_idx);
    for (int i = 0; i < m; ++i)
      u(i) = 2.0 * logcosh(0.5 * b * (g.x(i) - xm)) - std::log(0.5 * b * b);

    const double gauge_den = g.x(m_idx + 1) - g.x(m_idx - 1);
    auto assemble = [&](const Eigen::VectorXd& uu, Eigen::VectorXd& f,
                        std::vector<Eigen::Triplet<double>>* trips) {
      f(0) = (uu(m_idx + 1) - uu(m_idx - 1)) / gauge_den;
      if (trips) {
        trips->emplace_back(0, m_idx - 1, -1.0 / gauge_den);
        trips->emplace_back(0, m_idx + 1, 1.0 / gauge_den);
      }
      for (int i = 1; i + 1 < m; ++i) {
        const double e = std::exp(std::min(-uu(i), 120.0));
        f(i) = g.cl(i) * uu(i - 1) + g.cc(i) * uu(i) + g.cr(i) * uu(i + 1) - e;
        if (trips) {
          trips->emplace_back(i, i - 1, g.cl(i));
          trips->emplace_back(i, i, g.cc(i) + e);
          trips->emplace_back(i, i + 1, g.cr(i));
        }
      }
      f(m - 1) = (uu(m - 1) - uu(m - 2)) / g.h(m - 2) - b;
      if (trips) {
        trips->emplace_back(m - 1, m - 2, -1.0 / g.h(m - 2));
        trips->emplace_back(m - 1, m - 1, 1.0 / g.h(m - 2));
      }
    };
    int iters = 0;
    if (!newton_sparse(g, u, assemble, opt.newton_tol * std::max(1.0, 0.5 * b * b), opt.max_newton,
                       &iters))
      throw std::runtime_error("solve_real_ma_1d: solver-failure in the beta = -1 Newton iteration");
    return finish(1.0,
                  [](int i, const Eigen::VectorXd& uu) {
                    (void)i;
                    return std::exp(-uu(i));
                  },
                  iters, {beta});
  }

  // General beta: continuation from the explicit beta = 0 solution, with the
  // normalization absorbed into the additive level of u at each stage.
  {
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w(i) = std::exp(-phiv(i));
    double mass = 0.0;
    for (int i = 0; i + 1 < m; ++i) mass += 0.5 * (w(i) + w(i + 1)) * g.h(i);
    const double c0 = (b - a) / mass;
    Eigen::VectorXd du(m);
    du(0) = a;
    double cum = 0.0;
    for (int i = 1; i < m; ++i) {
      cum += 0.5 * (w(i - 1) + w(i)) * g.h(i - 1);
      du(i) = a + c0 * cum;
    }
    u(0) = 0.0;
    for (int i = 1; i < m; ++i) u(i) = u(i - 1) + 0.5 * (du(i - 1) + du(i)) * g.h(i - 1);
  }

  std::vector<double> stages{0.0};
  double cur = 0.0;
  double delta = (beta > 0 ? 1.0 : -1.0) * std::min(0.5, std::abs(beta));
  int total_iters = 0;
  Eigen::VectorXd u_stage = u;
  while (cur != beta) {
    double next = cur + delta;
    if ((beta > 0 && next > beta) || (beta < 0 && next < beta)) next = beta;

    // Level shift so the stage starts mass-consistent:
    // int exp(bs (u+s) - (1+bs) phi) = b - a  fixes  s.
    Eigen::VectorXd arg(m);
    for (int i = 0; i < m; ++i) arg(i) = next * u(i) - (1.0 + next) * phiv(i);
    const double amax = arg.maxCoeff();
    double integral = 0.0;
    for (int i = 0; i + 1 < m; ++i)
      integral += 0.5 * (std::exp(arg(i) - amax) + std::exp(arg(i + 1) - amax)) * g.h(i);
    const double shift = (std::log(b - a) - (amax + std::log(integral))) / next;
    u_stage = u.array() + shift;

    auto assemble = [&](const Eigen::VectorXd& uu, Eigen::VectorXd& f,
                        std::vector<Eigen::Triplet<double>>* trips) {
      f(0) = (uu(1) - uu(0)) / g.h(0) - a;
      if (trips) {
        trips->emplace_back(0, 0, -1.0 / g.h(0));
        trips->emplace_back(0, 1, 1.0 / g.h(0));
      }
      for (int i = 1; i + 1 < m; ++i) {
        const double e = std::exp(std::min(next * uu(i) - (1.0 + next) * phiv(i), 120.0));
        f(i) = g.cl(i) * uu(i - 1) + g.cc(i) * uu(i) + g.cr(i) * uu(i + 1) - e;
        if (trips) {
          trips->emplace_back(i, i - 1, g.cl(i));
          trips->emplace_back(i, i, g.cc(i) - next * e);
          trips->emplace_back(i, i + 1, g.cr(i));
        }
      }
      f(m - 1) = (uu(m - 1) - uu(m - 2)) / g.h(m - 2) - b;
      if (trips) {
        trips->emplace_back(m - 1, m - 2, -1.0 / g.h(m - 2));
        trips->emplace_back(m - 1, m - 1, 1.0 / g.h(m - 2));
      }
    };

    double emax = 0.0;
    for (int i = 0; i < m; ++i)
      emax = std::max(emax, std::exp(std::min(next * u_stage(i) - (1.0 + next) * phiv(i), 120.0)));
    int iters = 0;
    if (newton_sparse(g, u_stage, assemble, opt.newton_tol * std::max(1.0, emax), opt.max_newton,
                      &iters)) {
      u = u_stage;
      cur = next;
      stages.push_back(cur);
      total_iters += iters;
      delta *= 1.5;
      if ((beta > 0 && cur + delta > beta) || (beta < 0 && cur + delta < beta)) delta = beta - cur;
    } else {
      delta *= 0.5;
      if (std::abs(delta) < 1e-4 * (1.0 + std::abs(beta)))
        throw std::runtime_error("solve_real_ma_1d: solver-failure, continuation stalled");
    }
  }

  const double bfin = beta;
  return finish(1.0,
                [&, bfin](int i, const Eigen::VectorXd& uu) {
                  return std::exp(std::min(bfin * uu(i) - (1.0 + bfin) * phiv(i), 120.0));
                },
                total_iters, stages);
}

}  // namespace feklab
