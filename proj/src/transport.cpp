#include "feklab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "feklab/assignment.hpp"
#include "feklab/common.hpp"

namespace feklab {

DiscreteMeasure::DiscreteMeasure(std::vector<Eigen::VectorXd> points, Eigen::VectorXd weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.empty()) throw std::invalid_argument("discrete measure: empty support");
  if (static_cast<int>(points_.size()) != weights_.size())
    throw std::invalid_argument("discrete measure: point/weight count mismatch");
  const int n = static_cast<int>(points_.front().size());
  if (n < 1) throw std::invalid_argument("discrete measure: zero-dimensional points");
  for (const auto& p : points_)
    if (static_cast<int>(p.size()) != n)
      throw std::invalid_argument("discrete measure: mixed point dimensions");
  double total = 0.0;
  for (int i = 0; i < weights_.size(); ++i) {
    if (!(weights_(i) >= 0.0))
      throw std::invalid_argument("discrete measure: negative or non-finite weight");
    total += weights_(i);
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("discrete measure: weights must sum to 1 within 1e-12");
}

DiscreteMeasure DiscreteMeasure::uniform(std::vector<Eigen::VectorXd> points) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw std::invalid_argument("discrete measure: empty support");
  return DiscreteMeasure(std::move(points),
                         Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
}

bool DiscreteMeasure::is_uniform() const {
  const double w = 1.0 / static_cast<double>(size());
  for (int i = 0; i < weights_.size(); ++i)
    if (std::abs(weights_(i) - w) > 1e-14) return false;
  return true;
}

namespace {

Eigen::MatrixXd bilinear_cost(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  if (mu0.dimension() != mu1.dimension())
    throw std::invalid_argument("ot_cost: measures live in different dimensions");
  if (mu0.size() > 500 || mu1.size() > 500)
    throw std::invalid_argument("ot_cost: supports capped at 500 points");
  Eigen::MatrixXd c(mu0.size(), mu1.size());
  for (int i = 0; i < mu0.size(); ++i)
    for (int j = 0; j < mu1.size(); ++j) c(i, j) = -mu0.points()[i].dot(mu1.points()[j]);
  return c;
}

void finalize_plan(TransportPlan& plan, const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& a, const PlanEntry& b) {
    return a.i < b.i || (a.i == b.i && a.j < b.j);
  });
  Eigen::VectorXd row = Eigen::VectorXd::Zero(mu0.size());
  Eigen::VectorXd col = Eigen::VectorXd::Zero(mu1.size());
  for (const auto& e : plan.entries) {
    row(e.i) += e.mass;
    col(e.j) += e.mass;
  }
  plan.marginal_residual = std::max((row - mu0.weights()).lpNorm<Eigen::Infinity>(),
                                    (col - mu1.weights()).lpNorm<Eigen::Infinity>());
  if (plan.marginal_residual > 1e-10)
    throw std::runtime_error("ot_cost: solver-failure, plan marginals drifted beyond 1e-10");
}

}  // namespace

TransportPlan ot_cost_simplex(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  const Eigen::MatrixXd c = bilinear_cost(mu0, mu1);
  const int m = mu0.size(), n = mu1.size();
  const double tol = 1e-11 * (1.0 + c.cwiseAbs().maxCoeff());

  struct Arc {
    int i, j;
    double mass;
  };
  std::vector<Arc> basis;
  basis.reserve(m + n - 1);

  // Deterministic north-west-corner start (row-major), kept as a spanning
  // tree of m + n - 1 arcs (zero-mass arcs retained on degenerate steps).
  {
    Eigen::VectorXd ra = mu0.weights(), rb = mu1.weights();
    int i = 0, j = 0;
    while (i < m && j < n) {
      const double t = std::min(ra(i), rb(j));
      basis.push_back({i, j, t});
      ra(i) -= t;
      rb(j) -= t;
      if (i == m - 1 && j == n - 1) break;
      if (ra(i) < rb(j))
        ++i;
      else if (ra(i) > rb(j))
        ++j;
      else if (i < m - 1)
        ++i;  // degenerate: advance rows first, leaving a zero-mass basic arc
      else
        ++j;
    }
    if (static_cast<int>(basis.size()) != m + n - 1)
      throw std::logic_error("ot_cost: transportation basis is not a spanning tree");
  }

  // Tree adjacency: node 0..m-1 = rows, m..m+n-1 = columns.
  std::vector<std::vector<int>> adj(m + n);
  auto rebuild_adj = [&] {
    for (auto& a : adj) a.clear();
    for (int t = 0; t < static_cast<int>(basis.size()); ++t) {
      adj[basis[t].i].push_back(t);
      adj[m + basis[t].j].push_back(t);
    }
  };
  rebuild_adj();

  Eigen::VectorXd du(m), dv(n);
  std::vector<int> parent_arc(m + n), parent_node(m + n);
  std::vector<char> seen(m + n);

  const long max_pivots = 1000L + 50L * static_cast<long>(m + n) * std::max(m, n);
  long pivots = 0;
  while (true) {
    // Duals from the tree: u_i + v_j = c_ij on basic arcs, u_0 = 0.
    std::fill(seen.begin(), seen.end(), 0);
    std::deque<int> queue{0};
    seen[0] = 1;
    du(0) = 0.0;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      for (int t : adj[node]) {
        const int other = node < m ? m + basis[t].j : basis[t].i;
        if (seen[other]) continue;
        seen[other] = 1;
        if (node < m)
          dv(basis[t].j) = c(basis[t].i, basis[t].j) - du(basis[t].i);
        else
          du(basis[t].i) = c(basis[t].i, basis[t].j) - dv(basis[t].j);
        queue.push_back(other);
      }
    }
    for (char s : seen)
      if (!s) throw std::logic_error("ot_cost: transportation tree lost connectivity");

    // Entering arc: most negative reduced cost, ties to the earliest in
    // row-major order (deterministic pivoting).
    int bi = -1, bj = -1;
    double best = -tol;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double r = c(i, j) - du(i) - dv(j);
        if (r < best) {
          best = r;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0) break;  // optimal

    if (++pivots > max_pivots)
      throw std::runtime_error("ot_cost: solver-failure, transportation simplex did not terminate");

    // Unique tree path from row bi to column bj; the entering arc closes it
    // into a cycle with alternating signs (+ on the entering arc).
    std::fill(seen.begin(), seen.end(), 0);
    queue = {bi};
    seen[bi] = 1;
    parent_arc[bi] = -1;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node == m + bj) break;
      for (int t : adj[node]) {
        const int other = node < m ? m + basis[t].j : basis[t].i;
        if (seen[other]) continue;
        seen[other] = 1;
        parent_arc[other] = t;
        parent_node[other] = node;
        queue.push_back(other);
      }
    }
    // Walk back from bj's node; arcs at odd positions from the entering arc
    // carry the minus sign.
    std::vector<int> path;  // arc indices from the column end toward bi
    for (int node = m + bj; node != bi; node = parent_node[node]) path.push_back(parent_arc[node]);
    double theta = kInf;
    int leave = -1;
    for (std::size_t s = 0; s < path.size(); ++s) {
      if (s % 2 == 0) {  // minus arcs: first path arc shares column bj
        const int t = path[s];
        if (basis[t].mass < theta || (basis[t].mass == theta && (leave < 0 || t < leave))) {
          theta = basis[t].mass;
          leave = t;
        }
      }
    }
    if (leave < 0) throw std::logic_error("ot_cost: degenerate pivot cycle");
    for (std::size_t s = 0; s < path.size(); ++s)
      basis[path[s]].mass += (s % 2 == 0 ? -theta : theta);
    basis[leave] = {bi, bj, theta};
    rebuild_adj();
  }

  TransportPlan plan;
  plan.u = du;
  plan.v = dv;
  double cost = 0.0;
  for (const auto& a : basis) {
    cost += a.mass * c(a.i, a.j);
    if (a.mass > 0.0) plan.entries.push_back({a.i, a.j, a.mass});
  }
  plan.cost = cost;
  // Certify: dual feasibility (all reduced costs above -tol) was the exit
  // condition; re-audit to fail loudly on drift.
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (c(i, j) - du(i) - dv(j) < -10.0 * tol)
        throw std::logic_error("ot_cost: dual certificate violated after termination");
  finalize_plan(plan, mu0, mu1);
  return plan;
}

TransportPlan ot_cost(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  if (mu0.size() == mu1.size() && mu0.is_uniform() && mu1.is_uniform()) {
    const Eigen::MatrixXd c = bilinear_cost(mu0, mu1);
    const AssignmentResult res = solve_assignment(c);
    const int n = mu0.size();
    TransportPlan plan;
    const double w = 1.0 / static_cast<double>(n);
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
      plan.entries.push_back({i, res.row_to_col[i], w});
      cost += w * c(i, res.row_to_col[i]);
    }
    plan.cost = cost;
    plan.u = Eigen::Map<const Eigen::VectorXd>(res.u.data(), n);
    plan.v = Eigen::Map<const Eigen::VectorXd>(res.v.data(), n);
    finalize_plan(plan, mu0, mu1);
    return plan;
  }
  return ot_cost_simplex(mu0, mu1);
}

std::string plan_to_csv(const TransportPlan& plan) {
  std::string out = "i,j,mass\n";
  for (const auto& e : plan.entries) {
    out += std::to_string(e.i);
    out += ',';
    out += std::to_string(e.j);
    out += ',';
    out += format_double(e.mass);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monotone 1D quantile map.

double MonotoneMap::source_cdf(double x) const {
  if (discrete_) {
    const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), x);
    return static_cast<double>(it - atoms_.begin()) / static_cast<double>(atoms_.size());
  }
  if (x <= grid_.front()) return 0.0;
  if (x >= grid_.back()) return 1.0;
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const std::size_t t = it - grid_.begin();  // >= 1
  const double frac = (x - grid_[t - 1]) / (grid_[t] - grid_[t - 1]);
  return cdf_[t - 1] + frac * (cdf_[t] - cdf_[t - 1]);
}

double MonotoneMap::operator()(double x) const { return a_ + (b_ - a_) * source_cdf(x); }

double MonotoneMap::quantile(double q) const {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("monotone map: quantile outside [0,1]");
  if (discrete_) {
    const std::size_t n = atoms_.size();
    const std::size_t k = std::min<std::size_t>(
        n - 1, static_cast<std::size_t>(std::ceil(q * static_cast<double>(n))) -
                   (q > 0.0 ? 1 : 0));
    return atoms_[k];
  }
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), q);
  if (it == cdf_.begin()) return grid_.front();
  if (it == cdf_.end()) return grid_.back();
  const std::size_t t = it - cdf_.begin();
  const double dq = cdf_[t] - cdf_[t - 1];
  const double frac = dq > 0.0 ? (q - cdf_[t - 1]) / dq : 1.0;
  return grid_[t - 1] + frac * (grid_[t] - grid_[t - 1]);
}

MonotoneMap monotone_map_1d(const DiscreteMeasure& mu, double a, double b) {
  if (!(a < b)) throw std::invalid_argument("monotone map: degenerate target interval");
  if (mu.dimension() != 1) throw std::invalid_argument("monotone map: source must be 1D");
  if (!mu.is_uniform())
    throw std::invalid_argument("monotone map: empirical source must have uniform weights");
  MonotoneMap map;
  map.a_ = a;
  map.b_ = b;
  map.discrete_ = true;
  for (const auto& p : mu.points()) map.atoms_.push_back(p(0));
  std::sort(map.atoms_.begin(), map.atoms_.end());
  for (std::size_t t = 0; t + 1 < map.atoms_.size(); ++t)
    if (map.atoms_[t] == map.atoms_[t + 1])
      throw std::invalid_argument("monotone map: empirical source atoms must be distinct");
  return map;
}

MonotoneMap monotone_map_1d(const std::function<double(double)>& density, double lo, double hi,
                            double a, double b, int grid_n) {
  if (!(a < b)) throw std::invalid_argument("monotone map: degenerate target interval");
  if (!(lo < hi)) throw std::invalid_argument("monotone map: degenerate source window");
  if (grid_n < 9) throw std::invalid_argument("monotone map: need at least 9 quadrature nodes");
  if (!density) throw std::invalid_argument("monotone map: empty density");
  MonotoneMap map;
  map.a_ = a;
  map.b_ = b;
  map.grid_.resize(grid_n);
  map.cdf_.resize(grid_n);
  const double h = (hi - lo) / (grid_n - 1);
  for (int t = 0; t < grid_n; ++t) map.grid_[t] = lo + h * t;
  map.grid_[grid_n - 1] = hi;
  // Composite Simpson with interval midpoints for the cumulative integral.
  KahanSum acc;
  map.cdf_[0] = 0.0;
  double f_left = density(map.grid_[0]);
  for (int t = 1; t < grid_n; ++t) {
    const double f_mid = density(0.5 * (map.grid_[t - 1] + map.grid_[t]));
    const double f_right = density(map.grid_[t]);
    if (!(f_left >= 0.0) || !(f_mid >= 0.0) || !(f_right >= 0.0))
      throw std::invalid_argument("monotone map: density must be non-negative");
    acc.add((map.grid_[t] - map.grid_[t - 1]) / 6.0 * (f_left + 4.0 * f_mid + f_right));
    map.cdf_[t] = acc.value();
    f_left = f_right;
  }
  const double total = map.cdf_.back();
  if (!(total > 0.0)) throw std::invalid_argument("monotone map: density integrates to zero");
  for (double& q : map.cdf_) q /= total;
  // enforce exact monotonicity after normalization
  for (int t = 1; t < grid_n; ++t) map.cdf_[t] = std::max(map.cdf_[t], map.cdf_[t - 1]);
  map.cdf_[grid_n - 1] = 1.0;
  return map;
}

}  // namespace feklab
