#include "feklab/assignment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace feklab {

namespace {

// Kuhn augmenting path on the boolean adjacency "ok", trying to match row r.
// match_col[j] = row currently holding column j, or -1.
bool try_augment(int r, const std::vector<std::vector<char>>& ok, std::vector<char>& visited,
                 std::vector<int>& match_col) {
  const int N = static_cast<int>(ok.size());
  for (int j = 0; j < N; ++j) {
    if (!ok[r][j] || visited[j]) continue;
    visited[j] = 1;
    if (match_col[j] < 0 || try_augment(match_col[j], ok, visited, match_col)) {
      match_col[j] = r;
      return true;
    }
  }
  return false;
}

}  // namespace

AssignmentResult solve_assignment(const Eigen::MatrixXd& cost) {
  const int N = static_cast<int>(cost.rows());
  if (N == 0 || cost.cols() != N)
    throw std::invalid_argument("solve_assignment: cost matrix must be square and non-empty");
  if (!cost.allFinite())
    throw std::invalid_argument("solve_assignment: cost matrix must be finite");

  const double inf = std::numeric_limits<double>::infinity();
  // Column N is the virtual source column of the augmenting-path scheme.
  std::vector<double> u(N, 0.0), v(N + 1, 0.0), minv(N + 1, 0.0);
  std::vector<int> p(N + 1, -1), way(N + 1, 0);
  std::vector<char> used(N + 1, 0);

  for (int i = 0; i < N; ++i) {
    p[N] = i;
    int j0 = N;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 0; j < N; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= N; ++j) {
        if (used[j]) {
          if (p[j] >= 0) u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] >= 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != N);
  }

  AssignmentResult res;
  res.row_to_col.assign(N, -1);
  for (int j = 0; j < N; ++j)
    if (p[j] >= 0) res.row_to_col[p[j]] = j;
  res.cost = 0.0;
  for (int i = 0; i < N; ++i) res.cost += cost(i, res.row_to_col[i]);
  res.u = u;
  res.v.assign(v.begin(), v.begin() + N);

  // Dual feasibility audit: reduced costs must be non-negative up to roundoff.
  const double scale = 1.0 + cost.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) worst = std::min(worst, cost(i, j) - res.u[i] - res.v[j]);
  if (worst < -1e-7 * scale)
    throw std::logic_error("solve_assignment: dual certificate failed feasibility");
  return res;
}

std::vector<int> lex_smallest_optimal(const Eigen::MatrixXd& cost, const AssignmentResult& base,
                                      double tol) {
  const int N = static_cast<int>(cost.rows());
  std::vector<std::vector<char>> tight(N, std::vector<char>(N, 0));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      tight[i][j] = (cost(i, j) - base.u[i] - base.v[j] <= tol) ? 1 : 0;

  std::vector<int> sigma(N, -1);
  std::vector<char> col_taken(N, 0);
  for (int i = 0; i < N; ++i) {
    bool fixed = false;
    for (int j = 0; j < N && !fixed; ++j) {
      if (!tight[i][j] || col_taken[j]) continue;
      // Tentatively give column j to row i; the remaining rows must still
      // admit a perfect matching inside the tight subgraph.
      col_taken[j] = 1;
      std::vector<int> match_col(N, -1);
      bool feasible = true;
      for (int r = i + 1; r < N && feasible; ++r) {
        std::vector<char> visited(col_taken.begin(), col_taken.end());
        feasible = try_augment(r, tight, visited, match_col);
      }
      if (feasible) {
        sigma[i] = j;
        fixed = true;
      } else {
        col_taken[j] = 0;
      }
    }
    if (!fixed) {
      // The certified matching itself must always be completable; reaching
      // here means the tolerance classified its edges as non-tight.
      throw std::logic_error("lex_smallest_optimal: tight subgraph lost the optimal matching");
    }
  }
  return sigma;
}

}  // namespace feklab
