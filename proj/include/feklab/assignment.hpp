#pragma once
// Dense linear assignment: minimum-cost perfect matching of a square cost
// matrix by shortest augmenting paths with dual potentials (Jonker-Volgenant
// flavour, O(N^3)), plus selection of the lexicographically smallest optimal
// permutation among ties.  The duals certify optimality: every optimal
// matching lives on the tight edges cost(i,j) - u[i] - v[j] = 0.

#include <vector>

#include <Eigen/Dense>

namespace feklab {

struct AssignmentResult {
  double cost = 0.0;            // minimal total cost
  std::vector<int> row_to_col;  // matching found by the solver
  std::vector<double> u, v;     // feasible duals: u[i] + v[j] <= cost(i, j)
};

// Minimum-cost perfect matching.  Throws std::invalid_argument for empty or
// non-square inputs and std::logic_error if the dual certificate fails its
// feasibility audit (which would indicate a solver defect, not bad data).
AssignmentResult solve_assignment(const Eigen::MatrixXd& cost);

// The lexicographically smallest permutation (as the sequence row 0's column,
// row 1's column, ...) among those supported on the tight edges
// cost(i,j) - u[i] - v[j] <= tol.  Greedy with a matching-feasibility check
// on the remaining tight subgraph at each fixture.
std::vector<int> lex_smallest_optimal(const Eigen::MatrixXd& cost, const AssignmentResult& base,
                                      double tol);

}  // namespace feklab
