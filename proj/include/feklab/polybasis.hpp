#pragma once
// Graded-lexicographic monomial bases of the degree-<=k polynomials on C^n and
// log-scale evaluation of the interaction determinant
//
//     D(z_1..z_N) = det[ e_i(z_j) ],   N = dim P_k = binom(n+k, n),
//
// together with its configuration gradient.  For n = 1 the determinant
// factorizes as prod_{i<j} (z_j - z_i), and that pairwise product is both the
// production path and the oracle for the generic LU path.  All log magnitudes
// are of |D|^2 (the quantity every energy downstream consumes).

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "feklab/common.hpp"

namespace feklab {

// binom(n+k, n) with overflow detection (throws std::overflow_error).
std::size_t basis_size(int n, int k);

struct MultiIndexBasis {
  int n = 1;
  int k = 1;
  // exponents[i] is the i-th multi-index (size n), ordered by total degree and
  // lexicographically within a degree.  exponents.size() == basis_size(n, k).
  std::vector<std::vector<int>> exponents;

  static MultiIndexBasis make(int n, int k);
  int size() const { return static_cast<int>(exponents.size()); }

  // e_i(z) for a point z of length n.
  cplx eval(int i, const cplx* z) const;
  // d e_i / d z_c (holomorphic derivative) at z.
  cplx eval_dz(int i, const cplx* z, int c) const;
};

enum class ConfigMode { Complex, RealLine, RealTropical };

// N points of C^n stored point-major: pts[p*n + c] is coordinate c of point p.
// RealLine keeps imaginary parts exactly zero; RealTropical stores points of
// R^n (tropical coordinates) in the real parts.
struct Configuration {
  int n = 1;
  ConfigMode mode = ConfigMode::Complex;
  std::vector<cplx> pts;

  int count() const { return n == 0 ? 0 : static_cast<int>(pts.size()) / n; }
  cplx* point(int p) { return pts.data() + static_cast<std::size_t>(p) * n; }
  const cplx* point(int p) const { return pts.data() + static_cast<std::size_t>(p) * n; }
};

// log |D|^2; -inf when the evaluation matrix is numerically singular.  The
// point ordering is canonicalized internally, so the value is bitwise
// invariant under permutations of the configuration.  n = 1 dispatches to the
// pairwise product formula; n >= 2 uses column-scaled partially pivoted LU
// with log-magnitude accumulation.
double log_abs_det2(const MultiIndexBasis& basis, const Configuration& cfg);

// Generic LU path regardless of n (exposed so n = 1 can be cross-checked
// against the product formula).
double log_abs_det2_matrix(const MultiIndexBasis& basis, const Configuration& cfg);

// Gradient of log|D|^2 with respect to the real coordinates of the points:
// out[p*2n + 2c] = d/dRe z_{p,c}, out[p*2n + 2c + 1] = d/dIm z_{p,c}.
// Empty optional when the evaluation matrix is singular (colliding points).
std::optional<std::vector<double>> grad_log_abs_det2(const MultiIndexBasis& basis,
                                                     const Configuration& cfg);

}  // namespace feklab
