#pragma once
// Radial potentials on C in logarithmic coordinates.
//
// A rotation-invariant psi(z) is stored as psi_hat(s) with s = log|z|^2.
// Subharmonicity becomes convexity in s, and the normalized Laplacian mass of
// psi inside radius e^{s/2} equals the slope m(s) = psi_hat'(s).  Membership
// in the Lelong class (logarithmic growth) is m(+inf) = 1, and the total
// Monge-Ampere mass of the profile is m(s_max) - m(s_min).

#include <vector>

#include "feklab/common.hpp"

namespace feklab {

struct RadialProfile {
  std::vector<double> s;    // strictly increasing grid
  std::vector<double> psi;  // psi_hat(s_i)
  std::vector<double> m;    // slope; m[i] is the slope on cell [s_i, s_{i+1}),
                            // m.back() duplicates the last cell slope

  int size() const { return static_cast<int>(s.size()); }

  // psi by linear interpolation; affine extrapolation with the edge slopes.
  double psi_at(double q) const;

  // Cumulative MA mass to the left of q, relative to the left boundary slope:
  // F(q) = m(cell containing q) - m(first cell).  Right-continuous step
  // function; this is the exact CDF (in s) of the discrete MA measure.
  double cdf_s(double q) const;
  // Radial CDF: mass within |z| <= r.
  double cdf_r(double r) const { return cdf_s(r > 0 ? 2.0 * std::log(r) : -kInf); }

  double total_mass() const { return m.empty() ? 0.0 : m.back() - m.front(); }

  // MA mass attached to node i (slope jump across the node).
  double node_mass(int i) const;

  // Rebuild m from psi as cell slopes.
  void slopes_from_psi();
};

}  // namespace feklab
