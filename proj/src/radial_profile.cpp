#include "feklab/radial_profile.hpp"

#include <algorithm>
#include <stdexcept>

namespace feklab {

double RadialProfile::psi_at(double q) const { return interp_linear(s, psi, q); }

double RadialProfile::cdf_s(double q) const {
  if (m.empty()) throw std::logic_error("RadialProfile: slopes not set");
  if (q < s.front()) return 0.0;
  if (q >= s.back()) return m.back() - m.front();
  const auto it = std::upper_bound(s.begin(), s.end(), q);
  const std::size_t cell = static_cast<std::size_t>(it - s.begin()) - 1;
  return m[cell] - m.front();
}

double RadialProfile::node_mass(int i) const {
  const int M = size();
  if (i <= 0) return 0.0;
  if (i >= M - 1) return 0.0;
  return m[i] - m[i - 1];
}

void RadialProfile::slopes_from_psi() {
  const int M = size();
  if (M < 2) throw std::invalid_argument("RadialProfile: need at least 2 nodes");
  m.assign(M, 0.0);
  for (int i = 0; i + 1 < M; ++i) m[i] = (psi[i + 1] - psi[i]) / (s[i + 1] - s[i]);
  m[M - 1] = m[M - 2];
}

}  // namespace feklab
