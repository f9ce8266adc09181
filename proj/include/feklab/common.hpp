#pragma once
// Small shared utilities: compensated summation, grids, deterministic hashing.

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace feklab {

using cplx = std::complex<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Kahan-Neumaier compensated accumulator.  Used wherever a sum must be
// insensitive to term ordering at the 1e-15 level (permutation-symmetry
// checks, large quadrature sums).
struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 2) throw std::invalid_argument("linspace: need at least 2 points");
  std::vector<double> g(n);
  const double h = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) g[i] = a + h * i;
  g.back() = b;
  return g;
}

// Piecewise-linear interpolation on a sorted grid; affine extrapolation with
// the edge slopes (callers that want clamping handle it themselves).
double interp_linear(const std::vector<double>& x, const std::vector<double>& y, double q);

// FNV-1a 64-bit over bytes; used for output-manifest content hashes and for
// deriving per-stream RNG seeds from (seed, stream id) pairs.
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}
inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Shortest round-trip decimal formatting (std::to_chars), so that equal
// doubles always print identically and files are byte-stable across runs.
std::string format_double(double v);

inline double sq(double x) { return x * x; }

}  // namespace feklab
