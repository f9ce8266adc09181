#include "feklab/common.hpp"

#include <algorithm>
#include <charconv>

namespace feklab {

double interp_linear(const std::vector<double>& x, const std::vector<double>& y, double q) {
  if (x.size() < 2 || x.size() != y.size()) throw std::invalid_argument("interp_linear: bad table");
  if (q <= x.front()) {
    const double sl = (y[1] - y[0]) / (x[1] - x[0]);
    return y[0] + sl * (q - x[0]);
  }
  if (q >= x.back()) {
    const std::size_t n = x.size();
    const double sl = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    return y[n - 1] + sl * (q - x[n - 1]);
  }
  const auto it = std::upper_bound(x.begin(), x.end(), q);
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double t = (q - x[i - 1]) / (x[i] - x[i - 1]);
  return y[i - 1] + t * (y[i] - y[i - 1]);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace feklab
