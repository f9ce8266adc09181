#include "feklab/energy.hpp"

#include <cmath>
#include <stdexcept>

#include "feklab/rng.hpp"

namespace feklab {

double determinantal_energy(const EnsembleModel& m, const Configuration& cfg) {
  if (m.k() < 1) throw std::invalid_argument("determinantal_energy: degenerate for k = 0");
  const double ld2 = log_abs_det2(m.basis, cfg);
  if (ld2 == -kInf) return kInf;
  return -ld2 / (static_cast<double>(m.N()) * m.k());
}

double weighted_hamiltonian(const EnsembleModel& m, const Configuration& cfg) {
  double h = 0.0;
  if (m.k() >= 1) {
    const double ld2 = log_abs_det2(m.basis, cfg);
    if (ld2 == -kInf) return kInf;
    h = -ld2 / m.k();
  }
  const int N = cfg.count();
  for (int p = 0; p < N; ++p) {
    const double phi = m.weight(cfg.point(p), m.n());
    if (phi == kInf) return kInf;
    h += phi;
  }
  return h;
}

std::optional<std::vector<double>> grad_weighted_hamiltonian(const EnsembleModel& m,
                                                             const Configuration& cfg) {
  const int N = cfg.count();
  const int n = m.n();
  std::vector<double> g;
  if (m.k() >= 1) {
    auto gd = grad_log_abs_det2(m.basis, cfg);
    if (!gd) return std::nullopt;
    g = std::move(*gd);
    const double f = -1.0 / m.k();
    for (auto& v : g) v *= f;
  } else {
    g.assign(static_cast<std::size_t>(N) * 2 * n, 0.0);
  }
  for (int p = 0; p < N; ++p) {
    auto gw = m.weight.gradient(cfg.point(p), n);
    if (!gw) return std::nullopt;
    for (int c = 0; c < 2 * n; ++c) g[static_cast<std::size_t>(p) * 2 * n + c] += (*gw)[c];
  }
  return g;
}

double log_gibbs_density(const EnsembleModel& m, const Configuration& cfg) {
  const double H = weighted_hamiltonian(m, cfg);
  if (H == kInf) return -kInf;
  double ld = 0.0;
  for (int p = 0; p < cfg.count(); ++p) {
    const double d = m.base.log_density(cfg.point(p), m.n());
    if (d == -kInf) return -kInf;
    ld += d;
  }
  return -m.beta * H + ld;
}

GreenEstimate green_formula_estimate(const EnsembleModel& m, const std::vector<cplx>& grid,
                                     int samples, std::uint64_t seed) {
  if (m.n() != 1) throw std::invalid_argument("green_formula_estimate: implemented for n = 1");
  if (m.k() < 1) throw std::invalid_argument("green_formula_estimate: need k >= 1");
  if (samples < 100) throw std::invalid_argument("green_formula_estimate: insufficient samples (< 100)");
  if (!m.base.is_probability())
    throw std::invalid_argument("green_formula_estimate: base must be a probability measure");

  const int G = static_cast<int>(grid.size());
  const int N = m.N();
  GreenEstimate out;
  out.grid = grid;
  out.samples = samples;
  std::vector<double> sum(G, 0.0), sum2(G, 0.0);

  // One substream per sample block: each block draws the N-1 companions and
  // contributes log|D(z, w)|^2 at every grid point.  For n = 1,
  // log|D(z, w)|^2 = log|D(w)|^2_{pairs} + sum_j log|z - w_j|^2.
  std::vector<cplx> w(N - 1);
  for (int s = 0; s < samples; ++s) {
    auto eng = make_engine(seed, s);
    for (auto& x : w) x = m.base.sample_point(eng);
    double wpairs = 0.0;
    for (int a = 0; a < N - 1; ++a)
      for (int b = a + 1; b < N - 1; ++b) wpairs += std::log(std::norm(w[a] - w[b]));
    for (int gidx = 0; gidx < G; ++gidx) {
      double v = wpairs;
      for (int a = 0; a < N - 1; ++a) v += std::log(std::norm(grid[gidx] - w[a]));
      v /= m.k();
      sum[gidx] += v;
      sum2[gidx] += v * v;
    }
  }

  out.value.resize(G);
  out.se.resize(G);
  double mean_of_means = 0.0;
  for (int g = 0; g < G; ++g) {
    const double mu = sum[g] / samples;
    out.value[g] = mu;
    const double var = std::max(0.0, sum2[g] / samples - mu * mu);
    out.se[g] = std::sqrt(var / samples);
    mean_of_means += mu;
  }
  mean_of_means /= G;
  for (auto& v : out.value) v -= mean_of_means;  // additive constant is not determined
  return out;
}

}  // namespace feklab
