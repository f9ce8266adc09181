#include "feklab/polybasis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "dd.hpp"

namespace feklab {

std::size_t basis_size(int n, int k) {
  if (n < 1 || k < 0) throw std::invalid_argument("basis_size: need n >= 1, k >= 0");
  // binom(n+k, n) built multiplicatively with an overflow guard; a degree so
  // large that the count does not fit is rejected rather than wrapped.
  unsigned long long r = 1;
  for (int j = 1; j <= n; ++j) {
    unsigned long long num = static_cast<unsigned long long>(k) + j;
    unsigned long long t;
    if (__builtin_mul_overflow(r, num, &t)) throw std::overflow_error("basis_size: binom(n+k, n) overflows");
    r = t / j;  // product of j consecutive integers is divisible by j!
    if (r > (1ull << 53)) throw std::overflow_error("basis_size: binom(n+k, n) exceeds 2^53");
  }
  return static_cast<std::size_t>(r);
}

MultiIndexBasis MultiIndexBasis::make(int n, int k) {
  MultiIndexBasis b;
  b.n = n;
  b.k = k;
  const std::size_t N = basis_size(n, k);
  b.exponents.reserve(N);
  // Graded order: total degree 0..k; lexicographic within a degree.
  std::vector<int> alpha(n, 0);
  for (int d = 0; d <= k; ++d) {
    // first multi-index of degree d in lex order: (d, 0, ..., 0)
    std::fill(alpha.begin(), alpha.end(), 0);
    alpha[0] = d;
    while (true) {
      b.exponents.push_back(alpha);
      // next composition of d into n parts, lex-decreasing on the left
      int i = n - 2;
      while (i >= 0 && alpha[i] == 0) --i;
      if (i < 0) break;
      // move one unit from position i to position i+1, resetting the tail
      int tail = std::accumulate(alpha.begin() + i + 1, alpha.end(), 0);
      alpha[i] -= 1;
      alpha[i + 1] = tail + 1;
      for (int j = i + 2; j < n; ++j) alpha[j] = 0;
    }
  }
  if (b.exponents.size() != N) throw std::logic_error("MultiIndexBasis: enumeration bug");
  return b;
}

cplx MultiIndexBasis::eval(int i, const cplx* z) const {
  cplx v(1.0, 0.0);
  const auto& a = exponents[i];
  for (int c = 0; c < n; ++c)
    for (int e = 0; e < a[c]; ++e) v *= z[c];
  return v;
}

cplx MultiIndexBasis::eval_dz(int i, const cplx* z, int c) const {
  const auto& a = exponents[i];
  if (a[c] == 0) return {0.0, 0.0};
  cplx v(static_cast<double>(a[c]), 0.0);
  for (int d = 0; d < n; ++d) {
    int e = a[d] - (d == c ? 1 : 0);
    for (int j = 0; j < e; ++j) v *= z[d];
  }
  return v;
}

namespace {

// Canonical point ordering: lexicographic on (Re z_1, Im z_1, Re z_2, ...).
// Shared by both determinant paths so permutation invariance is bitwise.
std::vector<int> canonical_order(const Configuration& cfg) {
  std::vector<int> idx(cfg.count());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    const cplx* pa = cfg.point(a);
    const cplx* pb = cfg.point(b);
    for (int c = 0; c < cfg.n; ++c) {
      if (pa[c].real() != pb[c].real()) return pa[c].real() < pb[c].real();
      if (pa[c].imag() != pb[c].imag()) return pa[c].imag() < pb[c].imag();
    }
    return false;
  });
  return idx;
}

void check_config(const MultiIndexBasis& basis, const Configuration& cfg) {
  if (cfg.n != basis.n) throw std::invalid_argument("configuration dimension does not match basis");
  if (cfg.count() != basis.size())
    throw std::invalid_argument("configuration size must equal the basis dimension N_k");
}

double log_abs_det2_pairwise(const Configuration& cfg) {
  const auto idx = canonical_order(cfg);
  const int N = cfg.count();
  KahanSum acc;
  for (int a = 0; a < N; ++a)
    for (int b = a + 1; b < N; ++b) {
      const cplx d = cfg.point(idx[b])[0] - cfg.point(idx[a])[0];
      const double n2 = std::norm(d);
      if (n2 == 0.0) return -kInf;
      acc.add(std::log(n2));
    }
  return acc.value();
}

}  // namespace

double log_abs_det2_matrix(const MultiIndexBasis& basis, const Configuration& cfg) {
  using detail::dd;
  using detail::ddc;
  check_config(basis, cfg);
  const int N = basis.size();
  const int n = basis.n;
  const auto idx = canonical_order(cfg);

  // Exact reduction: rescaling coordinate d by c_d multiplies D by
  // prod_d c_d^{S_d} with S_d the total degree of the basis in coordinate d.
  // Normalizing each coordinate by the geometric mean of its magnitudes keeps
  // the monomial entries near unit scale before elimination.
  std::vector<double> gm(n, 1.0);
  double log_corr2 = 0.0;
  for (int c = 0; c < n; ++c) {
    double acc = 0.0;
    for (int p = 0; p < N; ++p) acc += std::log(std::max(std::abs(cfg.point(p)[c]), 1e-12));
    gm[c] = std::exp(acc / N);
    long long Sd = 0;
    for (const auto& a : basis.exponents) Sd += a[c];
    log_corr2 += 2.0 * static_cast<double>(Sd) * std::log(gm[c]);
  }

  // Build the evaluation matrix in double-double: powers of the normalized
  // coordinates, one column per configuration point (canonical order).
  std::vector<ddc> A(static_cast<std::size_t>(N) * N);
  auto at = [&](int i, int j) -> ddc& { return A[static_cast<std::size_t>(i) * N + j]; };
  for (int j = 0; j < N; ++j) {
    const cplx* z = cfg.point(idx[j]);
    // powers[c][e] = (z_c / gm_c)^e
    std::vector<std::vector<ddc>> powers(n);
    for (int c = 0; c < n; ++c) {
      powers[c].resize(basis.k + 1);
      powers[c][0] = ddc{1.0, 0.0};
      const ddc zb{detail::div(dd{z[c].real()}, dd{gm[c]}), detail::div(dd{z[c].imag()}, dd{gm[c]})};
      for (int e = 1; e <= basis.k; ++e) powers[c][e] = detail::mul(powers[c][e - 1], zb);
    }
    for (int i = 0; i < N; ++i) {
      ddc v{1.0, 0.0};
      for (int c = 0; c < n; ++c) v = detail::mul(v, powers[c][basis.exponents[i][c]]);
      at(i, j) = v;
    }
  }

  // Row scaling by max magnitude (added back in log form), then partially
  // pivoted elimination with running log-magnitude accumulation.
  KahanSum logdet2;
  for (int i = 0; i < N; ++i) {
    double mx = 0.0;
    for (int j = 0; j < N; ++j) mx = std::max(mx, std::abs(at(i, j).re.hi) + std::abs(at(i, j).im.hi));
    if (mx == 0.0) return -kInf;
    const double inv = 1.0 / mx;
    for (int j = 0; j < N; ++j) at(i, j) = detail::mul(at(i, j), inv);
    logdet2.add(2.0 * std::log(mx));
  }
  for (int col = 0; col < N; ++col) {
    int piv = col;
    double best = detail::norm2(at(col, col)).hi;
    for (int r = col + 1; r < N; ++r) {
      const double v = detail::norm2(at(r, col)).hi;
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(std::sqrt(best) > 1e-300)) return -kInf;  // numerically singular under unit row scale
    if (piv != col)
      for (int j = 0; j < N; ++j) std::swap(at(piv, j), at(col, j));
    logdet2.add(std::log(best));  // best is |pivot|^2 already
    const ddc pivot = at(col, col);
    for (int r = col + 1; r < N; ++r) {
      const ddc f = detail::div(at(r, col), pivot);
      for (int j = col + 1; j < N; ++j) at(r, j) = detail::sub(at(r, j), detail::mul(f, at(col, j)));
    }
  }
  return logdet2.value() + log_corr2;
}

double log_abs_det2(const MultiIndexBasis& basis, const Configuration& cfg) {
  check_config(basis, cfg);
  if (basis.n == 1) return log_abs_det2_pairwise(cfg);
  return log_abs_det2_matrix(basis, cfg);
}

std::optional<std::vector<double>> grad_log_abs_det2(const MultiIndexBasis& basis,
                                                     const Configuration& cfg) {
  check_config(basis, cfg);
  const int N = basis.size();
  const int n = basis.n;
  std::vector<double> g(static_cast<std::size_t>(N) * 2 * n, 0.0);

  if (n == 1) {
    // d/dz_p log|D|^2 = sum_{q != p} 2 / (z_p - z_q) as a Wirtinger derivative;
    // real gradient is (2 Re, -2 Im) of that sum... with f = log|z|^2 viewed in
    // (x, y): grad_p = sum_q 2 (p - q) / |p - q|^2 componentwise.
    const auto idx = canonical_order(cfg);
    for (int a = 0; a < N; ++a) {
      const int p = idx[a];
      const cplx zp = cfg.point(p)[0];
      double gx = 0.0, gy = 0.0;
      for (int b = 0; b < N; ++b) {
        if (b == a) continue;
        const cplx d = zp - cfg.point(idx[b])[0];
        const double n2 = std::norm(d);
        if (n2 == 0.0) return std::nullopt;
        gx += 2.0 * d.real() / n2;
        gy += 2.0 * d.imag() / n2;
      }
      g[2 * p] = gx;
      g[2 * p + 1] = gy;
    }
    return g;
  }

  // Jacobi's formula.  Column j of A depends only on point j, so
  //   d log|det A|^2 / d z_{jc} = 2 * sum_i inv(A)_{ji} * d e_i / d z_c (z_j)
  // as a holomorphic derivative; the real gradient is (2 Re, -2 Im) of it.
  Eigen::MatrixXcd A(N, N);
  for (int j = 0; j < N; ++j) {
    const cplx* z = cfg.point(j);
    for (int i = 0; i < N; ++i) A(i, j) = basis.eval(i, z);
  }
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  // Reject singular matrices: smallest |U_ii| relative to the largest.
  double pmax = 0.0, pmin = kInf;
  for (int i = 0; i < N; ++i) {
    const double p = std::abs(lu.matrixLU()(i, i));
    pmax = std::max(pmax, p);
    pmin = std::min(pmin, p);
  }
  if (!(pmin > 1e-14 * pmax) || pmax == 0.0) return std::nullopt;
  Eigen::MatrixXcd Ainv = lu.inverse();
  std::vector<cplx> dcol(N);
  for (int j = 0; j < N; ++j) {
    const cplx* z = cfg.point(j);
    for (int c = 0; c < n; ++c) {
      for (int i = 0; i < N; ++i) dcol[i] = basis.eval_dz(i, z, c);
      cplx w(0.0, 0.0);
      for (int i = 0; i < N; ++i) w += Ainv(j, i) * dcol[i];
      g[static_cast<std::size_t>(j) * 2 * n + 2 * c] = 2.0 * w.real();
      g[static_cast<std::size_t>(j) * 2 * n + 2 * c + 1] = -2.0 * w.imag();
    }
  }
  return g;
}

}  // namespace feklab
