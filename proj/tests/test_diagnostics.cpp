#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "feklab/common.hpp"
#include "feklab/diagnostics.hpp"
#include "feklab/sampler.hpp"

using namespace feklab;

namespace {

EnsembleModel make_model(int n, int k, Weight w, BaseMeasure b, double beta,
                         ConfigMode mode = ConfigMode::Complex) {
  EnsembleModel m;
  m.basis = MultiIndexBasis::make(n, k);
  m.weight = std::move(w);
  m.base = std::move(b);
  m.beta = beta;
  m.mode = mode;
  return m;
}

EmpiricalMeasure emp1(std::vector<double> xs) { return EmpiricalMeasure::from_reals(xs); }

std::vector<double> rand_vals(std::mt19937_64& eng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = unif(eng);
  return v;
}

// log Z(beta) for N = 2, k = 1, phi = |z|^2, dV = Lebesgue:
// Z = 2^beta pi^2 Gamma(beta+1) beta^{-(beta+2)} (split into center of mass
// and difference coordinates).
double log_z2_closed(double beta) {
  return beta * std::log(2.0) + 2.0 * std::log(kPi) + std::lgamma(beta + 1.0) -
         (beta + 2.0) * std::log(beta);
}

}  // namespace

TEST_CASE("empirical measure: moments, radii, constructors") {
  EmpiricalMeasure e = EmpiricalMeasure::from_complex({cplx(1.0, 0.0), cplx(0.0, 2.0)});
  CHECK(e.count() == 2);
  CHECK(e.dimension() == 2);
  CHECK(e.mean()(0) == doctest::Approx(0.5));
  CHECK(e.mean()(1) == doctest::Approx(1.0));
  CHECK(e.second_moment() == doctest::Approx(2.5));
  CHECK(e.radial_cdf(1.5) == doctest::Approx(0.5));
  CHECK(e.radial_cdf(2.0) == doctest::Approx(1.0));
  CHECK(e.sorted_radii().front() == doctest::Approx(1.0));

  Configuration cfg;
  cfg.n = 1;
  cfg.mode = ConfigMode::RealLine;
  cfg.pts = {cplx(0.5, 0.0), cplx(-0.25, 0.0)};
  CHECK(EmpiricalMeasure::from_configuration(cfg).dimension() == 1);
  cfg.mode = ConfigMode::Complex;
  CHECK(EmpiricalMeasure::from_configuration(cfg).dimension() == 2);

  CHECK_THROWS_AS(EmpiricalMeasure({}), std::invalid_argument);
  CHECK_THROWS_AS(EmpiricalMeasure::from_reals({}), std::invalid_argument);
  std::vector<Eigen::VectorXd> mixed{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(2)};
  CHECK_THROWS_AS(EmpiricalMeasure(std::move(mixed)), std::invalid_argument);
  std::vector<Eigen::VectorXd> wide{Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(EmpiricalMeasure(std::move(wide)), std::invalid_argument);
}

TEST_CASE("wasserstein1: identical inputs give exactly zero") {
  const EmpiricalMeasure a = emp1({-0.3, 0.1, 0.7});
  CHECK(wasserstein1(a, a) == 0.0);
  const EmpiricalMeasure p =
      EmpiricalMeasure::from_complex({cplx(0.1, 0.2), cplx(-0.5, 0.4), cplx(0.9, -0.1)});
  CHECK(wasserstein1(p, p) == 0.0);
  CHECK(wasserstein1(ClosedFormMeasure::arcsine(), ClosedFormMeasure::arcsine()) < 1e-10);
}

TEST_CASE("wasserstein1: 1D hand-computed values") {
  // two atoms at the ends of [0,1] against the uniform law: int |x - 1/2| = 1/4
  CHECK(wasserstein1(emp1({0.0, 1.0}), ClosedFormMeasure::uniform_interval(0.0, 1.0)) ==
        doctest::Approx(0.25).epsilon(1e-9));
  // centered pair: 3 segments of |F - c| with areas 1/32, 1/16, 1/32
  CHECK(wasserstein1(emp1({0.25, 0.75}), ClosedFormMeasure::uniform_interval(0.0, 1.0)) ==
        doctest::Approx(0.125).epsilon(1e-9));
  // one atom vs a symmetric pair: move half mass distance 1 each way
  CHECK(wasserstein1(emp1({0.0}), emp1({-1.0, 1.0})) == doctest::Approx(1.0).epsilon(1e-12));
  // equal sizes: the sorted matching
  std::mt19937_64 eng(7);
  for (int t = 0; t < 10; ++t) {
    auto xs = rand_vals(eng, 9, -2, 2), ys = rand_vals(eng, 9, -2, 2);
    double direct = wasserstein1(emp1(xs), emp1(ys));
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double sorted = 0.0;
    for (int i = 0; i < 9; ++i) sorted += std::abs(xs[i] - ys[i]) / 9.0;
    CHECK(direct == doctest::Approx(sorted).epsilon(1e-12));
  }
}

TEST_CASE("wasserstein1: closed-form pair with analytic value") {
  // int_{-1}^{1} |F_arcsine - F_uniform| = 2/pi - 1/2
  const double d =
      wasserstein1(ClosedFormMeasure::arcsine(), ClosedFormMeasure::uniform_interval(-1.0, 1.0));
  CHECK(d == doctest::Approx(2.0 / kPi - 0.5).epsilon(1e-8));
}

TEST_CASE("wasserstein1: metric properties on the 1D path") {
  std::mt19937_64 eng(17);
  for (int t = 0; t < 15; ++t) {
    const EmpiricalMeasure a = emp1(rand_vals(eng, 7, -2, 2));
    const EmpiricalMeasure b = emp1(rand_vals(eng, 11, -2, 2));
    const EmpiricalMeasure c = emp1(rand_vals(eng, 13, -2, 2));
    const double ab = wasserstein1(a, b), ba = wasserstein1(b, a);
    CHECK(ab == ba);  // exact symmetry
    CHECK(ab >= 0.0);
    CHECK(wasserstein1(a, c) <= ab + wasserstein1(b, c) + 1e-10);
  }
}

TEST_CASE("wasserstein1: equidistant circle atoms vs the circle law") {
  const int N = 13;
  std::vector<cplx> zs;
  for (int j = 0; j < N; ++j)
    zs.push_back(std::polar(1.0, 2.0 * kPi * j / N));
  const double d = wasserstein1(EmpiricalMeasure::from_complex(zs), ClosedFormMeasure::circle());
  CHECK(d <= kPi / N);  // 1D circular quantile matching bound
  CHECK(d > 0.005);     // and the sliced estimate is not degenerate
}

TEST_CASE("wasserstein1: radial-vs-radial closed forms are exact") {
  CHECK(wasserstein1(ClosedFormMeasure::circle(1.0), ClosedFormMeasure::circle(2.0)) ==
        doctest::Approx(1.0).epsilon(1e-9));
  // circle(1) vs disc(1): int_0^1 r^2 dr = 1/3
  CHECK(wasserstein1(ClosedFormMeasure::circle(1.0), ClosedFormMeasure::disc(1.0)) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-8));
  // disc(1) vs disc(2): int_0^1 (3/4) r^2 + int_1^2 (1 - r^2/4) = 2/3
  CHECK(wasserstein1(ClosedFormMeasure::disc(1.0), ClosedFormMeasure::disc(2.0)) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-8));

  // a radial profile whose MA mass sits on one circle reproduces circle(1)
  RadialProfile prof;
  prof.s = {-2.0, 0.0, 2.0};
  prof.psi = {0.0, 0.5, 1.5};
  prof.slopes_from_psi();
  const ClosedFormMeasure law = ClosedFormMeasure::radial(prof);
  CHECK(wasserstein1(law, ClosedFormMeasure::circle(1.0)) < 1e-10);
}

TEST_CASE("wasserstein1: dimension mismatch refusals") {
  CHECK_THROWS_AS(wasserstein1(emp1({0.0}), ClosedFormMeasure::circle()),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      wasserstein1(emp1({0.0}), EmpiricalMeasure::from_complex({cplx(0.0, 0.0)})),
      std::invalid_argument);
  CHECK_THROWS_AS(
      wasserstein1(ClosedFormMeasure::arcsine(), ClosedFormMeasure::disc(1.0)),
      std::invalid_argument);
}

TEST_CASE("wasserstein1: fekete nodes approach the arcsine law") {
  auto m = make_model(1, 10, Weight::quadratic(0.0), BaseMeasure::lebesgue_r(), kInf,
                      ConfigMode::RealLine);
  FeketeOptions opt;
  opt.restarts = 2;
  opt.anneal_sweeps = 600;
  opt.polish_max_iter = 800;
  opt.exchange_candidates = 24;
  opt.exchange_rounds = 10;
  const FeketeResult res = fekete_search(m, Carrier::interval(-1.0, 1.0), opt, 10);
  const double d = wasserstein1(EmpiricalMeasure::from_configuration(res.config),
                                ClosedFormMeasure::arcsine());
  CHECK(d < 0.08);
}

TEST_CASE("relative entropy: equality, half support, zero-base bin") {
  // mu = mu0 exactly: D = 0
  const Histogram base = histogram_from_density([](double) { return 1.0; }, 0.0, 1.0, 64);
  CHECK(relative_entropy(base, base) == 0.0);

  // mu uniform on the left half of a uniform base: D = log 2 exactly
  std::vector<double> left;
  for (int i = 0; i < 32; ++i) left.push_back((i + 0.5) / 64.0);
  const Histogram mu = histogram_1d(left, 0.0, 1.0, 64);
  CHECK(relative_entropy(mu, base) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // mu charging a bin of base-mass zero: +infinity
  const Histogram cut =
      histogram_from_density([](double x) { return x < 0.75 ? 1.0 : 0.0; }, 0.0, 1.0, 64);
  CHECK(std::isinf(relative_entropy(base, cut)));
  CHECK(relative_entropy(base, cut) > 0);
  // the reverse direction is finite: uniform on [0, 3/4) against uniform has
  // D = log(4/3); built from bin midpoints so the masses are exact
  std::vector<double> three_quarters;
  for (int i = 0; i < 48; ++i) three_quarters.push_back((i + 0.5) / 64.0);
  CHECK(relative_entropy(histogram_1d(three_quarters, 0.0, 1.0, 64), base) ==
        doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("relative entropy: nonnegative on random probability pairs") {
  std::mt19937_64 eng(23);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  for (int t = 0; t < 20; ++t) {
    Histogram p, q;
    p.x_edges = q.x_edges = linspace(0.0, 1.0, 65);
    p.mass = Eigen::VectorXd(64);
    q.mass = Eigen::VectorXd(64);
    for (int i = 0; i < 64; ++i) {
      p.mass(i) = unif(eng);
      q.mass(i) = unif(eng);
    }
    p.mass /= p.mass.sum();
    q.mass /= q.mass.sum();
    CHECK(relative_entropy(p, q) >= -1e-12);
  }
}

TEST_CASE("relative entropy: binning validation") {
  CHECK_THROWS_AS(relative_entropy(Histogram{}, Histogram{}), std::invalid_argument);
  const Histogram a = histogram_1d({0.1, 0.9}, 0.0, 1.0, 8);
  const Histogram b = histogram_1d({0.1, 0.9}, 0.0, 2.0, 8);
  CHECK_THROWS_AS(relative_entropy(a, b), std::invalid_argument);
  Histogram bad = a;
  bad.mass(0) += 0.5;  // no longer a probability vector
  CHECK_THROWS_AS(relative_entropy(bad, a), std::invalid_argument);
  CHECK_THROWS_AS(histogram_from_density([](double) { return -1.0; }, 0.0, 1.0, 8),
                  std::invalid_argument);
  CHECK_THROWS_AS(histogram_1d(std::vector<double>{}, 8), std::invalid_argument);
}

TEST_CASE("relative entropy: planar binning") {
  std::mt19937_64 eng(29);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<cplx> zs;
  for (int i = 0; i < 4000; ++i) zs.push_back(cplx(nd(eng), nd(eng)));
  const EmpiricalMeasure emp = EmpiricalMeasure::from_complex(zs);
  const Histogram h = histogram_planar(emp);
  CHECK(h.planar());
  CHECK(h.bins_x() == 64);
  CHECK(h.bins_y() == 64);
  CHECK(h.mass.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(relative_entropy(h, h) == 0.0);
  const Histogram r = histogram_radial(emp);
  CHECK(!r.planar());
  CHECK(r.mass.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("partition: N=2 quadratic ensemble against closed form and Monte Carlo") {
  auto m = make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0);
  QuadSpec quad;
  quad.radius = 6.0;
  quad.nodes = 48;
  const PartitionResult res = partition_bruteforce(m, quad);
  CHECK(res.z == doctest::Approx(2.0 * kPi * kPi).epsilon(1e-10));
  CHECK(res.log_z == doctest::Approx(log_z2_closed(1.0)).epsilon(1e-10));
  CHECK(res.free_energy_proxy == doctest::Approx(-res.log_z / 2.0));
  CHECK(res.tail_ratio < 1e-10);
  CHECK(res.tail_ratio > 0.0);

  // 10^7-sample Monte-Carlo oracle: Z = pi^2 E |z1 - z2|^2 under iid complex
  // Gaussians with density exp(-|z|^2)/pi
  std::mt19937_64 eng(31);
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  KahanSum acc;
  for (int i = 0; i < 10000000; ++i) {
    const double dx = nd(eng) - nd(eng), dy = nd(eng) - nd(eng);
    acc.add(dx * dx + dy * dy);
  }
  const double z_mc = kPi * kPi * acc.value() / 1e7;
  CHECK(std::abs(res.z - z_mc) < 0.01 * res.z);

  // radius 5 leaves more than 1e-10 of audited tail: honest refusal
  QuadSpec tight = quad;
  tight.radius = 5.0;
  CHECK_THROWS_AS(partition_bruteforce(m, tight), std::runtime_error);
}

TEST_CASE("partition: beta = 0 integrates the truncated volume exactly") {
  auto m2 = make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 0.0);
  QuadSpec quad;
  quad.radius = 3.0;
  quad.nodes = 24;
  CHECK(partition_bruteforce(m2, quad).z == doctest::Approx(std::pow(36.0, 2)).epsilon(1e-13));
  auto m3 = make_model(1, 2, Weight::quadratic(), BaseMeasure::lebesgue_c(), 0.0);
  quad.nodes = 12;
  CHECK(partition_bruteforce(m3, quad).z == doctest::Approx(std::pow(36.0, 3)).epsilon(1e-13));
}

TEST_CASE("partition: N=3 determinantal point against the Ginibre product formula") {
  // beta = k = 2: |D|^2 exp(-2 sum |z|^2), Z = 3! prod_{j<3} pi j! / 2^{j+1}.
  // 24 tensor nodes resolve the Gaussian factor to ~1.4e-5 relative on this
  // box; the N=2 cases carry the high-precision checks.
  auto m = make_model(1, 2, Weight::quadratic(), BaseMeasure::lebesgue_c(), 2.0);
  QuadSpec quad;
  quad.radius = 4.0;
  quad.nodes = 24;
  const PartitionResult res = partition_bruteforce(m, quad);
  CHECK(res.z == doctest::Approx(3.0 * kPi * kPi * kPi / 16.0).epsilon(1e-4));
  CHECK(res.evaluations > 0);
}

TEST_CASE("partition: summation order changes Z below 1e-12 relative") {
  auto m = make_model(1, 2, Weight::quadratic(), BaseMeasure::lebesgue_c(), 0.7);
  QuadSpec quad;
  quad.radius = 6.5;  // exp(-0.7 r^2) decay needs the larger audit box
  quad.nodes = 10;
  const double z0 = partition_bruteforce(m, quad).z;
  quad.particle_order = {2, 0, 1};
  const double z1 = partition_bruteforce(m, quad).z;
  CHECK(std::abs(z0 - z1) < 1e-12 * z0);

  auto m2 = make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.3);
  QuadSpec q2;
  q2.radius = 5.5;
  q2.nodes = 20;
  const double w0 = partition_bruteforce(m2, q2).z;
  q2.particle_order = {1, 0};
  const double w1 = partition_bruteforce(m2, q2).z;
  CHECK(std::abs(w0 - w1) < 1e-12 * w0);
}

TEST_CASE("partition: dlogZ/dbeta equals minus the Gibbs mean of H") {
  const double delta = 0.02;
  QuadSpec quad;
  quad.radius = 6.0;
  quad.nodes = 48;
  auto at = [&](double beta) {
    return partition_bruteforce(
               make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), beta), quad)
        .log_z;
  };
  const double lz_lo = at(1.0 - delta), lz_hi = at(1.0 + delta);
  CHECK(lz_lo == doctest::Approx(log_z2_closed(1.0 - delta)).epsilon(2e-5));
  CHECK(lz_hi == doctest::Approx(log_z2_closed(1.0 + delta)).epsilon(2e-5));
  const double fd = (lz_hi - lz_lo) / (2.0 * delta);

  // closed form: d log Z / d beta at 1 is log 2 + psi(2) - 3 = log 2 - 2 - gamma
  const double gamma = 0.57721566490153286;
  CHECK(fd == doctest::Approx(std::log(2.0) - 2.0 - gamma).epsilon(2e-3));

  // Gibbs-sampled mean of H with a batch-means standard error
  auto model = make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0);
  RunOptions ropt;
  ropt.thin = 1;
  const RunResult run = run_chain(model, Schedule::fixed(1.0), 30000, 2, 20250823, ropt);
  std::vector<double> h_series[2];
  for (const SampleRecord& rec : run.samples)
    h_series[rec.chain].push_back(weighted_hamiltonian(model, rec.config));
  std::vector<double> batch_means;
  for (const auto& series : h_series) {
    REQUIRE(series.size() >= 1000);
    const std::size_t bs = series.size() / 10;
    for (int b = 0; b < 10; ++b) {
      KahanSum s;
      for (std::size_t i = b * bs; i < (b + 1) * bs; ++i) s.add(series[i]);
      batch_means.push_back(s.value() / static_cast<double>(bs));
    }
  }
  double mean = 0.0;
  for (double v : batch_means) mean += v;
  mean /= static_cast<double>(batch_means.size());
  double var = 0.0;
  for (double v : batch_means) var += sq(v - mean);
  var /= static_cast<double>(batch_means.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(batch_means.size()));
  CHECK(std::abs(fd + mean) <= 3.0 * se);
}

TEST_CASE("partition: domain validation") {
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(2, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(2), 1.0)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(1, 3, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), -0.5)),
      std::invalid_argument);
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(1, 1, Weight::quadratic(), BaseMeasure::circle(), 1.0)),
      std::invalid_argument);
  CHECK_THROWS_AS(partition_bruteforce(make_model(1, 1, Weight::quadratic(),
                                                  BaseMeasure::lebesgue_c(), 1.0,
                                                  ConfigMode::RealLine)),
                  std::invalid_argument);
  QuadSpec bad;
  bad.nodes = 2;
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0),
                           bad),
      std::invalid_argument);
  QuadSpec dup;
  dup.particle_order = {0, 0};
  CHECK_THROWS_AS(
      partition_bruteforce(make_model(1, 1, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0),
                           dup),
      std::invalid_argument);
}
