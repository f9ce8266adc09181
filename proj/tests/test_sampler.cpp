#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "feklab/equilibrium.hpp"
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

double mean_abs2(const RunResult& res) {
  KahanSum acc;
  long long count = 0;
  for (const auto& rec : res.samples)
    for (const cplx& z : rec.config.pts) {
      acc.add(std::norm(z));
      ++count;
    }
  return acc.value() / static_cast<double>(count);
}

std::vector<double> pooled_radii(const RunResult& res) {
  std::vector<double> r;
  for (const auto& rec : res.samples)
    for (const cplx& z : rec.config.pts) r.push_back(std::abs(z));
  return r;
}

double w1_vs_cdf(std::vector<double> v, const std::function<double(double)>& F, double lo,
                 double hi, int grid = 4000) {
  std::sort(v.begin(), v.end());
  const double h = (hi - lo) / grid;
  KahanSum w;
  for (int i = 0; i < grid; ++i) {
    const double x = lo + (i + 0.5) * h;
    const double fe =
        static_cast<double>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) /
        static_cast<double>(v.size());
    w.add(std::abs(fe - F(x)) * h);
  }
  return w.value();
}

// Mass increments of a profile are centered on the grid nodes (slopes are
// cell-midpoint samples), so moments pair node_mass(i) with s_i.
double profile_second_moment(const RadialProfile& prof) {
  KahanSum acc;
  for (std::size_t i = 1; i < prof.s.size(); ++i)
    acc.add(prof.node_mass(static_cast<int>(i)) * std::exp(prof.s[i]));
  return acc.value() / prof.total_mass();
}

}  // namespace

TEST_CASE("schedules: shapes and validation") {
  auto fx = Schedule::fixed(3.0);
  CHECK(fx.beta_at(0, 100) == 3.0);
  CHECK(fx.beta_at(99999, 100) == 3.0);
  CHECK_FALSE(fx.is_annealing());

  auto ramp = Schedule::beta_ramp(8.0, 0.25);
  CHECK(ramp.beta_at(0, 100) == doctest::Approx(8.0 * (0.25 + 0.75 * 0.01)));
  CHECK(ramp.beta_at(99, 100) == doctest::Approx(8.0));
  CHECK(ramp.beta_at(100, 100) == 8.0);
  CHECK(ramp.beta_at(500, 100) == 8.0);
  // ramp is monotone non-decreasing
  for (long long s = 1; s < 100; ++s)
    CHECK(ramp.beta_at(s, 100) >= ramp.beta_at(s - 1, 100));

  auto geo = Schedule::geometric(2.0, 1.01);
  CHECK(geo.is_annealing());
  CHECK(geo.beta_at(0, 0) == 2.0);
  CHECK(geo.beta_at(100, 0) == doctest::Approx(2.0 * std::pow(1.01, 100)));

  CHECK_THROWS_AS(Schedule::geometric(2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::geometric(2.0, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::geometric(-1.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(Schedule::beta_ramp(4.0, 0.0), std::invalid_argument);
}

TEST_CASE("single gaussian particle: MALA and RWM reproduce the exact moment") {
  // H = |z|^2, beta = 1, Lebesgue base: the target is exp(-|z|^2), so |z|^2
  // is a unit exponential with mean 1.
  auto m = make_model(1, 0, Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0);

  RunOptions mala_opt;
  mala_opt.proposal = ProposalKind::Mala;
  auto res_mala = run_chain(m, Schedule::fixed(1.0), 20000, 2, 11, mala_opt);
  CHECK(res_mala.burn_in == 4000);
  CHECK(res_mala.thin == 2);
  CHECK(res_mala.samples.size() == 16000);
  for (const auto& st : res_mala.stats) CHECK(st.used_mala);
  // adapted acceptance should sit near the MALA optimum
  CHECK(res_mala.acceptance > 0.4);
  CHECK(res_mala.acceptance < 0.75);
  CHECK(std::abs(mean_abs2(res_mala) - 1.0) < 0.05);

  RunOptions rwm_opt;
  rwm_opt.proposal = ProposalKind::Rwm;
  auto res_rwm = run_chain(m, Schedule::fixed(1.0), 20000, 2, 12, rwm_opt);
  for (const auto& st : res_rwm.stats) CHECK_FALSE(st.used_mala);
  CHECK(res_rwm.acceptance > 0.12);
  CHECK(res_rwm.acceptance < 0.4);
  CHECK(std::abs(mean_abs2(res_rwm) - 1.0) < 0.07);
}

TEST_CASE("reference-measure augmentation shifts the gaussian moment") {
  // Same Hamiltonian, but the base measure carries an extra exp(-|z|^2)
  // factor; the chain must sample exp(-2|z|^2), with E|z|^2 = 1/2.
  auto m = make_model(1, 0, Weight::quadratic(), BaseMeasure::gaussian(1.0), 1.0);
  auto res = run_chain(m, Schedule::fixed(1.0), 20000, 2, 13, RunOptions{});
  CHECK(std::abs(mean_abs2(res) - 0.5) < 0.04);
}

TEST_CASE("binned detailed balance on the real line") {
  // Stationary reversible chain: for any state partition, transition counts
  // between recorded samples must be symmetric up to sampling noise.
  auto m = make_model(1, 0, Weight::quadratic(), BaseMeasure::gaussian(1.0), 0.5,
                      ConfigMode::RealLine);
  RunOptions opt;
  opt.proposal = ProposalKind::Rwm;
  auto res = run_chain(m, Schedule::fixed(0.5), 30000, 1, 21, opt);

  const double edges[4] = {-0.6, -0.2, 0.2, 0.6};
  auto bin_of = [&](double x) {
    int b = 0;
    while (b < 4 && x > edges[b]) ++b;
    return b;
  };
  long long counts[5][5] = {};
  for (std::size_t i = 1; i < res.samples.size(); ++i) {
    const int a = bin_of(res.samples[i - 1].config.pts[0].real());
    const int b = bin_of(res.samples[i].config.pts[0].real());
    ++counts[a][b];
  }
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b) {
      const double tot = static_cast<double>(counts[a][b] + counts[b][a]);
      if (tot < 25) continue;
      const double z = std::abs(static_cast<double>(counts[a][b] - counts[b][a])) /
                       std::sqrt(tot);
      CHECK(z < 3.5);
    }
}

TEST_CASE("low-temperature ensemble concentrates on the uniform disc law") {
  // Quadratic field at beta = 50, k = 25: pooled radii follow the uniform
  // unit-disc radial law F(r) = r^2 up to finite-size effects.
  auto m = make_model(1, 25, Weight::quadratic(), BaseMeasure::lebesgue_c(), 50.0);
  auto res = run_chain(m, Schedule::fixed(50.0), 4000, 2, 31, RunOptions{});
  CHECK(res.acceptance > 0.3);
  auto radii = pooled_radii(res);
  CHECK(radii.size() == 2 * 3200 * 26);
  const double w1 = w1_vs_cdf(radii, [](double r) { return std::min(1.0, r * r); }, 0.0, 1.6);
  CHECK(w1 < 0.05);
}

TEST_CASE("high-temperature ensemble matches the crossover profile moment") {
  // beta = 0.1 with a gaussian base: the mean of |z|^2 should approach the
  // second moment of the vanishing-temperature crossover profile.
  auto m = make_model(1, 25, Weight::quadratic(), BaseMeasure::gaussian(1.0), 0.1);
  auto res = run_chain(m, Schedule::fixed(0.1), 24000, 3, 41, RunOptions{});
  auto prof = solve_cy_radial(Weight::quadratic(), BaseMeasure::gaussian(1.0), MfeOptions{});
  const double ref = profile_second_moment(prof);
  CHECK(ref == doctest::Approx(1.0).epsilon(1e-4));
  // The exact finite-size mean is (1 + beta (N-1) / (2k)) / (1 + beta), about
  // 4.5% below the vanishing-temperature value; the tolerance absorbs it.
  const double exact = (1.0 + 0.1 * 25.0 / 50.0) / 1.1;
  CHECK(std::abs(mean_abs2(res) - exact) / exact < 0.01);
  CHECK(std::abs(mean_abs2(res) - ref) / ref < 0.05);
}

TEST_CASE("worker count does not change the samples") {
  auto m = make_model(1, 8, Weight::quadratic(), BaseMeasure::gaussian(1.0), 5.0);
  RunOptions one;
  one.workers = 1;
  RunOptions three;
  three.workers = 3;
  auto a = run_chain(m, Schedule::fixed(5.0), 1200, 3, 77, one);
  auto b = run_chain(m, Schedule::fixed(5.0), 1200, 3, 77, three);
  REQUIRE(a.samples.size() == b.samples.size());
  REQUIRE(a.stats.size() == b.stats.size());
  // order records by (chain, sweep) before comparing
  auto key = [](const SampleRecord& r) { return std::make_pair(r.chain, r.sweep); };
  auto sa = a.samples, sb = b.samples;
  std::sort(sa.begin(), sa.end(),
            [&](const auto& l, const auto& r) { return key(l) < key(r); });
  std::sort(sb.begin(), sb.end(),
            [&](const auto& l, const auto& r) { return key(l) < key(r); });
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].chain == sb[i].chain);
    CHECK(sa[i].sweep == sb[i].sweep);
    REQUIRE(sa[i].config.pts.size() == sb[i].config.pts.size());
    for (std::size_t p = 0; p < sa[i].config.pts.size(); ++p) {
      CHECK(sa[i].config.pts[p].real() == sb[i].config.pts[p].real());
      CHECK(sa[i].config.pts[p].imag() == sb[i].config.pts[p].imag());
    }
  }
  for (std::size_t c = 0; c < a.stats.size(); ++c) {
    CHECK(a.stats[c].accepted == b.stats[c].accepted);
    CHECK(a.stats[c].proposed == b.stats[c].proposed);
    CHECK(a.stats[c].step == b.stats[c].step);
  }
}

TEST_CASE("circle-base chains use exact angle moves") {
  // k = 3 on the circle: the stationary law is exchangeable and rotation
  // invariant, so the mean angle-spacing statistic matches the uniform one.
  auto m = make_model(1, 3, Weight::quadratic(0.0), BaseMeasure::circle(), 4.0);
  auto res = run_chain(m, Schedule::fixed(4.0), 8000, 2, 51, RunOptions{});
  for (const auto& st : res.stats) CHECK_FALSE(st.used_mala);
  for (const auto& rec : res.samples)
    for (const cplx& z : rec.config.pts) CHECK(std::abs(std::abs(z) - 1.0) < 1e-12);
  // beta = 4 = 2 beta_c for the circular ensemble at k+1 points; spacings
  // repel, so the minimum gap should rarely be tiny.  Just sanity-check the
  // mean nearest gap against the rigid limit 2 pi / 4.
  KahanSum gap;
  long long cnt = 0;
  for (const auto& rec : res.samples) {
    std::vector<double> th;
    for (const cplx& z : rec.config.pts) th.push_back(std::arg(z));
    std::sort(th.begin(), th.end());
    double mn = 2.0 * kPi + th.front() - th.back();
    for (std::size_t i = 1; i < th.size(); ++i) mn = std::min(mn, th[i] - th[i - 1]);
    gap.add(mn);
    ++cnt;
  }
  const double mean_min_gap = gap.value() / static_cast<double>(cnt);
  CHECK(mean_min_gap > 0.3 * 2.0 * kPi / 4.0);
  CHECK(mean_min_gap < 2.0 * kPi / 4.0);
}

TEST_CASE("error paths: admissibility, bad init, step failure, MALA availability") {
  // definite admissibility failure is refused up front
  auto bad = make_model(1, 4, Weight::fubini_study(1.0), BaseMeasure::lebesgue_c(), 3.0);
  CHECK_THROWS_AS(run_chain(bad, Schedule::fixed(3.0), 1000, 1, 1, RunOptions{}),
                  std::invalid_argument);

  // initialization cannot reach the weight window
  auto stuck = make_model(1, 2, Weight::indicator_annulus(3.5, 4.0),
                          BaseMeasure::uniform_disc(1.0), 2.0);
  CHECK_THROWS_AS(run_chain(stuck, Schedule::fixed(2.0), 1000, 1, 2, RunOptions{}),
                  std::runtime_error);

  // frozen absurd step size with no burn-in: acceptance collapses
  auto simple = make_model(1, 0, Weight::quadratic(), BaseMeasure::lebesgue_c(), 5.0);
  RunOptions frozen;
  frozen.proposal = ProposalKind::Rwm;
  frozen.burn_in_frac = 0.0;
  frozen.init_step = 50.0;
  CHECK_THROWS_AS(run_chain(simple, Schedule::fixed(5.0), 2000, 1, 3, frozen),
                  std::runtime_error);

  // MALA cannot be forced when no usable gradient exists
  auto circle_model = make_model(1, 3, Weight::quadratic(0.0), BaseMeasure::circle(), 2.0);
  RunOptions want_mala;
  want_mala.proposal = ProposalKind::Mala;
  CHECK_THROWS_AS(run_chain(circle_model, Schedule::fixed(2.0), 1000, 1, 4, want_mala),
                  std::invalid_argument);
  auto lsc = make_model(1, 2, Weight::indicator_disc(1.0), BaseMeasure::uniform_disc(1.0), 2.0);
  CHECK_THROWS_AS(run_chain(lsc, Schedule::fixed(2.0), 1000, 1, 5, want_mala),
                  std::invalid_argument);

  CHECK_THROWS_AS(run_chain(simple, Schedule::fixed(5.0), 5, 1, 6, RunOptions{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_chain(simple, Schedule::fixed(5.0), 1000, 0, 7, RunOptions{}),
                  std::invalid_argument);
}

TEST_CASE("fekete: circle nodes are equidistant") {
  auto m = make_model(1, 4, Weight::quadratic(0.0), BaseMeasure::lebesgue_c(), kInf);
  FeketeOptions opt;
  opt.restarts = 2;
  opt.anneal_sweeps = 800;
  opt.polish_max_iter = 400;
  opt.exchange_candidates = 24;
  opt.exchange_rounds = 10;
  auto res = fekete_search(m, Carrier::circle(), opt, 5);
  REQUIRE(res.config.pts.size() == 5);
  std::vector<double> th;
  for (const cplx& z : res.config.pts) {
    CHECK(std::abs(std::abs(z) - 1.0) < 1e-12);
    th.push_back(std::arg(z));
  }
  std::sort(th.begin(), th.end());
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double gap = i == 0 ? 2.0 * kPi + th.front() - th.back() : th[i] - th[i - 1];
    CHECK(std::abs(gap - 2.0 * kPi / 5.0) < 1e-3);
  }
  // N equidistant nodes: |D|^2 = N^N, E = -log(N)/k
  CHECK(res.energy == doctest::Approx(-std::log(5.0) / 4.0).epsilon(1e-6));
  // polishing and exchange never increase the energy
  CHECK(res.energy <= res.energy_after_anneal + 1e-12);
}

TEST_CASE("fekete: interval nodes and arcsine statistics") {
  auto m3 = make_model(1, 2, Weight::quadratic(0.0), BaseMeasure::lebesgue_r(), kInf,
                       ConfigMode::RealLine);
  FeketeOptions opt;
  opt.restarts = 2;
  opt.anneal_sweeps = 600;
  opt.polish_max_iter = 800;
  opt.exchange_candidates = 24;
  opt.exchange_rounds = 10;
  auto res3 = fekete_search(m3, Carrier::interval(-1.0, 1.0), opt, 9);
  std::vector<double> xs;
  for (const cplx& z : res3.config.pts) {
    CHECK(z.imag() == 0.0);
    xs.push_back(z.real());
  }
  std::sort(xs.begin(), xs.end());
  REQUIRE(xs.size() == 3);
  CHECK(std::abs(xs[0] + 1.0) < 1e-6);
  CHECK(std::abs(xs[1]) < 1e-6);
  CHECK(std::abs(xs[2] - 1.0) < 1e-6);

  auto m11 = make_model(1, 10, Weight::quadratic(0.0), BaseMeasure::lebesgue_r(), kInf,
                        ConfigMode::RealLine);
  auto res11 = fekete_search(m11, Carrier::interval(-1.0, 1.0), opt, 10);
  std::vector<double> pts;
  for (const cplx& z : res11.config.pts) pts.push_back(z.real());
  const double w1 = w1_vs_cdf(
      pts, [](double x) { return 0.5 + std::asin(std::clamp(x, -1.0, 1.0)) / kPi; }, -1.0,
      1.0);
  CHECK(w1 < 0.08);
}

TEST_CASE("fekete: annealing alone already lands near the optimum on the circle") {
  auto m = make_model(1, 8, Weight::quadratic(0.0), BaseMeasure::lebesgue_c(), kInf);
  FeketeOptions opt;
  opt.restarts = 2;
  opt.anneal_sweeps = 1500;
  opt.polish_max_iter = 300;
  opt.exchange_candidates = 16;
  opt.exchange_rounds = 6;
  auto res = fekete_search(m, Carrier::circle(), opt, 17);
  const double exact = -std::log(9.0) / 8.0;
  CHECK(res.energy == doctest::Approx(exact).epsilon(1e-6));
  CHECK(std::abs(res.energy_after_anneal - res.energy) < 0.01 * std::abs(res.energy));
}

TEST_CASE("fekete: validation") {
  auto finite_beta = make_model(1, 4, Weight::quadratic(), BaseMeasure::lebesgue_c(), 3.0);
  CHECK_THROWS_AS(fekete_search(finite_beta, Carrier::circle(), FeketeOptions{}, 1),
                  std::invalid_argument);
  auto wrong_mode = make_model(1, 2, Weight::quadratic(0.0), BaseMeasure::lebesgue_c(), kInf);
  CHECK_THROWS_AS(fekete_search(wrong_mode, Carrier::interval(-1.0, 1.0), FeketeOptions{}, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(Carrier::interval(1.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(Carrier::disc(-2.0), std::invalid_argument);
  CHECK(Carrier::interval(-1.0, 1.0).describe() == "interval[-1,1]");
}
