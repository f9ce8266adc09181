#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "feklab/weights.hpp"

using namespace feklab;

TEST_CASE("weight evaluation presets") {
  cplx z(3.0, 4.0);  // |z|^2 = 25
  CHECK(Weight::quadratic()(z) == doctest::Approx(25.0));
  CHECK(Weight::half_quadratic()(z) == doctest::Approx(12.5));
  CHECK(Weight::fubini_study(2.0)(z) == doctest::Approx(2.0 * std::log(26.0)));
  CHECK(Weight::torus_log()(z) == doctest::Approx(std::log(25.0)));
  cplx in(0.5, 0.0);
  CHECK(Weight::torus_log()(in) == 0.0);
  CHECK(Weight::indicator_disc(1.0)(in) == 0.0);
  CHECK(Weight::indicator_disc(1.0)(z) == kInf);
}

TEST_CASE("torus-log on C^2 takes the max over coordinates") {
  Weight w = Weight::torus_log();
  cplx z[2] = {{2.0, 0.0}, {0.5, 0.0}};
  CHECK(w(z, 2) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("weight gradients match finite differences") {
  const double h = 1e-6;
  std::vector<Weight> ws = {Weight::quadratic(1.3), Weight::half_quadratic(), Weight::fubini_study(0.7),
                            Weight::torus_log()};
  ws.push_back(Weight::custom_radial({-10, -5, 0, 5, 10}, {0.0, 0.1, 1.0, 40.0, 900.0}, 2.0));
  for (const auto& w : ws) {
    cplx z(1.4, -0.6);
    auto g = w.gradient(&z, 1);
    REQUIRE(g.has_value());
    for (int part = 0; part < 2; ++part) {
      cplx zp = z + (part == 0 ? cplx(h, 0) : cplx(0, h));
      cplx zm = z - (part == 0 ? cplx(h, 0) : cplx(0, h));
      const double fd = (w(zp) - w(zm)) / (2 * h);
      CHECK((*g)[part] == doctest::Approx(fd).epsilon(1e-4));
    }
  }
}

TEST_CASE("admissibility classifier") {
  auto v1 = admissibility_check(Weight::quadratic(), BaseMeasure::lebesgue_c(), 1.0, 1);
  CHECK(v1.ok());
  CHECK(v1.epsilon == 0.5);

  // slope exactly 1: fails for every beta
  auto v2 = admissibility_check(Weight::fubini_study(1.0), BaseMeasure::lebesgue_c(), 100.0, 1);
  CHECK(v2.status == AdmissibilityStatus::FailsGrowth);

  // slope 2 at beta=2, n=1: needs > 1.5 + eps, so eps=0.5 is borderline-out,
  // eps=0.1 passes
  auto v3 = admissibility_check(Weight::fubini_study(2.0), BaseMeasure::lebesgue_c(), 2.0, 1);
  CHECK(v3.ok());
  CHECK(v3.epsilon == 0.1);

  // Gaussian reference decay rescues any polynomially bounded weight
  auto v4 = admissibility_check(Weight::fubini_study(1.0), BaseMeasure::gaussian(), 0.1, 1);
  CHECK(v4.ok());
  CHECK(v4.epsilon == 0.5);

  // custom profile without a declared tail cannot be classified
  auto w = Weight::custom_radial({-1, 0, 1}, {0, 0, 1});
  auto v5 = admissibility_check(w, BaseMeasure::lebesgue_c(), 1.0, 1);
  CHECK(v5.status == AdmissibilityStatus::CannotClassify);

  // beta = +inf only needs slope > 1 + eps
  auto v6 = admissibility_check(Weight::fubini_study(2.0), BaseMeasure::lebesgue_c(), kInf, 1);
  CHECK(v6.ok());
  CHECK(v6.epsilon == 0.5);
}

TEST_CASE("extremal envelope: quadratic weight") {
  auto grid = linspace(-12.0, 12.0, 4001);
  auto prof = weighted_extremal_radial(Weight::quadratic(), grid);
  // psi = |z|^2 for |z| <= 1, 1 + log|z|^2 beyond
  double worst = 0;
  for (int i = 0; i < prof.size(); ++i) {
    const double s = prof.s[i];
    const double want = s <= 0.0 ? std::exp(s) : 1.0 + s;
    worst = std::max(worst, std::abs(prof.psi[i] - want));
  }
  CHECK(worst < 1e-4);
  CHECK(prof.m.front() == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(prof.m.back() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prof.total_mass() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("extremal envelope: indicator weights") {
  auto grid = linspace(-12.0, 12.0, 2401);
  auto disc = weighted_extremal_radial(Weight::indicator_disc(1.0), grid);
  for (int i = 0; i < disc.size(); ++i) {
    CHECK(disc.psi[i] == doctest::Approx(std::max(0.0, disc.s[i])).epsilon(1e-12));
  }
  // annulus [0.5, 2]: the hole is invisible; ray starts at log 4
  auto ann = weighted_extremal_radial(Weight::indicator_annulus(0.5, 2.0), grid);
  const double s1 = 2.0 * std::log(2.0);
  for (int i = 0; i < ann.size(); ++i) {
    const double want = std::max(0.0, ann.s[i] - s1);
    CHECK(std::abs(ann.psi[i] - want) < 2e-2 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("extremal envelope: torus-log is a fixed point") {
  auto grid = linspace(-8.0, 8.0, 1601);
  auto prof = weighted_extremal_radial(Weight::torus_log(), grid);
  for (int i = 0; i < prof.size(); ++i)
    CHECK(prof.psi[i] == doctest::Approx(std::max(0.0, prof.s[i])).epsilon(1e-13));
}

TEST_CASE("envelope contact carries all the mass") {
  auto grid = linspace(-10.0, 10.0, 2001);
  for (const Weight& w : {Weight::quadratic(), Weight::half_quadratic(2.0), Weight::indicator_annulus(0.7, 1.8)}) {
    auto prof = weighted_extremal_radial(w, grid);
    for (int i = 1; i + 1 < prof.size(); ++i) {
      if (prof.node_mass(i) > 1e-12) {
        CHECK(std::abs(prof.psi[i] - w.radial_hat(prof.s[i])) <= 1e-8);
      }
    }
  }
}

TEST_CASE("envelope dominates and is dominated correctly") {
  auto grid = linspace(-9.0, 9.0, 1801);
  auto prof = weighted_extremal_radial(Weight::quadratic(0.7), grid);
  for (int i = 0; i < prof.size(); ++i) {
    CHECK(prof.psi[i] <= prof.s[i] * 0 + Weight::quadratic(0.7).radial_hat(prof.s[i]) + 1e-12);
    if (i) CHECK(prof.m[i - 1] >= -1e-15);  // convex, nondecreasing slopes
    if (i) CHECK(prof.m[i - 1] <= 1.0 + 1e-15);
  }
  for (int i = 2; i < prof.size(); ++i) CHECK(prof.m[i - 1] + 5e-13 >= prof.m[i - 2]);
}

TEST_CASE("base measure densities and radial pushforwards") {
  auto leb = BaseMeasure::lebesgue_c();
  CHECK(leb.radial_log_w(0.3) == doctest::Approx(std::log(3.141592653589793) + 0.3));
  auto g = BaseMeasure::gaussian(1.0);
  // integral of w(s) ds over R should be ~1 (probability)
  double acc = 0;
  auto grid = linspace(-30.0, 5.0, 20001);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double mid = 0.5 * (grid[i] + grid[i - 1]);
    acc += std::exp(g.radial_log_w(mid)) * (grid[i] - grid[i - 1]);
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
  cplx z(0.5, 0.5);
  CHECK(g.log_density(z) == doctest::Approx(-0.5 - std::log(3.141592653589793)));
  auto disc = BaseMeasure::uniform_disc(2.0);
  CHECK(std::exp(disc.log_density(z)) == doctest::Approx(1.0 / (3.141592653589793 * 4.0)));
  CHECK(disc.log_density(cplx(3.0, 0.0)) == -kInf);
}

TEST_CASE("base measure sampling second moments") {
  auto eng0 = std::mt19937_64(12345);
  auto g = BaseMeasure::gaussian(1.0);
  double m2 = 0;
  const int S = 200000;
  for (int i = 0; i < S; ++i) m2 += std::norm(g.sample_point(eng0));
  CHECK(m2 / S == doctest::Approx(1.0).epsilon(0.01));  // E|z|^2 = sigma^2

  auto d = BaseMeasure::uniform_disc(1.0);
  double m2d = 0;
  for (int i = 0; i < S; ++i) m2d += std::norm(d.sample_point(eng0));
  CHECK(m2d / S == doctest::Approx(0.5).epsilon(0.02));  // E r^2 = R^2/2
}
