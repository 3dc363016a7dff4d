#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "shadowlab/errors.hpp"
#include "shadowlab/repar.hpp"
#include "shadowlab/rng.hpp"

using namespace shadowlab;

namespace {

// Sampling estimate of the class: difference quotients over grid pairs,
// with segment midpoints included so every slope is hit exactly.
double sampled_class(const PiecewiseLinearRepar& h) {
  std::vector<double> ts = h.breakpoints();
  for (std::size_t i = 0; i + 1 < h.breakpoints().size(); ++i) {
    ts.push_back(0.5 * (h.breakpoints()[i] + h.breakpoints()[i + 1]));
  }
  ts.push_back(h.breakpoints().front() - 1.0);
  ts.push_back(h.breakpoints().back() + 1.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    for (std::size_t j = i + 1; j < ts.size(); ++j) {
      if (ts[i] == ts[j]) continue;
      double q = (h.eval(ts[j]) - h.eval(ts[i])) / (ts[j] - ts[i]);
      worst = std::max(worst, std::abs(q - 1.0));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("identity and anchoring") {
  PiecewiseLinearRepar id;
  CHECK(id.eval(0.0) == 0.0);
  CHECK(id.eval(2.5) == 2.5);
  CHECK(id.min_class() == 0.0);

  PiecewiseLinearRepar h({-1.0, 0.0, 1.0}, {0.5, 2.0, 1.5});
  CHECK(h.eval(0.0) == 0.0);
  CHECK(h.eval(0.5) == doctest::Approx(1.0));     // slope 2 on [0, 1)
  CHECK(h.eval(1.5) == doctest::Approx(2.75));    // h(1) = 2, then slope 1.5
  CHECK(h.eval(-0.5) == doctest::Approx(-0.25));  // slope 0.5 on [-1, 0)
  CHECK(h.eval(-1.5) == doctest::Approx(-0.75));  // first slope extends left
  CHECK(h.min_class() == doctest::Approx(1.0));
  CHECK(h.in_class(1.0));
  CHECK(!h.in_class(0.9));
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(PiecewiseLinearRepar({1.0, 2.0}, {1.0, 1.0}), ModelError);   // no zero
  CHECK_THROWS_AS(PiecewiseLinearRepar({0.0, 1.0}, {1.0}), ModelError);        // size mismatch
  CHECK_THROWS_AS(PiecewiseLinearRepar({0.0, 1.0}, {1.0, -0.5}), ModelError);  // negative slope
  CHECK_THROWS_AS(PiecewiseLinearRepar({1.0, 0.0}, {1.0, 1.0}), ModelError);   // not increasing
}

TEST_CASE("min_class agrees with dense pair sampling") {
  auto rng = derive_stream(21, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_real_distribution<double> cls(0.0, 0.7);
    PiecewiseLinearRepar h = rep_random(cls(rng), -4.0, 4.0, 1.0, rng);
    CHECK(std::abs(h.min_class() - sampled_class(h)) <= 1e-12);
  }
}

TEST_CASE("composition and inverse respect the class algebra") {
  auto rng = derive_stream(22, 0);
  std::uniform_real_distribution<double> cls(0.0, 0.5);
  std::uniform_real_distribution<double> probe(-6.0, 6.0);
  for (int trial = 0; trial < 500; ++trial) {
    double a1 = cls(rng), a2 = cls(rng);
    PiecewiseLinearRepar h1 = rep_random(a1, -4.0, 4.0, 0.5, rng);
    PiecewiseLinearRepar h2 = rep_random(a2, -4.0, 4.0, 0.5, rng);

    PiecewiseLinearRepar both = rep_compose(h1, h2);
    CHECK(both.min_class() <= a1 + a2 + a1 * a2 + 1e-12);
    for (int k = 0; k < 8; ++k) {
      double t = probe(rng);
      CHECK(both.eval(t) == doctest::Approx(h1.eval(h2.eval(t))).epsilon(1e-12));
    }

    PiecewiseLinearRepar inv = rep_invert(h1);
    CHECK(inv.min_class() <= a1 / (1.0 - a1) + 1e-12);
    for (int k = 0; k < 8; ++k) {
      double t = probe(rng);
      CHECK(inv.eval(h1.eval(t)) == doctest::Approx(t).epsilon(1e-12));
    }
  }
}

TEST_CASE("random representatives live in their class") {
  auto rng = derive_stream(23, 0);
  for (int trial = 0; trial < 100; ++trial) {
    PiecewiseLinearRepar h = rep_random(0.3, -2.0, 6.0, 1.0, rng);
    CHECK(h.in_class(0.3));
    CHECK(h.eval(0.0) == 0.0);
    CHECK(h.breakpoints().front() <= -2.0);
    CHECK(h.breakpoints().back() >= 6.0 - 1.0);
  }
}

TEST_CASE("json round trip") {
  auto rng = derive_stream(24, 0);
  PiecewiseLinearRepar h = rep_random(0.4, -3.0, 3.0, 1.0, rng);
  PiecewiseLinearRepar back = rep_from_json(rep_to_json(h));
  REQUIRE(back.breakpoints().size() == h.breakpoints().size());
  for (double t : {-5.0, -1.3, 0.0, 0.7, 2.9, 8.0}) {
    CHECK(back.eval(t) == doctest::Approx(h.eval(t)).epsilon(1e-14));
  }
}
