#include <cmath>
#include <numbers>
#include <string>

#include "doctest.h"
#include "shadowlab/errors.hpp"
#include "shadowlab/repar.hpp"
#include "shadowlab/spiral_cert.hpp"

using namespace shadowlab;

namespace {

CertParams spiral_params() {
  CertParams p;
  p.kind = CertKind::Spiral2D;
  p.a = 1.0;
  p.b = 1.0;
  p.eps = std::numbers::pi / 4.0;
  p.L = 2.0;
  return p;
}

Vec spiral_at(const CertParams& p, double t, const Vec& x) {
  double growth = std::exp(p.a * t);
  double c = std::cos(p.b * t), s = std::sin(p.b * t);
  Vec y(2);
  y << growth * (c * x(0) - s * x(1)), growth * (s * x(0) + c * x(1));
  return y;
}

double spiral_deviation(const Vec& x0, const Vec& x1) {
  double delta = std::atan2(x1(1), x1(0)) - std::atan2(x0(1), x0(0));
  return std::abs(std::remainder(delta, 2.0 * std::numbers::pi));
}

double recompute_residual(const CertParams& p, const CertCandidate& cand,
                          const ViolationRecord& record) {
  double step = cand.d0 / 4.0;
  auto steps = static_cast<long>(std::ceil(cand.T / step));
  double worst = 0.0;
  for (long k = 0; k <= steps; ++k) {
    double t = std::min(step * static_cast<double>(k), cand.T);
    double val = (spiral_at(p, t, record.x0) - spiral_at(p, record.h.eval(t), record.x1)).norm();
    worst = std::max(worst, val);
  }
  return worst;
}

}  // namespace

TEST_CASE("estimate reproduces its closed form") {
  CertParams p = spiral_params();
  CertCandidate cand = cert_estimate(p);
  double expected_T = std::log(8.0 * p.L / std::min(p.eps, 1.0)) / p.a + 1.0;
  CHECK(cand.T == doctest::Approx(expected_T));
  CHECK(cand.d0 == doctest::Approx(std::min(p.eps / (8.0 * 2.0 * p.L * cand.T), 0.1)));

  CertParams line;
  line.kind = CertKind::Line1D;
  line.a = 0.5;
  line.eps = 0.5;
  line.L = 1.0;
  CertCandidate lc = cert_estimate(line);
  CHECK(lc.T == doctest::Approx(std::log(8.0 * line.L / 0.5) / 0.5 + 1.0));
  CHECK(lc.d0 == doctest::Approx(std::min(line.eps / (8.0 * line.L * lc.T), 0.1)));
}

TEST_CASE("parameters are validated") {
  CertParams p = spiral_params();
  p.a = -1.0;
  CHECK_THROWS_AS(cert_estimate(p), ModelError);
  p = spiral_params();
  p.b = 0.0;
  CHECK_THROWS_AS(cert_estimate(p), ModelError);
  p = spiral_params();
  p.eps = 0.0;
  CHECK_THROWS_AS(cert_estimate(p), ModelError);

  p = spiral_params();
  CertCandidate cand = cert_estimate(p);
  CHECK_THROWS_AS(cert_validate(p, CertCandidate{0.0, 0.1}, 10, 1), ModelError);
  CHECK_THROWS_AS(cert_validate(p, cand, 0, 1), ModelError);
}

TEST_CASE("estimated candidate survives adversarial validation") {
  CertParams p = spiral_params();
  CertCandidate cand = cert_estimate(p);
  CertValidation val = cert_validate(p, cand, 2000, 11);
  CHECK(val.pass);
  CHECK(val.admissible > 0);
  CHECK(val.worst.deviation < p.eps);
}

TEST_CASE("validation is deterministic in the seed") {
  CertParams p = spiral_params();
  CertCandidate cand = cert_estimate(p);
  CertValidation a = cert_validate(p, cand, 500, 3);
  CertValidation b = cert_validate(p, cand, 500, 3);
  CHECK(a.admissible == b.admissible);
  CHECK(a.worst.deviation == b.worst.deviation);
  CHECK(a.worst.trial == b.worst.trial);
}

TEST_CASE("a short window is refuted by an admissible violation") {
  CertParams p = spiral_params();
  CertCandidate cand = cert_estimate(p);
  cand.T = 0.1;
  CertValidation val = cert_validate(p, cand, 2000, 17);

  REQUIRE(!val.pass);
  REQUIRE(val.worst.trial >= 0);
  const ViolationRecord& worst = val.worst;
  CHECK(worst.deviation >= p.eps);

  // The record must satisfy every lemma hypothesis when rechecked from
  // scratch: a genuine pair of orbits, a genuine reparametrization of the
  // stated class, and a residual inside the budget on the stated grid.
  CHECK(worst.x0.norm() >= worst.d);
  CHECK(worst.h.min_class() <= p.L * worst.d);
  CHECK(worst.h.eval(0.0) == 0.0);
  CHECK(spiral_deviation(worst.x0, worst.x1) == doctest::Approx(worst.deviation));
  double residual = recompute_residual(p, cand, worst);
  CHECK(residual == doctest::Approx(worst.residual).epsilon(1e-9));
  CHECK(residual < p.L * worst.d);
}

TEST_CASE("search returns the estimate when it validates") {
  CertParams p = spiral_params();
  CertCandidate est = cert_estimate(p);
  SpiralCertificate cert = cert_search(p, 2000, 11);
  CHECK(cert.escalations == 0);
  CHECK(cert.T == doctest::Approx(est.T));
  CHECK(cert.d0 == doctest::Approx(est.d0));
  CHECK(cert.worst < p.eps);
  CHECK(cert.trials == 2000);
  CHECK(cert.seed == 11);
}

TEST_CASE("search certifies the one-dimensional line") {
  CertParams p;
  p.kind = CertKind::Line1D;
  p.a = 1.0;
  p.eps = 0.5;
  p.L = 1.0;
  SpiralCertificate cert = cert_search(p, 2000, 23);
  CHECK(cert.worst < p.eps);
}

TEST_CASE("certificates and violations serialize with stable keys") {
  CertParams p = spiral_params();
  SpiralCertificate cert = cert_search(p, 500, 29);
  auto j = cert_to_json(cert);
  for (const char* key : {"kind", "a", "b", "eps", "L", "T", "d0", "trials", "worst", "seed",
                          "escalations"}) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(j["kind"] == "spiral2d");

  CertCandidate cand = cert_estimate(p);
  cand.T = 0.1;
  CertValidation val = cert_validate(p, cand, 1000, 31);
  REQUIRE(val.worst.trial >= 0);
  auto v = violation_to_json(val.worst);
  for (const char* key : {"x0", "x1", "h", "d", "deviation", "residual", "trial"}) {
    CAPTURE(key);
    CHECK(v.contains(key));
  }
  PiecewiseLinearRepar h = rep_from_json(v["h"].dump());
  CHECK(h.eval(0.05) == doctest::Approx(val.worst.h.eval(0.05)));
}

TEST_CASE("kind names are stable") {
  CHECK(std::string(to_string(CertKind::Spiral2D)) == "spiral2d");
  CHECK(std::string(to_string(CertKind::Line1D)) == "line1d");
}
