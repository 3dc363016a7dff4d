#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "shadowlab/block_flow.hpp"
#include "shadowlab/repar.hpp"

namespace shadowlab {

enum class CertKind { Spiral2D, Line1D };
const char* to_string(CertKind kind);

// Certified statement: for the planar spiral x' = (a I + b J) x (or the line
// x' = a x), any two points that shadow each other within L*d for time T
// under a Rep(L*d) reparametrization, with |x0| >= d <= d0, start out with
// deviation below eps. Deviation is the arc distance between arguments on the
// circle for spirals, and the relative difference |x1 - x0| / |x0| in 1D.
struct CertParams {
  CertKind kind = CertKind::Spiral2D;
  double a = 1.0;  // radial expansion rate, must be positive
  double b = 1.0;  // angular rate, nonzero for spirals, ignored in 1D
  double eps = 0.5;
  double L = 1.0;
};

struct CertCandidate {
  double T = 0.0;
  double d0 = 0.0;
};

// Closed-form candidate: window long enough that radial expansion dominates
// the allowed tracking error, threshold small enough that the accumulated
// time slip L*d*T keeps the angular drift below eps.
CertCandidate cert_estimate(const CertParams& params);

struct ViolationRecord {
  Vec x0, x1;
  PiecewiseLinearRepar h;
  double d = 0.0;
  double deviation = 0.0;
  double residual = 0.0;
  long trial = -1;
};

struct CertValidation {
  bool pass = false;
  ViolationRecord worst;  // largest admissible deviation observed
  long admissible = 0;    // trials that satisfied all hypotheses
};

// Adversarial validation: seeded random trials drawing (d, x0, x1, h), each
// filtered through the lemma hypotheses (residual < L*d on a grid of step
// d0/4 over [0, T] with strict margin, |x0| >= d, h in Rep(L*d)), followed by
// local refinement of the strongest candidates over (x1, slopes).
CertValidation cert_validate(const CertParams& params, const CertCandidate& candidate, long trials,
                             std::uint64_t seed, int workers = 0);

struct SpiralCertificate {
  CertParams params;
  double T = 0.0;
  double d0 = 0.0;
  long trials = 0;
  double worst = 0.0;
  std::uint64_t seed = 0;
  int escalations = 0;
};

// Starts from cert_estimate and escalates (T doubled, d0 halved) until
// validation passes; throws CertificationError after 8 escalations.
SpiralCertificate cert_search(const CertParams& params, long trials, std::uint64_t seed,
                              int workers = 0);

nlohmann::json cert_to_json(const SpiralCertificate& cert);
nlohmann::json violation_to_json(const ViolationRecord& record);

}  // namespace shadowlab
