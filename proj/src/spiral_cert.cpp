#include "shadowlab/spiral_cert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "shadowlab/errors.hpp"
#include "shadowlab/parallel.hpp"
#include "shadowlab/rng.hpp"

namespace shadowlab {

namespace {

constexpr double kResidualMarginFactor = 1e-6;

struct Trial {
  double d = 0.0;
  Vec x0, x1;
  std::vector<double> slopes;
  bool admissible = false;
  double deviation = 0.0;
  double residual = 0.0;
};

int point_dim(CertKind kind) { return kind == CertKind::Spiral2D ? 2 : 1; }

Vec flow_at(const CertParams& p, double t, const Vec& x) {
  double growth = std::exp(p.a * t);
  if (p.kind == CertKind::Line1D) return growth * x;
  double c = std::cos(p.b * t), s = std::sin(p.b * t);
  Vec y(2);
  y << growth * (c * x(0) - s * x(1)), growth * (s * x(0) + c * x(1));
  return y;
}

double deviation_of(const CertParams& p, const Vec& x0, const Vec& x1) {
  if (p.kind == CertKind::Line1D) return std::abs(x1(0) - x0(0)) / std::abs(x0(0));
  double delta = std::atan2(x1(1), x1(0)) - std::atan2(x0(1), x0(0));
  delta = std::abs(std::remainder(delta, 2.0 * std::numbers::pi));
  return delta;
}

PiecewiseLinearRepar make_repar(const CertCandidate& cand, const std::vector<double>& slopes) {
  std::vector<double> breaks(slopes.size());
  double seg = cand.T / static_cast<double>(slopes.size());
  for (std::size_t i = 0; i < breaks.size(); ++i) breaks[i] = seg * static_cast<double>(i);
  return PiecewiseLinearRepar(breaks, slopes);
}

// Residual of the pair over [0, T]; returns early once the bound is exceeded.
// Sweeps the grid from T downward because expansion makes late probes the
// most likely to exceed, so rejected pairs exit almost immediately.
double residual_of(const CertParams& p, const CertCandidate& cand, const Trial& trial,
                   double bail_above) {
  PiecewiseLinearRepar h = make_repar(cand, trial.slopes);
  double step = cand.d0 / 4.0;
  auto steps = static_cast<long>(std::ceil(cand.T / step));
  double worst = 0.0;
  for (long k = steps; k >= 0; --k) {
    double t = std::min(step * static_cast<double>(k), cand.T);
    double val = (flow_at(p, t, trial.x0) - flow_at(p, h.eval(t), trial.x1)).norm();
    worst = std::max(worst, val);
    if (worst >= bail_above) break;
  }
  return worst;
}

void evaluate(const CertParams& p, const CertCandidate& cand, Trial& trial) {
  double bound = p.L * trial.d * (1.0 - kResidualMarginFactor);
  trial.residual = residual_of(p, cand, trial, bound);
  trial.admissible = trial.x0.norm() >= trial.d && trial.residual < bound;
  trial.deviation = trial.admissible ? deviation_of(p, trial.x0, trial.x1) : 0.0;
}

Vec unit_direction(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (dim == 1) return Vec::Constant(1, unif(rng) < 0.5 ? -1.0 : 1.0);
  double angle = 2.0 * std::numbers::pi * unif(rng);
  Vec v(2);
  v << std::cos(angle), std::sin(angle);
  return v;
}

Trial draw_trial(const CertParams& p, const CertCandidate& cand, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Trial trial;
  trial.d = unif(rng) < 0.7 ? cand.d0 * (1.0 - 1e-9) : cand.d0 * std::max(unif(rng), 1e-6);

  int dim = point_dim(p.kind);
  double r0 = unif(rng) < 0.5 ? trial.d : trial.d * std::exp(unif(rng) * std::log(50.0));
  trial.x0 = r0 * unit_direction(rng, dim);

  double cap = p.L * trial.d;
  double m = unif(rng) < 0.5 ? cap * (0.3 + 0.699 * unif(rng)) : cap * unif(rng) * 0.999;
  trial.x1 = trial.x0 + m * unit_direction(rng, dim);

  double span = p.L * trial.d * 0.999;
  double lo = std::max(1.0 - span, 1e-6), hi = 1.0 + span;
  trial.slopes.resize(16);
  double mode = unif(rng);
  for (double& s : trial.slopes) {
    if (mode < 0.25)
      s = hi;
    else if (mode < 0.5)
      s = lo;
    else
      s = lo + (hi - lo) * unif(rng);
  }
  return trial;
}

void refine_trial(const CertParams& p, const CertCandidate& cand, Trial& trial,
                  std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double span = p.L * trial.d * 0.999;
  double lo = std::max(1.0 - span, 1e-6), hi = 1.0 + span;
  for (int it = 0; it < 60; ++it) {
    double scale = std::pow(0.5, it / 10.0);
    Trial next = trial;
    if (unif(rng) < 0.7)
      next.x1 += (0.1 * p.L * trial.d * scale) * unit_direction(rng, point_dim(p.kind));
    if (unif(rng) < 0.7) {
      for (double& s : next.slopes)
        s = std::clamp(s + 0.2 * span * scale * gauss(rng), lo, hi);
    }
    evaluate(p, cand, next);
    if (next.admissible && next.deviation > trial.deviation) trial = next;
  }
}

void check_params(const CertParams& p) {
  if (!(p.a > 0.0)) throw ModelError("certificate: expansion rate must be positive");
  if (p.kind == CertKind::Spiral2D && p.b == 0.0)
    throw ModelError("certificate: spiral needs a nonzero angular rate");
  if (!(p.eps > 0.0 && p.L > 0.0)) throw ModelError("certificate: eps and L must be positive");
}

}  // namespace

const char* to_string(CertKind kind) {
  return kind == CertKind::Spiral2D ? "spiral2d" : "line1d";
}

CertCandidate cert_estimate(const CertParams& params) {
  check_params(params);
  CertCandidate cand;
  cand.T = std::log(8.0 * params.L / std::min(params.eps, 1.0)) / params.a + 1.0;
  double b_weight = params.kind == CertKind::Spiral2D ? std::abs(params.b) + 1.0 : 1.0;
  cand.d0 = std::min(params.eps / (8.0 * b_weight * params.L * cand.T), 0.1);
  return cand;
}

CertValidation cert_validate(const CertParams& params, const CertCandidate& candidate, long trials,
                             std::uint64_t seed, int workers) {
  check_params(params);
  if (!(candidate.T > 0.0 && candidate.d0 > 0.0))
    throw ModelError("certificate: candidate window and threshold must be positive");
  if (trials < 1) throw ModelError("certificate: need at least one trial");

  auto count = static_cast<std::size_t>(trials);
  std::vector<double> deviations(count, -1.0);  // negative = inadmissible
  parallel_for(count, workers, [&](std::size_t i) {
    auto rng = derive_stream(seed, i);
    Trial trial = draw_trial(params, candidate, rng);
    evaluate(params, candidate, trial);
    if (trial.admissible) deviations[i] = trial.deviation;
  });

  CertValidation result;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < count; ++i) {
    if (deviations[i] >= 0.0) {
      ++result.admissible;
      order.push_back(i);
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (deviations[a] != deviations[b]) return deviations[a] > deviations[b];
    return a < b;
  });
  if (order.size() > 200) order.resize(200);

  std::vector<Trial> refined(order.size());
  parallel_for(order.size(), workers, [&](std::size_t rank) {
    auto rng = derive_stream(seed, order[rank]);
    Trial trial = draw_trial(params, candidate, rng);
    evaluate(params, candidate, trial);
    auto refine_rng = derive_stream(seed, count + order[rank]);
    refine_trial(params, candidate, trial, refine_rng);
    refined[rank] = std::move(trial);
  });

  long best_trial = -1;
  double best_dev = -1.0;
  const Trial* best = nullptr;
  for (std::size_t rank = 0; rank < refined.size(); ++rank) {
    const Trial& t = refined[rank];
    auto idx = static_cast<long>(order[rank]);
    if (t.admissible && (t.deviation > best_dev || (t.deviation == best_dev && idx < best_trial))) {
      best_dev = t.deviation;
      best_trial = idx;
      best = &t;
    }
  }
  if (best != nullptr) {
    result.worst.x0 = best->x0;
    result.worst.x1 = best->x1;
    result.worst.h = make_repar(candidate, best->slopes);
    result.worst.d = best->d;
    result.worst.deviation = best->deviation;
    result.worst.residual =
        residual_of(params, candidate, *best, std::numeric_limits<double>::infinity());
    result.worst.trial = best_trial;
  }
  result.pass = best_dev < params.eps;
  return result;
}

SpiralCertificate cert_search(const CertParams& params, long trials, std::uint64_t seed,
                              int workers) {
  CertCandidate cand = cert_estimate(params);
  for (int escalation = 0; escalation <= 8; ++escalation) {
    CertValidation val = cert_validate(params, cand, trials, seed, workers);
    if (val.pass) {
      SpiralCertificate cert;
      cert.params = params;
      cert.T = cand.T;
      cert.d0 = cand.d0;
      cert.trials = trials;
      cert.worst = val.worst.deviation;
      cert.seed = seed;
      cert.escalations = escalation;
      return cert;
    }
    cand.T *= 2.0;
    cand.d0 *= 0.5;
  }
  throw CertificationError("certificate search exhausted its escalation budget");
}

nlohmann::json cert_to_json(const SpiralCertificate& cert) {
  return nlohmann::json{{"kind", to_string(cert.params.kind)},
                        {"a", cert.params.a},
                        {"b", cert.params.kind == CertKind::Spiral2D ? cert.params.b : 0.0},
                        {"eps", cert.params.eps},
                        {"L", cert.params.L},
                        {"T", cert.T},
                        {"d0", cert.d0},
                        {"trials", cert.trials},
                        {"worst", cert.worst},
                        {"seed", cert.seed},
                        {"escalations", cert.escalations}};
}

nlohmann::json violation_to_json(const ViolationRecord& record) {
  return nlohmann::json{
      {"x0", std::vector<double>(record.x0.data(), record.x0.data() + record.x0.size())},
      {"x1", std::vector<double>(record.x1.data(), record.x1.data() + record.x1.size())},
      {"h", nlohmann::json::parse(rep_to_json(record.h))},
      {"d", record.d},
      {"deviation", record.deviation},
      {"residual", record.residual},
      {"trial", record.trial}};
}

}  // namespace shadowlab
