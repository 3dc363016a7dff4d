#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowlab/glued_flow.hpp"
#include "shadowlab/pseudotrajectory.hpp"
#include "shadowlab/repar.hpp"

namespace shadowlab {

struct Window {
  double t_lo = 0.0;
  double t_hi = 0.0;
};

inline Window full_window(const Pseudotrajectory& g) { return {g.t0, g.t_end()}; }

// Supremum over the probe grid t0 + k*(g.dt/8), restricted to the window, of
// dist(phi(h(t), p0), g(t)). The candidate trajectory leaving the flow's
// domain makes the value kMaxDistance. Stops early once the running maximum
// reaches `early_exit`; the result is then only a lower bound, but a lower
// bound already at or above the cutoff.
double residual(const Flow& flow, const Pseudotrajectory& g, const State& p0,
                const PiecewiseLinearRepar& h, Window window, double early_exit = kMaxDistance);

struct ShadowingResult {
  double best_eps = kMaxDistance;
  State p_star;         // decoded best candidate at t = 0
  Vec p_star_params;    // raw point parameters (section offsets or coordinates)
  PiecewiseLinearRepar h_star;
  double class_a = 0.0;
  std::optional<double> feasible_at;  // the target, when one was given and met
  int starts = 0;
  long budget = 0;
  std::uint64_t seed = 0;
};

struct SearchOptions {
  int starts = 64;
  long budget = 20000;  // residual evaluations per start
  std::uint64_t seed = 0;
  int workers = 0;
  std::optional<double> target;   // per-start early stop once best <= target
  std::vector<Vec> extra_seeds;   // full parameter vectors, appended to the
                                  // deterministic start list before random fill
  double step_p = 0.0;            // initial simplex edge on point parameters;
                                  // 0 = twice the estimated node defect
  double step_slope = 0.0;        // on slope parameters; 0 = class_a / 4
};

// Multi-start simplex descent of the residual over the candidate point and
// the slopes of h on g's node grid (box [max(1 - class_a, 1e-6), 1 + class_a],
// so h_star is in Rep(class_a) by construction; class_a = 0 fixes h to the
// identity). For glued flows the point ranges over the exit section of q;
// for plain flows over the ambient space. Deterministic for fixed options,
// independent of the worker count; ties broken by start index.
ShadowingResult shadow_search(const Flow& flow, const Pseudotrajectory& g, Window window,
                              double class_a, const SearchOptions& opts = {});

nlohmann::json shadow_result_to_json(const ShadowingResult& result);

struct SweepCell {
  double L = 0.0;
  double d = 0.0;
  double best_eps = 0.0;
  double ratio = 0.0;    // best_eps / d
  double class_a = 0.0;  // L * d
  bool lip_ok = false;   // best_eps <= L * d
  std::string obstruction_verdict;  // "none" when the system has no frame
};

struct SweepTable {
  std::vector<SweepCell> rows;
};

std::string sweep_to_csv(const SweepTable& table);

// Grid experiment over (L, d): builds the glued two-jump pseudotrajectory for
// each d (jump directions from the obstruction frame when one exists) and
// runs shadow_search with class_a = L*d, then passes the best candidate
// through obstruction_report on nontransversal systems.
SweepTable lipschitz_sweep(const GluedFlow& flow, const std::vector<double>& L_list,
                           const std::vector<double>& d_list, int starts, long budget,
                           std::uint64_t seed, int workers = 0);

enum class RegionClass { OutsideChart, OffUnstable, OnUnstableFar, OnUnstableNear };
const char* to_string(RegionClass c);

// One x of the brute-force grid. fail_time is the first failing probe of the
// most resilient h: backward failures (t <= 0, scanned from 0 downward) rank
// before forward ones (scanned upward), so a positive fail_time means some h
// survived the whole backward window. matches records whether that time obeys
// the expected pattern of the region class: failure at t <= 0 off the
// unstable manifold (exactly 0 when already eps-far from r, or outside the
// chart), failure near tau0 + tau1 on it.
struct NosubsetPoint {
  Vec x;
  RegionClass region = RegionClass::OutsideChart;
  double fail_time = 0.0;
  bool matches = false;
};

struct NosubsetGrid {
  int nx = 200;  // per axis, half-open [-R, R) so the grid contains 0 exactly
};

struct NosubsetHFamily {
  int total = 1000;          // identity + trackers + speeds + random fill
  double offset_span = 3.5;  // tracker offsets, +-span on a step grid
  double offset_step = 0.25;
  double ramp_len = 4.0;     // tracker ramp length just before t = 0
};

struct NosubsetWitness {
  Vec x;
  PiecewiseLinearRepar h;
};

struct NosubsetReport {
  bool feasible = false;
  std::optional<NosubsetWitness> witness;
  double eps = 0.0;
  std::vector<NosubsetPoint> points;
  long count_outside = 0;
  long count_off = 0;
  long count_far = 0;
  long count_near = 0;
  long mismatches = 0;
  bool all_match = false;
};

// Brute-force refutation of "some (x, h) tracks g within eps": sweeps the
// grid over the p chart of a planar two-saddle model against the h family,
// recording per-x fail times and their agreement with the expected dichotomy.
// r and alpha are the jump construction's anchor points in p chart
// coordinates (g(0) on the orbit of r, the jump at tau0, g(tau0 + tau1) =
// alpha). eps must satisfy the two admissibility conditions checked by
// nosubset_validate_eps.
NosubsetReport nosubset_feasibility(const GluedFlow& flow, const Pseudotrajectory& g,
                                    const Vec& r_chart_p, const Vec& alpha_chart_p, double tau0,
                                    double tau1, double eps, const NosubsetGrid& grid = {},
                                    const NosubsetHFamily& hfam = {}, std::uint64_t seed = 0,
                                    int workers = 0);

// Throws ModelError naming the violated quantity unless eps is positive,
// smaller than the unstable offset of alpha (so the jump target stays
// eps-far from W^s_loc(p)) and smaller than the chart margin around r (so
// every surviving candidate lies inside the p chart).
void nosubset_validate_eps(const GluedHeteroclinicSystem& sys, const Vec& r_chart_p,
                           const Vec& alpha_chart_p, double eps);

// Largest eps/2 passing both conditions: min(unstable offset of alpha,
// chart margin of r) / 2.
double nosubset_auto_eps(const GluedHeteroclinicSystem& sys, const Vec& r_chart_p,
                         const Vec& alpha_chart_p);

nlohmann::json nosubset_to_json(const NosubsetReport& report);

}  // namespace shadowlab
