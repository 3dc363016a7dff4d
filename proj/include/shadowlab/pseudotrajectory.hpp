#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shadowlab/glued_flow.hpp"

namespace shadowlab {

// Sampled pseudotrajectory: nodes[k] is the state at time t0 + k*dt, and the
// trajectory between consecutive nodes is the flow segment started at the
// earlier node. All defects therefore sit at the nodes themselves.
struct Pseudotrajectory {
  double t0 = 0.0;
  double dt = 0.1;
  std::vector<State> nodes;

  double t_end() const { return t0 + dt * static_cast<double>(nodes.size() - 1); }
  bool contains(double t) const;
};

// Value at time t. Exact (bitwise) at node times; between nodes the segment
// is integrated from the node on its left. t outside [t0, t_end] throws.
State pseudo_eval(const Flow& flow, const Pseudotrajectory& g, double t);

// True-orbit sampling with independent uniform-ball noise of radius
// `noise_amp` added to each node's coordinates. x0 is the unperturbed state
// at the first node.
Pseudotrajectory pseudo_from_orbit(const Flow& flow, const State& x0, double t0, double t1,
                                   double dt, double noise_amp, std::uint64_t seed);

// Values of g on the refined grid t0 + k*(dt/refine), k = 0..(nodes-1)*refine.
// Throws OutOfDomainError if a segment of g leaves the flow's domain.
std::vector<State> pseudo_refined_table(const Flow& flow, const Pseudotrajectory& g, int refine,
                                        int workers = 0);

struct DefectReport {
  double defect = 0.0;     // grid supremum of dist(g(tau+t), phi(t, g(tau)))
  double grid_step = 0.0;  // probe spacing the supremum was taken over
};

// Grid estimate of the defect: sup over anchors tau and |t| <= 1 (both on a
// grid of step dt/refine, clipped to the trajectory's window) of the distance
// between g(tau+t) and the flow started at g(tau). Leaving the flow's domain
// during a probe reports kMaxDistance.
DefectReport pseudo_defect(const Flow& flow, const Pseudotrajectory& g, int refine = 8,
                           int workers = 0);

struct GluedPseudoParams {
  double dt = 0.1;
  double t_back = 0.0;  // backward window; 0 = derive from chart margins
  double t_fwd = 0.0;   // forward window past the transit; 0 = derive
  double t_cap = 16.0;  // upper bound on either derived window
};

// The two-jump construction around a heteroclinic connection: follows the
// orbit of a_q + d*e_q up to time 0, rides the connection through the transit
// tube on [0, tau], then follows the orbit of a_p + d*e_p. The two defects
// are the jumps of size d at t = 0 and t = tau.
Pseudotrajectory pseudo_glued(const GluedFlow& flow, double d, const Vec& e_q, const Vec& e_p,
                              const GluedPseudoParams& params = {});

struct JumpPseudoParams {
  double tau0 = 8.0;    // time spent on the orbit of r after passing it
  double tau1 = 8.0;    // backward depth on the orbit of alpha at the switch
  double dt = 0.1;
  double t_back = 0.0;  // window before r; 0 = derive from chart margins
  double t_tail = 0.0;  // window after the switch point; 0 = derive
};

// Single-jump construction: follows the orbit of r (a point of the p chart on
// the connecting orbit) for t <= tau0, then switches to the orbit of alpha
// anchored so that g(tau0 + tau1) = alpha. The defect is the single jump at
// t = tau0, which shrinks like the slower of the two linear rates.
Pseudotrajectory pseudo_jump(const GluedFlow& flow, const Vec& r_chart_p, const Vec& alpha_chart_p,
                             const JumpPseudoParams& params = {});

nlohmann::json pseudo_to_json(const Pseudotrajectory& g);
Pseudotrajectory pseudo_from_json(const nlohmann::json& j);
std::string pseudo_to_csv(const Pseudotrajectory& g);

}  // namespace shadowlab
