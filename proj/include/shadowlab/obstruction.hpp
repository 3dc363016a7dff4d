#pragma once

#include <optional>
#include <vector>

#include "shadowlab/glued_flow.hpp"
#include "shadowlab/glued_system.hpp"
#include "shadowlab/pseudotrajectory.hpp"
#include "shadowlab/repar.hpp"

namespace shadowlab {

// Frame certifying the nontransversality obstruction: a distinguished
// unstable block of p whose image of the incoming hyperplane under the
// transit map misses a direction e_p, the functional reading that direction
// off section coordinates, and a matched unit jump direction e_q in the
// stable subspace of q chosen so the functional sees it negatively.
struct ObstructionFrame {
  int block_index = -1;  // unstable block of p carrying the obstruction
  Vec e_p_block;         // unit vector inside that block
  Vec pi_section;        // e_p embedded as a functional on Sigma_p coordinates
  Mat proj_ep;           // rank-1 projector pi pi^T on section coordinates
  Vec e_q_section;       // jump direction in Sigma_q coordinates
  Vec e_q_chart;         // the same two directions as chart vectors
  Vec e_p_chart;
  std::vector<int> active_blocks;  // stable blocks of q the functional sees
};

// Supported cases: a 2D unstable block of p whose section image of the
// incoming hyperplane has rank <= 1, or a 1D block it misses entirely.
// Throws FrameError on transversal systems and on unsupported patterns.
ObstructionFrame select_obstruction_frame(const GluedHeteroclinicSystem& sys);

// Jump directions for the glued pseudotrajectory: the obstruction frame's
// pair when one exists, otherwise the first stable section axis of q and the
// first unstable section axis of p (the first section axis when a side lacks
// that block).
struct JumpDirections {
  Vec e_q;
  Vec e_p;
  std::optional<ObstructionFrame> frame;
};
JumpDirections jump_directions(const GluedHeteroclinicSystem& sys);

enum class ObstructionVerdict { BackViolated, FwdViolated, SignContradiction, None };
const char* to_string(ObstructionVerdict v);

struct ObstructionReport {
  double r_back = 0.0;   // residual of the candidate over the backward window
  double r_fwd = 0.0;    // residual over the forward window, best time shift
  double h_shift = 0.0;  // optimized scalar shift applied past the transit
  double w = 0.0;        // functional on the candidate's backward section offset
  double v = 0.0;        // functional on the candidate's forward crossing offset
  double t_back = 0.0;   // effective window lengths actually probed
  double t_fwd = 0.0;
  double sign_tolerance = 0.0;  // |w - v| bound implied by both residuals passing
  ObstructionVerdict verdict = ObstructionVerdict::None;
};

// Evaluates the shadowing obstruction for a candidate (omega_q, h) against
// the glued pseudotrajectory of defect d: backward residual over [-T, 0],
// forward residual over [tau, tau + T] minimized over a scalar time shift,
// and the two section functionals whose signs cannot agree when both windows
// fit within L*d. Domain exit during probing reports kMaxDistance.
ObstructionReport obstruction_report(const GluedFlow& flow, const ObstructionFrame& frame,
                                     const Vec& omega_q, const PiecewiseLinearRepar& h, double d,
                                     double L, double T, const GluedPseudoParams& gp = {});

}  // namespace shadowlab
