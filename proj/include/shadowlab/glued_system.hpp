#pragma once

#include <memory>
#include <vector>

#include "shadowlab/block_flow.hpp"

namespace shadowlab {

// Hyperbolic rest point given by block-diagonal stable/unstable linear parts.
// Either part may be empty (sink/source), but not both.
struct HyperbolicPointSpec {
  BlockLinearField stable;    // all rates <= -gap
  BlockLinearField unstable;  // all rates >= +gap
};

enum class ChartId { Ambient, Q, Transit, P };

// A point of a flow's phase space. Plain Euclidean flows use Ambient with x
// holding the full state. The glued model uses:
//   Q:       x = chart coordinates, rest point q at the origin,
//            layout [unstable block | stable block];
//   Transit: x = section offset at the entry section (sigma_q coordinates),
//            s = time into the transit tube, in [0, tau];
//   P:       x = chart coordinates, rest point p at the origin,
//            layout [stable block | unstable block].
struct State {
  ChartId chart = ChartId::Ambient;
  double s = 0.0;
  Vec x;
};

// Two saddle charts glued along an orbit connecting q to p. The connection
// leaves q through the exit section at a_q, crosses an abstract tube in time
// tau, and enters the p chart at a_p on the entry section. Section offsets are
// carried across the tube by the linear map K. Section coordinates are
// [perp-to-flow directions | transverse invariant block]:
//   sigma_q = tilde_sigma_q (+) S_q,   sigma_p = tilde_sigma_p (+) U_p,
// where tilde_sigma_* is the orthogonal complement of the flow direction
// inside the invariant subspace containing a_*.
class GluedHeteroclinicSystem {
 public:
  GluedHeteroclinicSystem(HyperbolicPointSpec q, HyperbolicPointSpec p, Vec a_q,
                          double tau, Mat K, double chart_radius);

  int dim() const { return n_; }
  int section_dim() const { return n_ - 1; }
  double tau() const { return tau_; }
  double chart_radius() const { return radius_; }
  double section_radius() const { return radius_; }

  const HyperbolicPointSpec& q() const { return q_; }
  const HyperbolicPointSpec& p() const { return p_; }

  // Full chart fields: [unstable | stable] at q, [stable | unstable] at p.
  const BlockLinearField& q_field() const { return q_field_; }
  const BlockLinearField& p_field() const { return p_field_; }

  const Vec& a_q() const { return a_q_; }
  const Vec& a_p() const { return a_p_; }
  const Vec& v_q() const { return v_q_; }  // flow direction at a_q
  const Vec& v_p() const { return v_p_; }
  const Vec& n_q() const { return n_q_; }  // unit section normals
  const Vec& n_p() const { return n_p_; }

  const Mat& K() const { return K_; }
  const Mat& K_inverse() const { return K_inv_; }

  // Isometric embeddings of section coordinates into chart coordinates.
  const Mat& section_basis_q() const { return E_q_; }
  const Mat& section_basis_p() const { return E_p_; }

  int dim_unstable_q() const { return q_.unstable.dim(); }
  int dim_stable_q() const { return q_.stable.dim(); }
  int dim_stable_p() const { return p_.stable.dim(); }
  int dim_unstable_p() const { return p_.unstable.dim(); }

  // Section-coordinate layout. Columns [0, dim_tilde_*) are the perp-to-flow
  // part; invariant blocks follow, one range per block of the split subspace.
  int dim_tilde_q() const { return dim_unstable_q() - 1; }
  int dim_tilde_p() const { return dim_stable_p() - 1; }
  int stable_q_section_offset(std::size_t j) const;
  int unstable_p_section_offset(std::size_t i) const;

  // Transit interpolant E(theta) = (1 - theta) I + theta K, theta = s / tau.
  Mat transit_interpolant(double theta) const;

  // Longitudinal speed used for distances inside the tube.
  double mean_section_speed() const { return vbar_; }

  // Chart <-> section conversions (Q side; x in Q chart coordinates).
  Vec section_to_chart_q(const Vec& sigma) const { return a_q_ + E_q_ * sigma; }
  Vec section_to_chart_p(const Vec& sigma) const { return a_p_ + E_p_ * sigma; }

  // Signed longitudinal coordinate relative to the section plane.
  double longitudinal_q(const Vec& x) const { return n_q_.dot(x - a_q_); }
  double longitudinal_p(const Vec& x) const { return n_p_.dot(x - a_p_); }
  Vec transversal_q(const Vec& x) const { return E_q_.transpose() * (x - a_q_); }
  Vec transversal_p(const Vec& x) const { return E_p_.transpose() * (x - a_p_); }

 private:
  int n_ = 0;
  HyperbolicPointSpec q_, p_;
  BlockLinearField q_field_, p_field_;
  Vec a_q_, a_p_, v_q_, v_p_, n_q_, n_p_;
  double tau_ = 0.0;
  Mat K_, K_inv_;
  double radius_ = 0.0;
  Mat E_q_, E_p_;
  double vbar_ = 0.0;
  std::vector<int> sq_section_offsets_, up_section_offsets_;
};

using GluedSystemPtr = std::shared_ptr<const GluedHeteroclinicSystem>;

// Validates spectra (gap 0.05, nonzero spin on spiral blocks of the split
// subspaces), a_q placement, K regularity (invertible, no real eigenvalue on
// the nonpositive axis, so every transit interpolant is nonsingular), and
// derives a_p as the transit image of a_q.
GluedSystemPtr build_glued_system(HyperbolicPointSpec q, HyperbolicPointSpec p,
                                  Vec a_q, double tau, Mat K, double chart_radius);

// Coordinate-aligned spectral projectors, as 0/1 diagonal selectors in chart
// coordinates: per-block projectors onto S_q^(j) (Q chart) and U_p^(i)
// (P chart), plus their sums.
struct Projections {
  std::vector<Mat> onto_stable_q_block;
  std::vector<Mat> onto_unstable_p_block;
  Mat onto_stable_q;
  Mat onto_unstable_p;
};

Projections projections(const GluedHeteroclinicSystem& sys);

// Section-to-section linear crossing map: x on the exit section of q (Q chart
// coordinates) to its arrival on the entry section of p (P chart coordinates).
Vec poincare(const GluedHeteroclinicSystem& sys, const Vec& x_q_chart);

// Tangent spaces at a_p of the invariant manifolds through the connection,
// as columns in P chart coordinates:
//   T W^u(q) = K tilde_sigma_q + span(v_p),
//   T W^s(p) = tilde_sigma_p + span(v_p).
struct TangentSpaces {
  Mat unstable_of_q;
  Mat stable_of_p;
};

TangentSpaces tangent_spaces(const GluedHeteroclinicSystem& sys);

struct TransversalityReport {
  bool transversal = false;
  int defect_dim = 0;  // dim(phase space) - rank of the summed tangents
  int rank = 0;
};

// Rank test on the summed tangent bases (SVD, tolerance 1e-10 relative).
TransversalityReport transversality(const GluedHeteroclinicSystem& sys);

}  // namespace shadowlab
