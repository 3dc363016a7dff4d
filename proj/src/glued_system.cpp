#include "shadowlab/glued_system.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "shadowlab/errors.hpp"

namespace shadowlab {

namespace {

constexpr double kSpectralGap = 0.05;

void check_spectrum(const BlockLinearField& f, double sign, const char* what) {
  for (const Block& b : f.blocks()) {
    if (sign * b.rate < kSpectralGap)
      throw ModelError(std::string(what) + ": rate violates the 0.05 spectral gap");
    if (b.kind == Block::Kind::Spiral2D && b.spin == 0.0)
      throw ModelError(std::string(what) + ": spiral block needs nonzero spin");
  }
}

std::vector<Block> concat(const BlockLinearField& a, const BlockLinearField& b) {
  std::vector<Block> blocks = a.blocks();
  blocks.insert(blocks.end(), b.blocks().begin(), b.blocks().end());
  return blocks;
}

// Orthonormal completion of the unit vector v inside a subspace of dimension
// sub_dim embedded at [offset, offset + sub_dim) of R^n: returns n x
// (sub_dim - 1) columns orthogonal to v, via the Householder map exchanging v
// with the first subspace axis. Deterministic in the inputs.
Mat perp_basis(const Vec& v_unit_sub, int n, int offset, int sub_dim) {
  Mat out = Mat::Zero(n, sub_dim - 1);
  if (sub_dim <= 1) return out;
  Vec e1 = Vec::Zero(sub_dim);
  e1(0) = 1.0;
  Vec w = v_unit_sub - e1;
  Mat h = Mat::Identity(sub_dim, sub_dim);
  double wn = w.norm();
  if (wn > 1e-12) {
    w /= wn;
    h -= 2.0 * w * w.transpose();
  }
  // Columns 2..sub_dim of h are orthonormal and orthogonal to v.
  out.block(offset, 0, sub_dim, sub_dim - 1) = h.rightCols(sub_dim - 1);
  return out;
}

}  // namespace

GluedHeteroclinicSystem::GluedHeteroclinicSystem(HyperbolicPointSpec q,
                                                 HyperbolicPointSpec p, Vec a_q,
                                                 double tau, Mat K,
                                                 double chart_radius)
    : q_(std::move(q)),
      p_(std::move(p)),
      q_field_(concat(q_.unstable, q_.stable)),
      p_field_(concat(p_.stable, p_.unstable)),
      a_q_(std::move(a_q)),
      tau_(tau),
      K_(std::move(K)),
      radius_(chart_radius) {
  n_ = q_field_.dim();
  if (n_ < 2) throw ModelError("glued system: need dimension >= 2");
  if (p_field_.dim() != n_) throw ModelError("glued system: chart dimensions differ");
  if (q_.unstable.empty()) throw ModelError("glued system: q needs an unstable part");
  if (p_.stable.empty()) throw ModelError("glued system: p needs a stable part");
  check_spectrum(q_.unstable, +1.0, "q unstable");
  check_spectrum(q_.stable, -1.0, "q stable");
  check_spectrum(p_.stable, -1.0, "p stable");
  check_spectrum(p_.unstable, +1.0, "p unstable");
  if (!(tau_ > 0.0)) throw ModelError("glued system: tau must be positive");
  if (!(radius_ > 0.0)) throw ModelError("glued system: chart radius must be positive");

  const int uq = dim_unstable_q(), sq = dim_stable_q();
  const int sp = dim_stable_p(), up = dim_unstable_p();
  if (a_q_.size() != n_) throw ModelError("glued system: a_q dimension mismatch");
  if (a_q_.tail(sq).norm() > 1e-12 * (1.0 + a_q_.norm()))
    throw ModelError("glued system: a_q must lie in the unstable subspace of q");
  if (a_q_.norm() < 1e-9) throw ModelError("glued system: a_q must be nonzero");
  if (a_q_.norm() >= radius_) throw ModelError("glued system: a_q outside chart");

  v_q_ = q_field_.field(a_q_);
  if (v_q_.norm() < 1e-12) throw ModelError("glued system: flow vanishes at a_q");
  n_q_ = v_q_.normalized();

  // a_p: the transit image of a_q, placed on the first stable axis of p at
  // the same distance from the rest point as a_q is from q.
  a_p_ = Vec::Zero(n_);
  a_p_(0) = a_q_.norm();
  v_p_ = p_field_.field(a_p_);
  if (v_p_.norm() < 1e-12) throw ModelError("glued system: flow vanishes at a_p");
  n_p_ = v_p_.normalized();
  vbar_ = 0.5 * (v_q_.norm() + v_p_.norm());

  if (K_.rows() != n_ - 1 || K_.cols() != n_ - 1)
    throw ModelError("glued system: K must be (n-1) x (n-1)");
  Eigen::FullPivLU<Mat> lu(K_);
  if (!lu.isInvertible()) throw ModelError("glued system: K must be invertible");
  K_inv_ = lu.inverse();
  // Every transit interpolant (1-theta) I + theta K is nonsingular iff K has
  // no real eigenvalue on the nonpositive axis.
  Eigen::EigenSolver<Mat> es(K_);
  for (int i = 0; i < K_.rows(); ++i) {
    auto ev = es.eigenvalues()(i);
    if (std::abs(ev.imag()) < 1e-12 && ev.real() < 1e-12)
      throw ModelError("glued system: K has a real eigenvalue <= 0, "
                       "transit interpolant would degenerate");
  }

  // Section bases: perp-to-flow completion inside the invariant subspace of
  // the anchor point, then the coordinate axes of the transverse block.
  E_q_ = Mat::Zero(n_, n_ - 1);
  E_q_.leftCols(uq - 1) =
      perp_basis(n_q_.head(uq), n_, 0, uq);
  E_q_.block(uq, uq - 1, sq, sq) = Mat::Identity(sq, sq);

  E_p_ = Mat::Zero(n_, n_ - 1);
  E_p_.leftCols(sp - 1) = perp_basis(n_p_.head(sp), n_, 0, sp);
  E_p_.block(sp, sp - 1, up, up) = Mat::Identity(up, up);

  sq_section_offsets_.clear();
  int off = uq - 1;
  for (const Block& b : q_.stable.blocks()) {
    sq_section_offsets_.push_back(off);
    off += b.dim();
  }
  up_section_offsets_.clear();
  off = sp - 1;
  for (const Block& b : p_.unstable.blocks()) {
    up_section_offsets_.push_back(off);
    off += b.dim();
  }
}

int GluedHeteroclinicSystem::stable_q_section_offset(std::size_t j) const {
  return sq_section_offsets_.at(j);
}

int GluedHeteroclinicSystem::unstable_p_section_offset(std::size_t i) const {
  return up_section_offsets_.at(i);
}

Mat GluedHeteroclinicSystem::transit_interpolant(double theta) const {
  return (1.0 - theta) * Mat::Identity(n_ - 1, n_ - 1) + theta * K_;
}

GluedSystemPtr build_glued_system(HyperbolicPointSpec q, HyperbolicPointSpec p,
                                  Vec a_q, double tau, Mat K, double chart_radius) {
  return std::make_shared<const GluedHeteroclinicSystem>(
      std::move(q), std::move(p), std::move(a_q), tau, std::move(K), chart_radius);
}

Projections projections(const GluedHeteroclinicSystem& sys) {
  const int n = sys.dim();
  const int uq = sys.dim_unstable_q(), sp = sys.dim_stable_p();
  Projections out;
  out.onto_stable_q = Mat::Zero(n, n);
  int off = uq;
  for (const Block& b : sys.q().stable.blocks()) {
    Mat pj = Mat::Zero(n, n);
    for (int k = 0; k < b.dim(); ++k) pj(off + k, off + k) = 1.0;
    out.onto_stable_q += pj;
    out.onto_stable_q_block.push_back(std::move(pj));
    off += b.dim();
  }
  out.onto_unstable_p = Mat::Zero(n, n);
  off = sp;
  for (const Block& b : sys.p().unstable.blocks()) {
    Mat pi = Mat::Zero(n, n);
    for (int k = 0; k < b.dim(); ++k) pi(off + k, off + k) = 1.0;
    out.onto_unstable_p += pi;
    out.onto_unstable_p_block.push_back(std::move(pi));
    off += b.dim();
  }
  return out;
}

Vec poincare(const GluedHeteroclinicSystem& sys, const Vec& x_q_chart) {
  double c = sys.longitudinal_q(x_q_chart);
  if (std::abs(c) > 1e-9 * (1.0 + x_q_chart.norm()))
    throw ModelError("poincare: point is not on the exit section");
  return sys.section_to_chart_p(sys.K() * sys.transversal_q(x_q_chart));
}

TangentSpaces tangent_spaces(const GluedHeteroclinicSystem& sys) {
  const int n = sys.dim();
  const int tq = sys.dim_tilde_q(), tp = sys.dim_tilde_p();
  TangentSpaces out;
  out.unstable_of_q = Mat::Zero(n, tq + 1);
  if (tq > 0) {
    Mat tilde_q_section = Mat::Zero(n - 1, tq);
    tilde_q_section.topRows(tq) = Mat::Identity(tq, tq);
    out.unstable_of_q.leftCols(tq) = sys.section_basis_p() * (sys.K() * tilde_q_section);
  }
  out.unstable_of_q.col(tq) = sys.v_p();
  out.stable_of_p = Mat::Zero(n, tp + 1);
  if (tp > 0) out.stable_of_p.leftCols(tp) = sys.section_basis_p().leftCols(tp);
  out.stable_of_p.col(tp) = sys.v_p();
  return out;
}

TransversalityReport transversality(const GluedHeteroclinicSystem& sys) {
  TangentSpaces ts = tangent_spaces(sys);
  Mat joint(sys.dim(), ts.unstable_of_q.cols() + ts.stable_of_p.cols());
  joint << ts.unstable_of_q, ts.stable_of_p;
  Eigen::JacobiSVD<Mat> svd(joint);
  double tol = 1e-10 * svd.singularValues()(0);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol) ++rank;
  TransversalityReport report;
  report.rank = rank;
  report.defect_dim = sys.dim() - rank;
  report.transversal = report.defect_dim == 0;
  return report;
}

}  // namespace shadowlab
