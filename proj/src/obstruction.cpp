#include "shadowlab/obstruction.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

#include "shadowlab/errors.hpp"

namespace shadowlab {

namespace {

int svd_rank(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  double tol = 1e-10 * s(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) ++rank;
  return rank;
}

void fix_sign(Vec& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::abs(v(k)) > 1e-12) {
      if (v(k) < 0.0) v = -v;
      return;
    }
  }
}

}  // namespace

const char* to_string(ObstructionVerdict v) {
  switch (v) {
    case ObstructionVerdict::BackViolated: return "back_violated";
    case ObstructionVerdict::FwdViolated: return "fwd_violated";
    case ObstructionVerdict::SignContradiction: return "sign_contradiction";
    case ObstructionVerdict::None: return "none";
  }
  return "none";
}

ObstructionFrame select_obstruction_frame(const GluedHeteroclinicSystem& sys) {
  if (transversality(sys).transversal)
    throw FrameError("obstruction frame undefined: the connection is transversal");

  int tilde_q = sys.dim_tilde_q();
  const Mat& K = sys.K();
  const auto& unstable_blocks = sys.p().unstable.blocks();

  ObstructionFrame frame;
  for (int i = 0; i < static_cast<int>(unstable_blocks.size()); ++i) {
    int offset = sys.unstable_p_section_offset(i);
    int bdim = unstable_blocks[static_cast<std::size_t>(i)].dim();
    Mat image = K.block(offset, 0, bdim, tilde_q);
    int rank = svd_rank(image);
    if (bdim == 2 && rank <= 1) {
      frame.block_index = i;
      if (rank == 0) {
        frame.e_p_block = Vec::Zero(2);
        frame.e_p_block(0) = 1.0;
      } else {
        Eigen::JacobiSVD<Mat> svd(image, Eigen::ComputeFullU);
        Vec line = svd.matrixU().col(0);
        frame.e_p_block = Vec(2);
        frame.e_p_block << -line(1), line(0);
      }
      break;
    }
    if (bdim == 1 && rank == 0) {
      frame.block_index = i;
      frame.e_p_block = Vec::Ones(1);
      break;
    }
  }
  if (frame.block_index < 0)
    throw FrameError("no unstable block of p matches the supported obstruction patterns");
  fix_sign(frame.e_p_block);

  int section_dim = sys.section_dim();
  int chosen_offset = sys.unstable_p_section_offset(frame.block_index);
  frame.pi_section = Vec::Zero(section_dim);
  frame.pi_section.segment(chosen_offset, frame.e_p_block.size()) = frame.e_p_block;
  frame.proj_ep = frame.pi_section * frame.pi_section.transpose();

  const auto& stable_blocks = sys.q().stable.blocks();
  double k_scale = K.cwiseAbs().maxCoeff();
  std::vector<Vec> functionals;
  for (int j = 0; j < static_cast<int>(stable_blocks.size()); ++j) {
    int offset = sys.stable_q_section_offset(j);
    int bdim = stable_blocks[static_cast<std::size_t>(j)].dim();
    Vec phi = (frame.pi_section.transpose() * K.block(0, offset, section_dim, bdim)).transpose();
    if (phi.norm() > 1e-10 * (1.0 + k_scale)) {
      frame.active_blocks.push_back(j);
      functionals.push_back(std::move(phi));
    }
  }
  if (frame.active_blocks.empty())
    throw FrameError("the obstruction functional annihilates the stable subspace of q");

  frame.e_q_section = Vec::Zero(section_dim);
  double weight = 1.0 / std::sqrt(static_cast<double>(frame.active_blocks.size()));
  for (std::size_t idx = 0; idx < frame.active_blocks.size(); ++idx) {
    int j = frame.active_blocks[idx];
    int offset = sys.stable_q_section_offset(j);
    frame.e_q_section.segment(offset, functionals[idx].size()) =
        -weight * functionals[idx].normalized();
  }

  frame.e_q_chart = sys.section_basis_q() * frame.e_q_section;
  frame.e_p_chart = sys.section_basis_p() * frame.pi_section;
  return frame;
}

JumpDirections jump_directions(const GluedHeteroclinicSystem& sys) {
  JumpDirections out;
  try {
    ObstructionFrame frame = select_obstruction_frame(sys);
    out.e_q = frame.e_q_chart;
    out.e_p = frame.e_p_chart;
    out.frame = std::move(frame);
    return out;
  } catch (const FrameError&) {
    int section_dim = sys.section_dim();
    int n = sys.dim();
    int q_axis = n - sys.dim_unstable_q() > 0 ? sys.dim_tilde_q() : 0;
    int p_axis = n - sys.dim_stable_p() > 0 ? sys.dim_tilde_p() : 0;
    out.e_q = sys.section_basis_q() * Vec::Unit(section_dim, q_axis);
    out.e_p = sys.section_basis_p() * Vec::Unit(section_dim, p_axis);
    return out;
  }
}

ObstructionReport obstruction_report(const GluedFlow& flow, const ObstructionFrame& frame,
                                     const Vec& omega_q, const PiecewiseLinearRepar& h, double d,
                                     double L, double T, const GluedPseudoParams& gp) {
  const auto& sys = flow.system();
  if (omega_q.size() != sys.dim()) throw ModelError("obstruction_report: candidate dimension");
  if (std::abs(sys.longitudinal_q(omega_q)) > 1e-9 * (1.0 + omega_q.norm()))
    throw ModelError("obstruction_report: candidate must lie on the exit section of q");
  if (!(T > 0.0) || !(L > 0.0) || !(d > 0.0))
    throw ModelError("obstruction_report: T, L, d must be positive");

  Pseudotrajectory g = pseudo_glued(flow, d, frame.e_q_chart, frame.e_p_chart, gp);
  double tau = sys.tau();
  double step = gp.dt / 8.0;
  std::vector<State> table = pseudo_refined_table(flow, g, 8);
  auto g_at = [&](double t) -> const State& {
    auto idx = static_cast<std::size_t>(std::llround((t - g.t0) / step));
    return table[idx];
  };

  ObstructionReport report;
  report.t_back = std::min(T, -g.t0);
  report.t_fwd = std::min(T, g.t_end() - tau);

  Vec sigma_q = sys.transversal_q(omega_q);
  Vec sigma_stable = sigma_q;
  sigma_stable.head(sys.dim_tilde_q()).setZero();
  report.w = frame.pi_section.dot(sys.K() * sigma_stable);

  {
    State cur{ChartId::Q, 0.0, omega_q};
    double prev_h = 0.0;
    auto k_max = static_cast<std::size_t>(std::floor(report.t_back / step + 1e-9));
    report.r_back = flow.distance(cur, g_at(0.0));
    for (std::size_t k = 1; k <= k_max; ++k) {
      double t = -static_cast<double>(k) * step;
      double ht = h.eval(t);
      if (!flow.advance(cur, ht - prev_h)) {
        report.r_back = kMaxDistance;
        break;
      }
      prev_h = ht;
      report.r_back = std::max(report.r_back, flow.distance(cur, g_at(t)));
    }
  }

  report.r_fwd = kMaxDistance;
  State at_tau{ChartId::Q, 0.0, omega_q};
  if (flow.advance(at_tau, h.eval(tau))) {
    double vbar = sys.mean_section_speed();
    double shift_range =
        std::abs(flow.extended(at_tau).lam - vbar * tau) / vbar + 2.0 * L * d + 2.0 * step;
    auto k_max = static_cast<std::size_t>(std::floor(report.t_fwd / step + 1e-9));
    auto eval_fwd = [&](double shift, double cutoff) -> double {
      State cur = at_tau;
      if (shift != 0.0 && !flow.advance(cur, shift)) return kMaxDistance;
      double prev_h = h.eval(tau);
      double worst = flow.distance(cur, g_at(tau));
      for (std::size_t k = 1; k <= k_max && worst <= cutoff; ++k) {
        double t = tau + static_cast<double>(k) * step;
        double ht = h.eval(t);
        if (!flow.advance(cur, ht - prev_h)) return kMaxDistance;
        prev_h = ht;
        worst = std::max(worst, flow.distance(cur, g_at(t)));
      }
      return worst;
    };

    const int coarse = 32;
    double best = kMaxDistance, best_shift = 0.0;
    for (int i = 0; i <= coarse; ++i) {
      double shift = -shift_range + 2.0 * shift_range * static_cast<double>(i) / coarse;
      double val = eval_fwd(shift, best);
      if (val < best) {
        best = val;
        best_shift = shift;
      }
    }
    if (best < kMaxDistance) {
      double lo = best_shift - 2.0 * shift_range / coarse;
      double hi = best_shift + 2.0 * shift_range / coarse;
      const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
      double f1 = eval_fwd(x1, kMaxDistance), f2 = eval_fwd(x2, kMaxDistance);
      for (int it = 0; it < 40; ++it) {
        if (f1 <= f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - gr * (hi - lo);
          f1 = eval_fwd(x1, kMaxDistance);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + gr * (hi - lo);
          f2 = eval_fwd(x2, kMaxDistance);
        }
      }
      if (f1 < best) {
        best = f1;
        best_shift = x1;
      }
      if (f2 < best) {
        best = f2;
        best_shift = x2;
      }
    }
    report.r_fwd = best;
    report.h_shift = best_shift;

    State crossing = at_tau;
    if (best_shift == 0.0 || flow.advance(crossing, best_shift))
      report.v = frame.pi_section.dot(flow.extended(crossing).u);
  }

  report.sign_tolerance = 2.0 * (sys.K().norm() + 1.0) * L * d;
  double bound = L * d;
  if (report.r_back > bound)
    report.verdict = ObstructionVerdict::BackViolated;
  else if (report.r_fwd > bound)
    report.verdict = ObstructionVerdict::FwdViolated;
  else
    report.verdict = ObstructionVerdict::SignContradiction;
  return report;
}

}  // namespace shadowlab
