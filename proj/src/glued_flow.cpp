#include "shadowlab/glued_flow.hpp"

#include <cmath>
#include <numbers>

#include "shadowlab/errors.hpp"

namespace shadowlab {

namespace {

constexpr int kBisectIters = 60;

// Root of f on [lo, hi] with f(lo), f(hi) of opposite (or zero) sign.
template <class F>
double bisect(F&& f, double lo, double hi) {
  double flo = f(lo);
  if (flo == 0.0) return lo;
  for (int i = 0; i < kBisectIters; ++i) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double scan_step_for(const BlockLinearField& section_driver) {
  double spin = 0.0;
  for (const Block& b : section_driver.blocks())
    if (b.kind == Block::Kind::Spiral2D) spin = std::max(spin, std::abs(b.spin));
  if (spin == 0.0) return 0.25;
  return std::min(0.25, 2.0 * std::numbers::pi / (16.0 * spin));
}

}  // namespace

bool LinearFlow::advance(State& state, double dt) const {
  if (state.chart != ChartId::Ambient) throw ModelError("linear flow: ambient state expected");
  if (dt != 0.0) evolve_block_inplace(field_, dt, state.x);
  return true;
}

double LinearFlow::distance(const State& a, const State& b) const {
  return (a.x - b.x).norm();
}

bool OdeFlow::advance(State& state, double dt) const {
  if (state.chart != ChartId::Ambient) throw ModelError("ode flow: ambient state expected");
  if (dt != 0.0) state.x = evolve_rk4(field_, dt, state.x, step_);
  return true;
}

double OdeFlow::distance(const State& a, const State& b) const {
  return (a.x - b.x).norm();
}

GluedFlow::GluedFlow(GluedSystemPtr sys) : sys_(std::move(sys)) {
  // The section-normal component is driven only by the invariant subspace
  // containing the anchor point, so its oscillation rate bounds the scan step.
  scan_step_q_ = scan_step_for(sys_->q().unstable);
  scan_step_p_ = scan_step_for(sys_->p().stable);
}

State GluedFlow::q_state(Vec chart_coords) const {
  if (chart_coords.size() != sys_->dim()) throw ModelError("q_state: dimension mismatch");
  if (chart_coords.norm() > sys_->chart_radius() * (1.0 + 1e-12))
    throw OutOfDomainError("q_state: outside chart ball");
  return State{ChartId::Q, 0.0, std::move(chart_coords)};
}

State GluedFlow::p_state(Vec chart_coords) const {
  if (chart_coords.size() != sys_->dim()) throw ModelError("p_state: dimension mismatch");
  if (chart_coords.norm() > sys_->chart_radius() * (1.0 + 1e-12))
    throw OutOfDomainError("p_state: outside chart ball");
  return State{ChartId::P, 0.0, std::move(chart_coords)};
}

State GluedFlow::section_state_q(const Vec& sigma) const {
  if (sigma.size() != sys_->section_dim()) throw ModelError("section_state_q: dimension mismatch");
  if (sigma.norm() > sys_->section_radius())
    throw OutOfDomainError("section_state_q: beyond section radius");
  return q_state(sys_->section_to_chart_q(sigma));
}

// Chart evolution with event scanning. Shared by both charts; `entry_normal`
// together with `forward_trigger` selects which time direction can hand over
// to the tube at this chart's section.
bool GluedFlow::advance_q(State& state, double& remaining) const {
  const auto& field = sys_->q_field();
  const double radius = sys_->chart_radius();
  const double disc = sys_->section_radius();
  const double dir = remaining > 0.0 ? 1.0 : -1.0;
  const double span = std::abs(remaining);
  double t = 0.0;
  Vec x = state.x;
  double c = sys_->longitudinal_q(x);

  // Starting exactly on the section moving forward: immediate handover.
  if (dir > 0.0 && std::abs(c) <= 1e-13 * (1.0 + x.norm())) {
    if (sys_->n_q().dot(field.field(x)) > 0.0) {
      Vec u = sys_->transversal_q(x);
      if (u.norm() <= disc) {
        state = State{ChartId::Transit, 0.0, std::move(u)};
        return true;
      }
    }
    c = (sys_->n_q().dot(field.field(x)) > 0.0) ? 1e-300 : -1e-300;
  }

  int guard = 0;
  while (t < span) {
    if (++guard > 2000000) throw ModelError("glued advance: event scan diverged");
    double h = std::min(scan_step_q_, span - t);
    Vec xn = evolve_block(field, dir * h, x);
    double cn = sys_->longitudinal_q(xn);
    double rn = xn.norm();

    double t_exit = -1.0, t_cross = -1.0;
    if (rn > radius) {
      t_exit = bisect(
          [&](double th) { return evolve_block(field, dir * th, x).norm() - radius; }, 0.0, h);
    }
    if (dir > 0.0 && c < 0.0 && cn >= 0.0) {
      t_cross = bisect(
          [&](double th) { return sys_->longitudinal_q(evolve_block(field, dir * th, x)); }, 0.0,
          h);
    }
    if (t_cross >= 0.0 && (t_exit < 0.0 || t_cross <= t_exit)) {
      Vec xc = evolve_block(field, dir * t_cross, x);
      Vec u = sys_->transversal_q(xc);
      if (u.norm() <= disc) {
        remaining -= dir * (t + t_cross);
        state = State{ChartId::Transit, 0.0, std::move(u)};
        return true;
      }
      // Plane crossing beyond the disc: not an event, resume just past it.
      t += t_cross;
      x = std::move(xc);
      c = 1e-300;
      continue;
    }
    if (t_exit >= 0.0) {
      state.x = evolve_block(field, dir * t_exit, x);
      remaining -= dir * (t + t_exit);
      return false;
    }
    t += h;
    x = std::move(xn);
    c = cn;
  }
  state.x = std::move(x);
  remaining = 0.0;
  return true;
}

bool GluedFlow::advance_p(State& state, double& remaining) const {
  const auto& field = sys_->p_field();
  const double radius = sys_->chart_radius();
  const double disc = sys_->section_radius();
  const double dir = remaining > 0.0 ? 1.0 : -1.0;
  const double span = std::abs(remaining);
  double t = 0.0;
  Vec x = state.x;
  double c = sys_->longitudinal_p(x);

  // Starting exactly on the section moving backward: immediate handover.
  if (dir < 0.0 && std::abs(c) <= 1e-13 * (1.0 + x.norm())) {
    if (sys_->n_p().dot(field.field(x)) > 0.0) {
      Vec u = sys_->transversal_p(x);
      if (u.norm() <= disc) {
        state = State{ChartId::Transit, sys_->tau(), sys_->K_inverse() * u};
        return true;
      }
    }
    c = (sys_->n_p().dot(field.field(x)) > 0.0) ? 1e-300 : -1e-300;
  }

  int guard = 0;
  while (t < span) {
    if (++guard > 2000000) throw ModelError("glued advance: event scan diverged");
    double h = std::min(scan_step_p_, span - t);
    Vec xn = evolve_block(field, dir * h, x);
    double cn = sys_->longitudinal_p(xn);
    double rn = xn.norm();

    double t_exit = -1.0, t_cross = -1.0;
    if (rn > radius) {
      t_exit = bisect(
          [&](double th) { return evolve_block(field, dir * th, x).norm() - radius; }, 0.0, h);
    }
    if (dir < 0.0 && c > 0.0 && cn <= 0.0) {
      t_cross = bisect(
          [&](double th) { return sys_->longitudinal_p(evolve_block(field, dir * th, x)); }, 0.0,
          h);
    }
    if (t_cross >= 0.0 && (t_exit < 0.0 || t_cross <= t_exit)) {
      Vec xc = evolve_block(field, dir * t_cross, x);
      Vec u = sys_->transversal_p(xc);
      if (u.norm() <= disc) {
        remaining -= dir * (t + t_cross);
        state = State{ChartId::Transit, sys_->tau(), sys_->K_inverse() * u};
        return true;
      }
      t += t_cross;
      x = std::move(xc);
      c = -1e-300;
      continue;
    }
    if (t_exit >= 0.0) {
      state.x = evolve_block(field, dir * t_exit, x);
      remaining -= dir * (t + t_exit);
      return false;
    }
    t += h;
    x = std::move(xn);
    c = cn;
  }
  state.x = std::move(x);
  remaining = 0.0;
  return true;
}

bool GluedFlow::advance_transit(State& state, double& remaining) const {
  const double tau = sys_->tau();
  const double disc = sys_->section_radius();
  const Vec& w0 = state.x;  // entry offset in exit-section coordinates
  Vec kw = sys_->K() * w0;
  auto offset_at = [&](double s) -> Vec {
    double th = s / tau;
    return (1.0 - th) * w0 + th * kw;
  };

  double s_target = state.s + remaining;
  double s_stop = std::min(std::max(s_target, 0.0), tau);
  double r0 = offset_at(state.s).norm();
  if (r0 > disc) return false;
  // The offset is affine in s, so its norm is convex: a radius violation on
  // the segment shows up at the far endpoint, and the crossing is unique.
  double r1 = offset_at(s_stop).norm();
  if (r1 > disc) {
    double s_exit = bisect([&](double s) { return offset_at(s).norm() - disc; },
                           state.s, s_stop);
    remaining -= s_exit - state.s;
    state.s = s_exit;
    return false;
  }
  if (s_target >= 0.0 && s_target <= tau) {
    // Interior stop (or exactly on a gate with nothing left). Consume the
    // step in full: s_stop - state.s carries a signed rounding residue that
    // would read as a gate crossing.
    state.s = s_target;
    remaining = 0.0;
    return true;
  }
  remaining = s_target - s_stop;
  state.s = s_stop;
  if (remaining > 0.0) {
    // Emerge on the entry section of p.
    state = State{ChartId::P, 0.0, sys_->section_to_chart_p(kw)};
  } else {
    // Emerge backward on the exit section of q.
    state = State{ChartId::Q, 0.0, sys_->section_to_chart_q(w0)};
  }
  return state.x.norm() <= sys_->chart_radius();
}

bool GluedFlow::advance(State& state, double dt) const {
  if (state.chart == ChartId::Ambient)
    throw ModelError("glued advance: state does not belong to this flow");
  double remaining = dt;
  int guard = 0;
  while (remaining != 0.0) {
    if (++guard > 1000000) throw ModelError("glued advance: chart handover diverged");
    bool ok = true;
    switch (state.chart) {
      case ChartId::Q:
        ok = advance_q(state, remaining);
        break;
      case ChartId::Transit:
        ok = advance_transit(state, remaining);
        break;
      case ChartId::P:
        ok = advance_p(state, remaining);
        break;
      default:
        throw ModelError("glued advance: bad chart");
    }
    if (!ok) return false;
  }
  return true;
}

GluedFlow::Extended GluedFlow::extended(const State& state) const {
  Extended e;
  switch (state.chart) {
    case ChartId::Q:
      e.lam = sys_->longitudinal_q(state.x);
      e.u = sys_->transversal_q(state.x);
      break;
    case ChartId::Transit: {
      double th = state.s / sys_->tau();
      e.lam = sys_->mean_section_speed() * state.s;
      e.u = (1.0 - th) * state.x + th * (sys_->K() * state.x);
      break;
    }
    case ChartId::P:
      e.lam = sys_->mean_section_speed() * sys_->tau() + sys_->longitudinal_p(state.x);
      e.u = sys_->transversal_p(state.x);
      break;
    default:
      throw ModelError("glued extended: bad chart");
  }
  return e;
}

double GluedFlow::distance(const State& a, const State& b) const {
  if (a.chart == b.chart && a.chart != ChartId::Transit)
    return (a.x - b.x).norm();  // same-chart distances are plain Euclidean
  Extended ea = extended(a), eb = extended(b);
  return std::hypot(ea.lam - eb.lam, (ea.u - eb.u).norm());
}

State evolve_glued(const GluedFlow& flow, double t, const State& x) {
  State y = x;
  if (!flow.advance(y, t)) throw OutOfDomainError("evolve_glued: trajectory left the model domain");
  return y;
}

}  // namespace shadowlab
