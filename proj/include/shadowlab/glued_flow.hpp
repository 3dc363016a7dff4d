#pragma once

#include <optional>

#include "shadowlab/glued_system.hpp"

namespace shadowlab {

// Common interface of the flows driving pseudotrajectories. advance moves a
// state by dt (either sign) and returns false once the trajectory leaves the
// declared domain; after that the state is undefined and distances involving
// it must be treated as the MAX sentinel by callers.
class Flow {
 public:
  virtual ~Flow() = default;
  virtual int dim() const = 0;
  virtual bool advance(State& state, double dt) const = 0;
  virtual double distance(const State& a, const State& b) const = 0;

  std::optional<State> evolve(double t, const State& x) const {
    State y = x;
    if (!advance(y, t)) return std::nullopt;
    return y;
  }
};

// Sentinel residual value for out-of-domain probes.
inline constexpr double kMaxDistance = 1e300;

// Unbounded linear flow with exact evolution.
class LinearFlow final : public Flow {
 public:
  explicit LinearFlow(BlockLinearField field) : field_(std::move(field)) {}
  int dim() const override { return field_.dim(); }
  bool advance(State& state, double dt) const override;
  double distance(const State& a, const State& b) const override;
  const BlockLinearField& field() const { return field_; }

  static State make_state(Vec x) { return State{ChartId::Ambient, 0.0, std::move(x)}; }

 private:
  BlockLinearField field_;
};

// Fixed-step RK4 flow for general fields (reference/oracle use).
class OdeFlow final : public Flow {
 public:
  OdeFlow(VectorFieldFn field, double step) : field_(std::move(field)), step_(step) {}
  int dim() const override { return field_.dim; }
  bool advance(State& state, double dt) const override;
  double distance(const State& a, const State& b) const override;

 private:
  VectorFieldFn field_;
  double step_;
};

// Flow of the glued heteroclinic model. Charts evolve by the exact linear
// flows; a forward trajectory crossing the exit section disc of q (normal
// component rising through zero, in-plane offset within the section radius)
// enters the tube, crosses it in time tau with its offset carried by the
// transit interpolant, and emerges in the p chart; backward evolution mirrors
// this at the entry section of p. Leaving a chart ball or exceeding the
// section radius inside the tube is out-of-domain. Crossing the extended
// section plane beyond the disc is not an event. Events are resolved by sign
// scanning at a bounded substep followed by bisection, so excursions shorter
// than the scan step are not detected.
class GluedFlow final : public Flow {
 public:
  explicit GluedFlow(GluedSystemPtr sys);
  int dim() const override { return sys_->dim(); }
  bool advance(State& state, double dt) const override;
  double distance(const State& a, const State& b) const override;

  const GluedHeteroclinicSystem& system() const { return *sys_; }

  // Extended coordinates used by the metric: a longitudinal coordinate along
  // the connection (chart normal component, or tube progress scaled by the
  // mean section speed) and the transversal section offset.
  struct Extended {
    double lam = 0.0;
    Vec u;
  };
  Extended extended(const State& state) const;

  State q_state(Vec chart_coords) const;
  State p_state(Vec chart_coords) const;
  // Point of the exit section of q with the given section offset.
  State section_state_q(const Vec& sigma) const;

 private:
  bool advance_q(State& state, double& remaining) const;
  bool advance_p(State& state, double& remaining) const;
  bool advance_transit(State& state, double& remaining) const;

  GluedSystemPtr sys_;
  double scan_step_q_ = 0.25;
  double scan_step_p_ = 0.25;
};

// Exact evolution in the glued model; throws OutOfDomainError if the
// trajectory leaves the declared domain before time t.
State evolve_glued(const GluedFlow& flow, double t, const State& x);

}  // namespace shadowlab
