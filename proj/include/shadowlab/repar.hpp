#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace shadowlab {

// Increasing piecewise-linear time reparametrization anchored at h(0) = 0.
// Breakpoints are strictly increasing and always contain 0; slopes[i] applies
// on [breakpoints[i], breakpoints[i+1]), with the first and last slopes
// extending to -inf and +inf. All slopes are strictly positive.
class PiecewiseLinearRepar {
 public:
  PiecewiseLinearRepar();  // identity
  PiecewiseLinearRepar(std::vector<double> breakpoints, std::vector<double> slopes);

  static PiecewiseLinearRepar identity() { return PiecewiseLinearRepar(); }

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& slopes() const { return slopes_; }
  const std::vector<double>& values() const { return values_; }

  double eval(double t) const;

  // Slope of the segment containing t (one-sided from the right at
  // breakpoints, matching eval).
  double slope_at(double t) const;

  // Smallest a with h in Rep(a): for piecewise-linear h every difference
  // quotient is a convex combination of slopes, so this is max |slope - 1|.
  double min_class() const;
  bool in_class(double a) const { return min_class() <= a; }

 private:
  std::vector<double> breakpoints_;
  std::vector<double> slopes_;
  std::vector<double> values_;  // h at each breakpoint, exact 0 at t = 0
  std::size_t zero_index_ = 0;
};

PiecewiseLinearRepar rep_compose(const PiecewiseLinearRepar& outer,
                                 const PiecewiseLinearRepar& inner);
PiecewiseLinearRepar rep_invert(const PiecewiseLinearRepar& h);

// Random representative of Rep(a) on a uniform breakpoint grid covering
// [t0, t1] and containing 0 (t0 <= 0 <= t1, both multiples of dt). Slopes are
// uniform in [max(1 - a, 1e-6), 1 + a].
PiecewiseLinearRepar rep_random(double a, double t0, double t1, double dt,
                                std::mt19937_64& rng);

std::string rep_to_json(const PiecewiseLinearRepar& h);
PiecewiseLinearRepar rep_from_json(const std::string& text);

}  // namespace shadowlab
