#include "shadowlab/repar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <nlohmann/json.hpp>

#include "shadowlab/errors.hpp"

namespace shadowlab {

namespace {

std::size_t find_zero_index(const std::vector<double>& breakpoints) {
  for (std::size_t i = 0; i < breakpoints.size(); ++i)
    if (breakpoints[i] == 0.0) return i;
  throw ModelError("repar: breakpoints must contain 0");
}

}  // namespace

PiecewiseLinearRepar::PiecewiseLinearRepar()
    : PiecewiseLinearRepar({0.0}, {1.0}) {}

PiecewiseLinearRepar::PiecewiseLinearRepar(std::vector<double> breakpoints,
                                           std::vector<double> slopes)
    : breakpoints_(std::move(breakpoints)), slopes_(std::move(slopes)) {
  if (breakpoints_.empty() || slopes_.size() != breakpoints_.size())
    throw ModelError("repar: need one slope per breakpoint");
  for (std::size_t i = 1; i < breakpoints_.size(); ++i)
    if (!(breakpoints_[i] > breakpoints_[i - 1]))
      throw ModelError("repar: breakpoints must be strictly increasing");
  for (double s : slopes_)
    if (!(s > 0.0) || !std::isfinite(s))
      throw ModelError("repar: slopes must be positive and finite");
  zero_index_ = find_zero_index(breakpoints_);

  // Anchor h(0) = 0 exactly and accumulate breakpoint values outward from 0.
  values_.assign(breakpoints_.size(), 0.0);
  for (std::size_t i = zero_index_; i + 1 < breakpoints_.size(); ++i)
    values_[i + 1] = values_[i] + slopes_[i] * (breakpoints_[i + 1] - breakpoints_[i]);
  for (std::size_t i = zero_index_; i > 0; --i)
    values_[i - 1] = values_[i] - slopes_[i - 1] * (breakpoints_[i] - breakpoints_[i - 1]);
}

double PiecewiseLinearRepar::eval(double t) const {
  if (t <= breakpoints_.front())
    return values_.front() + slopes_.front() * (t - breakpoints_.front());
  if (t >= breakpoints_.back())
    return values_.back() + slopes_.back() * (t - breakpoints_.back());
  // Last breakpoint <= t.
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
  return values_[i] + slopes_[i] * (t - breakpoints_[i]);
}

double PiecewiseLinearRepar::slope_at(double t) const {
  if (t < breakpoints_.front()) return slopes_.front();
  if (t >= breakpoints_.back()) return slopes_.back();
  auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return slopes_[static_cast<std::size_t>(it - breakpoints_.begin()) - 1];
}

double PiecewiseLinearRepar::min_class() const {
  double m = 0.0;
  for (double s : slopes_) m = std::max(m, std::abs(s - 1.0));
  return m;
}

PiecewiseLinearRepar rep_compose(const PiecewiseLinearRepar& outer,
                                 const PiecewiseLinearRepar& inner) {
  // Segment boundaries of outer(inner(t)): inner's own breakpoints plus the
  // preimages of outer's breakpoints under inner.
  PiecewiseLinearRepar inner_inv = rep_invert(inner);
  std::vector<double> pts = inner.breakpoints();
  for (double b : outer.breakpoints()) pts.push_back(inner_inv.eval(b));
  for (double& p : pts)
    if (std::abs(p) < 1e-15) p = 0.0;
  std::sort(pts.begin(), pts.end());
  std::vector<double> merged;
  merged.reserve(pts.size());
  for (double p : pts) {
    if (merged.empty() || p - merged.back() > 1e-14 * (1.0 + std::abs(p)))
      merged.push_back(p);
  }
  // Slope on each segment is the product of the two local slopes, read off at
  // segment midpoints (the last segment extends to +inf, probe past its end).
  std::vector<double> slopes;
  slopes.reserve(merged.size());
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    double mid = 0.5 * (merged[i] + merged[i + 1]);
    slopes.push_back(inner.slope_at(mid) * outer.slope_at(inner.eval(mid)));
  }
  double tail = merged.back() + 1.0;
  slopes.push_back(inner.slope_at(tail) * outer.slope_at(inner.eval(tail)));
  return PiecewiseLinearRepar(std::move(merged), std::move(slopes));
}

PiecewiseLinearRepar rep_invert(const PiecewiseLinearRepar& h) {
  std::vector<double> breakpoints = h.values();
  std::vector<double> slopes(h.slopes().size());
  for (std::size_t i = 0; i < slopes.size(); ++i) slopes[i] = 1.0 / h.slopes()[i];
  return PiecewiseLinearRepar(std::move(breakpoints), std::move(slopes));
}

PiecewiseLinearRepar rep_random(double a, double t0, double t1, double dt,
                                std::mt19937_64& rng) {
  if (!(dt > 0.0) || !(t0 <= 0.0) || !(t1 >= 0.0) || !(t1 > t0))
    throw ModelError("rep_random: need t0 <= 0 <= t1 with positive dt");
  long k0 = std::lround(t0 / dt);
  long k1 = std::lround(t1 / dt);
  if (std::abs(k0 * dt - t0) > 1e-9 || std::abs(k1 * dt - t1) > 1e-9)
    throw ModelError("rep_random: window ends must be multiples of dt");
  std::vector<double> breakpoints;
  breakpoints.reserve(static_cast<std::size_t>(k1 - k0 + 1));
  for (long k = k0; k <= k1; ++k) breakpoints.push_back(k == 0 ? 0.0 : k * dt);
  double lo = std::max(1.0 - a, 1e-6), hi = 1.0 + a;
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> slopes(breakpoints.size());
  for (double& s : slopes) s = dist(rng);
  return PiecewiseLinearRepar(std::move(breakpoints), std::move(slopes));
}

std::string rep_to_json(const PiecewiseLinearRepar& h) {
  nlohmann::json j;
  j["breakpoints"] = h.breakpoints();
  j["slopes"] = h.slopes();
  return j.dump();
}

PiecewiseLinearRepar rep_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  return PiecewiseLinearRepar(j.at("breakpoints").get<std::vector<double>>(),
                              j.at("slopes").get<std::vector<double>>());
}

}  // namespace shadowlab
