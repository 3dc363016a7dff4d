#include "shadowlab/shadow_search.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <utility>

#include "shadowlab/errors.hpp"
#include "shadowlab/obstruction.hpp"
#include "shadowlab/parallel.hpp"
#include "shadowlab/rng.hpp"

namespace shadowlab {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* chart_label(ChartId chart) {
  switch (chart) {
    case ChartId::Ambient: return "ambient";
    case ChartId::Q: return "q";
    case ChartId::Transit: return "transit";
    case ChartId::P: return "p";
  }
  return "ambient";
}

// Precomputed probe grid: g sampled at step dt/8, window clipped to indices.
struct ProbeContext {
  const Flow* flow = nullptr;
  std::vector<State> table;
  double t0 = 0.0;
  double step = 0.0;
  long k_lo = 0;
  long k_hi = 0;
  long k_split = 0;  // first index with probe time >= 0

  ProbeContext(const Flow& f, const Pseudotrajectory& g, Window window, int workers)
      : flow(&f), table(pseudo_refined_table(f, g, 8, workers)), t0(g.t0), step(g.dt / 8.0) {
    auto k_max = static_cast<long>(table.size()) - 1;
    k_lo = std::clamp(static_cast<long>(std::ceil((window.t_lo - t0) / step - 1e-9)), 0L, k_max);
    k_hi = std::clamp(static_cast<long>(std::floor((window.t_hi - t0) / step + 1e-9)), 0L, k_max);
    if (k_hi < k_lo) throw ModelError("shadow_search: empty probe window");
    k_split = std::clamp(static_cast<long>(std::ceil(-t0 / step - 1e-9)), k_lo, k_hi + 1);
  }

  // Sup of dist(phi(h(t), p0), g(t)) over the probe grid, sweeping backward
  // from the anchor first, then forward. Early exit keeps the value a sound
  // rejection bound: a finished sweep is exact, a bailed one returns a lower
  // bound that already reaches the cutoff.
  double eval(const State& p0, const PiecewiseLinearRepar& h, double cutoff) const {
    double worst = 0.0;
    State cur = p0;
    double h_cur = 0.0;
    for (long k = k_split - 1; k >= k_lo; --k) {
      double ht = h.eval(t0 + step * static_cast<double>(k));
      if (!flow->advance(cur, ht - h_cur)) return kMaxDistance;
      h_cur = ht;
      worst = std::max(worst, flow->distance(cur, table[static_cast<std::size_t>(k)]));
      if (worst >= cutoff) return worst;
    }
    cur = p0;
    h_cur = 0.0;
    for (long k = k_split; k <= k_hi; ++k) {
      double ht = h.eval(t0 + step * static_cast<double>(k));
      if (!flow->advance(cur, ht - h_cur)) return kMaxDistance;
      h_cur = ht;
      worst = std::max(worst, flow->distance(cur, table[static_cast<std::size_t>(k)]));
      if (worst >= cutoff) return worst;
    }
    return worst;
  }
};

// Search coordinates: [point parameters | segment slopes]. Points are exit
// section offsets for glued flows (kept inside the section disc) and plain
// coordinates otherwise; slopes live in the Rep(class_a) box.
struct ParamSpace {
  const GluedFlow* glued = nullptr;
  int n_point = 0;
  int n_slope = 0;
  double class_a = 0.0;
  double slope_lo = 1.0;
  double slope_hi = 1.0;
  std::vector<double> breakpoints;

  ParamSpace(const Flow& flow, const Pseudotrajectory& g, double a) : class_a(a) {
    glued = dynamic_cast<const GluedFlow*>(&flow);
    n_point = glued ? glued->system().section_dim() : flow.dim();
    if (a < 0.0) throw ModelError("shadow_search: class_a must be nonnegative");
    if (a > 0.0) {
      slope_lo = std::max(1.0 - a, 1e-6);
      slope_hi = 1.0 + a;
      auto segments = static_cast<long>(g.nodes.size()) - 1;
      if (segments < 1) throw ModelError("shadow_search: need at least one segment for h");
      bool has_zero = false;
      for (long k = 0; k < segments; ++k) {
        double t = g.t0 + g.dt * static_cast<double>(k);
        if (std::abs(t) <= 1e-9 * std::max(1.0, std::abs(g.t0))) {
          t = 0.0;
          has_zero = true;
        }
        breakpoints.push_back(t);
      }
      if (!has_zero) {
        auto pos = std::upper_bound(breakpoints.begin(), breakpoints.end(), 0.0);
        breakpoints.insert(pos, 0.0);
      }
      n_slope = static_cast<int>(breakpoints.size());
    }
  }

  int dims() const { return n_point + n_slope; }

  void project(Vec& z) const {
    if (glued != nullptr) {
      double r = z.head(n_point).norm();
      double cap = glued->system().section_radius();
      if (r > cap) z.head(n_point) *= cap / r;
    }
    for (int i = 0; i < n_slope; ++i)
      z(n_point + i) = std::clamp(z(n_point + i), slope_lo, slope_hi);
  }

  State decode_point(const Vec& z) const {
    if (glued != nullptr) return glued->section_state_q(z.head(n_point));
    return State{ChartId::Ambient, 0.0, z.head(n_point)};
  }

  PiecewiseLinearRepar decode_h(const Vec& z) const {
    if (n_slope == 0) return PiecewiseLinearRepar::identity();
    std::vector<double> slopes(static_cast<std::size_t>(n_slope));
    for (int i = 0; i < n_slope; ++i) slopes[static_cast<std::size_t>(i)] = z(n_point + i);
    return PiecewiseLinearRepar(breakpoints, std::move(slopes));
  }
};

// Largest node-to-node defect of g, used to scale simplex steps and random
// start spreads to the pseudotrajectory at hand.
double estimate_jump(const Flow& flow, const Pseudotrajectory& g) {
  double worst = 0.0;
  std::size_t count = g.nodes.size() - 1;
  std::size_t stride = std::max<std::size_t>(1, count / 512);
  for (std::size_t k = 0; k < count; k += stride) {
    auto next = flow.evolve(g.dt, g.nodes[k]);
    if (!next) continue;
    worst = std::max(worst, flow.distance(*next, g.nodes[k + 1]));
  }
  return std::max(worst, 1e-8);
}

struct NmOutcome {
  double best = kMaxDistance;
  Vec z;
};

// Nelder-Mead under box projection. The objective contract: fn(z, cutoff)
// returns the exact value when it is below cutoff, otherwise any lower bound
// reaching cutoff; every stored simplex value is exact.
template <typename Fn>
NmOutcome nelder_mead(const Fn& fn, const ParamSpace& space, Vec z0, const Vec& steps, long budget,
                      double target) {
  const int m = space.dims();
  long evals = 0;
  auto eval = [&](const Vec& z, double cutoff) {
    ++evals;
    return fn(z, cutoff);
  };

  std::vector<Vec> xs;
  std::vector<double> fs;
  space.project(z0);
  xs.push_back(z0);
  fs.push_back(eval(z0, kMaxDistance));
  for (int i = 0; i < m && evals < budget; ++i) {
    Vec z = z0;
    z(i) += steps(i);
    space.project(z);
    if ((z - z0).norm() == 0.0) {
      z(i) = z0(i) - steps(i);
      space.project(z);
    }
    xs.push_back(z);
    fs.push_back(eval(z, kMaxDistance));
  }

  auto sort_simplex = [&]() {
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    std::vector<Vec> xs2(xs.size());
    std::vector<double> fs2(fs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      xs2[i] = std::move(xs[order[i]]);
      fs2[i] = fs[order[i]];
    }
    xs = std::move(xs2);
    fs = std::move(fs2);
  };
  sort_simplex();

  if (xs.size() == static_cast<std::size_t>(m) + 1) {
    Vec total = Vec::Zero(m);
    for (const Vec& x : xs) total += x;

    auto replace_worst = [&](Vec&& z, double f) {
      total += z - xs.back();
      std::size_t pos = static_cast<std::size_t>(
          std::upper_bound(fs.begin(), fs.end() - 1, f) - fs.begin());
      xs.pop_back();
      fs.pop_back();
      xs.insert(xs.begin() + static_cast<long>(pos), std::move(z));
      fs.insert(fs.begin() + static_cast<long>(pos), f);
    };

    while (evals < budget) {
      if (fs.front() <= target) break;
      if (fs.back() - fs.front() <= 1e-14 * (1.0 + std::abs(fs.front()))) break;

      Vec centroid = (total - xs.back()) / static_cast<double>(m);
      Vec xr = centroid + (centroid - xs.back());
      space.project(xr);
      double fr = eval(xr, fs.back());

      if (fr < fs.front()) {
        Vec xe = centroid + 2.0 * (xr - centroid);
        space.project(xe);
        double fe = evals < budget ? eval(xe, fr) : kMaxDistance;
        if (fe < fr)
          replace_worst(std::move(xe), fe);
        else
          replace_worst(std::move(xr), fr);
      } else if (fr < fs[static_cast<std::size_t>(m) - 1]) {
        replace_worst(std::move(xr), fr);
      } else {
        bool shrink = true;
        if (fr < fs.back()) {
          Vec xc = centroid + 0.5 * (xr - centroid);
          space.project(xc);
          double fc = evals < budget ? eval(xc, fr) : kMaxDistance;
          if (fc < fr) {
            replace_worst(std::move(xc), fc);
            shrink = false;
          }
        } else {
          Vec xc = centroid - 0.5 * (centroid - xs.back());
          space.project(xc);
          double fc = evals < budget ? eval(xc, fs.back()) : kMaxDistance;
          if (fc < fs.back()) {
            replace_worst(std::move(xc), fc);
            shrink = false;
          }
        }
        if (shrink) {
          if (budget - evals < m) break;
          for (std::size_t i = 1; i < xs.size(); ++i) {
            xs[i] = xs.front() + 0.5 * (xs[i] - xs.front());
            space.project(xs[i]);
            fs[i] = eval(xs[i], kMaxDistance);
          }
          sort_simplex();
          total.setZero();
          for (const Vec& x : xs) total += x;
        }
      }
    }
  }

  NmOutcome out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (fs[i] < out.best) {
      out.best = fs[i];
      out.z = xs[i];
    }
  }
  if (out.z.size() == 0) out.z = z0;
  return out;
}

// Fixed starts: the connection itself, g's own anchors pulled back to the
// search coordinates, and their midpoint.
std::vector<Vec> fixed_starts(const Flow& flow, const Pseudotrajectory& g,
                              const ParamSpace& space) {
  std::vector<Vec> sigmas;
  if (space.glued != nullptr) {
    const auto& sys = space.glued->system();
    sigmas.push_back(Vec::Zero(space.n_point));
    auto k_zero = static_cast<long>(std::llround(-g.t0 / g.dt));
    auto n = static_cast<long>(g.nodes.size());
    if (k_zero >= 1 && k_zero < n) {
      auto state = flow.evolve(g.dt, g.nodes[static_cast<std::size_t>(k_zero - 1)]);
      if (state) {
        if (state->chart == ChartId::Transit)
          sigmas.push_back(state->x);
        else if (state->chart == ChartId::Q)
          sigmas.push_back(sys.transversal_q(state->x));
      }
    }
    auto k_tau = k_zero + static_cast<long>(std::llround(sys.tau() / g.dt));
    if (k_tau >= 0 && k_tau < n) {
      const State& node = g.nodes[static_cast<std::size_t>(k_tau)];
      if (node.chart == ChartId::P)
        sigmas.push_back(sys.K_inverse() * sys.transversal_p(node.x));
    }
    if (sigmas.size() >= 3) sigmas.push_back(0.5 * (sigmas[1] + sigmas[2]));
  } else {
    auto k_zero = std::clamp(static_cast<long>(std::llround(-g.t0 / g.dt)), 0L,
                             static_cast<long>(g.nodes.size()) - 1);
    sigmas.push_back(g.nodes[static_cast<std::size_t>(k_zero)].x);
  }

  std::vector<Vec> out;
  for (const Vec& sigma : sigmas) {
    Vec z = Vec::Ones(space.dims());
    z.head(space.n_point) = sigma;
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace

double residual(const Flow& flow, const Pseudotrajectory& g, const State& p0,
                const PiecewiseLinearRepar& h, Window window, double early_exit) {
  ProbeContext ctx(flow, g, window, 1);
  return ctx.eval(p0, h, early_exit);
}

ShadowingResult shadow_search(const Flow& flow, const Pseudotrajectory& g, Window window,
                              double class_a, const SearchOptions& opts) {
  if (opts.starts < 1) throw ModelError("shadow_search: need at least one start");
  if (opts.budget < 1) throw ModelError("shadow_search: need a positive evaluation budget");
  if (g.nodes.size() < 2) throw ModelError("shadow_search: pseudotrajectory too short");

  ParamSpace space(flow, g, class_a);
  ProbeContext ctx(flow, g, window, opts.workers);
  double d_est = estimate_jump(flow, g);

  std::vector<Vec> starts = fixed_starts(flow, g, space);
  for (const Vec& z : opts.extra_seeds) {
    if (z.size() != space.dims())
      throw ModelError("shadow_search: extra seed has wrong dimension");
    starts.push_back(z);
  }
  const auto n_fixed = starts.size();

  double step_p = opts.step_p > 0.0 ? opts.step_p : 2.0 * d_est;
  double step_slope = opts.step_slope > 0.0 ? opts.step_slope : class_a / 4.0;
  Vec steps = Vec::Constant(space.dims(), step_slope);
  steps.head(space.n_point).setConstant(step_p);

  double target = opts.target ? *opts.target : -std::numeric_limits<double>::infinity();
  auto objective = [&](const Vec& z, double cutoff) {
    return ctx.eval(space.decode_point(z), space.decode_h(z), cutoff);
  };

  auto count = static_cast<std::size_t>(opts.starts);
  std::vector<NmOutcome> outcomes(count);
  parallel_for(count, opts.workers, [&](std::size_t i) {
    Vec z0;
    if (i < n_fixed) {
      z0 = starts[i];
    } else {
      auto rng = derive_stream(opts.seed, i);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      z0 = Vec::Ones(space.dims());
      z0.head(space.n_point) = starts[0].head(space.n_point);
      for (int k = 0; k < space.n_point; ++k) z0(k) += 3.0 * d_est * gauss(rng);
      double wiggle = 0.5 * std::min(class_a, 0.5);
      for (int k = 0; k < space.n_slope; ++k) z0(space.n_point + k) += wiggle * unif(rng);
    }
    outcomes[i] = nelder_mead(objective, space, std::move(z0), steps, opts.budget, target);
  });

  std::size_t winner = 0;
  for (std::size_t i = 1; i < count; ++i)
    if (outcomes[i].best < outcomes[winner].best) winner = i;

  ShadowingResult result;
  result.p_star_params = outcomes[winner].z.head(space.n_point);
  result.p_star = space.decode_point(outcomes[winner].z);
  result.h_star = space.decode_h(outcomes[winner].z);
  result.best_eps = ctx.eval(result.p_star, result.h_star, kMaxDistance);
  result.class_a = class_a;
  if (opts.target && result.best_eps <= *opts.target) result.feasible_at = *opts.target;
  result.starts = opts.starts;
  result.budget = opts.budget;
  result.seed = opts.seed;
  return result;
}

nlohmann::json shadow_result_to_json(const ShadowingResult& result) {
  nlohmann::json j{
      {"best_eps", result.best_eps},
      {"class_a", result.class_a},
      {"p_star",
       {{"chart", chart_label(result.p_star.chart)},
        {"s", result.p_star.s},
        {"x", std::vector<double>(result.p_star.x.data(),
                                  result.p_star.x.data() + result.p_star.x.size())}}},
      {"p_star_params",
       std::vector<double>(result.p_star_params.data(),
                           result.p_star_params.data() + result.p_star_params.size())},
      {"h_star", nlohmann::json::parse(rep_to_json(result.h_star))},
      {"starts", result.starts},
      {"budget", result.budget},
      {"seed", result.seed}};
  if (result.feasible_at) j["feasible_at"] = *result.feasible_at;
  return j;
}

std::string sweep_to_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "L,d,best_eps,ratio,class_a,verdict,obstruction_verdict\n";
  for (const SweepCell& cell : table.rows) {
    out << fmt_double(cell.L) << ',' << fmt_double(cell.d) << ',' << fmt_double(cell.best_eps)
        << ',' << fmt_double(cell.ratio) << ',' << fmt_double(cell.class_a) << ','
        << (cell.lip_ok ? "LipOK" : "LipFail") << ',' << cell.obstruction_verdict << '\n';
  }
  return out.str();
}

SweepTable lipschitz_sweep(const GluedFlow& flow, const std::vector<double>& L_list,
                           const std::vector<double>& d_list, int starts, long budget,
                           std::uint64_t seed, int workers) {
  const auto& sys = flow.system();
  JumpDirections jd = jump_directions(sys);

  SweepTable table;
  std::uint64_t cell_index = 0;
  for (double L : L_list) {
    for (double d : d_list) {
      GluedPseudoParams gp;
      gp.dt = 0.1;
      gp.t_cap = 8.0;
      Pseudotrajectory g = pseudo_glued(flow, d, jd.e_q, jd.e_p, gp);

      SearchOptions so;
      so.starts = starts;
      so.budget = budget;
      so.seed = derive_stream(seed, cell_index)();
      so.workers = workers;
      so.target = L * d;
      ShadowingResult res = shadow_search(flow, g, full_window(g), L * d, so);

      SweepCell cell;
      cell.L = L;
      cell.d = d;
      cell.best_eps = res.best_eps;
      cell.ratio = res.best_eps / d;
      cell.class_a = L * d;
      cell.lip_ok = res.best_eps <= L * d;
      cell.obstruction_verdict = "none";
      if (jd.frame) {
        ObstructionReport rep =
            obstruction_report(flow, *jd.frame, sys.section_to_chart_q(res.p_star_params),
                               res.h_star, d, L, 8.0, gp);
        cell.obstruction_verdict = to_string(rep.verdict);
      }
      table.rows.push_back(std::move(cell));
      ++cell_index;
    }
  }
  return table;
}

namespace {

// Extended coordinates of a planar glued state, kept flat for dense tables.
struct Ext2 {
  double lam = 0.0;
  double u = 0.0;
};

Ext2 ext2_of(const GluedFlow& flow, const State& state) {
  GluedFlow::Extended e = flow.extended(state);
  return Ext2{e.lam, e.u(0)};
}

// Candidate orbit sampled on a uniform grid in its own time. Entries past the
// built range reuse the boundary entry when the orbit has settled near a rest
// point, and read as out-of-domain when the orbit actually left.
struct OrbitTable {
  double delta = 0.0;
  std::vector<Ext2> fwd;   // entry j at time +j*delta; fwd[0] is the start
  std::vector<Ext2> back;  // entry j at time -(j+1)*delta
  bool fwd_ood = false;
  bool back_ood = false;

  bool at(double t, Ext2& out) const {
    auto j = std::llround(t / delta);
    if (j >= 0) {
      if (j < static_cast<long long>(fwd.size())) {
        out = fwd[static_cast<std::size_t>(j)];
        return true;
      }
      if (fwd_ood) return false;
      out = fwd.back();
      return true;
    }
    auto k = static_cast<long long>(-j) - 1;
    if (k < static_cast<long long>(back.size())) {
      out = back[static_cast<std::size_t>(k)];
      return true;
    }
    if (back_ood || back.empty()) return false;
    out = back.back();
    return true;
  }
};

OrbitTable build_orbit_table(const GluedFlow& flow, const State& x0, double delta, double span_back,
                             double span_fwd) {
  OrbitTable tab;
  tab.delta = delta;
  auto n_fwd = static_cast<long>(std::ceil(span_fwd / delta)) + 1;
  auto n_back = static_cast<long>(std::ceil(span_back / delta));

  State cur = x0;
  tab.fwd.push_back(ext2_of(flow, cur));
  for (long j = 1; j < n_fwd; ++j) {
    if (!flow.advance(cur, delta)) {
      tab.fwd_ood = true;
      break;
    }
    tab.fwd.push_back(ext2_of(flow, cur));
  }
  cur = x0;
  for (long j = 0; j < n_back; ++j) {
    if (!flow.advance(cur, -delta)) {
      tab.back_ood = true;
      break;
    }
    tab.back.push_back(ext2_of(flow, cur));
  }
  return tab;
}

std::vector<PiecewiseLinearRepar> build_h_family(const NosubsetHFamily& hfam, double t_lo,
                                                 double t_hi, std::uint64_t seed) {
  std::vector<PiecewiseLinearRepar> out;
  out.push_back(PiecewiseLinearRepar::identity());

  auto n_offsets = static_cast<long>(std::floor(hfam.offset_span / hfam.offset_step + 1e-9));
  for (long k = -n_offsets; k <= n_offsets; ++k) {
    if (k == 0) continue;
    double c = hfam.offset_step * static_cast<double>(k);
    double ramp_slope = 1.0 + c / hfam.ramp_len;
    if (!(ramp_slope > 1e-6)) continue;
    out.emplace_back(std::vector<double>{-hfam.ramp_len - 1.0, -hfam.ramp_len, 0.0},
                     std::vector<double>{1.0, ramp_slope, 1.0});
  }

  for (double s : {0.25, 0.5, 0.75, 1.25, 1.5, 2.0, 3.0, 4.0})
    out.emplace_back(std::vector<double>{0.0}, std::vector<double>{s});

  const double classes[] = {0.1, 0.3, 0.5, 0.7};
  double lo = std::floor(t_lo), hi = std::ceil(t_hi);
  for (std::size_t j = 0; out.size() < static_cast<std::size_t>(hfam.total); ++j) {
    auto rng = derive_stream(seed, j);
    out.push_back(rep_random(classes[j % 4], lo, hi, 1.0, rng));
  }
  out.resize(static_cast<std::size_t>(hfam.total));
  return out;
}

struct FailRecord {
  int phase = -1;  // 0 = backward window (t <= 0), 1 = forward, -1 = survived
  double t = 0.0;
};

// Lexicographic "resilience" order over failure records: surviving the
// backward window (phase 1) outranks any backward failure (phase 0); within
// the backward phase, failing deeper means the pair held out longer, while in
// the forward phase a later failure wins.
bool more_resilient(const FailRecord& a, const FailRecord& b) {
  if (a.phase != b.phase) return a.phase > b.phase;
  if (a.phase == 0) return a.t < b.t;
  return a.t > b.t;
}

RegionClass classify_point(const GluedHeteroclinicSystem& sys, const Vec& x, const Vec& r,
                           double eps) {
  if (x.norm() > sys.chart_radius()) return RegionClass::OutsideChart;
  int ns = sys.dim_stable_p();
  double off_unstable = x.tail(sys.dim_unstable_p()).norm();
  Vec s_part = x.head(ns);
  Vec s_dir = sys.a_p().head(ns);
  double scale = s_part.dot(s_dir) / s_dir.squaredNorm();
  bool on_manifold = off_unstable <= 1e-12 && (s_part - scale * s_dir).norm() <= 1e-12 &&
                     scale > 0.0 && scale <= 1.0 + 1e-12;
  if (!on_manifold) return RegionClass::OffUnstable;
  return (x - r).norm() > eps ? RegionClass::OnUnstableFar : RegionClass::OnUnstableNear;
}

}  // namespace

const char* to_string(RegionClass c) {
  switch (c) {
    case RegionClass::OutsideChart: return "outside_chart";
    case RegionClass::OffUnstable: return "off_unstable";
    case RegionClass::OnUnstableFar: return "on_unstable_far";
    case RegionClass::OnUnstableNear: return "on_unstable_near";
  }
  return "outside_chart";
}

void nosubset_validate_eps(const GluedHeteroclinicSystem& sys, const Vec& r_chart_p,
                           const Vec& alpha_chart_p, double eps) {
  if (!(eps > 0.0)) throw ModelError("nosubset: eps must be positive, got " + fmt_double(eps));
  double alpha_off = alpha_chart_p.tail(sys.dim_unstable_p()).norm();
  if (!(eps < alpha_off))
    throw ModelError("nosubset: eps " + fmt_double(eps) +
                     " must stay below the unstable offset of alpha, " + fmt_double(alpha_off));
  double margin = sys.chart_radius() - r_chart_p.norm();
  if (!(eps < margin))
    throw ModelError("nosubset: eps " + fmt_double(eps) +
                     " must stay below the chart margin around r, " + fmt_double(margin));
}

double nosubset_auto_eps(const GluedHeteroclinicSystem& sys, const Vec& r_chart_p,
                         const Vec& alpha_chart_p) {
  double alpha_off = alpha_chart_p.tail(sys.dim_unstable_p()).norm();
  double margin = sys.chart_radius() - r_chart_p.norm();
  return 0.5 * std::min(alpha_off, margin);
}

NosubsetReport nosubset_feasibility(const GluedFlow& flow, const Pseudotrajectory& g,
                                    const Vec& r_chart_p, const Vec& alpha_chart_p, double tau0,
                                    double tau1, double eps, const NosubsetGrid& grid,
                                    const NosubsetHFamily& hfam, std::uint64_t seed, int workers) {
  const auto& sys = flow.system();
  if (sys.dim() != 2) throw ModelError("nosubset: needs the planar two-saddle model");
  if (grid.nx < 2) throw ModelError("nosubset: grid needs at least two points per axis");
  nosubset_validate_eps(sys, r_chart_p, alpha_chart_p, eps);

  std::vector<State> refined = pseudo_refined_table(flow, g, 8, workers);
  double pstep = g.dt / 8.0;
  auto k_hi = static_cast<long>(refined.size()) - 1;
  auto k_zero = std::clamp(static_cast<long>(std::llround(-g.t0 / pstep)), 0L, k_hi);
  std::vector<Ext2> g_ext(refined.size());
  for (std::size_t k = 0; k < refined.size(); ++k) g_ext[k] = ext2_of(flow, refined[k]);

  std::vector<PiecewiseLinearRepar> family = build_h_family(hfam, g.t0, g.t_end(), seed);
  double h_min = 0.0, h_max = 0.0;
  for (const auto& h : family) {
    h_min = std::min(h_min, h.eval(g.t0));
    h_max = std::max(h_max, h.eval(g.t_end()));
  }
  const double span_cap = 30.0;
  double span_back = std::min(-h_min, span_cap);
  double span_fwd = std::min(h_max, span_cap);

  double R = sys.chart_radius();
  double cell = 2.0 * R / static_cast<double>(grid.nx);
  auto total = static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.nx);

  NosubsetReport report;
  report.eps = eps;
  report.points.resize(total);
  std::vector<int> witness_h(total, -1);

  parallel_for(total, workers, [&](std::size_t idx) {
    auto i = static_cast<long>(idx) / grid.nx;
    auto j = static_cast<long>(idx) % grid.nx;
    Vec x(2);
    x << -R + cell * static_cast<double>(i), -R + cell * static_cast<double>(j);

    NosubsetPoint& pt = report.points[idx];
    pt.x = x;
    pt.region = classify_point(sys, x, r_chart_p, eps);

    // Sentinel loses to every record: backward failures rank deeper-is-better,
    // so the least resilient backward failure time is +inf.
    FailRecord best{0, std::numeric_limits<double>::infinity()};
    if (pt.region == RegionClass::OutsideChart) {
      best = FailRecord{0, 0.0};  // out of domain already at the pinned probe
    } else {
      State x0{ChartId::P, 0.0, x};
      OrbitTable tab = build_orbit_table(flow, x0, pstep, span_back, span_fwd);
      for (std::size_t hi = 0; hi < family.size(); ++hi) {
        const auto& h = family[hi];
        FailRecord rec{-1, 0.0};
        for (long k = k_zero; k >= 0; --k) {
          double t = g.t0 + pstep * static_cast<double>(k);
          Ext2 e;
          bool ok = tab.at(h.eval(t), e);
          if (!ok || std::hypot(e.lam - g_ext[static_cast<std::size_t>(k)].lam,
                                e.u - g_ext[static_cast<std::size_t>(k)].u) > eps) {
            rec = FailRecord{0, t};
            break;
          }
        }
        if (rec.phase < 0) {
          for (long k = k_zero + 1; k <= k_hi; ++k) {
            double t = g.t0 + pstep * static_cast<double>(k);
            Ext2 e;
            bool ok = tab.at(h.eval(t), e);
            if (!ok || std::hypot(e.lam - g_ext[static_cast<std::size_t>(k)].lam,
                                  e.u - g_ext[static_cast<std::size_t>(k)].u) > eps) {
              rec = FailRecord{1, t};
              break;
            }
          }
        }
        if (rec.phase < 0) {
          witness_h[idx] = static_cast<int>(hi);
          best = rec;
          break;
        }
        if (more_resilient(rec, best)) best = rec;
      }
    }

    if (witness_h[idx] >= 0) {
      pt.fail_time = std::numeric_limits<double>::infinity();
      pt.matches = false;
      return;
    }
    pt.fail_time = best.t;
    switch (pt.region) {
      case RegionClass::OutsideChart:
      case RegionClass::OnUnstableFar:
        pt.matches = best.phase == 0 && best.t == 0.0;
        break;
      case RegionClass::OffUnstable:
        pt.matches = best.phase == 0;
        break;
      case RegionClass::OnUnstableNear:
        pt.matches = best.phase == 1 && best.t > tau0 && std::abs(best.t - (tau0 + tau1)) <= 1.5;
        break;
    }
  });

  for (std::size_t idx = 0; idx < total; ++idx) {
    const NosubsetPoint& pt = report.points[idx];
    switch (pt.region) {
      case RegionClass::OutsideChart: ++report.count_outside; break;
      case RegionClass::OffUnstable: ++report.count_off; break;
      case RegionClass::OnUnstableFar: ++report.count_far; break;
      case RegionClass::OnUnstableNear: ++report.count_near; break;
    }
    if (!pt.matches) ++report.mismatches;
    if (witness_h[idx] >= 0 && !report.feasible) {
      report.feasible = true;
      report.witness = NosubsetWitness{pt.x, family[static_cast<std::size_t>(witness_h[idx])]};
    }
  }
  report.all_match = report.mismatches == 0;
  return report;
}

nlohmann::json nosubset_to_json(const NosubsetReport& report) {
  nlohmann::json j{{"feasible", report.feasible},
                   {"eps", report.eps},
                   {"count_outside", report.count_outside},
                   {"count_off_unstable", report.count_off},
                   {"count_on_unstable_far", report.count_far},
                   {"count_on_unstable_near", report.count_near},
                   {"mismatches", report.mismatches},
                   {"all_match", report.all_match}};
  if (report.witness) {
    j["witness"] = {
        {"x", std::vector<double>(report.witness->x.data(),
                                  report.witness->x.data() + report.witness->x.size())},
        {"h", nlohmann::json::parse(rep_to_json(report.witness->h))}};
  }
  nlohmann::json points = nlohmann::json::array();
  for (const NosubsetPoint& pt : report.points) {
    points.push_back({{"x", std::vector<double>(pt.x.data(), pt.x.data() + pt.x.size())},
                      {"region", to_string(pt.region)},
                      {"fail_time", pt.fail_time},
                      {"matches", pt.matches}});
  }
  j["points"] = std::move(points);
  return j;
}

}  // namespace shadowlab
