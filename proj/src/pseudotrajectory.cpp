#include "shadowlab/pseudotrajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "shadowlab/errors.hpp"
#include "shadowlab/parallel.hpp"
#include "shadowlab/rng.hpp"

namespace shadowlab {

namespace {

Vec ball_noise(std::mt19937_64& rng, int dim, double amp) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec v(dim);
  for (int i = 0; i < dim; ++i) v(i) = gauss(rng);
  double norm = v.norm();
  if (norm == 0.0) return Vec::Zero(dim);
  double radius = amp * std::pow(unif(rng), 1.0 / dim);
  return (radius / norm) * v;
}

std::size_t node_count(double t0, double t1, double dt) {
  double span = (t1 - t0) / dt;
  auto steps = static_cast<std::size_t>(std::floor(span + 1e-9));
  return steps + 1;
}

double floor_to_grid(double t, double dt) { return std::floor(t / dt + 1e-9) * dt; }

bool is_grid_multiple(double t, double dt) {
  double u = t / dt;
  return std::abs(u - std::round(u)) <= 1e-9 * (1.0 + std::abs(u));
}

const char* chart_name(ChartId chart) {
  switch (chart) {
    case ChartId::Ambient: return "ambient";
    case ChartId::Q: return "q";
    case ChartId::Transit: return "transit";
    case ChartId::P: return "p";
  }
  return "ambient";
}

ChartId chart_from_name(const std::string& name) {
  if (name == "ambient") return ChartId::Ambient;
  if (name == "q") return ChartId::Q;
  if (name == "transit") return ChartId::Transit;
  if (name == "p") return ChartId::P;
  throw ModelError("unknown chart tag: " + name);
}

}  // namespace

bool Pseudotrajectory::contains(double t) const {
  if (nodes.empty()) return false;
  double tol = 1e-9 * dt;
  return t >= t0 - tol && t <= t_end() + tol;
}

State pseudo_eval(const Flow& flow, const Pseudotrajectory& g, double t) {
  if (g.nodes.empty()) throw ModelError("pseudo_eval: empty trajectory");
  double u = (t - g.t0) / g.dt;
  double rounded = std::round(u);
  if (std::abs(u - rounded) <= 1e-9 && rounded >= 0.0 &&
      rounded < static_cast<double>(g.nodes.size())) {
    return g.nodes[static_cast<std::size_t>(rounded)];
  }
  if (!g.contains(t)) throw ModelError("pseudo_eval: time outside the sampled window");
  auto k = static_cast<std::size_t>(std::max(0.0, std::floor(u)));
  k = std::min(k, g.nodes.size() - 2);
  State s = g.nodes[k];
  double offset = t - (g.t0 + g.dt * static_cast<double>(k));
  if (!flow.advance(s, offset))
    throw OutOfDomainError("pseudo_eval: segment left the flow's domain");
  return s;
}

Pseudotrajectory pseudo_from_orbit(const Flow& flow, const State& x0, double t0, double t1,
                                   double dt, double noise_amp, std::uint64_t seed) {
  if (!(dt > 0.0 && dt <= 0.5)) throw ModelError("pseudo_from_orbit: dt must be in (0, 0.5]");
  if (!(t1 > t0)) throw ModelError("pseudo_from_orbit: empty time window");
  if (noise_amp < 0.0) throw ModelError("pseudo_from_orbit: negative noise amplitude");
  Pseudotrajectory g;
  g.t0 = t0;
  g.dt = dt;
  std::size_t count = node_count(t0, t1, dt);
  g.nodes.reserve(count);
  State s = x0;
  for (std::size_t k = 0; k < count; ++k) {
    if (k > 0 && !flow.advance(s, dt))
      throw OutOfDomainError("pseudo_from_orbit: orbit left the flow's domain");
    State node = s;
    if (noise_amp > 0.0) {
      auto rng = derive_stream(seed, k);
      node.x += ball_noise(rng, static_cast<int>(node.x.size()), noise_amp);
    }
    g.nodes.push_back(std::move(node));
  }
  return g;
}

std::vector<State> pseudo_refined_table(const Flow& flow, const Pseudotrajectory& g, int refine,
                                        int workers) {
  if (g.nodes.size() < 2) throw ModelError("pseudo_refined_table: need at least two nodes");
  if (refine < 1) throw ModelError("pseudo_refined_table: refine must be positive");
  double h = g.dt / refine;
  std::size_t segments = g.nodes.size() - 1;
  std::size_t table_size = segments * static_cast<std::size_t>(refine) + 1;
  std::vector<State> table(table_size);
  parallel_for(g.nodes.size(), workers, [&](std::size_t k) {
    table[k * refine] = g.nodes[k];
    if (k == segments) return;
    State s = g.nodes[k];
    for (int r = 1; r < refine; ++r) {
      if (!flow.advance(s, h))
        throw OutOfDomainError("pseudo_refined_table: trajectory segment left the flow's domain");
      table[k * refine + r] = s;
    }
  });
  return table;
}

DefectReport pseudo_defect(const Flow& flow, const Pseudotrajectory& g, int refine, int workers) {
  if (g.nodes.size() < 2) throw ModelError("pseudo_defect: need at least two nodes");
  if (refine < 1) throw ModelError("pseudo_defect: refine must be positive");
  double window = g.dt * static_cast<double>(g.nodes.size() - 1);
  if (window < 1.0) throw ModelError("pseudo_defect: window shorter than the probe horizon");

  double h = g.dt / refine;
  std::vector<State> table = pseudo_refined_table(flow, g, refine, workers);
  std::size_t table_size = table.size();

  auto m = static_cast<std::size_t>(std::round(1.0 / h));
  std::vector<double> window_max(table_size, 0.0);
  parallel_for(table_size, workers, [&](std::size_t j) {
    double best = 0.0;
    State s = table[j];
    for (std::size_t k = 1; k <= m && j + k < table_size; ++k) {
      if (!flow.advance(s, h)) {
        best = kMaxDistance;
        break;
      }
      best = std::max(best, flow.distance(s, table[j + k]));
    }
    if (best < kMaxDistance) {
      s = table[j];
      for (std::size_t k = 1; k <= m && k <= j; ++k) {
        if (!flow.advance(s, -h)) {
          best = kMaxDistance;
          break;
        }
        best = std::max(best, flow.distance(s, table[j - k]));
      }
    }
    window_max[j] = best;
  });

  DefectReport report;
  report.grid_step = h;
  for (double v : window_max) report.defect = std::max(report.defect, v);
  return report;
}

Pseudotrajectory pseudo_glued(const GluedFlow& flow, double d, const Vec& e_q, const Vec& e_p,
                              const GluedPseudoParams& params) {
  const auto& sys = flow.system();
  int n = sys.dim();
  if (d < 0.0) throw ModelError("pseudo_glued: negative jump size");
  if (d > 0.5 * sys.section_radius())
    throw ModelError("pseudo_glued: jump size too large for the section disc");
  if (!(params.dt > 0.0 && params.dt <= 0.5)) throw ModelError("pseudo_glued: dt must be in (0, 0.5]");
  if (!is_grid_multiple(sys.tau(), params.dt))
    throw ModelError("pseudo_glued: transit time must be a multiple of dt");
  if (e_q.size() != n || e_p.size() != n) throw ModelError("pseudo_glued: jump direction dimension");
  if (std::abs(e_q.norm() - 1.0) > 1e-9 || std::abs(e_p.norm() - 1.0) > 1e-9)
    throw ModelError("pseudo_glued: jump directions must be unit vectors");
  if (e_q.head(sys.dim_unstable_q()).norm() > 1e-9)
    throw ModelError("pseudo_glued: e_q must lie in the stable subspace of q");
  if (e_p.head(sys.dim_stable_p()).norm() > 1e-9)
    throw ModelError("pseudo_glued: e_p must lie in the unstable subspace of p");

  auto derive_window = [&](double growth_rate, double anchor_norm) {
    double margin = sys.chart_radius() - anchor_norm;
    double t = params.t_cap;
    if (d > 0.0) t = std::min(t, std::log(0.25 * margin / d) / growth_rate);
    t = floor_to_grid(t, params.dt);
    return std::max(t, 2.0 * params.dt);
  };
  // Backward of q the stable part of the jump grows; forward of p the
  // unstable part does. Window depths keep both inside the chart balls with
  // room for the one-unit defect probes.
  double t_back = params.t_back > 0.0
                      ? params.t_back
                      : derive_window(std::abs(sys.q().stable.min_real_rate()), sys.a_q().norm());
  double t_fwd = params.t_fwd > 0.0
                     ? params.t_fwd
                     : derive_window(sys.p().unstable.max_real_rate(), sys.a_p().norm());
  if (!is_grid_multiple(t_back, params.dt) || !is_grid_multiple(t_fwd, params.dt))
    throw ModelError("pseudo_glued: window lengths must be multiples of dt");

  auto n_back = static_cast<std::size_t>(std::round(t_back / params.dt));
  auto n_tube = static_cast<std::size_t>(std::round(sys.tau() / params.dt));
  auto n_fwd = static_cast<std::size_t>(std::round(t_fwd / params.dt));

  Pseudotrajectory g;
  g.t0 = -t_back;
  g.dt = params.dt;
  g.nodes.resize(n_back + n_tube + n_fwd + 1);

  State back = flow.q_state(sys.a_q() + d * e_q);
  for (std::size_t i = 1; i <= n_back; ++i) {
    if (!flow.advance(back, -params.dt))
      throw OutOfDomainError("pseudo_glued: backward window exceeds the chart radius");
    g.nodes[n_back - i] = back;
  }
  for (std::size_t j = 0; j < n_tube; ++j)
    g.nodes[n_back + j] = State{ChartId::Transit, params.dt * static_cast<double>(j),
                                Vec::Zero(sys.section_dim())};
  State fwd = flow.p_state(sys.a_p() + d * e_p);
  g.nodes[n_back + n_tube] = fwd;
  for (std::size_t i = 1; i <= n_fwd; ++i) {
    if (!flow.advance(fwd, params.dt))
      throw OutOfDomainError("pseudo_glued: forward window exceeds the chart radius");
    g.nodes[n_back + n_tube + i] = fwd;
  }
  return g;
}

Pseudotrajectory pseudo_jump(const GluedFlow& flow, const Vec& r_chart_p, const Vec& alpha_chart_p,
                             const JumpPseudoParams& params) {
  const auto& sys = flow.system();
  int n = sys.dim();
  if (r_chart_p.size() != n || alpha_chart_p.size() != n)
    throw ModelError("pseudo_jump: point dimension mismatch");
  if (!(params.dt > 0.0 && params.dt <= 0.5)) throw ModelError("pseudo_jump: dt must be in (0, 0.5]");
  if (!(params.tau0 > 0.0 && params.tau1 > 0.0))
    throw ModelError("pseudo_jump: switch times must be positive");
  if (!is_grid_multiple(params.tau0, params.dt) || !is_grid_multiple(params.tau1, params.dt))
    throw ModelError("pseudo_jump: switch times must be multiples of dt");
  int s_p = sys.dim_stable_p();
  if (r_chart_p.tail(n - s_p).norm() > 1e-9)
    throw ModelError("pseudo_jump: r must lie on the stable axis of p");
  if (!(r_chart_p.norm() > 0.0 && r_chart_p.norm() <= sys.a_p().norm() + 1e-9))
    throw ModelError("pseudo_jump: r must lie on the connecting orbit inside the chart");
  if (alpha_chart_p.head(s_p).norm() > 1e-9)
    throw ModelError("pseudo_jump: alpha must lie on the local unstable manifold of p");
  double alpha_norm = alpha_chart_p.norm();
  if (!(alpha_norm > 0.0 && alpha_norm < sys.chart_radius()))
    throw ModelError("pseudo_jump: alpha must be a nonzero point inside the chart");

  double t_back = params.t_back > 0.0 ? params.t_back
                                      : floor_to_grid(sys.tau() + 6.0, params.dt);
  double exit_rate = sys.p().unstable.max_real_rate();
  double t_tail = params.t_tail > 0.0
                      ? params.t_tail
                      : std::max(2.0 * params.dt,
                                 floor_to_grid(std::log(0.9 * sys.chart_radius() / alpha_norm) /
                                                   exit_rate,
                                               params.dt));
  if (!is_grid_multiple(t_back, params.dt) || !is_grid_multiple(t_tail, params.dt))
    throw ModelError("pseudo_jump: window lengths must be multiples of dt");

  auto n_back = static_cast<std::size_t>(std::round(t_back / params.dt));
  auto n_first = static_cast<std::size_t>(std::round(params.tau0 / params.dt));
  auto n_second = static_cast<std::size_t>(std::round((params.tau1 + t_tail) / params.dt));
  auto n_tail = static_cast<std::size_t>(std::round(t_tail / params.dt));

  Pseudotrajectory g;
  g.t0 = -t_back;
  g.dt = params.dt;
  g.nodes.resize(n_back + n_first + n_second + 1);

  State piece1 = flow.p_state(r_chart_p);
  g.nodes[n_back] = piece1;
  State back = piece1;
  for (std::size_t i = 1; i <= n_back; ++i) {
    if (!flow.advance(back, -params.dt))
      throw OutOfDomainError("pseudo_jump: backward window exceeds the chart radius");
    g.nodes[n_back - i] = back;
  }
  for (std::size_t i = 1; i <= n_first; ++i) {
    if (!flow.advance(piece1, params.dt))
      throw OutOfDomainError("pseudo_jump: first piece exceeds the chart radius");
    g.nodes[n_back + i] = piece1;
  }

  // Second piece anchored so the node at tau0 + tau1 is alpha itself.
  std::size_t anchor = n_back + n_first + (n_second - n_tail);
  State piece2 = flow.p_state(alpha_chart_p);
  g.nodes[anchor] = piece2;
  State pre = piece2;
  for (std::size_t i = 1; anchor - i > n_back + n_first; ++i) {
    if (!flow.advance(pre, -params.dt))
      throw OutOfDomainError("pseudo_jump: second piece exceeds the chart radius");
    g.nodes[anchor - i] = pre;
  }
  State tail = piece2;
  for (std::size_t i = 1; i <= n_tail; ++i) {
    if (!flow.advance(tail, params.dt))
      throw OutOfDomainError("pseudo_jump: tail window exceeds the chart radius");
    g.nodes[anchor + i] = tail;
  }
  return g;
}

nlohmann::json pseudo_to_json(const Pseudotrajectory& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const State& s : g.nodes) {
    nlohmann::json node;
    node["chart"] = chart_name(s.chart);
    node["s"] = s.s;
    node["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
    nodes.push_back(std::move(node));
  }
  return nlohmann::json{{"t0", g.t0}, {"dt", g.dt}, {"nodes", std::move(nodes)}};
}

Pseudotrajectory pseudo_from_json(const nlohmann::json& j) {
  Pseudotrajectory g;
  g.t0 = j.at("t0").get<double>();
  g.dt = j.at("dt").get<double>();
  for (const auto& node : j.at("nodes")) {
    State s;
    s.chart = chart_from_name(node.at("chart").get<std::string>());
    s.s = node.at("s").get<double>();
    auto coords = node.at("x").get<std::vector<double>>();
    s.x = Eigen::Map<const Vec>(coords.data(), static_cast<Eigen::Index>(coords.size()));
    g.nodes.push_back(std::move(s));
  }
  return g;
}

std::string pseudo_to_csv(const Pseudotrajectory& g) {
  std::ostringstream out;
  out.precision(17);
  int dim = g.nodes.empty() ? 0 : static_cast<int>(g.nodes.front().x.size());
  out << "t,chart,s";
  for (int i = 0; i < dim; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    const State& s = g.nodes[k];
    out << g.t0 + g.dt * static_cast<double>(k) << "," << chart_name(s.chart) << "," << s.s;
    for (int i = 0; i < s.x.size(); ++i) out << "," << s.x(i);
    out << "\n";
  }
  return out.str();
}

}  // namespace shadowlab
