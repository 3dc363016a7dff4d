#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "shadowlab/errors.hpp"
#include "shadowlab/fixtures.hpp"
#include "shadowlab/glued_flow.hpp"
#include "shadowlab/pseudotrajectory.hpp"
#include "test_support.hpp"

using namespace shadowlab;
using shadowlab::testing::fixture_path;

namespace {

LinearFlow sink_flow() { return LinearFlow(load_field(fixture_path("sink3d.json"))); }

State sink_start() {
  Vec x(3);
  x << 1.0, 1.0, 1.0;
  return LinearFlow::make_state(x);
}

Vec unit_axis(int n, int k) { return Vec::Unit(n, k); }

}  // namespace

TEST_CASE("noise-free orbit sampling has vanishing defect") {
  LinearFlow flow = sink_flow();
  Pseudotrajectory g = pseudo_from_orbit(flow, sink_start(), 0.0, 8.0, 0.1, 0.0, 1);
  CHECK(g.nodes.size() == 81);
  CHECK(g.t0 == 0.0);
  CHECK(g.t_end() == doctest::Approx(8.0));

  DefectReport report = pseudo_defect(flow, g);
  CHECK(report.defect <= 1e-9);
  CHECK(report.grid_step == doctest::Approx(0.1 / 8));
}

TEST_CASE("noisy orbit sampling has defect comparable to the noise amplitude") {
  LinearFlow flow = sink_flow();
  const double noise = 1e-3;
  Pseudotrajectory g = pseudo_from_orbit(flow, sink_start(), 0.0, 8.0, 0.1, noise, 7);

  // Nodes sit within the noise ball of the clean orbit.
  Pseudotrajectory clean = pseudo_from_orbit(flow, sink_start(), 0.0, 8.0, 0.1, 0.0, 7);
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    CHECK((g.nodes[k].x - clean.nodes[k].x).norm() <= noise + 1e-15);
  }

  // Node jumps are at most two noise radii; probing a one-unit window can
  // amplify them by the largest backward rate and stack adjacent jumps.
  DefectReport report = pseudo_defect(flow, g);
  CHECK(report.defect >= noise / 10);
  CHECK(report.defect <= 100 * noise);
}

TEST_CASE("orbit sampling is deterministic in the seed") {
  LinearFlow flow = sink_flow();
  Pseudotrajectory a = pseudo_from_orbit(flow, sink_start(), 0.0, 4.0, 0.1, 1e-3, 42);
  Pseudotrajectory b = pseudo_from_orbit(flow, sink_start(), 0.0, 4.0, 0.1, 1e-3, 42);
  Pseudotrajectory c = pseudo_from_orbit(flow, sink_start(), 0.0, 4.0, 0.1, 1e-3, 43);
  REQUIRE(a.nodes.size() == b.nodes.size());
  double max_same = 0.0;
  double max_other = 0.0;
  for (std::size_t k = 0; k < a.nodes.size(); ++k) {
    max_same = std::max(max_same, (a.nodes[k].x - b.nodes[k].x).norm());
    max_other = std::max(max_other, (a.nodes[k].x - c.nodes[k].x).norm());
  }
  CHECK(max_same == 0.0);
  CHECK(max_other > 0.0);
}

TEST_CASE("orbit sampling validates its arguments") {
  LinearFlow flow = sink_flow();
  CHECK_THROWS_AS(pseudo_from_orbit(flow, sink_start(), 0.0, 4.0, 0.6, 0.0, 1), ModelError);
  CHECK_THROWS_AS(pseudo_from_orbit(flow, sink_start(), 4.0, 4.0, 0.1, 0.0, 1), ModelError);
  CHECK_THROWS_AS(pseudo_from_orbit(flow, sink_start(), 0.0, 4.0, 0.1, -1.0, 1), ModelError);
}

TEST_CASE("pseudo_eval matches nodes exactly and integrates between them") {
  LinearFlow flow = sink_flow();
  Pseudotrajectory g = pseudo_from_orbit(flow, sink_start(), -1.0, 3.0, 0.1, 1e-3, 5);

  for (std::size_t k = 0; k < g.nodes.size(); k += 7) {
    double t = g.t0 + g.dt * static_cast<double>(k);
    State s = pseudo_eval(flow, g, t);
    CHECK(s.x == g.nodes[k].x);
  }

  State mid = pseudo_eval(flow, g, -0.33);
  State from_node = g.nodes[6];
  REQUIRE(flow.advance(from_node, -0.33 - (g.t0 + 6 * g.dt)));
  CHECK((mid.x - from_node.x).norm() <= 1e-12);

  CHECK_THROWS_AS(pseudo_eval(flow, g, g.t0 - 0.5), ModelError);
  CHECK_THROWS_AS(pseudo_eval(flow, g, g.t_end() + 0.5), ModelError);
  Pseudotrajectory empty;
  CHECK_THROWS_AS(pseudo_eval(flow, empty, 0.0), ModelError);
}

TEST_CASE("refined table agrees with nodes and pointwise evaluation") {
  LinearFlow flow = sink_flow();
  Pseudotrajectory g = pseudo_from_orbit(flow, sink_start(), 0.0, 2.0, 0.1, 1e-3, 9);

  const int refine = 4;
  std::vector<State> table = pseudo_refined_table(flow, g, refine);
  REQUIRE(table.size() == (g.nodes.size() - 1) * refine + 1);

  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    CHECK(table[k * refine].x == g.nodes[k].x);
  }
  for (std::size_t j = 0; j < table.size(); j += 3) {
    double t = g.t0 + j * g.dt / refine;
    State s = pseudo_eval(flow, g, t);
    CHECK((s.x - table[j].x).norm() <= 1e-12);
  }

  CHECK_THROWS_AS(pseudo_refined_table(flow, g, 0), ModelError);
  Pseudotrajectory single;
  single.nodes.push_back(sink_start());
  CHECK_THROWS_AS(pseudo_refined_table(flow, single, refine), ModelError);
}

TEST_CASE("defect estimation rejects windows shorter than the probe horizon") {
  LinearFlow flow = sink_flow();
  Pseudotrajectory g = pseudo_from_orbit(flow, sink_start(), 0.0, 0.5, 0.1, 0.0, 1);
  CHECK_THROWS_AS(pseudo_defect(flow, g), ModelError);
}

TEST_CASE("two-jump construction places unit-size defects at the gluing times") {
  GluedSystemPtr sys = load_glued_system(fixture_path("ntrans3d.json"));
  GluedFlow flow(sys);
  const int n = sys->dim();
  Vec e_q = -unit_axis(n, 2);  // stable axis of q
  Vec e_p = unit_axis(n, 1);   // first unstable axis of p

  const double d = 1e-3;
  Pseudotrajectory g = pseudo_glued(flow, d, e_q, e_p);
  REQUIRE(g.nodes.size() >= 2);
  CHECK(g.t0 < 0.0);
  CHECK(g.t_end() > sys->tau());

  // Node at t = 0 starts the transit ride with no transversal offset.
  State at_zero = pseudo_eval(flow, g, 0.0);
  CHECK(at_zero.chart == ChartId::Transit);
  CHECK(at_zero.s == 0.0);
  CHECK(at_zero.x.norm() == 0.0);

  // Node at t = tau is the jumped point past the transit.
  State at_tau = pseudo_eval(flow, g, sys->tau());
  CHECK(at_tau.chart == ChartId::P);
  CHECK((at_tau.x - (sys->a_p() + d * e_p)).norm() <= 1e-15);

  // Jump sizes in the flow metric: the backward piece reaches a_q + d*e_q at
  // t = 0 and the tube node has zero offset, so the gap is exactly d; the
  // same holds at the exit.
  State before = pseudo_eval(flow, g, -g.dt);
  REQUIRE(flow.advance(before, g.dt));
  CHECK(flow.distance(before, at_zero) == doctest::Approx(d).epsilon(1e-9));

  State tube_end = pseudo_eval(flow, g, sys->tau() - g.dt);
  REQUIRE(flow.advance(tube_end, g.dt));
  CHECK(flow.distance(tube_end, at_tau) == doctest::Approx(d).epsilon(1e-9));
}

TEST_CASE("two-jump construction defect scales linearly in the jump size") {
  GluedSystemPtr sys = load_glued_system(fixture_path("ntrans3d.json"));
  GluedFlow flow(sys);
  const int n = sys->dim();
  Vec e_q = -unit_axis(n, 2);
  Vec e_p = unit_axis(n, 1);

  double ratio_coarse = pseudo_defect(flow, pseudo_glued(flow, 1e-2, e_q, e_p)).defect / 1e-2;
  double ratio_fine = pseudo_defect(flow, pseudo_glued(flow, 1e-3, e_q, e_p)).defect / 1e-3;

  // The defect is the jump size amplified by at most one probe unit of the
  // strongest rate, and the amplification is d-independent.
  CHECK(ratio_coarse >= 1.0);
  CHECK(ratio_coarse <= 4.0);
  CHECK(ratio_fine == doctest::Approx(ratio_coarse).epsilon(0.05));
}

TEST_CASE("two-jump construction validates directions and sizes") {
  GluedSystemPtr sys = load_glued_system(fixture_path("ntrans3d.json"));
  GluedFlow flow(sys);
  const int n = sys->dim();
  Vec e_q = -unit_axis(n, 2);
  Vec e_p = unit_axis(n, 1);

  CHECK_THROWS_AS(pseudo_glued(flow, -1e-3, e_q, e_p), ModelError);
  CHECK_THROWS_AS(pseudo_glued(flow, sys->section_radius(), e_q, e_p), ModelError);
  CHECK_THROWS_AS(pseudo_glued(flow, 1e-3, 2.0 * e_q, e_p), ModelError);
  CHECK_THROWS_AS(pseudo_glued(flow, 1e-3, unit_axis(n, 0), e_p), ModelError);  // unstable at q
  CHECK_THROWS_AS(pseudo_glued(flow, 1e-3, e_q, unit_axis(n, 0)), ModelError);  // stable at p
  GluedPseudoParams bad;
  bad.dt = 0.3;  // tau = 1 is not a multiple
  CHECK_THROWS_AS(pseudo_glued(flow, 1e-3, e_q, e_p, bad), ModelError);
}

TEST_CASE("backward exit from the tube follows the connecting orbit") {
  GluedSystemPtr sys = load_glued_system(fixture_path("ntrans3d.json"));
  GluedFlow flow(sys);
  State tube{ChartId::Transit, 0.0, Vec::Zero(sys->section_dim())};
  State back = evolve_glued(flow, -0.5, tube);
  REQUIRE(back.chart == ChartId::Q);
  CHECK((back.x - std::exp(-0.5) * sys->a_q()).norm() <= 1e-12);
}

TEST_CASE("single-jump construction on the planar connection meets its bound") {
  GluedSystemPtr sys = load_glued_system(fixture_path("sconn2d.json"));
  GluedFlow flow(sys);
  Vec r = sys->a_p();
  Vec alpha = 0.35 * unit_axis(sys->dim(), 1);  // unstable axis of p

  JumpPseudoParams params;
  params.tau0 = 8.0;
  params.tau1 = 8.0;
  Pseudotrajectory g = pseudo_jump(flow, r, alpha, params);

  // The switch node is alpha pulled back by tau1; the anchor node is alpha.
  State anchored = pseudo_eval(flow, g, params.tau0 + params.tau1);
  CHECK(anchored.chart == ChartId::P);
  CHECK((anchored.x - alpha).norm() <= 1e-15);

  // Both pieces decay at unit rate, so the single defect is about
  // hypot(|r| e^{-tau0}, |alpha| e^{-tau1}).
  DefectReport report = pseudo_defect(flow, g);
  double predicted = std::hypot(r.norm() * std::exp(-8.0), alpha.norm() * std::exp(-8.0));
  CHECK(report.defect <= 2e-3);
  CHECK(report.defect >= 0.5 * predicted);
  CHECK(report.defect <= 4.0 * predicted);
}

TEST_CASE("single-jump defect decays as the switch times grow") {
  GluedSystemPtr sys = load_glued_system(fixture_path("sconn2d.json"));
  GluedFlow flow(sys);
  Vec r = sys->a_p();
  Vec alpha = 0.35 * unit_axis(sys->dim(), 1);

  double previous = kMaxDistance;
  for (double tau : {2.0, 4.0, 8.0, 16.0}) {
    JumpPseudoParams params;
    params.tau0 = tau;
    params.tau1 = tau;
    double defect = pseudo_defect(flow, pseudo_jump(flow, r, alpha, params)).defect;
    CHECK(defect < previous);
    previous = defect;
  }
}

TEST_CASE("single-jump construction validates its anchors") {
  GluedSystemPtr sys = load_glued_system(fixture_path("sconn2d.json"));
  GluedFlow flow(sys);
  const int n = sys->dim();
  Vec r = sys->a_p();
  Vec alpha = 0.35 * unit_axis(n, 1);

  CHECK_THROWS_AS(pseudo_jump(flow, 2.0 * r, alpha, {}), ModelError);       // outside the orbit
  CHECK_THROWS_AS(pseudo_jump(flow, Vec::Zero(n), alpha, {}), ModelError);  // not a point of it
  CHECK_THROWS_AS(pseudo_jump(flow, alpha, alpha, {}), ModelError);         // off the stable axis
  CHECK_THROWS_AS(pseudo_jump(flow, r, r, {}), ModelError);                 // off the unstable one
  JumpPseudoParams bad;
  bad.tau0 = 0.25;  // not a multiple of dt
  CHECK_THROWS_AS(pseudo_jump(flow, r, alpha, bad), ModelError);
}

TEST_CASE("pseudotrajectories round-trip through JSON and serialize to CSV") {
  GluedSystemPtr sys = load_glued_system(fixture_path("ntrans3d.json"));
  GluedFlow flow(sys);
  Vec e_q = -unit_axis(sys->dim(), 2);
  Vec e_p = unit_axis(sys->dim(), 1);
  Pseudotrajectory g = pseudo_glued(flow, 1e-3, e_q, e_p);

  Pseudotrajectory back = pseudo_from_json(pseudo_to_json(g));
  REQUIRE(back.nodes.size() == g.nodes.size());
  CHECK(back.t0 == g.t0);
  CHECK(back.dt == g.dt);
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    CHECK(back.nodes[k].chart == g.nodes[k].chart);
    CHECK(back.nodes[k].s == g.nodes[k].s);
    CHECK(back.nodes[k].x == g.nodes[k].x);
  }

  std::string csv = pseudo_to_csv(g);
  CHECK(csv.rfind("t,chart,s,x0,x1,x2\n", 0) == 0);
  std::size_t rows = 0;
  for (char c : csv) {
    if (c == '\n') ++rows;
  }
  CHECK(rows == g.nodes.size() + 1);
}
