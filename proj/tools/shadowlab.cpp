#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "shadowlab/errors.hpp"
#include "shadowlab/fixtures.hpp"
#include "shadowlab/glued_flow.hpp"
#include "shadowlab/obstruction.hpp"
#include "shadowlab/pseudotrajectory.hpp"
#include "shadowlab/shadow_search.hpp"
#include "shadowlab/spiral_cert.hpp"

namespace {

using namespace shadowlab;
using nlohmann::json;

constexpr const char* kVersion = "1.0.0";

// Flags shared by every subcommand.
struct CommonArgs {
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = SHADOWLAB_WORKERS, then single-threaded
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "RNG seed");
  cmd->add_option("--workers", args.workers, "worker threads (0 = SHADOWLAB_WORKERS env)");
  cmd->add_option("--out", args.out, "write the JSON report here instead of stdout");
}

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every report carries enough provenance to re-run it.
json base_report(const std::string& command, const CommonArgs& args, json config) {
  json j;
  j["tool"] = "shadowlab";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = args.seed;
  j["config"] = std::move(config);
  j["timestamp"] = timestamp_utc();
  return j;
}

void emit(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream file(out_path);
  if (!file) throw ModelError("cannot write " + out_path);
  file << text;
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream file(path);
  if (!file) throw ModelError("cannot write " + path);
  file << text;
}

std::vector<double> parse_number_list(const std::string& csv, const char* flag) {
  std::vector<double> values;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ModelError(std::string(flag) + ": cannot parse \"" + item + "\" as a number");
    }
  }
  if (values.empty()) throw ModelError(std::string(flag) + ": empty list");
  return values;
}

Vec parse_vector(const std::string& csv, const char* flag) {
  const auto values = parse_number_list(csv, flag);
  Vec v(static_cast<int>(values.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = values[static_cast<std::size_t>(i)];
  return v;
}

int run_spiral_cert(const CommonArgs& args, const std::string& kind, double a, double b,
                    double eps, double L, long trials) {
  CertParams params;
  params.kind = kind == "line1d" ? CertKind::Line1D : CertKind::Spiral2D;
  params.a = a;
  params.b = b;
  params.eps = eps;
  params.L = L;
  json config{{"kind", kind}, {"a", a},     {"b", b},
              {"eps", eps},   {"L", L},     {"trials", trials}};
  try {
    SpiralCertificate cert = cert_search(params, trials, args.seed, args.workers);
    json report = base_report("spiral-cert", args, config);
    report["certificate"] = cert_to_json(cert);
    emit(report, args.out);
    return 0;
  } catch (const CertificationError& err) {
    json report = base_report("spiral-cert", args, config);
    report["error"] = err.what();
    emit(report, args.out);
    return 2;
  }
}

int run_counterexample(const CommonArgs& args, const std::string& system_path,
                       const std::string& l_csv, const std::string& d_csv, int starts,
                       long budget, const std::string& expect, const std::string& csv_path) {
  const auto L_list = parse_number_list(l_csv, "--L");
  const auto d_list = parse_number_list(d_csv, "--d");
  GluedFlow flow(load_glued_system(system_path));
  SweepTable table =
      lipschitz_sweep(flow, L_list, d_list, starts, budget, args.seed, args.workers);

  bool met = true;
  for (const auto& cell : table.rows) {
    if (expect == "lipok") {
      met = met && cell.lip_ok;
    } else {
      const bool corroborated = cell.obstruction_verdict == "back_violated" ||
                                cell.obstruction_verdict == "fwd_violated";
      met = met && !cell.lip_ok && corroborated;
    }
  }

  const std::string csv = sweep_to_csv(table);
  if (csv_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text(csv, csv_path);
  }

  json rows = json::array();
  for (const auto& cell : table.rows) {
    rows.push_back(json{{"L", cell.L},
                        {"d", cell.d},
                        {"best_eps", cell.best_eps},
                        {"ratio", cell.ratio},
                        {"class_a", cell.class_a},
                        {"verdict", cell.lip_ok ? "LipOK" : "LipFail"},
                        {"obstruction_verdict", cell.obstruction_verdict}});
  }
  json config{{"system", system_path}, {"L", l_csv},           {"d", d_csv},
              {"starts", starts},      {"budget", budget},     {"expect", expect}};
  json report = base_report("counterexample", args, config);
  report["rows"] = std::move(rows);
  report["expectation_met"] = met;
  if (!args.out.empty()) emit(report, args.out);
  return met ? 0 : 2;
}

int run_nosubset(const CommonArgs& args, const std::string& system_path, double tau0,
                 double tau1, const std::string& eps_arg, int xgrid, int hsamples,
                 double alpha_u, bool full) {
  GluedSystemPtr sys = load_glued_system(system_path);
  GluedFlow flow(sys);
  if (sys->dim_unstable_p() < 1) {
    throw ModelError("nosubset: p needs an unstable axis to place the jump target");
  }
  const Vec r = sys->a_p();
  Vec alpha = Vec::Zero(sys->dim());
  alpha(sys->dim_stable_p()) = alpha_u;

  double eps = 0.0;
  if (eps_arg == "auto") {
    eps = nosubset_auto_eps(*sys, r, alpha);
  } else {
    try {
      eps = std::stod(eps_arg);
    } catch (const std::exception&) {
      throw ModelError("--eps: expected a number or \"auto\"");
    }
  }

  JumpPseudoParams jp;
  jp.tau0 = tau0;
  jp.tau1 = tau1;
  Pseudotrajectory g = pseudo_jump(flow, r, alpha, jp);

  NosubsetGrid grid;
  grid.nx = xgrid;
  NosubsetHFamily hfam;
  hfam.total = hsamples;
  NosubsetReport result =
      nosubset_feasibility(flow, g, r, alpha, tau0, tau1, eps, grid, hfam, args.seed,
                           args.workers);

  json config{{"system", system_path}, {"tau0", tau0},         {"tau1", tau1},
              {"eps", eps_arg},        {"xgrid", xgrid},       {"hsamples", hsamples},
              {"alpha_u", alpha_u}};
  json report = base_report("nosubset", args, config);
  json body = nosubset_to_json(result);
  if (!full) body.erase("points");
  report["report"] = std::move(body);
  emit(report, args.out);
  return result.feasible ? 2 : 0;
}

int run_defect(const CommonArgs& args, const std::string& system_path,
               const std::string& field_path, double d, double dt, int refine,
               const std::string& x0_csv, double t0, double t1, double noise) {
  json config{{"dt", dt}, {"refine", refine}};
  DefectReport defect;
  if (!system_path.empty()) {
    GluedFlow flow(load_glued_system(system_path));
    JumpDirections dirs = jump_directions(flow.system());
    GluedPseudoParams gp;
    gp.dt = dt;
    Pseudotrajectory g = pseudo_glued(flow, d, dirs.e_q, dirs.e_p, gp);
    defect = pseudo_defect(flow, g, refine, args.workers);
    config["system"] = system_path;
    config["d"] = d;
  } else {
    LinearFlow flow(load_field(field_path));
    const Vec x0 = parse_vector(x0_csv, "--x0");
    if (x0.size() != flow.dim()) throw ModelError("--x0: dimension does not match the field");
    Pseudotrajectory g =
        pseudo_from_orbit(flow, LinearFlow::make_state(x0), t0, t1, dt, noise, args.seed);
    defect = pseudo_defect(flow, g, refine, args.workers);
    config["field"] = field_path;
    config["x0"] = x0_csv;
    config["t0"] = t0;
    config["t1"] = t1;
    config["noise"] = noise;
  }
  json report = base_report("defect", args, config);
  report["defect"] = defect.defect;
  report["grid_step"] = defect.grid_step;
  if (!system_path.empty()) report["ratio"] = defect.defect / d;
  emit(report, args.out);
  return 0;
}

int run_shadow_search(const CommonArgs& args, const std::string& system_path,
                      const std::string& field_path, double d, double class_a, double jump,
                      double t_back, double t_fwd, double dt, int starts, long budget,
                      std::optional<double> target) {
  SearchOptions opts;
  opts.starts = starts;
  opts.budget = budget;
  opts.seed = args.seed;
  opts.workers = args.workers;
  opts.target = target;

  json config{{"class_a", class_a}, {"starts", starts}, {"budget", budget}, {"dt", dt}};
  ShadowingResult result;
  if (!system_path.empty()) {
    GluedFlow flow(load_glued_system(system_path));
    JumpDirections dirs = jump_directions(flow.system());
    GluedPseudoParams gp;
    gp.dt = dt;
    Pseudotrajectory g = pseudo_glued(flow, d, dirs.e_q, dirs.e_p, gp);
    result = shadow_search(flow, g, full_window(g), class_a, opts);
    config["system"] = system_path;
    config["d"] = d;
  } else {
    LinearFlow flow(load_field(field_path));
    const int n = flow.dim();
    Pseudotrajectory g;
    g.t0 = -t_back;
    g.dt = dt;
    const long k_jump = std::lround(t_back / dt);
    const long last = k_jump + std::lround(t_fwd / dt);
    Vec offset = Vec::Zero(n);
    offset(0) = jump;
    for (long k = 0; k <= last; ++k) {
      const double t = g.t0 + static_cast<double>(k) * dt;
      Vec x = k < k_jump ? Vec::Zero(n) : evolve_block(flow.field(), t, offset);
      g.nodes.push_back(LinearFlow::make_state(std::move(x)));
    }
    result = shadow_search(flow, g, full_window(g), class_a, opts);
    config["field"] = field_path;
    config["jump"] = jump;
    config["t_back"] = t_back;
    config["t_fwd"] = t_fwd;
  }

  json report = base_report("shadow-search", args, config);
  report["result"] = shadow_result_to_json(result);
  emit(report, args.out);
  if (target && result.best_eps > *target) return 2;
  return 0;
}

int run_transversality(const CommonArgs& args, const std::string& system_path) {
  GluedSystemPtr sys = load_glued_system(system_path);
  TransversalityReport result = transversality(*sys);
  json report = base_report("transversality", args, json{{"system", system_path}});
  report["verdict"] = result.transversal ? "transversal" : "nontransversal";
  report["defect_dim"] = result.defect_dim;
  report["rank"] = result.rank;
  emit(report, args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for pseudo-orbit shadowing in flows"};
  app.require_subcommand(1);

  CommonArgs common;

  auto* cert = app.add_subcommand("spiral-cert", "search a (T, d0) tracking certificate");
  std::string cert_kind = "spiral2d";
  double cert_a = 1.0, cert_b = 1.0, cert_eps = 0.785398163397448, cert_L = 2.0;
  long cert_trials = 100000;
  cert->add_option("--kind", cert_kind, "model kind")
      ->check(CLI::IsMember({"spiral2d", "line1d"}));
  cert->add_option("--a", cert_a, "radial rate");
  cert->add_option("--b", cert_b, "angular rate (spiral2d only)");
  cert->add_option("--eps", cert_eps, "deviation bound the certificate must enforce");
  cert->add_option("--L", cert_L, "Lipschitz constant tying d to the class of h");
  cert->add_option("--trials", cert_trials, "adversarial trials");
  add_common(cert, common);

  auto* cx = app.add_subcommand("counterexample", "Lipschitz sweep over (L, d) cells");
  std::string cx_system, cx_L = "1,2,5", cx_d = "1e-2,1e-3", cx_expect = "lipfail", cx_csv;
  int cx_starts = 64;
  long cx_budget = 20000;
  cx->add_option("--system", cx_system, "glued system fixture")->required();
  cx->add_option("--L", cx_L, "comma-separated Lipschitz constants");
  cx->add_option("--d", cx_d, "comma-separated defect sizes");
  cx->add_option("--starts", cx_starts, "optimizer starts per cell");
  cx->add_option("--budget", cx_budget, "residual evaluations per start");
  cx->add_option("--expect", cx_expect, "expected verdict across cells")
      ->check(CLI::IsMember({"lipfail", "lipok"}));
  cx->add_option("--csv", cx_csv, "write the sweep CSV here instead of stdout");
  add_common(cx, common);

  auto* ns = app.add_subcommand("nosubset", "brute-force the oriented-shadowing dichotomy");
  std::string ns_system, ns_eps = "auto";
  double ns_tau0 = 8.0, ns_tau1 = 8.0, ns_alpha_u = 0.35;
  int ns_xgrid = 200, ns_hsamples = 1000;
  bool ns_full = false;
  ns->add_option("--system", ns_system, "planar two-saddle fixture")->required();
  ns->add_option("--tau0", ns_tau0, "time on the orbit of r before the jump");
  ns->add_option("--tau1", ns_tau1, "backward depth on the orbit of alpha");
  ns->add_option("--eps", ns_eps, "tracking radius, number or \"auto\"");
  ns->add_option("--xgrid", ns_xgrid, "grid points per axis");
  ns->add_option("--hsamples", ns_hsamples, "reparametrization family size");
  ns->add_option("--alpha-u", ns_alpha_u, "unstable offset of the jump target alpha");
  ns->add_flag("--full", ns_full, "include every grid point in the JSON report");
  add_common(ns, common);

  auto* df = app.add_subcommand("defect", "measure the defect of a pseudotrajectory");
  std::string df_system, df_field, df_x0 = "1";
  double df_d = 1e-2, df_dt = 0.1, df_t0 = 0.0, df_t1 = 5.0, df_noise = 0.0;
  int df_refine = 8;
  df->add_option("--system", df_system, "glued system fixture (two-jump construction)");
  df->add_option("--field", df_field, "plain field fixture (sampled orbit)");
  df->add_option("--d", df_d, "jump size of the glued construction");
  df->add_option("--dt", df_dt, "node spacing");
  df->add_option("--refine", df_refine, "probe grid refinement per node step");
  df->add_option("--x0", df_x0, "orbit start, comma-separated coordinates");
  df->add_option("--t0", df_t0, "window start");
  df->add_option("--t1", df_t1, "window end");
  df->add_option("--noise", df_noise, "uniform node noise radius");
  add_common(df, common);

  auto* ss = app.add_subcommand("shadow-search", "optimize a shadowing candidate");
  std::string ss_system, ss_field;
  double ss_d = 1e-2, ss_class_a = 0.0, ss_jump = 0.1, ss_t_back = 4.0, ss_t_fwd = 4.0,
         ss_dt = 0.1;
  int ss_starts = 16;
  long ss_budget = 5000;
  double ss_target_value = 0.0;
  ss->add_option("--system", ss_system, "glued system fixture (two-jump construction)");
  ss->add_option("--field", ss_field, "plain field fixture (single jump at t = 0)");
  ss->add_option("--d", ss_d, "jump size of the glued construction");
  ss->add_option("--class-a", ss_class_a, "reparametrization class bound (0 = identity)");
  ss->add_option("--jump", ss_jump, "jump size of the plain-field construction");
  ss->add_option("--t-back", ss_t_back, "backward window of the plain-field construction");
  ss->add_option("--t-fwd", ss_t_fwd, "forward window of the plain-field construction");
  ss->add_option("--dt", ss_dt, "node spacing");
  ss->add_option("--starts", ss_starts, "optimizer starts");
  ss->add_option("--budget", ss_budget, "residual evaluations per start");
  auto* target_opt = ss->add_option("--target", ss_target_value,
                                    "exit 2 unless best_eps reaches this value");
  add_common(ss, common);

  auto* tv = app.add_subcommand("transversality", "classify the heteroclinic intersection");
  std::string tv_system;
  tv->add_option("--system", tv_system, "glued system fixture")->required();
  add_common(tv, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cert->parsed()) {
      return run_spiral_cert(common, cert_kind, cert_a, cert_b, cert_eps, cert_L, cert_trials);
    }
    if (cx->parsed()) {
      return run_counterexample(common, cx_system, cx_L, cx_d, cx_starts, cx_budget, cx_expect,
                                cx_csv);
    }
    if (ns->parsed()) {
      return run_nosubset(common, ns_system, ns_tau0, ns_tau1, ns_eps, ns_xgrid, ns_hsamples,
                          ns_alpha_u, ns_full);
    }
    if (df->parsed()) {
      if (df_system.empty() == df_field.empty()) {
        throw ModelError("defect: give exactly one of --system or --field");
      }
      return run_defect(common, df_system, df_field, df_d, df_dt, df_refine, df_x0, df_t0,
                        df_t1, df_noise);
    }
    if (ss->parsed()) {
      if (ss_system.empty() == ss_field.empty()) {
        throw ModelError("shadow-search: give exactly one of --system or --field");
      }
      std::optional<double> target;
      if (target_opt->count() > 0) target = ss_target_value;
      return run_shadow_search(common, ss_system, ss_field, ss_d, ss_class_a, ss_jump,
                               ss_t_back, ss_t_fwd, ss_dt, ss_starts, ss_budget, target);
    }
    if (tv->parsed()) {
      return run_transversality(common, tv_system);
    }
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
  return 1;
}
