// Acceptance run: one line per criterion with its timing; exits nonzero when
// any criterion fails. Optional argument: the scenario directory.

#include "nlspec/certify.hpp"
#include "nlspec/discrete_operator.hpp"
#include "nlspec/quadrature.hpp"
#include "nlspec/scenario.hpp"
#include "nlspec/spectra.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace nlspec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + ("FAILED " + what);
    }
  }
  void note(const std::string &s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(double v, const char *spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Shipped scenarios, each run twice and cached.

struct ScenarioRuns {
  fs::path path;
  json first, second;
  double seconds_first = 0.0, seconds_second = 0.0;
};

fs::path scenario_dir = "scenarios";
std::map<std::string, ScenarioRuns> runs;

const ScenarioRuns &scenario(const std::string &name) {
  auto it = runs.find(name);
  if (it != runs.end())
    return it->second;
  ScenarioRuns r;
  r.path = scenario_dir / (name + ".json");
  const Scenario sc = Scenario::load(r.path);
  auto t0 = Clock::now();
  r.first = run_scenario(sc);
  r.seconds_first = seconds_since(t0);
  t0 = Clock::now();
  r.second = run_scenario(sc);
  r.seconds_second = seconds_since(t0);
  return runs.emplace(name, std::move(r)).first->second;
}

std::vector<std::string> shipped_scenarios() {
  std::vector<std::string> names;
  for (const auto &e : fs::directory_iterator(scenario_dir))
    if (e.path().extension() == ".json")
      names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

// ---------------------------------------------------------------------------
// Helpers

GridFunction random_function(const Grid &g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  GridFunction f(g, Space::physical);
  for (auto &v : f.values)
    v = {n(rng), n(rng)};
  return f;
}

double gaussian_density(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

oracle::FnD potential_fn(const Potential &v) {
  return [v](const std::vector<double> &x) {
    Point p{0, 0, 0};
    for (std::size_t i = 0; i < x.size(); ++i)
      p[i] = x[i];
    return v(p);
  };
}

double rel_error_vs_dense(const DiscreteOperator &op, const Eigen::MatrixXd &dense, std::uint64_t seed) {
  const auto u = random_function(op.grid(), seed);
  const auto lu = op.apply(u);
  Eigen::VectorXcd x(static_cast<Eigen::Index>(u.values.size()));
  for (std::size_t i = 0; i < u.values.size(); ++i)
    x[static_cast<Eigen::Index>(i)] = u.values[i];
  const Eigen::VectorXcd y = dense.cast<cplx>() * x;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    num += std::norm(lu.values[i] - y[static_cast<Eigen::Index>(i)]);
    den += std::norm(y[static_cast<Eigen::Index>(i)]);
  }
  return std::sqrt(num / den);
}

std::vector<double> weyl_residuals_by_n(const json &results, std::map<int, double> &out) {
  std::vector<double> r;
  for (const auto &e : results["entries"]) {
    out[e["n"].get<int>()] = e["residual"].get<double>();
    r.push_back(e["residual"].get<double>());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome operator_correctness() {
  Outcome o;
  double worst = 0.0;
  const auto v1 = Potential::power_tail(1);
  for (std::size_t n : {64ul, 128ul}) {
    const auto op = DiscreteOperator::assemble(Kernel::gaussian(1), v1, Grid(1, 8.0, n));
    const auto dense = oracle::dense_operator(1, 8.0, n, gaussian_density, potential_fn(v1), 4);
    for (std::uint64_t s = 1; s <= 3; ++s)
      worst = std::max(worst, rel_error_vs_dense(op, dense, 100 * n + s));
  }
  const auto v2 = Potential::power_tail(2);
  const auto op2 = DiscreteOperator::assemble(Kernel::gaussian(2), v2, Grid(2, 6.0, 32));
  const auto dense2 = oracle::dense_operator(2, 6.0, 32, gaussian_density, potential_fn(v2), 4);
  for (std::uint64_t s = 1; s <= 3; ++s)
    worst = std::max(worst, rel_error_vs_dense(op2, dense2, 7000 + s));
  o.require(worst <= 1e-10, "relative error <= 1e-10");
  o.note("max relative error " + fmt(worst) + " (d=1 N=64,128; d=2 N=32^2)");
  return o;
}

Outcome self_adjointness() {
  Outcome o;
  double worst = 0.0;
  std::size_t combos = 0;
  for (int d : {1, 2}) {
    const Grid g = d == 1 ? Grid(1, 20.0, 256) : Grid(2, 10.0, 32);
    const std::vector<Kernel> kernels{Kernel::zero(d), Kernel::gaussian(d), Kernel::box(d), Kernel::exponential(d),
                                      Kernel::cauchy(d)};
    const std::vector<Potential> potentials{Potential::zero(d),
                                            Potential::constant(d, 0.3),
                                            Potential::power_tail(d),
                                            Potential::gaussian_bump(d),
                                            Potential::box(d, -0.5, 1.0),
                                            Potential::rational_peak(d),
                                            Potential::clipped_power(d, 1.0, 0.5)};
    for (const auto &k : kernels)
      for (const auto &v : potentials) {
        const auto op = DiscreteOperator::assemble(k, v, g);
        worst = std::max(worst, op.hermiticity_residual(20, 17 + combos));
        ++combos;
      }
  }
  o.require(worst <= 1e-10, "hermiticity residual <= 1e-10");
  o.note(std::to_string(combos) + " kernel/potential combinations, 20 random pairs each, worst " + fmt(worst));
  return o;
}

Outcome plancherel() {
  Outcome o;
  double trip = 0.0, inner_err = 0.0;
  for (int d = 1; d <= 3; ++d) {
    const Grid g(d, 5.0, d == 1 ? 1024 : d == 2 ? 64 : 16);
    for (std::uint64_t s = 0; s < 3; ++s) {
      const auto f = random_function(g, 10 * d + s);
      const auto h = random_function(g, 10 * d + s + 100);
      const auto back = inverse_transform(forward_transform(f));
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        num = std::max(num, std::abs(back.values[i] - f.values[i]));
        den = std::max(den, std::abs(f.values[i]));
      }
      trip = std::max(trip, num / den);
      const cplx phys = plancherel_inner(f, h);
      const cplx freq = plancherel_inner(forward_transform(f), forward_transform(h));
      inner_err = std::max(inner_err, std::abs(phys - freq) / (norm(f) * norm(h)));
    }
  }
  o.require(trip <= 1e-12, "round trip <= 1e-12");
  o.require(inner_err <= 1e-10, "inner products agree <= 1e-10");
  o.note("round trip " + fmt(trip) + ", inner product " + fmt(inner_err) + " (d=1,2,3)");
  return o;
}

Outcome essential_union() {
  Outcome o;
  const auto k = Kernel::gaussian(1);
  const auto v = Potential::box(1, -0.5, 1.0);
  const auto exact = essential_spectrum(k, v);
  o.require(exact == IntervalUnion({{-0.5, -0.5}, {0.0, 1.0}}), "analytic union {-0.5} U [0,1]");
  EssentialOptions hist;
  hist.analytic = false;
  hist.sampling = Grid(1, 40.0, 512);
  const auto h = essential_spectrum(k, v, hist);
  bool close = h.size() == 2;
  if (close) {
    const auto &a = h.intervals();
    close = std::abs(a[0].lo + 0.5) <= 1e-2 && std::abs(a[0].hi + 0.5) <= 1e-2 && std::abs(a[1].lo) <= 1e-2 &&
            std::abs(a[1].hi - 1.0) <= 1e-2;
  }
  o.require(close, "histogram union within 1e-2");
  const auto c = spectral_constants(k, v);
  const auto gaps = spectral_gaps(exact, c.mu0, c.mu1);
  o.require(gaps.size() == 1 && gaps[0].kind == WindowKind::interior_gap && gaps[0].lo == -0.5 && gaps[0].hi == 0.0,
            "gap (-0.5, 0)");
  const auto &rep = scenario("essential_gaussian_well").first["results"];
  o.require(rep["essential_spectrum"] == json::parse("[[-0.5,-0.5],[0.0,1.0]]"), "scenario report union");
  std::string parts;
  for (const auto &iv : h.intervals())
    parts += "[" + fmt(iv.lo, "%.4f") + ", " + fmt(iv.hi, "%.4f") + "]";
  o.note("histogram path " + parts);
  return o;
}

Outcome weyl_decay() {
  Outcome o;
  for (const char *name : {"weyl_symbol", "weyl_potential"}) {
    const json &r = scenario(name).first["results"];
    std::map<int, double> by_n;
    weyl_residuals_by_n(r, by_n);
    const bool have = by_n.count(8) && by_n.count(64);
    o.require(have && by_n[64] < by_n[8] / 4.0, std::string(name) + " residual(64) < residual(8)/4");
    if (have)
      o.note(std::string(name) + " r(8)=" + fmt(by_n[8]) + " r(64)=" + fmt(by_n[64]));
  }
  const json &edge = scenario("weyl_symbol_edge").first["results"];
  std::vector<double> n, vterm;
  for (const auto &e : edge["entries"]) {
    n.push_back(e["n"].get<double>());
    vterm.push_back(e["potential_term"].get<double>());
  }
  const auto fit = fit_loglog(n, vterm);
  const double target = -1.0 / 4.0;
  o.require(std::abs(fit.slope - target) <= 0.3, "V-term slope within 0.3 of -d/4");
  o.note("symbol-mode V-term slope " + fmt(fit.slope));
  return o;
}

Outcome scaled_certificate() {
  Outcome o;
  const json &r = scenario("certify_scaled").first;
  const json &res = r["results"];
  o.require(r["status"] == "ok", "scenario ran");
  o.require(res["pass"] == true, "scaled family certificate passes");
  o.require(res["certificate"]["certified_count"] == 3, "certified count 3");
  o.require(res["symbol_hypothesis"]["hypothesis"]["exponent"].get<double>() == 2.0, "alpha = 2 from the second moment");
  o.require(res["alpha_exceeds_gamma"] == true, "alpha > gamma");
  o.note("search steps " + std::to_string(res["search_trace"].size()) + ", min_eig " +
         fmt(res["certificate"]["min_eig"].get<double>()));

  // Independent dense eigensolve on a coarse grid.
  const auto v = Potential::power_tail(1);
  const auto dense = oracle::dense_eigenvalues(oracle::dense_operator(1, 160.0, 1024, gaussian_density, potential_fn(v), 3));
  const std::size_t above = oracle::count_above(dense, 1.0);
  o.require(above >= 3, "dense oracle finds >= 3 eigenvalues above 1");
  o.note("dense oracle (L=160, N=1024): " + std::to_string(above) + " eigenvalues above 1, largest " +
         fmt(dense.front(), "%.6f"));

  const json &sweep = scenario("sweep_box_size").first["results"]["rows"];
  std::string counts;
  bool nondecreasing = sweep.size() == 4;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    counts += (i ? "," : "") + std::to_string(sweep[i]["eigencount"].get<int>());
    if (i > 0)
      nondecreasing = nondecreasing && sweep[i]["eigencount"].get<int>() >= sweep[i - 1]["eigencount"].get<int>();
  }
  o.require(nondecreasing, "eigencount nondecreasing over L in {20,40,80,160}");
  o.note("counts " + counts);
  return o;
}

Outcome heavy_tail_certificate() {
  Outcome o;
  const auto rows = heavy_tail_ratios(Kernel::cauchy(1), Potential::power_tail(1, 1.0, 0.2), {4, 16, 64, 256});
  bool dec = true;
  std::string series;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    series += (i ? "," : "") + fmt(rows[i].ratio);
    if (i > 0)
      dec = dec && rows[i].ratio < rows[i - 1].ratio;
  }
  o.require(dec, "ratio decreasing over R in {4,16,64,256}");
  o.note("ratios " + series);
  const json &r = scenario("certify_heavy_tail").first["results"];
  o.require(r["pass"] == true, "gaussian family certificate passes");
  o.require(r["certificate"]["certified_count"] == 2, "certified count 2");
  double worst = 0.0;
  for (double x : {0.1, 1.0, 10.0}) {
    const double closed = std::sqrt(M_PI) * (1.0 - 1.0 / std::sqrt(1.0 + 0.5 * x * x));
    worst = std::max(worst, std::abs(ell_hat(Kernel::gaussian(1), x) - closed));
  }
  o.require(worst <= 1e-8, "Gaussian ell closed form to 1e-8");
  o.note("ell error " + fmt(worst));
  return o;
}

Outcome dual_certificate() {
  Outcome o;
  const json &r = scenario("certify_dual").first["results"];
  o.require(r["pass"] == true, "dual certificate passes");
  o.require(r["certificate"]["certified_count"] == 2, "certified count 2");
  const double vmax = r["shift"].get<double>();
  o.require(std::abs(vmax - 1.25) < 1e-12, "shift is V_max");
  const auto v = Potential::rational_peak(1, 1.25, 3.0);
  const auto dense = oracle::dense_eigenvalues(oracle::dense_operator(
      1, 8.0, 1024, [](double x) { return 5.0 * std::exp(-10.0 * std::abs(x)); }, potential_fn(v), 3));
  const std::size_t above = oracle::count_above(dense, vmax);
  o.require(above >= 2, "dense oracle confirms >= 2 above V_max");
  o.note("dense oracle: " + std::to_string(above) + " eigenvalues above " + fmt(vmax));
  return o;
}

Outcome gap_certificate_check() {
  Outcome o;
  const json &r = scenario("gap_perturbation").first["results"];
  const json &c = r["certificate"];
  o.require(r["pass"] == true, "gap certificate passes");
  const double delta = c["delta"].get<double>(), margin = c["margin"].get<double>();
  const double lambda0 = c["lambda0"].get<double>(), a_max = c["a_max"].get<double>();
  const double theta = c["theta_minus"].get<double>();
  o.require(delta < margin, "delta < margin");
  o.require(a_max < lambda0 - delta && lambda0 + delta < theta, "predicted interval inside (a_max, theta_-)");
  o.require(c["confirmed_value"].is_number(), "eigenvalue found in the predicted interval");
  if (c["confirmed_value"].is_number()) {
    const double found = c["confirmed_value"].get<double>();
    o.require(std::abs(found - lambda0) < delta, "confirmed value inside (lambda0 - delta, lambda0 + delta)");
    const Scenario sc = Scenario::load(scenario_dir / "gap_perturbation.json");
    const auto v0 = Potential::from_json(sc.potential, 1);
    const auto v1 = Potential::from_json(sc.params["v1"], 1);
    const auto dense = oracle::dense_eigenvalues(oracle::dense_operator(
        1, sc.half_width, sc.points, gaussian_density, potential_fn(Potential::sum(v0, v1)), 3));
    const double err = std::abs(oracle::nearest(dense, found) - found);
    o.require(err < 1e-7, "dense oracle agreement to 1e-7");
    o.note("lambda " + fmt(found, "%.9f") + ", dense gap " + fmt(err) + ", delta " + fmt(delta) + ", margin " +
           fmt(margin));
  }
  bool flipped = false;
  for (const auto &e : r["scan"])
    if (e["pass"] == false && e["delta"].get<double>() >= e["margin"].get<double>()) {
      flipped = true;
      o.note("fails at half-width " + fmt(e["half_width"].get<double>()));
      break;
    }
  o.require(flipped, "widening supp V1 flips the verdict");
  return o;
}

// Containment of every Ritz value in a report against constants recomputed
// from the echoed scenario.
void check_containment(const json &report, Outcome &o, std::size_t &values, std::size_t &discrete) {
  if (report["results"].contains("points")) {
    for (const auto &p : report["results"]["points"])
      check_containment(p, o, values, discrete);
    return;
  }
  const Scenario sc = Scenario::from_json(report["scenario"]);
  const auto k = Kernel::from_json(sc.kernel, sc.dim, sc.base_dir);
  auto v = Potential::from_json(sc.potential, sc.dim, sc.base_dir);
  if (sc.task == Task::gap)
    v = Potential::sum(v, Potential::from_json(sc.params["v1"], sc.dim, sc.base_dir));
  const auto c = spectral_constants(k, v);
  const double lo = c.a_min + c.v_min - 1e-8, hi = c.a_max + c.v_max + 1e-8;
  const auto ess = essential_spectrum(k, v);
  const std::string name = sc.name;
  auto check_value = [&](double x) {
    ++values;
    o.require(lo <= x && x <= hi, name + " value " + fmt(x, "%.12g") + " in bounds");
  };
  const json &res = report["results"];
  for (const char *key : {"pairs", "unconverged"})
    if (res.contains(key))
      for (const auto &p : res[key]) {
        if (key == std::string("pairs"))
          check_value(p["lambda"].get<double>());
        if (p.value("classification", "") == "discrete") {
          ++discrete;
          o.require(ess.distance(p["lambda"].get<double>()) > 1e-3, name + " discrete value away from ess");
        }
      }
  if (res.contains("confirmation") && res["confirmation"].is_object())
    for (const auto &x : res["confirmation"]["values"])
      check_value(x.get<double>());
  if (res.contains("certificate") && res["certificate"].contains("confirmed_value") &&
      res["certificate"]["confirmed_value"].is_number())
    check_value(res["certificate"]["confirmed_value"].get<double>());
}

Outcome containment() {
  Outcome o;
  std::size_t values = 0, discrete = 0, reports = 0;
  for (const auto &name : shipped_scenarios()) {
    check_containment(scenario(name).first, o, values, discrete);
    ++reports;
  }
  o.note(std::to_string(reports) + " scenarios, " + std::to_string(values) + " Ritz values, " +
         std::to_string(discrete) + " classified discrete");
  o.require(values > 0, "some Ritz values checked");
  return o;
}

Outcome annulus_oracles() {
  Outcome o;
  AnnulusSpec spec;
  spec.inner_radius = 1.0;
  const double v = annulus_average_potential(Potential::power_tail(1), spec).value;
  const double a = annulus_average_symbol(Kernel::cauchy(1), spec).value;
  const double ev = std::abs(v - std::log(1.5));
  const double ea = std::abs(a - (std::exp(-1.0) - std::exp(-2.0)));
  o.require(ev <= 1e-8, "<V>(1) = ln(3/2)");
  o.require(ea <= 1e-8, "<a_hat>(1) = e^-1 - e^-2");
  o.note("errors " + fmt(ev) + ", " + fmt(ea));
  return o;
}

Outcome determinism() {
  Outcome o;
  std::size_t same = 0;
  double slowest = 0.0;
  std::string slow_name;
  for (const auto &name : shipped_scenarios()) {
    const auto &r = scenario(name);
    const bool eq = determinism_hash(r.first) == determinism_hash(r.second);
    o.require(eq, name + " hashes match");
    same += eq;
    const double pair = r.seconds_first + r.seconds_second;
    o.require(pair < 60.0, name + " two runs within 1 min");
    if (pair > slowest) {
      slowest = pair;
      slow_name = name;
    }
  }
  o.note(std::to_string(same) + " scenarios with identical hashes; slowest pair " + slow_name + " " +
         fmt(slowest) + " s");
  return o;
}

} // namespace

int main(int argc, char **argv) {
  if (argc > 1)
    scenario_dir = argv[1];

  struct Criterion {
    int id;
    const char *title;
    double budget;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "operator matvec vs dense quadrature", 10, operator_correctness},
      {2, "self-adjointness of builtin combinations", 5, self_adjointness},
      {3, "round trip and Plancherel", 5, plancherel},
      {4, "essential spectrum of the Gaussian well", 5, essential_union},
      {5, "Weyl residual decay", 60, weyl_decay},
      {6, "scaled-family certificate", 180, scaled_certificate},
      {7, "heavy-tail certificate", 120, heavy_tail_certificate},
      {8, "dual certificate", 120, dual_certificate},
      {9, "gap certificate", 120, gap_certificate_check},
      {10, "spectrum containment over shipped scenarios", 600, containment},
      {11, "annulus-average oracles", 5, annulus_oracles},
      {12, "determinism over shipped scenarios", 600, determinism},
  };

  int failed = 0;
  const auto start = Clock::now();
  for (const auto &c : criteria) {
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception &e) {
      out.pass = false;
      out.note(std::string("exception: ") + e.what());
    }
    const double dt = seconds_since(t0);
    if (dt > c.budget)
      out.require(false, "time budget " + fmt(c.budget) + " s");
    failed += !out.pass;
    std::printf("criterion %2d %s  %-44s %8.2f s (budget %g s)  %s\n", c.id, out.pass ? "PASS" : "FAIL", c.title, dt,
                c.budget, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(start));
  return failed == 0 ? 0 : 1;
}
