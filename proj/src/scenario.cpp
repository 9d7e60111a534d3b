#include "nlspec/scenario.hpp"

#include "nlspec/certify.hpp"
#include "nlspec/hash.hpp"
#include "nlspec/quadrature.hpp"
#include "nlspec/spectra.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace nlspec {

using json = nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Parameter access with config-level errors

double num(const json &p, const std::string &key) {
  const auto &v = p.at(key);
  if (!v.is_number())
    throw ConfigError("parameter '" + key + "' must be a number");
  return v.get<double>();
}

std::size_t count_param(const json &p, const std::string &key) {
  const auto &v = p.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    throw ConfigError("parameter '" + key + "' must be a positive integer");
  return v.get<std::size_t>();
}

bool flag(const json &p, const std::string &key) {
  const auto &v = p.at(key);
  if (!v.is_boolean())
    throw ConfigError("parameter '" + key + "' must be true or false");
  return v.get<bool>();
}

std::vector<double> num_list(const json &p, const std::string &key) {
  const auto &v = p.at(key);
  if (!v.is_array())
    throw ConfigError("parameter '" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto &x : v) {
    if (!x.is_number())
      throw ConfigError("parameter '" + key + "' must be a list of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<int> int_list(const json &p, const std::string &key) {
  std::vector<int> out;
  for (double x : num_list(p, key)) {
    if (x != std::floor(x))
      throw ConfigError("parameter '" + key + "' must hold integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

std::optional<double> opt_num(const json &p, const std::string &key) {
  if (p.at(key).is_null())
    return std::nullopt;
  return num(p, key);
}

std::optional<Point> opt_point(const json &p, const std::string &key, int dim) {
  const auto &v = p.at(key);
  if (v.is_null())
    return std::nullopt;
  if (!v.is_array() || static_cast<int>(v.size()) != dim)
    throw ConfigError("parameter '" + key + "' must be a list of " + std::to_string(dim) +
                      " numbers");
  Point out{0, 0, 0};
  for (int a = 0; a < dim; ++a) {
    if (!v[a].is_number())
      throw ConfigError("parameter '" + key + "' must hold numbers");
    out[a] = v[a].get<double>();
  }
  return out;
}

json point_json(const Point &p, int dim) {
  auto j = json::array();
  for (int a = 0; a < dim; ++a)
    j.push_back(p[a]);
  return j;
}

json union_json(const IntervalUnion &u) {
  auto j = json::array();
  for (const auto &iv : u.intervals())
    j.push_back({iv.lo, iv.hi});
  return j;
}

json constants_json(const SpectralConstants &c) {
  return {{"a_min", c.a_min}, {"a_max", c.a_max}, {"v_min", c.v_min},   {"v_max", c.v_max},
          {"mu0", c.mu0},     {"mu1", c.mu1},     {"exact_symbol_bounds", c.exact_symbol_bounds}};
}

json grid_json(const Grid &g) {
  return {{"dim", g.dim()}, {"half_width", g.half_width()}, {"points", g.points_per_dim()}};
}

json hypothesis_report_json(const HypothesisReport &r, int dim) {
  return {{"pass", r.pass},
          {"worst_margin", r.worst_margin},
          {"worst_location", point_json(r.worst_location, dim)},
          {"samples", r.samples},
          {"note", r.note}};
}

json pair_json(const EigenPair &p) {
  json j{{"lambda", p.value},
         {"residual", p.residual},
         {"ritz_estimate", p.ritz_estimate},
         {"boundary_mass", p.boundary_mass},
         {"converged", p.converged},
         {"classification", to_string(p.classification)}};
  j["ess_distance"] = p.ess_distance ? json(*p.ess_distance) : json(nullptr);
  j["refined_lambda"] = p.refined_value ? json(*p.refined_value) : json(nullptr);
  return j;
}

EigsOptions eigs_options(const json &p, std::uint64_t seed) {
  EigsOptions o;
  o.k = count_param(p, "k");
  o.tol = num(p, "tol");
  o.max_iter = count_param(p, "max_iter");
  o.min_iter = count_param(p, "min_iter");
  o.seed = seed;
  return o;
}

ClassifyOptions classify_options(const json &p, const EigsOptions &solver) {
  ClassifyOptions c;
  c.tau_ess = num(p, "tau_ess");
  c.eps_loc = num(p, "eps_loc");
  c.tau_stab = num(p, "tau_stab");
  c.solver = solver;
  return c;
}

/// Spectrum containment of a set of converged values against the bound
/// [a_min + v_min, a_max + v_max].
json containment(const std::vector<double> &values, const SpectralConstants &c) {
  const double lo = c.a_min + c.v_min - 1e-8, hi = c.a_max + c.v_max + 1e-8;
  bool ok = true;
  for (double v : values)
    ok = ok && v >= lo && v <= hi;
  return {{"bounds", {c.a_min + c.v_min, c.a_max + c.v_max}}, {"tolerance", 1e-8}, {"ok", ok}};
}

IntervalUnion negated(const IntervalUnion &u) {
  std::vector<Interval> iv;
  for (const auto &x : u.intervals())
    iv.push_back({-x.hi, -x.lo});
  return IntervalUnion(std::move(iv));
}

struct Model {
  Kernel kernel;
  Potential potential;
  Grid grid;
};

Model build_model(const Scenario &sc) {
  return {Kernel::from_json(sc.kernel, sc.dim, sc.base_dir),
          Potential::from_json(sc.potential, sc.dim, sc.base_dir),
          Grid(sc.dim, sc.half_width, sc.points)};
}

// ---------------------------------------------------------------------------
// Tasks

json task_essential(const Scenario &sc, const Model &m) {
  const json &p = sc.params;
  EssentialOptions eo;
  eo.analytic = flag(p, "analytic");
  eo.bins = count_param(p, "bins");
  eo.eps = num(p, "eps");
  eo.sampling = m.grid;
  const IntervalUnion ess = essential_spectrum(m.kernel, m.potential, eo);
  const SpectralConstants c = spectral_constants(m.kernel, m.potential);
  const double lower = c.a_min + c.v_min, upper = c.a_max + c.v_max;
  auto gaps = json::array();
  for (const auto &w : spectral_gaps(ess, lower, upper))
    gaps.push_back({{"lo", w.lo}, {"hi", w.hi}, {"kind", to_string(w.kind)}});
  auto vanish = json::array();
  for (const auto &[delta, radius] : vanishing_radii(m.potential, m.grid))
    vanish.push_back({{"delta", delta}, {"radius", radius ? json(*radius) : json(nullptr)}});
  const bool analytic_path = eo.analytic && m.potential.exact_essential_range().has_value();
  return {{"constants", constants_json(c)},
          {"essential_spectrum", union_json(ess)},
          {"essential_range_path", analytic_path ? "analytic" : "histogram"},
          {"gaps", gaps},
          {"spectrum_bounds", {lower, upper}},
          {"vanishing_radii", vanish},
          {"tolerances", {{"bins", eo.bins}, {"merge_eps", eo.eps}}}};
}

json task_eigs(const Scenario &sc, const Model &m, std::uint64_t seed, bool &partial) {
  const json &p = sc.params;
  const DiscreteOperator op0 = DiscreteOperator::assemble(m.kernel, m.potential, m.grid);
  const bool lower_edge = flag(p, "lower_edge");
  const DiscreteOperator op = lower_edge ? op0.negate() : op0;
  const IntervalUnion ess0 = essential_spectrum(m.kernel, m.potential);
  const IntervalUnion ess = lower_edge ? negated(ess0) : ess0;
  const SpectralConstants &c = op.constants();
  const EigsOptions so = eigs_options(p, seed);

  json results;
  EigenSolve solve;
  double threshold = 0.0;
  if (!p.at("window").is_null()) {
    const auto w = num_list(p, "window");
    if (w.size() != 2 || !(w[0] < w[1]))
      throw ConfigError("window must be [lo, hi] with lo < hi");
    const double lo = lower_edge ? -w[1] : w[0], hi = lower_edge ? -w[0] : w[1];
    solve = eigs_in_window(op, lo, hi, so);
    results["window"] = w;
  } else {
    const auto &t = p.at("threshold");
    if (t.is_string()) {
      const auto s = t.get<std::string>();
      if (s == "mu1")
        threshold = c.mu1;
      else if (s == "ess_max")
        threshold = ess.max();
      else
        throw ConfigError("threshold must be a number, \"mu1\" or \"ess_max\"");
    } else {
      threshold = num(p, "threshold");
      if (lower_edge)
        threshold = -threshold;
    }
    if (threshold >= c.a_max + c.v_max) {
      solve.method = "bound";
    } else {
      solve = eigs_above(op, threshold, so);
    }
    results["threshold"] = lower_edge ? -threshold : threshold;
  }
  partial = solve.partial;

  std::vector<EigenPair> pairs = std::move(solve.pairs);
  if (flag(p, "classify") && !pairs.empty()) {
    const ClassifyOptions co = classify_options(p, so);
    BoxRefinement refine(op, co);
    pairs = classify_eigenpairs(std::move(pairs), ess, refine, co);
    results["refined_grid"] = grid_json(refine.grid());
  }
  auto rows = json::array();
  std::vector<double> values;
  std::size_t discrete = 0;
  for (auto &pr : pairs) {
    if (lower_edge) {
      pr.value = -pr.value;
      if (pr.refined_value)
        pr.refined_value = -*pr.refined_value;
    }
    values.push_back(pr.value);
    discrete += pr.classification == Classification::discrete;
    rows.push_back(pair_json(pr));
  }
  auto unconverged = json::array();
  for (const auto &pr : solve.unconverged)
    unconverged.push_back(
        {{"lambda", lower_edge ? -pr.value : pr.value}, {"residual", pr.residual}});
  results["constants"] = constants_json(op0.constants());
  results["essential_spectrum"] = union_json(ess0);
  results["pairs"] = rows;
  results["unconverged"] = unconverged;
  results["discrete_count"] = discrete;
  results["extremal_lambda"] = values.empty() ? json(nullptr) : json(values.front());
  results["containment"] = containment(values, op0.constants());
  results["solver"] = solve.provenance(so);
  results["lower_edge"] = lower_edge;
  results["operator"] = op0.provenance();
  results["warnings"] = op0.warnings();
  return results;
}

json task_weyl(const Scenario &sc, const Model &m, std::uint64_t seed) {
  const json &p = sc.params;
  if (p.at("lambda").is_null())
    throw ConfigError("weyl task needs 'lambda'");
  WeylOptions wo;
  wo.delta_power = num(p, "delta_power");
  wo.x0 = opt_point(p, "x0", sc.dim);
  wo.xi0 = opt_point(p, "xi0", sc.dim);
  wo.seed = seed;
  wo.assembly.prefer_analytic_symbol = flag(p, "analytic_symbol");
  std::vector<std::size_t> ns;
  for (double x : num_list(p, "n_list")) {
    if (x < 1 || x != std::floor(x))
      throw ConfigError("n_list must hold positive integers");
    ns.push_back(static_cast<std::size_t>(x));
  }
  if (!p.at("mode").is_string())
    throw ConfigError("mode must be a string");
  const WeylMode mode = weyl_mode_from_string(p.at("mode").get<std::string>());
  const WeylReport r =
      weyl_residuals(m.kernel, m.potential, num(p, "lambda"), mode, ns, m.grid, wo);
  json out = r.to_json(sc.dim);
  out["max_resolvable_n"] = weyl_max_n(mode, m.grid, r.point, wo.delta_power);
  out["constants"] = constants_json(spectral_constants(m.kernel, m.potential));
  out["tolerances"] = {{"delta_power", wo.delta_power}};
  return out;
}

json confirm_count(const DiscreteOperator &op, double shift, std::size_t certified,
                   std::uint64_t seed) {
  EigsOptions so;
  so.k = std::max<std::size_t>(certified, 1) + 2;
  so.seed = seed;
  const EigenSolve s = eigs_above(op, shift, so);
  std::vector<double> values;
  for (const auto &pr : s.pairs)
    values.push_back(pr.value);
  return {{"method", s.method},
          {"found_above_shift", values.size()},
          {"values", values},
          {"confirms", values.size() >= certified},
          {"containment", containment(values, op.constants())},
          {"solver", s.provenance(so)}};
}

json search_json(const SearchResult &r) {
  json j{{"pass", r.certificate.has_value()}, {"search_trace", r.trace_json()}};
  if (r.certificate)
    j["certificate"] = r.certificate->to_json();
  if (r.family)
    j["family"] = r.family->to_json();
  return j;
}

std::optional<DecayHypothesis> hypothesis_param(const json &p, const std::string &key,
                                                const Kernel &k) {
  const auto &v = p.at(key);
  if (v.is_null())
    return std::nullopt;
  if (v.is_string()) {
    if (v.get<std::string>() != "moment")
      throw ConfigError("'" + key + "' must be an object, \"moment\" or null");
    return hypothesis_from_moment(k);
  }
  return decay_from_json(v);
}

json task_certify_t2(const Scenario &sc, const Model &m, std::uint64_t seed) {
  const json &p = sc.params;
  const DiscreteOperator op = DiscreteOperator::assemble(m.kernel, m.potential, m.grid);
  ScaledSearch s;
  s.count = count_param(p, "count");
  s.m_values = int_list(p, "M_values");
  s.r0_start = opt_num(p, "r0_start");
  s.max_doublings = count_param(p, "max_doublings");
  s.modulation = opt_point(p, "modulation", sc.dim);
  s.compact_branch = flag(p, "compact_branch");
  s.shift = opt_num(p, "shift");
  const auto sym = hypothesis_param(p, "symbol_hypothesis", m.kernel);
  std::optional<DecayHypothesis> pot = m.potential.decay();
  if (!p.at("potential_hypothesis").is_null())
    pot = decay_from_json(p.at("potential_hypothesis"));

  json out;
  SamplingSpec spec;
  spec.radius_cap = 10.0;
  if (sym)
    out["symbol_hypothesis"] = {{"hypothesis", decay_to_json(*sym)},
                                {"check", hypothesis_report_json(
                                              check_hypothesis(m.kernel, *sym, spec), sc.dim)}};
  if (pot)
    out["potential_hypothesis"] = {
        {"hypothesis", decay_to_json(*pot)},
        {"check", hypothesis_report_json(check_hypothesis(m.potential, *pot, spec), sc.dim)}};
  if (sym && pot)
    out["alpha_exceeds_gamma"] = sym->exponent > pot->exponent;

  SearchResult r = certify_scaled(op, s);
  if (r.certificate)
    add_family_diagnostics(*r.certificate, *r.family, sym, pot);
  json res = search_json(r);
  out.update(res);
  const double shift = s.shift.value_or(op.constants().mu1);
  out["shift"] = shift;
  if (r.certificate && flag(p, "confirm"))
    out["confirmation"] = confirm_count(op, shift, r.certificate->certified_count, seed);
  out["constants"] = constants_json(op.constants());
  out["operator"] = op.provenance();
  out["warnings"] = op.warnings();
  return out;
}

json task_certify_heavy(const Scenario &sc, const Model &m, std::uint64_t seed) {
  const json &p = sc.params;
  const DiscreteOperator op = DiscreteOperator::assemble(m.kernel, m.potential, m.grid);
  GaussianSearch s;
  s.count = count_param(p, "count");
  s.r1_values = num_list(p, "r1_values");
  s.ladder = num_list(p, "ladder");
  s.shift = opt_num(p, "shift");
  SearchResult r = certify_heavy_tail(op, s);
  if (r.certificate)
    add_family_diagnostics(*r.certificate, *r.family, std::nullopt, m.potential.decay());
  json out = search_json(r);
  const double shift = s.shift.value_or(op.constants().mu1);
  out["shift"] = shift;

  const auto ratios = heavy_tail_ratios(m.kernel, m.potential, num_list(p, "ratio_radii"));
  auto rows = json::array();
  bool decreasing = true;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    rows.push_back({{"radius", ratios[i].radius},
                    {"ell", ratios[i].ell},
                    {"average", ratios[i].average},
                    {"ratio", ratios[i].ratio}});
    if (i > 0)
      decreasing = decreasing && ratios[i].ratio < ratios[i - 1].ratio;
  }
  out["ratio_diagnostic"] = {{"rows", rows}, {"decreasing", decreasing}};
  auto ell = json::array();
  for (int i = 0; i <= 20; ++i) {
    const double rr = std::pow(10.0, -2.0 + 0.2 * i);
    ell.push_back({rr, ell_hat(m.kernel, rr)});
  }
  out["ell_series"] = ell;
  if (r.certificate && flag(p, "confirm"))
    out["confirmation"] = confirm_count(op, shift, r.certificate->certified_count, seed);
  out["constants"] = constants_json(op.constants());
  out["operator"] = op.provenance();
  out["warnings"] = op.warnings();
  return out;
}

json task_certify_t5(const Scenario &sc, const Model &m, std::uint64_t seed) {
  const json &p = sc.params;
  const DiscreteOperator op = DiscreteOperator::assemble(m.kernel, m.potential, m.grid);
  DualSearch s;
  s.count = count_param(p, "count");
  s.q = num(p, "q");
  s.m_values = int_list(p, "M_values");
  s.r0_values = num_list(p, "r0_values");
  s.shift = opt_num(p, "shift");
  json out;
  const auto sym = hypothesis_param(p, "symbol_hypothesis", m.kernel);
  const auto pot = m.potential.decay();
  SamplingSpec spec;
  if (sym)
    out["symbol_hypothesis"] = {{"hypothesis", decay_to_json(*sym)},
                                {"check", hypothesis_report_json(
                                              check_hypothesis(m.kernel, *sym, spec), sc.dim)}};
  if (pot)
    out["potential_hypothesis"] = {
        {"hypothesis", decay_to_json(*pot)},
        {"check", hypothesis_report_json(check_hypothesis(m.potential, *pot, spec), sc.dim)}};
  if (sym && pot)
    out["gamma_exceeds_alpha"] = pot->exponent > sym->exponent;
  const Point peak = potential_peak(op);
  out["peak"] = point_json(peak, sc.dim);
  SearchResult r = certify_dual(op, s);
  out.update(search_json(r));
  const double shift = s.shift.value_or(op.constants().v_max);
  out["shift"] = shift;
  if (r.certificate && flag(p, "confirm"))
    out["confirmation"] = confirm_count(op, shift, r.certificate->certified_count, seed);
  out["constants"] = constants_json(op.constants());
  out["operator"] = op.provenance();
  out["warnings"] = op.warnings();
  return out;
}

json task_gap(const Scenario &sc, const Model &m, std::uint64_t seed) {
  const json &p = sc.params;
  if (p.at("v1").is_null())
    throw ConfigError("gap task needs the perturbation 'v1'");
  const Potential v1 = Potential::from_json(p.at("v1"), sc.dim, sc.base_dir);
  GapOptions go;
  go.solver = eigs_options(p, seed);
  go.classify = classify_options(p, go.solver);
  go.candidates = count_param(p, "candidates");
  go.confirm = flag(p, "confirm");
  const GapReference ref = solve_gap_reference(m.kernel, m.potential, m.grid, go);
  const GapCertificate gc = gap_certificate(m.kernel, m.potential, v1, m.grid, ref, go);
  json out{{"reference",
            {{"lambda0", ref.lambda0},
             {"a_max", ref.a_max},
             {"u0_residual", ref.u0->residual},
             {"u0_boundary_mass", ref.u0->boundary_mass},
             {"discrete_found", ref.discrete_found},
             {"essential_spectrum", union_json(ref.essential)}}},
           {"certificate", gc.to_json()},
           {"pass", gc.pass}};
  const auto widths = num_list(p, "scan_widths");
  if (!widths.empty()) {
    if (v1.kind() != PotentialKind::box)
      throw ConfigError("scan_widths needs a box perturbation");
    auto rows = json::array();
    for (const auto &e : gap_width_scan(m.kernel, m.potential, v1.param("amplitude"), v1.center(),
                                        widths, m.grid, ref, go))
      rows.push_back({{"half_width", e.half_width},
                      {"delta", e.certificate.delta},
                      {"margin", e.certificate.margin},
                      {"pass", e.certificate.pass}});
    out["scan"] = rows;
  }
  std::vector<double> values{ref.lambda0};
  if (gc.confirmed_value)
    values.push_back(*gc.confirmed_value);
  const DiscreteOperator full =
      DiscreteOperator::assemble(m.kernel, Potential::sum(m.potential, v1), m.grid);
  out["containment"] = containment(values, full.constants());
  out["constants"] = constants_json(full.constants());
  out["operator"] = full.provenance();
  out["tolerances"] = {{"tol", go.solver.tol}};
  return out;
}

json base_report(const Scenario &sc, std::uint64_t seed) {
  json r;
  r["tool"] = {{"name", "nlspec"}, {"version", tool_version}};
  json echo = sc.to_json();
  echo["seed"] = seed;
  r["scenario"] = echo;
  r["input_checksums"] = {{"scenario_sha256", sha256_hex(echo.dump())}};
  return r;
}

json verdict_for(Task t, const json &results) {
  switch (t) {
  case Task::certify_t2:
  case Task::certify_heavy:
  case Task::certify_t5:
  case Task::gap:
    return {{"pass", results.value("pass", false)}};
  default:
    return json::object();
  }
}

} // namespace

// ---------------------------------------------------------------------------

const char *to_string(Task t) {
  switch (t) {
  case Task::essential: return "essential";
  case Task::eigs: return "eigs";
  case Task::weyl: return "weyl";
  case Task::certify_t2: return "certify_t2";
  case Task::certify_heavy: return "certify_heavy";
  case Task::certify_t5: return "certify_t5";
  case Task::gap: return "gap";
  case Task::sweep: return "sweep";
  }
  return "unknown";
}

Task task_from_string(const std::string &s) {
  for (auto t : {Task::essential, Task::eigs, Task::weyl, Task::certify_t2, Task::certify_heavy,
                 Task::certify_t5, Task::gap, Task::sweep})
    if (s == to_string(t))
      return t;
  throw ConfigError("unknown task '" + s + "'");
}

const json &task_defaults(Task t) {
  static const json solver = {{"k", 8},        {"tol", 1e-8},      {"max_iter", 400},
                              {"min_iter", 40}, {"tau_ess", 1e-3}, {"eps_loc", 1e-6},
                              {"tau_stab", 1e-6}};
  static const json essential = {{"bins", 1000}, {"eps", 1e-2}, {"analytic", true}};
  static const json eigs = [] {
    json j = solver;
    j.update({{"threshold", "mu1"},
              {"window", nullptr},
              {"classify", true},
              {"lower_edge", false}});
    return j;
  }();
  static const json weyl = {{"lambda", nullptr},     {"mode", "symbol_point"},
                            {"n_list", {4, 16, 64}}, {"delta_power", 2.0},
                            {"x0", nullptr},         {"xi0", nullptr},
                            {"analytic_symbol", true}};
  static const json t2 = {{"count", 3},
                          {"M_values", {3, 4, 5}},
                          {"r0_start", nullptr},
                          {"max_doublings", 40},
                          {"modulation", nullptr},
                          {"compact_branch", false},
                          {"shift", nullptr},
                          {"symbol_hypothesis", "moment"},
                          {"potential_hypothesis", nullptr},
                          {"confirm", true}};
  static const json heavy = {{"count", 2},
                             {"r1_values", {1.5, 2.0, 3.0}},
                             {"ladder", json::array()},
                             {"shift", nullptr},
                             {"ratio_radii", {4, 16, 64, 256}},
                             {"confirm", true}};
  static const json t5 = {{"count", 2},
                          {"q", 1.0},
                          {"M_values", {3, 4, 5}},
                          {"r0_values", {0.5, 1.0, 2.0}},
                          {"shift", nullptr},
                          {"symbol_hypothesis", nullptr},
                          {"confirm", true}};
  static const json gap = [] {
    json j = solver;
    j.update({{"v1", nullptr},
              {"candidates", 8},
              {"confirm", true},
              {"scan_widths", json::array()},
              {"tol", 1e-9}});
    return j;
  }();
  static const json empty = json::object();
  switch (t) {
  case Task::essential: return essential;
  case Task::eigs: return eigs;
  case Task::weyl: return weyl;
  case Task::certify_t2: return t2;
  case Task::certify_heavy: return heavy;
  case Task::certify_t5: return t5;
  case Task::gap: return gap;
  case Task::sweep: return empty;
  }
  return empty;
}

const json &sweep_defaults() {
  static const json d = {{"task", "eigs"},
                         {"L_ladder", json::array()},
                         {"fixed_spacing", true},
                         {"parameter", nullptr},
                         {"values", json::array()}};
  return d;
}

namespace {

json merge_params(const json &given, const json &defaults, const std::string &what) {
  if (!given.is_object())
    throw ConfigError(what + " must be an object");
  json merged = defaults;
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!defaults.contains(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + what);
    merged[it.key()] = it.value();
  }
  return merged;
}

} // namespace

Scenario Scenario::from_json(const json &j, const std::filesystem::path &base_dir) {
  if (!j.is_object())
    throw ConfigError("scenario must be a JSON object");
  static const std::vector<std::string> keys{"name",      "description", "task", "grid", "kernel",
                                             "potential", "params",      "seed", "sweep"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("unknown key '" + it.key() + "' in scenario");
  Scenario sc;
  sc.base_dir = base_dir;
  if (j.contains("name")) {
    if (!j["name"].is_string())
      throw ConfigError("name must be a string");
    sc.name = j["name"].get<std::string>();
  } else {
    sc.name = "unnamed";
  }
  if (j.contains("description")) {
    if (!j["description"].is_string())
      throw ConfigError("description must be a string");
    sc.description = j["description"].get<std::string>();
  }
  if (!j.contains("task") || !j["task"].is_string())
    throw ConfigError("scenario needs a 'task'");
  sc.task = task_from_string(j["task"].get<std::string>());

  if (!j.contains("grid") || !j["grid"].is_object())
    throw ConfigError("scenario needs a 'grid' object");
  const json &g = j["grid"];
  for (auto it = g.begin(); it != g.end(); ++it)
    if (it.key() != "dim" && it.key() != "half_width" && it.key() != "points")
      throw ConfigError("unknown key '" + it.key() + "' in grid");
  if (!g.contains("dim") || !g["dim"].is_number_integer() || !g.contains("points") ||
      !g["points"].is_number_integer() || !g.contains("half_width") ||
      !g["half_width"].is_number())
    throw ConfigError("grid needs integer 'dim', integer 'points' and numeric 'half_width'");
  if (g["points"].get<long long>() < 1 || g["dim"].get<long long>() < 1)
    throw ConfigError("grid dim and points must be positive");
  sc.dim = g["dim"].get<int>();
  sc.half_width = g["half_width"].get<double>();
  sc.points = g["points"].get<std::size_t>();
  try {
    Grid check(sc.dim, sc.half_width, sc.points);
  } catch (const UsageError &e) {
    throw ConfigError(std::string("invalid grid: ") + e.what());
  }

  if (!j.contains("kernel"))
    throw ConfigError("scenario needs a 'kernel'");
  sc.kernel = j["kernel"];
  sc.potential = j.contains("potential") ? j["potential"] : json("zero");
  Kernel::from_json(sc.kernel, sc.dim, base_dir);
  Potential::from_json(sc.potential, sc.dim, base_dir);

  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned())
      throw ConfigError("seed must be a nonnegative integer");
    sc.seed = j["seed"].get<std::uint64_t>();
  }

  Task param_task = sc.task;
  if (sc.task == Task::sweep) {
    sc.sweep = merge_params(j.value("sweep", json::object()), sweep_defaults(), "sweep");
    if (!sc.sweep["task"].is_string())
      throw ConfigError("sweep task must be a string");
    param_task = task_from_string(sc.sweep["task"].get<std::string>());
    if (param_task == Task::sweep)
      throw ConfigError("a sweep cannot nest another sweep");
    const bool ladder = !sc.sweep["L_ladder"].empty();
    const bool param = !sc.sweep["parameter"].is_null();
    if (!ladder && !param)
      throw ConfigError("sweep needs a nonempty 'L_ladder' or a 'parameter' with 'values'");
    if (ladder && param)
      throw ConfigError("sweep takes either 'L_ladder' or 'parameter', not both");
    if (param && sc.sweep["values"].empty())
      throw ConfigError("parameter sweep needs nonempty 'values'");
  } else if (j.contains("sweep")) {
    throw ConfigError("'sweep' block given for a non-sweep task");
  }
  sc.params =
      merge_params(j.value("params", json::object()), task_defaults(param_task), "params");
  return sc;
}

Scenario Scenario::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open scenario file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw ConfigError("scenario is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j, path.parent_path());
}

json Scenario::to_json() const {
  json j{{"name", name},
         {"task", nlspec::to_string(task)},
         {"grid", {{"dim", dim}, {"half_width", half_width}, {"points", points}}},
         {"kernel", kernel},
         {"potential", potential},
         {"params", params},
         {"seed", seed}};
  if (!description.empty())
    j["description"] = description;
  if (task == Task::sweep)
    j["sweep"] = sweep;
  return j;
}

// ---------------------------------------------------------------------------
// Running

json run_scenario(const Scenario &sc, const RunOptions &opts) {
  if (sc.task == Task::sweep)
    return run_sweep(sc, opts);
  const std::uint64_t seed = opts.seed.value_or(sc.seed);
  json report = base_report(sc, seed);
  const auto t0 = std::chrono::steady_clock::now();
  bool partial = false;
  try {
    const Model m = build_model(sc);
    json results;
    switch (sc.task) {
    case Task::essential: results = task_essential(sc, m); break;
    case Task::eigs: results = task_eigs(sc, m, seed, partial); break;
    case Task::weyl: results = task_weyl(sc, m, seed); break;
    case Task::certify_t2: results = task_certify_t2(sc, m, seed); break;
    case Task::certify_heavy: results = task_certify_heavy(sc, m, seed); break;
    case Task::certify_t5: results = task_certify_t5(sc, m, seed); break;
    case Task::gap: results = task_gap(sc, m, seed); break;
    case Task::sweep: break;
    }
    report["verdict"] = verdict_for(sc.task, results);
    report["results"] = std::move(results);
    report["status"] = partial ? "partial" : "ok";
  } catch (const ConfigError &) {
    throw;
  } catch (const UsageError &e) {
    throw ConfigError(e.what());
  } catch (const json::exception &e) {
    throw ConfigError(std::string("malformed parameter: ") + e.what());
  } catch (const Error &e) {
    report["status"] = "error";
    json err{{"kind", to_string(e.kind())}, {"message", e.what()}};
    if (const auto *s = dynamic_cast<const SizingError *>(&e))
      err["max_feasible"] = s->max_feasible();
    report["error"] = err;
  }
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  report["timings"] = {{"total_seconds", dt.count()}};
  return report;
}

namespace {

void set_path(json &doc, const std::string &path, const json &value) {
  json *cur = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.'))
    parts.push_back(part);
  if (parts.empty())
    throw ConfigError("empty sweep parameter path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (cur->is_string()) // shorthand builtin name
      *cur = json{{"name", cur->get<std::string>()}};
    if (!cur->is_object() || !cur->contains(parts[i]))
      throw ConfigError("sweep parameter path '" + path + "' does not exist");
    cur = &(*cur)[parts[i]];
  }
  if (cur->is_string())
    *cur = json{{"name", cur->get<std::string>()}};
  if (!cur->is_object())
    throw ConfigError("sweep parameter path '" + path + "' does not name an object field");
  (*cur)[parts.back()] = value;
}

json sweep_row(const json &parameter, const json &report) {
  json row{{"parameter", parameter}, {"status", report.value("status", "error")}};
  const json results = report.value("results", json::object());
  json count = nullptr, extremal = nullptr, pass = nullptr;
  if (results.contains("discrete_count")) {
    count = results["discrete_count"];
    extremal = results["extremal_lambda"];
  }
  if (results.contains("pass")) {
    pass = results["pass"];
    if (results.contains("certificate") && results["certificate"].contains("certified_count"))
      count = results["certificate"]["certified_count"];
    if (results.contains("confirmation") && !results["confirmation"]["values"].empty())
      extremal = results["confirmation"]["values"][0];
  }
  row["eigencount"] = count;
  row["extremal_lambda"] = extremal;
  row["certificate_pass"] = pass;
  if (report.contains("error"))
    row["error"] = report["error"];
  return row;
}

} // namespace

json run_sweep(const Scenario &sc, const RunOptions &opts) {
  if (sc.task != Task::sweep)
    throw UsageError("run_sweep needs a sweep scenario");
  const std::uint64_t seed = opts.seed.value_or(sc.seed);
  json report = base_report(sc, seed);
  const auto t0 = std::chrono::steady_clock::now();

  const Task base = task_from_string(sc.sweep["task"].get<std::string>());
  json base_doc = sc.to_json();
  base_doc.erase("sweep");
  base_doc["task"] = to_string(base);
  base_doc["seed"] = seed;

  std::vector<json> params;
  std::vector<json> docs;
  const bool ladder = !sc.sweep["L_ladder"].empty();
  if (ladder) {
    const auto ls = num_list(sc.sweep, "L_ladder");
    const bool fixed = flag(sc.sweep, "fixed_spacing");
    for (double l : ls) {
      json d = base_doc;
      d["grid"]["half_width"] = l;
      if (fixed) {
        const double n = static_cast<double>(sc.points) * l / sc.half_width;
        const auto ni = static_cast<std::size_t>(std::llround(n));
        if (std::abs(n - static_cast<double>(ni)) > 1e-9 * n || !std::has_single_bit(ni))
          throw ConfigError("L = " + std::to_string(l) +
                            " does not keep the spacing with a power-of-two point count");
        d["grid"]["points"] = ni;
      }
      params.push_back(l);
      docs.push_back(d);
    }
  } else {
    if (!sc.sweep["parameter"].is_string())
      throw ConfigError("sweep parameter must be a dotted path string");
    const auto path = sc.sweep["parameter"].get<std::string>();
    for (const auto &v : sc.sweep["values"]) {
      json d = base_doc;
      set_path(d, path, v);
      params.push_back(v);
      docs.push_back(d);
    }
  }
  // Validate every point before running any.
  std::vector<Scenario> points;
  for (const auto &d : docs)
    points.push_back(Scenario::from_json(d, sc.base_dir));

  std::vector<json> reports(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        RunOptions o;
        o.seed = seed;
        reports[i] = run_scenario(points[i], o);
      } catch (const Error &e) {
        reports[i] = {{"status", "error"},
                      {"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
      }
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(points.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t)
    pool.emplace_back(worker);
  worker();
  for (auto &t : pool)
    t.join();

  auto rows = json::array();
  bool any_error = false, all_pass = true, nondecreasing = true;
  std::optional<long long> last;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    json row = sweep_row(params[i], reports[i]);
    any_error = any_error || row["status"] != "ok";
    if (row["certificate_pass"].is_boolean())
      all_pass = all_pass && row["certificate_pass"].get<bool>();
    if (row["eigencount"].is_number()) {
      const long long c = row["eigencount"].get<long long>();
      if (last && c < *last)
        nondecreasing = false;
      last = c;
    }
    rows.push_back(row);
  }
  json verdict;
  if (ladder) {
    verdict["count_nondecreasing"] = nondecreasing && !any_error;
    verdict["pass"] = nondecreasing && !any_error;
  } else {
    verdict["all_pass"] = all_pass && !any_error;
    verdict["pass"] = all_pass && !any_error;
  }
  json point_reports = json::array();
  for (auto &r : reports) {
    r.erase("timings");
    point_reports.push_back(r);
  }
  report["results"] = {{"rows", rows},
                       {"kind", ladder ? "L_ladder" : "parameter"},
                       {"points", point_reports}};
  report["verdict"] = verdict;
  report["status"] = any_error ? "partial" : "ok";
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  report["timings"] = {{"total_seconds", dt.count()}, {"threads", threads}};
  return report;
}

// ---------------------------------------------------------------------------
// Emission

ReportFormat format_from_string(const std::string &s) {
  if (s == "json")
    return ReportFormat::json;
  if (s == "csv")
    return ReportFormat::csv;
  if (s == "plotdata")
    return ReportFormat::plotdata;
  throw ConfigError("unknown format '" + s + "' (json, csv, plotdata)");
}

namespace {

std::string cell(const json &v) {
  if (v.is_null())
    return "";
  if (v.is_string())
    return v.get<std::string>();
  return v.dump();
}

class FileSet {
public:
  FileSet(std::filesystem::path dir, std::string stem) : dir_(std::move(dir)), stem_(std::move(stem)) {}

  std::ofstream open(const std::string &suffix) {
    const auto path = dir_ / (stem_ + suffix);
    std::ofstream out(path);
    if (!out)
      throw IoError("cannot write " + path.string());
    out.precision(17);
    written.push_back(path);
    return out;
  }

  std::vector<std::filesystem::path> written;

private:
  std::filesystem::path dir_;
  std::string stem_;
};

void emit_csv(const json &report, FileSet &files) {
  const json results = report.value("results", json::object());
  if (results.contains("pairs")) {
    auto out = files.open("_eigs.csv");
    out << "lambda,residual,boundary_mass,classification\n";
    for (const auto &p : results["pairs"])
      out << cell(p["lambda"]) << ',' << cell(p["residual"]) << ',' << cell(p["boundary_mass"])
          << ',' << cell(p["classification"]) << '\n';
  }
  if (results.contains("entries")) {
    auto out = files.open("_weyl.csv");
    out << "n,residual,symbol_term,potential_term,support_nodes\n";
    for (const auto &e : results["entries"])
      out << cell(e["n"]) << ',' << cell(e["residual"]) << ',' << cell(e["symbol_term"]) << ','
          << cell(e["potential_term"]) << ',' << cell(e["support_nodes"]) << '\n';
  }
  if (results.contains("essential_spectrum") && !results.contains("pairs") &&
      !results.contains("certificate")) {
    auto out = files.open("_essential.csv");
    out << "component,lo,hi\n";
    for (const auto &iv : results["essential_spectrum"])
      out << "essential," << cell(iv[0]) << ',' << cell(iv[1]) << '\n';
    if (results.contains("gaps"))
      for (const auto &g : results["gaps"])
        out << cell(g["kind"]) << ',' << cell(g["lo"]) << ',' << cell(g["hi"]) << '\n';
  }
  if (results.contains("certificate") && results["certificate"].contains("gram_A")) {
    const json &c = results["certificate"];
    auto out = files.open("_certificate.csv");
    out << "n,m,A_re,A_im,B_re,B_im\n";
    const json &a = c["gram_A"], &b = c["gram_B"];
    for (std::size_t r = 0; r < a["re"].size(); ++r)
      for (std::size_t k = 0; k < a["re"][r].size(); ++k)
        out << r + 1 << ',' << k + 1 << ',' << cell(a["re"][r][k]) << ',' << cell(a["im"][r][k])
            << ',' << cell(b["re"][r][k]) << ',' << cell(b["im"][r][k]) << '\n';
    auto sum = files.open("_certificate_summary.csv");
    sum << "key,value\n";
    for (const char *k : {"theorem", "shift", "min_eig", "certified_count", "pass"})
      sum << k << ',' << cell(c[k]) << '\n';
  } else if (results.contains("certificate")) {
    auto out = files.open("_gap.csv");
    out << "key,value\n";
    for (auto it = results["certificate"].begin(); it != results["certificate"].end(); ++it)
      if (!it.value().is_array())
        out << it.key() << ',' << cell(it.value()) << '\n';
  }
  if (results.contains("rows")) {
    auto out = files.open("_sweep.csv");
    out << "parameter,eigencount,extremal_lambda,certificate_pass,status\n";
    for (const auto &r : results["rows"])
      out << cell(r["parameter"]) << ',' << cell(r["eigencount"]) << ','
          << cell(r["extremal_lambda"]) << ',' << cell(r["certificate_pass"]) << ','
          << cell(r["status"]) << '\n';
  }
  if (files.written.empty()) {
    auto out = files.open("_summary.csv");
    out << "key,value\n";
    out << "status," << cell(report.value("status", json(nullptr))) << '\n';
  }
}

void series(FileSet &files, const std::string &suffix, const std::string &header,
            const std::vector<std::pair<json, json>> &rows) {
  auto out = files.open(suffix);
  out << "# " << header << '\n';
  for (const auto &[x, y] : rows)
    out << cell(x) << ' ' << cell(y) << '\n';
}

void emit_plotdata(const json &report, FileSet &files) {
  const json results = report.value("results", json::object());
  if (results.contains("entries")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &e : results["entries"])
      rows.emplace_back(e["n"], e["residual"]);
    series(files, "_weyl.dat", "n residual", rows);
  }
  if (results.contains("rows")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &r : results["rows"])
      rows.emplace_back(r["parameter"], r["eigencount"]);
    series(files, "_sweep.dat", "parameter eigencount", rows);
  }
  if (results.contains("ell_series")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &r : results["ell_series"])
      rows.emplace_back(r[0], r[1]);
    series(files, "_ell.dat", "r ell", rows);
  }
  if (results.contains("ratio_diagnostic")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &r : results["ratio_diagnostic"]["rows"])
      rows.emplace_back(r["radius"], r["ratio"]);
    series(files, "_ratio.dat", "R ratio", rows);
  }
  if (results.contains("pairs")) {
    std::vector<std::pair<json, json>> rows;
    std::size_t i = 0;
    for (const auto &p : results["pairs"])
      rows.emplace_back(++i, p["lambda"]);
    series(files, "_eigs.dat", "index lambda", rows);
  }
  if (results.contains("scan")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &r : results["scan"])
      rows.emplace_back(r["half_width"], r["delta"]);
    series(files, "_gap_scan.dat", "half_width delta", rows);
  }
  if (results.contains("search_trace")) {
    std::vector<std::pair<json, json>> rows;
    for (const auto &r : results["search_trace"])
      if (r["outcome"] != "sizing")
        rows.emplace_back(r["r0"], r["min_eig"]);
    series(files, "_search.dat", "r0 min_eig", rows);
  }
  if (files.written.empty())
    series(files, "_empty.dat", "no series in this report", {});
}

} // namespace

std::vector<std::filesystem::path> emit_report(const json &report, ReportFormat format,
                                               const std::filesystem::path &out_dir,
                                               const std::string &stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec)
    throw IoError("cannot create output directory " + out_dir.string());
  FileSet files(out_dir, stem);
  switch (format) {
  case ReportFormat::json: {
    auto out = files.open(".json");
    out << report.dump(2) << '\n';
    break;
  }
  case ReportFormat::csv:
    emit_csv(report, files);
    break;
  case ReportFormat::plotdata:
    emit_plotdata(report, files);
    break;
  }
  return files.written;
}

std::string determinism_hash(const json &report) {
  json copy = report;
  copy.erase("timings");
  return sha256_hex(copy.dump());
}

bool report_passed(const json &report) {
  if (report.value("status", "error") == "error")
    return false;
  if (report.contains("verdict") && report["verdict"].contains("pass"))
    return report["verdict"]["pass"].get<bool>();
  return true;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::config:
  case ErrorKind::usage:
    return exit_config;
  case ErrorKind::sizing:
    return exit_sizing;
  case ErrorKind::convergence:
    return exit_convergence;
  default:
    return exit_other;
  }
}

int exit_code_for(const json &report, bool expect_pass) {
  const std::string status = report.value("status", "error");
  if (status == "error") {
    const std::string kind = report.contains("error") ? report["error"].value("kind", "") : "";
    for (auto k : {ErrorKind::usage, ErrorKind::config, ErrorKind::sizing, ErrorKind::out_of_range,
                   ErrorKind::convergence, ErrorKind::self_adjointness, ErrorKind::conditioning,
                   ErrorKind::hypothesis, ErrorKind::prerequisite, ErrorKind::io})
      if (kind == to_string(k))
        return exit_code_for(k);
    return exit_other;
  }
  if (status == "partial" && !report.contains("rows"))
    return exit_convergence;
  if (expect_pass && !report_passed(report))
    return exit_certificate_fail;
  return exit_ok;
}

} // namespace nlspec
