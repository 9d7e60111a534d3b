#include "nlspec/certify.hpp"

#include "nlspec/errors.hpp"
#include "nlspec/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace nlspec {

namespace {

constexpr double pi = std::numbers::pi;

double f_exp(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }

double max_abs_diff(const Eigen::MatrixXcd &a, const Eigen::MatrixXcd &b) {
  return (a - b).cwiseAbs().maxCoeff();
}

nlohmann::json matrix_json(const Eigen::MatrixXcd &m) {
  auto re = nlohmann::json::array(), im = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto rr = nlohmann::json::array(), ri = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr.push_back(m(r, c).real());
      ri.push_back(m(r, c).imag());
    }
    re.push_back(rr);
    im.push_back(ri);
  }
  return {{"re", re}, {"im", im}};
}

nlohmann::json point_json(const Point &p, int dim) {
  auto j = nlohmann::json::array();
  for (int a = 0; a < dim; ++a)
    j.push_back(p[a]);
  return j;
}

} // namespace

// ---------------------------------------------------------------------------
// Bump

double BumpProfile::smooth_step(double t) {
  if (t <= 0.0)
    return 0.0;
  if (t >= 1.0)
    return 1.0;
  const double a = f_exp(t), b = f_exp(1.0 - t);
  return a / (a + b);
}

double BumpProfile::chi(double r) {
  if (r <= 0.5 || r >= 2.5)
    return 0.0;
  if (r < 1.0)
    return smooth_step(2.0 * (r - 0.5));
  if (r <= 2.0)
    return 1.0;
  return smooth_step(2.0 * (2.5 - r));
}

BumpProfile::BumpProfile(int dim) : dim_(dim) {
  // ||chi(|.|)||^2 = |S^{d-1}| int chi(r)^2 r^{d-1} dr
  const double sphere = dim == 1 ? 2.0 : (dim == 2 ? 2.0 * pi : 4.0 * pi);
  const GaussRule &g = gauss_legendre(64);
  double acc = 0.0;
  const double cuts[] = {0.5, 0.75, 1.0, 2.0, 2.25, 2.5};
  for (int p = 0; p + 1 < 6; ++p) {
    const double a = cuts[p], b = cuts[p + 1];
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const double r = a + 0.5 * (b - a) * (g.nodes[i] + 1.0);
      const double c = chi(r);
      acc += 0.5 * (b - a) * g.weights[i] * c * c * std::pow(r, dim - 1);
    }
  }
  height_ = 1.0 / std::sqrt(sphere * acc);
}

const BumpProfile &BumpProfile::standard(int dim) {
  if (dim < 1 || dim > 3)
    throw UsageError("dimension must be 1, 2 or 3");
  static const BumpProfile profiles[3] = {BumpProfile(1), BumpProfile(2), BumpProfile(3)};
  return profiles[dim - 1];
}

double bump_max_radius(const Grid &grid) { return 0.95 * grid.half_width() / 2.5; }

double bump_min_radius(const Grid &grid) { return 16.0 * grid.spacing(); }

GridFunction build_bump(const Grid &grid, double radius, const std::optional<Point> &modulation,
                        const Point &center) {
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw UsageError("bump radius must be positive");
  double far = 0.0;
  for (int a = 0; a < grid.dim(); ++a)
    far = std::max(far, std::abs(center[a]));
  const double rmax = (0.95 * grid.half_width() - far) / 2.5;
  if (!(radius < rmax))
    throw SizingError("bump of radius " + std::to_string(radius) +
                          " does not fit the box; largest feasible radius is " +
                          std::to_string(rmax),
                      rmax);
  if (radius < bump_min_radius(grid))
    throw SizingError("bump of radius " + std::to_string(radius) +
                          " is under-resolved; it needs R >= 16 h = " +
                          std::to_string(bump_min_radius(grid)),
                      rmax);
  const BumpProfile &psi = BumpProfile::standard(grid.dim());
  const int d = grid.dim();
  const double amp = std::pow(radius, -0.5 * d);
  GridFunction f = GridFunction::sample(grid, [&](const Point &x) {
    Point y{x[0] - center[0], x[1] - center[1], x[2] - center[2]};
    cplx v = amp * psi(norm2(y, d) / radius);
    if (modulation) {
      double ph = 0.0;
      for (int a = 0; a < d; ++a)
        ph += (*modulation)[a] * x[a];
      v *= std::polar(1.0, ph);
    }
    return v;
  });
  normalize(f);
  return f;
}

// ---------------------------------------------------------------------------
// Families

const char *to_string(FamilyKind k) {
  switch (k) {
  case FamilyKind::bump_scaled: return "bump_scaled";
  case FamilyKind::gaussian: return "gaussian";
  case FamilyKind::fourier_side_bump: return "fourier_side_bump";
  }
  return "unknown";
}

nlohmann::json TestFamily::to_json() const {
  const int d = members.empty() ? 1 : grid().dim();
  nlohmann::json j{{"kind", to_string(kind)},
                   {"radii", radii},
                   {"size", members.size()},
                   {"scale_base", scale_base},
                   {"base_radius", base_radius},
                   {"off_paper", off_paper}};
  if (modulation)
    j["modulation"] = point_json(*modulation, d);
  if (kind == FamilyKind::fourier_side_bump) {
    j["q"] = q;
    j["center"] = point_json(center, d);
  }
  if (compact_branch)
    j["compact_branch"] = true;
  return j;
}

TestFamily scaled_family(const Grid &grid, double r0, int m, std::size_t count,
                         const std::optional<Point> &modulation, bool compact_branch) {
  if (count < 1)
    throw UsageError("family needs at least one member");
  if (compact_branch ? m < 1 : m <= 2)
    throw UsageError(compact_branch ? "scale base must be >= 1" : "scale base M must exceed 2");
  if (!(r0 > 0.0))
    throw UsageError("base radius must be positive");
  TestFamily fam;
  fam.kind = FamilyKind::bump_scaled;
  fam.scale_base = m;
  fam.base_radius = r0;
  fam.modulation = modulation;
  fam.compact_branch = compact_branch;
  auto radius = [&](std::size_t n) {
    // The compact branch steps by 2^{2m}; m = 1 gives 2^{2n-1} R0, whose
    // neighbouring supports still overlap, m >= 2 leaves gaps.
    const double e = compact_branch ? static_cast<double>(m) * (2.0 * static_cast<double>(n) - 1.0)
                                    : static_cast<double>(m) * static_cast<double>(n);
    return std::exp2(e) * r0;
  };
  const double rmax = bump_max_radius(grid);
  std::size_t feasible = 0;
  while (radius(feasible + 1) < rmax)
    ++feasible;
  if (feasible < count)
    throw SizingError("box holds only " + std::to_string(feasible) + " members of the family",
                      static_cast<double>(feasible));
  for (std::size_t n = 1; n <= count; ++n) {
    fam.radii.push_back(radius(n));
    fam.members.push_back(build_bump(grid, radius(n), modulation));
  }
  return fam;
}

double gaussian_overlap(int dim, double r1, double r2) {
  return std::pow(2.0 * r1 * r2 / (r1 * r1 + r2 * r2), 0.5 * dim);
}

TestFamily gaussian_family(const Grid &grid, double r1, std::size_t count,
                           const std::vector<double> &ladder) {
  if (count < 1)
    throw UsageError("family needs at least one member");
  TestFamily fam;
  fam.kind = FamilyKind::gaussian;
  fam.base_radius = r1;
  std::vector<double> radii;
  if (!ladder.empty()) {
    fam.off_paper = true;
    for (std::size_t i = 0; i < ladder.size(); ++i)
      if (!(ladder[i] > 0.0) || (i > 0 && ladder[i] <= ladder[i - 1]))
        throw UsageError("radius ladder must be positive and increasing");
    radii = ladder;
  } else {
    if (!(r1 > 1.0))
      throw UsageError("the R_{j+1} = R_j^4 ladder needs R_1 > 1");
    double r = r1;
    for (std::size_t j = 0; j < count && r < std::numeric_limits<double>::max(); ++j) {
      radii.push_back(r);
      r = std::pow(r, 4.0);
    }
  }
  std::size_t feasible = 0;
  while (feasible < radii.size() && 3.0 * radii[feasible] < grid.half_width())
    ++feasible;
  if (feasible < count)
    throw SizingError("the Gaussian ladder fits only " + std::to_string(feasible) +
                          " members in the box (needs 3 R_N < L)",
                      static_cast<double>(feasible));
  if (radii.front() < 4.0 * grid.spacing())
    throw SizingError("first Gaussian radius is under-resolved (needs R >= 4 h)",
                      static_cast<double>(feasible));
  const int d = grid.dim();
  for (std::size_t j = 0; j < count; ++j) {
    const double r = radii[j];
    const double amp = std::pow(2.0 / pi, 0.25 * d) * std::pow(r, -0.5 * d);
    GridFunction f = GridFunction::sample(grid, [&](const Point &x) {
      const double s = norm2(x, d);
      return cplx(amp * std::exp(-s * s / (r * r)), 0.0);
    });
    normalize(f);
    fam.radii.push_back(r);
    fam.members.push_back(std::move(f));
  }
  return fam;
}

TestFamily dual_family(const Grid &grid, double q, std::size_t count, int m, double r0,
                       const Point &center) {
  if (count < 1)
    throw UsageError("family needs at least one member");
  if (!(q > 0.0) || !(r0 > 0.0))
    throw UsageError("frequency base and radius must be positive");
  if (m < 1)
    throw UsageError("scale base must be >= 1");
  TestFamily fam;
  fam.kind = FamilyKind::fourier_side_bump;
  fam.scale_base = m;
  fam.base_radius = r0;
  fam.q = q;
  fam.center = center;
  const int d = grid.dim();
  auto radius = [&](std::size_t n) {
    return std::exp2(static_cast<double>(m) * static_cast<double>(n)) * r0;
  };
  // The outer edge 2 q R must stay inside the Nyquist cube.
  std::size_t feasible = 0;
  while (2.0 * q * radius(feasible + 1) < 0.95 * grid.nyquist())
    ++feasible;
  if (feasible < count)
    throw SizingError("frequency support of the dual family exceeds the Nyquist limit after " +
                          std::to_string(feasible) + " members",
                      static_cast<double>(feasible));
  if (q * radius(1) < 8.0 * grid.dual_spacing())
    throw SizingError("first dual member is under-resolved in frequency (needs q R >= 8 pi / L)",
                      static_cast<double>(feasible));
  for (std::size_t n = 1; n <= count; ++n) {
    const double r = radius(n);
    GridFunction hat(grid, Space::frequency);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const Point xi = grid.frequency_node(k);
      const double s = norm2(xi, d);
      const double v = BumpProfile::chi(0.5 + 2.0 * (s / (q * r) - 1.0));
      if (v == 0.0)
        continue;
      double ph = 0.0;
      for (int a = 0; a < d; ++a)
        ph += xi[a] * center[a];
      hat.values[k] = std::pow(r, -0.5 * d) * v * std::polar(1.0, -ph);
    }
    normalize(hat);
    GridFunction phys = inverse_transform(hat);
    normalize(phys);
    fam.radii.push_back(r);
    fam.members.push_back(std::move(phys));
  }
  return fam;
}

// ---------------------------------------------------------------------------
// Gram certificates

const char *to_string(Theorem t) {
  switch (t) {
  case Theorem::t2: return "T2";
  case Theorem::t3_integral: return "T3_integral";
  case Theorem::heavy_tail: return "heavy_tail";
  case Theorem::t5_dual: return "T5_dual";
  }
  return "unknown";
}

double Certificate::off_diagonal_ratio() const {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < gram_a.rows(); ++r)
    for (Eigen::Index c = 0; c < gram_a.cols(); ++c) {
      if (r == c)
        continue;
      const double den = std::sqrt(std::abs(gram_a(r, r).real() * gram_a(c, c).real()));
      if (den > 0.0)
        worst = std::max(worst, std::abs(gram_a(r, c)) / den);
    }
  return worst;
}

nlohmann::json Certificate::to_json() const {
  return {{"theorem", to_string(theorem)},
          {"shift", shift},
          {"family", to_string(family_kind)},
          {"radii", radii},
          {"scale_base", scale_base},
          {"off_paper", off_paper},
          {"gram_A", matrix_json(gram_a)},
          {"gram_B", matrix_json(gram_b)},
          {"pencil_eigenvalues", pencil_eigenvalues},
          {"min_eig", min_eig},
          {"hermiticity_A", hermiticity_a},
          {"hermiticity_B", hermiticity_b},
          {"overlap_deviation", overlap_deviation},
          {"off_diagonal_ratio", off_diagonal_ratio()},
          {"certified_count", certified_count},
          {"pass", pass},
          {"semantics", "discrete level: the grid operator has at least certified_count "
                        "eigenvalues above shift (min-max on the test span)"},
          {"diagnostics", diagnostics}};
}

Certificate gram_certificate(const DiscreteOperator &op, const TestFamily &family, double shift,
                             Theorem theorem) {
  if (family.members.empty())
    throw UsageError("empty test family");
  if (!(family.grid() == op.grid()))
    throw UsageError("family and operator live on different grids");
  const GramMatrices g = op.gram(family.members, shift);
  Certificate c;
  c.theorem = theorem;
  c.shift = shift;
  c.gram_a = g.a;
  c.gram_b = g.b;
  c.potential_part = g.potential_part;
  c.family_kind = family.kind;
  c.radii = family.radii;
  c.scale_base = family.scale_base;
  c.off_paper = family.off_paper;
  c.hermiticity_a = max_abs_diff(g.a, g.a.adjoint());
  c.hermiticity_b = max_abs_diff(g.b, g.b.adjoint());
  const auto n = g.b.rows();
  c.overlap_deviation = max_abs_diff(g.b, Eigen::MatrixXcd::Identity(n, n));

  const Eigen::MatrixXcd a = 0.5 * (g.a + g.a.adjoint());
  const Eigen::MatrixXcd b = 0.5 * (g.b + g.b.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> bs(b, Eigen::EigenvaluesOnly);
  const double bmin = bs.eigenvalues().minCoeff();
  const double bmax = bs.eigenvalues().maxCoeff();
  if (!(bmin > 1e-12 * bmax))
    throw ConditioningError("overlap matrix is numerically singular (eigenvalues " +
                            std::to_string(bmin) + " .. " + std::to_string(bmax) + ")");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(a, b, Eigen::EigenvaluesOnly);
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    c.pencil_eigenvalues.push_back(es.eigenvalues()(i));
  c.min_eig = c.pencil_eigenvalues.front();
  c.pass = c.min_eig > 0.0;
  c.certified_count = c.pass ? family.members.size() : 0;
  c.diagnostics["overlap_condition"] = bmax / bmin;
  return c;
}

void add_family_diagnostics(Certificate &cert, const TestFamily &family,
                            const std::optional<DecayHypothesis> &symbol_hyp,
                            const std::optional<DecayHypothesis> &potential_hyp) {
  const int d = family.grid().dim();
  const auto n = cert.gram_a.rows();
  if (family.kind == FamilyKind::bump_scaled && potential_hyp) {
    const double h = BumpProfile::standard(d).plateau_height();
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = family.radii[static_cast<std::size_t>(i)];
      const double bound = 0.5 * potential_hyp->constant * h * h * annulus_measure(d, 1.0) *
                           std::pow(r, -potential_hyp->exponent);
      rows.push_back({{"radius", r},
                      {"diagonal", cert.gram_a(i, i).real()},
                      {"lower_bound", bound},
                      {"holds", cert.gram_a(i, i).real() >= bound}});
    }
    cert.diagnostics["member_bounds"] = rows;
    cert.diagnostics["plateau_height"] = h;
  }
  if (family.kind == FamilyKind::bump_scaled && symbol_hyp) {
    auto rows = nlohmann::json::array();
    double c5 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double ri = family.radii[static_cast<std::size_t>(i)];
        const double rj = family.radii[static_cast<std::size_t>(j)];
        const double scale = std::pow(ri * rj, -0.5 * symbol_hyp->exponent);
        const double mag = std::abs(cert.gram_a(i, j));
        c5 = std::max(c5, mag / scale);
        rows.push_back({{"n", i + 1}, {"m", j + 1}, {"magnitude", mag}, {"decay_shape", scale}});
      }
    cert.diagnostics["off_diagonal"] = rows;
    cert.diagnostics["implied_c5"] = c5;
  }
  if (family.kind == FamilyKind::gaussian) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index j = 0; j < k; ++j) {
        const double rj = family.radii[static_cast<std::size_t>(j)];
        const double theta = std::abs(cert.potential_part(k, j));
        const double p = std::exp2(2.0 * static_cast<double>(k - j)) - 1.0;
        const double shape = std::pow(rj, -p * d);
        rows.push_back({{"k", k + 1},
                        {"j", j + 1},
                        {"theta", theta},
                        {"theta_squared", theta * theta},
                        {"bound_shape", shape},
                        {"implied_constant", theta * theta / shape}});
      }
    cert.diagnostics["theta"] = rows;
    auto overlaps = nlohmann::json::array();
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      const double r1 = family.radii[static_cast<std::size_t>(i)];
      const double r2 = family.radii[static_cast<std::size_t>(i + 1)];
      overlaps.push_back({{"computed", cert.gram_b(i, i + 1).real()},
                          {"closed_form", gaussian_overlap(d, r1, r2)}});
    }
    cert.diagnostics["overlaps"] = overlaps;
  }
}

std::vector<HeavyTailRatio> heavy_tail_ratios(const Kernel &kernel, const Potential &potential,
                                              const std::vector<double> &radii) {
  std::vector<HeavyTailRatio> out;
  for (double r : radii) {
    HeavyTailRatio h;
    h.radius = r;
    h.ell = ell_hat(kernel, 1.0 / r);
    AnnulusSpec spec;
    spec.inner_radius = r;
    spec.points = 256;
    h.average = annulus_average_potential(potential, spec).value;
    h.ratio = h.ell / h.average;
    out.push_back(h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Auto-search

nlohmann::json SearchResult::trace_json() const {
  auto j = nlohmann::json::array();
  for (const auto &s : trace)
    j.push_back({{"r0", s.r0}, {"M", s.m}, {"outcome", s.outcome}, {"min_eig", s.min_eig}});
  return j;
}

SearchResult certify_scaled(const DiscreteOperator &op, const ScaledSearch &search) {
  const Grid &g = op.grid();
  const double shift = search.shift.value_or(op.constants().mu1);
  SearchResult res;
  for (int m : search.m_values) {
    double r0 = search.r0_start.value_or(2.0 * g.spacing());
    for (std::size_t step = 0; step <= search.max_doublings; ++step, r0 *= 2.0) {
      SearchStep s{r0, m, "", 0.0};
      TestFamily fam;
      try {
        fam = scaled_family(g, r0, m, search.count, search.modulation, search.compact_branch);
      } catch (const SizingError &e) {
        s.outcome = "sizing";
        res.trace.push_back(s);
        // Under-resolution improves with R0; overflow only gets worse.
        if (std::string(e.what()).find("under-resolved") != std::string::npos)
          continue;
        break;
      }
      Certificate c = gram_certificate(op, fam, shift, Theorem::t2);
      s.min_eig = c.min_eig;
      s.outcome = c.pass ? "pass" : "fail";
      res.trace.push_back(s);
      if (c.pass) {
        res.certificate = std::move(c);
        res.family = std::move(fam);
        return res;
      }
    }
  }
  return res;
}

SearchResult certify_heavy_tail(const DiscreteOperator &op, const GaussianSearch &search) {
  const double shift = search.shift.value_or(op.constants().mu1);
  SearchResult res;
  std::vector<double> starts = search.r1_values;
  if (!search.ladder.empty())
    starts = {search.ladder.front()};
  for (double r1 : starts) {
    SearchStep s{r1, 4, "", 0.0};
    TestFamily fam;
    try {
      fam = gaussian_family(op.grid(), r1, search.count, search.ladder);
    } catch (const SizingError &) {
      s.outcome = "sizing";
      res.trace.push_back(s);
      continue;
    }
    Certificate c = gram_certificate(op, fam, shift, Theorem::heavy_tail);
    s.min_eig = c.min_eig;
    s.outcome = c.pass ? "pass" : "fail";
    res.trace.push_back(s);
    if (c.pass) {
      res.certificate = std::move(c);
      res.family = std::move(fam);
      return res;
    }
  }
  return res;
}

Point potential_peak(const DiscreteOperator &op) {
  if (auto p = op.potential().argmax())
    return *p;
  const auto &v = op.potential_diag();
  const auto it = std::max_element(v.begin(), v.end());
  return op.grid().node(static_cast<std::size_t>(it - v.begin()));
}

SearchResult certify_dual(const DiscreteOperator &op, const DualSearch &search) {
  const int d = op.grid().dim();
  const double v_max = op.constants().v_max;
  const double shift = search.shift.value_or(v_max);
  // The dual construction assumes V_max = V(0); otherwise shift the family to
  // the peak, which is unitarily equivalent to translating V.
  Point center{0, 0, 0};
  const double v0 = op.potential()(Point{0, 0, 0});
  if (std::abs(v0 - v_max) > 1e-9 * std::max(1.0, std::abs(v_max)))
    center = potential_peak(op);
  SearchResult res;
  for (int m : search.m_values)
    for (double r0 : search.r0_values) {
      SearchStep s{r0, m, "", 0.0};
      TestFamily fam;
      try {
        fam = dual_family(op.grid(), search.q, search.count, m, r0, center);
      } catch (const SizingError &) {
        s.outcome = "sizing";
        res.trace.push_back(s);
        continue;
      }
      Certificate c = gram_certificate(op, fam, shift, Theorem::t5_dual);
      c.diagnostics["peak_translation"] = point_json(center, d);
      s.min_eig = c.min_eig;
      s.outcome = c.pass ? "pass" : "fail";
      res.trace.push_back(s);
      if (c.pass) {
        res.certificate = std::move(c);
        res.family = std::move(fam);
        return res;
      }
    }
  return res;
}

// ---------------------------------------------------------------------------
// Gap certificate

GapReference solve_gap_reference(const Kernel &kernel, const Potential &v0, const Grid &grid,
                                 const GapOptions &opts) {
  const DiscreteOperator op = DiscreteOperator::assemble(kernel, v0, grid);
  GapReference ref;
  ref.a_max = op.constants().a_max;
  ref.essential = essential_spectrum(kernel, v0);
  EigsOptions so = opts.solver;
  so.k = opts.candidates;
  EigenSolve s = eigs_above(op, ref.essential.max(), so);
  BoxRefinement refine(op, opts.classify);
  auto pairs = classify_eigenpairs(std::move(s.pairs), ref.essential, refine, opts.classify);
  for (auto &p : pairs) {
    if (p.classification != Classification::discrete || !(p.value > ref.a_max))
      continue;
    ++ref.discrete_found;
    if (!ref.u0 || p.value > ref.u0->value) {
      ref.lambda0 = p.value;
      ref.u0 = std::move(p);
    }
  }
  if (!ref.u0)
    throw PrerequisiteError("the unperturbed operator has no classified discrete eigenvalue "
                            "above a_max");
  return ref;
}

nlohmann::json GapCertificate::to_json() const {
  nlohmann::json j{{"lambda0", lambda0},
                   {"a_max", a_max},
                   {"theta_minus", theta_minus},
                   {"v1_sup", v1_sup},
                   {"support_measure", support_measure},
                   {"delta", delta},
                   {"delta_bound", delta_bound},
                   {"margin", margin},
                   {"pass", pass},
                   {"predicted_interval", {predicted_lo, predicted_hi}},
                   {"confirmed_count", confirmed_count}};
  if (confirmed_value) {
    j["confirmed_value"] = *confirmed_value;
    j["confirmed_residual"] = *confirmed_residual;
  } else {
    j["confirmed_value"] = nullptr;
  }
  return j;
}

GapCertificate gap_certificate(const Kernel &kernel, const Potential &v0, const Potential &v1,
                               const Grid &grid, const GapReference &ref,
                               const GapOptions &opts) {
  if (!ref.u0)
    throw PrerequisiteError("gap certificate needs an unperturbed eigenpair");
  GapCertificate gc;
  gc.lambda0 = ref.lambda0;
  gc.a_max = ref.a_max;

  const GridFunction &u0 = ref.u0->vector;
  const double cell = grid.cell_volume();
  double theta = std::numeric_limits<double>::infinity();
  double sup = 0.0, mass = 0.0;
  std::size_t support = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Point x = grid.node(j);
    const double w1 = v1(x);
    if (w1 == 0.0)
      continue;
    ++support;
    theta = std::min(theta, w1 + v0(x));
    sup = std::max(sup, std::abs(w1));
    mass += std::norm(u0.values[j]);
  }
  gc.v1_sup = sup;
  gc.support_measure = static_cast<double>(support) * cell;
  gc.theta_minus = theta;
  gc.delta_bound = sup * std::sqrt(mass * cell);

  const Potential full = Potential::sum(v0, v1);
  const DiscreteOperator op = DiscreteOperator::assemble(kernel, full, grid);
  gc.delta = support == 0 ? 0.0 : eigen_residual(op, u0, gc.lambda0);
  if (support > 0) {
    if (!(theta > gc.a_max))
      throw HypothesisError("theta_minus = " + std::to_string(theta) +
                            " does not exceed a_max = " + std::to_string(gc.a_max));
    if (!(theta > gc.lambda0))
      throw HypothesisError("theta_minus = " + std::to_string(theta) +
                            " does not exceed lambda0 = " + std::to_string(gc.lambda0));
  }
  gc.margin = std::min(gc.lambda0 - gc.a_max, theta - gc.lambda0);
  gc.pass = gc.delta < gc.margin;
  gc.predicted_lo = gc.lambda0 - gc.delta;
  gc.predicted_hi = gc.lambda0 + gc.delta;
  if (gc.pass && opts.confirm) {
    // A zero residual leaves a point interval; search a solver-tolerance window.
    const double half = std::max(gc.delta, 10.0 * opts.solver.tol);
    EigsOptions so = opts.solver;
    so.k = 4;
    const EigenSolve s = eigs_in_window(op, gc.lambda0 - half, gc.lambda0 + half, so);
    gc.confirmed_count = s.pairs.size();
    for (const auto &p : s.pairs)
      if (!gc.confirmed_value ||
          std::abs(p.value - gc.lambda0) < std::abs(*gc.confirmed_value - gc.lambda0)) {
        gc.confirmed_value = p.value;
        gc.confirmed_residual = p.residual;
      }
  }
  return gc;
}

GapCertificate gap_perturbation_certificate(const Kernel &kernel, const Potential &v0,
                                            const Potential &v1, const Grid &grid,
                                            const GapOptions &opts) {
  return gap_certificate(kernel, v0, v1, grid, solve_gap_reference(kernel, v0, grid, opts), opts);
}

std::vector<GapScanEntry> gap_width_scan(const Kernel &kernel, const Potential &v0, double height,
                                         const Point &center, const std::vector<double> &widths,
                                         const Grid &grid, const GapReference &ref,
                                         const GapOptions &opts) {
  std::vector<GapScanEntry> out;
  for (double w : widths) {
    const Potential v1 = Potential::box(grid.dim(), height, w, center);
    out.push_back({w, gap_certificate(kernel, v0, v1, grid, ref, opts)});
  }
  return out;
}

} // namespace nlspec
