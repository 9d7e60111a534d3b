#include "nlspec/spectra.hpp"

#include "nlspec/errors.hpp"
#include "nlspec/lanczos.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace nlspec {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

GridFunction unit_function(const Grid &g, std::vector<cplx> values) {
  GridFunction f(g, std::move(values), Space::physical);
  normalize(f);
  return f;
}

void sort_descending(std::vector<EigenPair> &pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const EigenPair &a, const EigenPair &b) { return a.value > b.value; });
}

} // namespace

// ---------------------------------------------------------------------------

IntervalUnion essential_spectrum(const Kernel &kernel, const Potential &potential,
                                 const EssentialOptions &opts) {
  const SpectralConstants c =
      spectral_constants(kernel, potential, opts.freq_cap, opts.freq_samples, opts.analytic);
  const IntervalUnion sv =
      essential_range(potential, opts.bins, opts.eps, opts.sampling, opts.analytic);
  return IntervalUnion::closed(c.a_min, c.a_max).unite(sv);
}

const char *to_string(WindowKind kind) {
  switch (kind) {
  case WindowKind::interior_gap: return "interior_gap";
  case WindowKind::lower_exterior: return "lower_exterior";
  case WindowKind::upper_exterior: return "upper_exterior";
  }
  return "unknown";
}

std::vector<SpectralWindow> spectral_gaps(const IntervalUnion &ess, double lower, double upper) {
  std::vector<SpectralWindow> out;
  if (ess.empty())
    return out;
  if (lower < ess.min())
    out.push_back({lower, ess.min(), WindowKind::lower_exterior});
  const auto &iv = ess.intervals();
  for (std::size_t i = 0; i + 1 < iv.size(); ++i) {
    const double lo = std::max(iv[i].hi, lower);
    const double hi = std::min(iv[i + 1].lo, upper);
    if (lo < hi)
      out.push_back({lo, hi, WindowKind::interior_gap});
  }
  if (upper > ess.max())
    out.push_back({ess.max(), upper, WindowKind::upper_exterior});
  return out;
}

const char *to_string(Classification c) {
  switch (c) {
  case Classification::unclassified: return "unclassified";
  case Classification::discrete: return "discrete";
  case Classification::essential_artifact: return "essential_artifact";
  case Classification::unresolved: return "unresolved";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Solvers

double boundary_mass(const GridFunction &v) {
  const Grid &g = v.grid;
  const double cut = 0.8 * g.half_width();
  double total = 0.0, outer = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double m = std::norm(v.values[i]);
    total += m;
    const Point x = g.node(i);
    for (int a = 0; a < g.dim(); ++a)
      if (std::abs(x[a]) > cut) {
        outer += m;
        break;
      }
  }
  return total > 0.0 ? outer / total : 0.0;
}

double eigen_residual(const DiscreteOperator &op, const GridFunction &v, double lambda) {
  const GridFunction lv = op.apply(v);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lv.values.size(); ++i) {
    num += std::norm(lv.values[i] - lambda * v.values[i]);
    den += std::norm(v.values[i]);
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

nlohmann::json EigenSolve::provenance(const EigsOptions &opts) const {
  return {{"method", method},
          {"k", opts.k},
          {"tol", opts.tol},
          {"max_iter", opts.max_iter},
          {"seed", opts.seed},
          {"iterations", iterations},
          {"matvecs", matvecs},
          {"partial", partial},
          {"shifts", shifts}};
}

EigenSolve eigs_above(const DiscreteOperator &op, double threshold, const EigsOptions &opts) {
  const Grid &g = op.grid();
  LanczosOptions lo;
  lo.k = opts.k;
  lo.threshold = threshold;
  lo.tol = 0.5 * opts.tol;
  lo.max_iter = opts.max_iter;
  lo.min_iter = opts.min_iter;
  lo.seed = opts.seed;
  const LanczosResult r = lanczos_largest(
      [&](std::span<const cplx> x, std::span<cplx> y) { op.apply(x, y); }, g.size(), lo);

  EigenSolve out;
  out.method = "lanczos_full_reorthogonalization";
  out.iterations = r.iterations;
  out.matvecs = r.iterations;
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    EigenPair p(r.values[i], unit_function(g, r.vectors[i]));
    p.ritz_estimate = r.estimates[i];
    p.residual = eigen_residual(op, p.vector, p.value);
    p.boundary_mass = boundary_mass(p.vector);
    // Ritz values that clear the threshold only by roundoff do not count.
    const double margin = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(threshold));
    p.converged = p.residual <= opts.tol && p.value > threshold + margin;
    (p.converged ? out.pairs : out.unconverged).push_back(std::move(p));
  }
  out.partial = !r.converged || !out.unconverged.empty();
  sort_descending(out.pairs);
  return out;
}

EigenSolve eigs_in_window(const DiscreteOperator &op, double lo, double hi,
                          const EigsOptions &opts) {
  if (!(lo < hi))
    throw UsageError("window needs lo < hi");
  const Grid &g = op.grid();
  const double width = hi - lo;
  const double centers[] = {0.5 * (lo + hi), 0.5 * (lo + hi) + 0.1 * width,
                            0.5 * (lo + hi) - 0.1 * width};
  EigenSolve out;
  out.method = "lanczos_spectral_folding";
  std::vector<cplx> tmp(g.size());
  for (double sigma : centers) {
    out.shifts.push_back(sigma);
    const double reach = std::max(sigma - lo, hi - sigma);
    LanczosOptions lopt;
    lopt.k = opts.k;
    lopt.threshold = -reach * reach;
    lopt.tol = 0.1 * opts.tol * std::max(reach, 1e-3);
    lopt.max_iter = 3 * opts.max_iter;
    lopt.min_iter = opts.min_iter;
    lopt.seed = opts.seed;
    // F = -(L - sigma)^2 maps the window onto the top of the spectrum.
    const LanczosResult r = lanczos_largest(
        [&](std::span<const cplx> x, std::span<cplx> y) {
          op.apply(x, tmp);
          for (std::size_t i = 0; i < tmp.size(); ++i)
            tmp[i] -= sigma * x[i];
          op.apply(tmp, y);
          for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = -(y[i] - sigma * tmp[i]);
        },
        g.size(), lopt);
    out.iterations += r.iterations;
    out.matvecs += 2 * r.iterations;

    std::vector<EigenPair> good, bad;
    bool degenerate = false;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      GridFunction v = unit_function(g, r.vectors[i]);
      const double lambda = op.quadratic_form(v, 0.0);
      EigenPair p(lambda, std::move(v));
      p.ritz_estimate = r.estimates[i];
      p.residual = eigen_residual(op, p.vector, lambda);
      p.boundary_mass = boundary_mass(p.vector);
      p.converged = p.residual <= opts.tol;
      if (!p.converged && r.estimates[i] <= lopt.tol)
        degenerate = true; // folded pair converged, unfolded mixture did not
      if (lambda <= lo || lambda >= hi)
        continue;
      (p.converged ? good : bad).push_back(std::move(p));
    }
    if (degenerate)
      continue;
    out.pairs = std::move(good);
    out.unconverged = std::move(bad);
    out.partial = !r.converged || !out.unconverged.empty();
    sort_descending(out.pairs);
    return out;
  }
  throw ConvergenceError("spectral folding is degenerate for every tried center in (" +
                         std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

EigenSolve eigs_dense(const DiscreteOperator &op) {
  const Grid &g = op.grid();
  const std::size_t n = g.size();
  if (n > 8192)
    throw SizingError("dense eigensolve limited to 8192 unknowns", 8192);
  Eigen::MatrixXcd m(n, n);
  std::vector<cplx> e(n, 0.0), col(n);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    op.apply(e, col);
    e[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  const Eigen::MatrixXcd h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  EigenSolve out;
  out.method = "dense";
  for (Eigen::Index i = static_cast<Eigen::Index>(n) - 1; i >= 0; --i) {
    std::vector<cplx> v(es.eigenvectors().col(i).data(), es.eigenvectors().col(i).data() + n);
    EigenPair p(es.eigenvalues()(i), unit_function(g, std::move(v)));
    p.residual = eigen_residual(op, p.vector, p.value);
    p.boundary_mass = boundary_mass(p.vector);
    p.converged = true;
    out.pairs.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classification

BoxRefinement::BoxRefinement(const DiscreteOperator &op, ClassifyOptions opts)
    : op_(&op), opts_(std::move(opts)),
      grid_(op.grid().dim(), 2.0 * op.grid().half_width(), 2 * op.grid().points_per_dim()) {}

const DiscreteOperator &BoxRefinement::refined() {
  if (!refined_)
    refined_ = op_->reassemble(grid_);
  return *refined_;
}

void BoxRefinement::solve_window(double lo, double hi, std::size_t k) {
  for (const auto &[a, b] : covered_)
    if (a <= lo && hi <= b)
      return;
  EigsOptions so = opts_.solver;
  so.k = k;
  const EigenSolve s = eigs_in_window(refined(), lo, hi, so);
  for (const auto &p : s.pairs)
    values_.push_back(p.value);
  covered_.emplace_back(lo, hi);
}

void BoxRefinement::prepare(const std::vector<double> &targets, const IntervalUnion &ess) {
  std::vector<double> above, below, inside;
  for (double t : targets) {
    if (ess.distance(t) <= opts_.tau_ess)
      continue;
    if (t > ess.max())
      above.push_back(t);
    else if (t < ess.min())
      below.push_back(t);
    else
      inside.push_back(t);
  }
  EigsOptions so = opts_.solver;
  if (!above.empty()) {
    const double t = *std::min_element(above.begin(), above.end());
    const double thr = t - 0.5 * (t - ess.max());
    bool done = false;
    for (const auto &[a, b] : covered_)
      done = done || (a <= thr && b == inf);
    if (!done) {
      so.k = 2 * above.size() + 4;
      const EigenSolve s = eigs_above(refined(), thr, so);
      for (const auto &p : s.pairs)
        values_.push_back(p.value);
      covered_.emplace_back(thr, inf);
    }
  }
  if (!below.empty()) {
    const double t = *std::max_element(below.begin(), below.end());
    const double thr = t + 0.5 * (ess.min() - t);
    bool done = false;
    for (const auto &[a, b] : covered_)
      done = done || (a == -inf && thr <= b);
    if (!done) {
      so.k = 2 * below.size() + 4;
      const EigenSolve s = eigs_above(refined().negate(), -thr, so);
      for (const auto &p : s.pairs)
        values_.push_back(-p.value);
      covered_.emplace_back(-inf, thr);
    }
  }
  // Interior targets are solved per gap so the folded window stays wide.
  const auto &parts = ess.intervals();
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    const double lo = parts[i].hi, hi = parts[i + 1].lo;
    const auto n = static_cast<std::size_t>(
        std::count_if(inside.begin(), inside.end(), [&](double t) { return lo < t && t < hi; }));
    if (n > 0)
      solve_window(lo, hi, 2 * n + 4);
  }
}

std::optional<double> BoxRefinement::nearest(double lambda) {
  bool covered = false;
  for (const auto &[a, b] : covered_)
    covered = covered || (a < lambda && lambda < b);
  if (!covered)
    solve_window(lambda - 1e-2, lambda + 1e-2, 4);
  std::optional<double> best;
  for (double v : values_)
    if (!best || std::abs(v - lambda) < std::abs(*best - lambda))
      best = v;
  return best;
}

EigenPair classify_eigenpair(EigenPair pair, const IntervalUnion &ess, BoxRefinement &refine,
                             const ClassifyOptions &opts) {
  pair.ess_distance = ess.distance(pair.value);
  if (!(*pair.ess_distance > opts.tau_ess)) {
    pair.classification = Classification::essential_artifact;
    return pair;
  }
  if (!(pair.boundary_mass < opts.eps_loc)) {
    pair.classification = Classification::unresolved;
    return pair;
  }
  refine.prepare({pair.value}, ess);
  pair.refined_value = refine.nearest(pair.value);
  const bool stable =
      pair.refined_value && std::abs(*pair.refined_value - pair.value) < opts.tau_stab;
  pair.classification = stable ? Classification::discrete : Classification::unresolved;
  return pair;
}

std::vector<EigenPair> classify_eigenpairs(std::vector<EigenPair> pairs, const IntervalUnion &ess,
                                           BoxRefinement &refine, const ClassifyOptions &opts) {
  std::vector<double> targets;
  for (const auto &p : pairs)
    if (ess.distance(p.value) > opts.tau_ess && p.boundary_mass < opts.eps_loc)
      targets.push_back(p.value);
  if (!targets.empty())
    refine.prepare(targets, ess);
  std::vector<EigenPair> out;
  out.reserve(pairs.size());
  for (auto &p : pairs)
    out.push_back(classify_eigenpair(std::move(p), ess, refine, opts));
  return out;
}

// ---------------------------------------------------------------------------
// Weyl sequences

const char *to_string(WeylMode m) {
  return m == WeylMode::symbol_point ? "symbol_point" : "potential_point";
}

WeylMode weyl_mode_from_string(const std::string &s) {
  if (s == "symbol_point" || s == "symbol")
    return WeylMode::symbol_point;
  if (s == "potential_point" || s == "potential")
    return WeylMode::potential_point;
  throw ConfigError("unknown Weyl mode '" + s + "'");
}

SlopeFit fit_loglog(const std::vector<double> &x, const std::vector<double> &y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 2)
    return {};
  const double md = static_cast<double>(m);
  const double denom = md * sxx - sx * sx;
  if (denom == 0.0)
    return {};
  const double slope = (md * sxy - sx * sy) / denom;
  return {slope, (sy - slope * sx) / md};
}

nlohmann::json WeylReport::to_json(int dim) const {
  auto pt = nlohmann::json::array();
  for (int a = 0; a < dim; ++a)
    pt.push_back(point[a]);
  auto rows = nlohmann::json::array();
  for (const auto &e : entries)
    rows.push_back({{"n", e.n},
                    {"residual", e.residual},
                    {"symbol_term", e.symbol_term},
                    {"potential_term", e.potential_term},
                    {"support_nodes", e.support_nodes}});
  return {{"mode", to_string(mode)},
          {"lambda", lambda},
          {mode == WeylMode::symbol_point ? "xi0" : "x0", pt},
          {"entries", rows},
          {"decreasing", decreasing},
          {"residual_slope", residual_slope.slope},
          {"symbol_term_slope", symbol_slope.slope},
          {"potential_term_slope", potential_slope.slope}};
}

std::optional<Point> symbol_root(const Kernel &kernel, double lambda, double radius_cap,
                                 std::size_t random_rays, std::uint64_t seed) {
  const int d = kernel.dim();
  if (std::abs(kernel.symbol({0, 0, 0}) - lambda) <= 1e-14)
    return Point{0, 0, 0};
  std::vector<Point> rays;
  for (int a = 0; a < d; ++a) {
    Point e{0, 0, 0};
    e[a] = 1.0;
    rays.push_back(e);
    e[a] = -1.0;
    rays.push_back(e);
  }
  if (d > 1) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < random_rays; ++i) {
      Point e{0, 0, 0};
      double len = 0.0;
      while (len < 1e-12) {
        for (int a = 0; a < d; ++a)
          e[a] = normal(rng);
        len = norm2(e, d);
      }
      for (int a = 0; a < d; ++a)
        e[a] /= len;
      rays.push_back(e);
    }
  }
  std::optional<Point> best;
  double best_r = inf;
  const std::size_t samples = 4096;
  for (const auto &e : rays) {
    auto f = [&](double r) {
      return kernel.symbol(Point{r * e[0], r * e[1], r * e[2]}) - lambda;
    };
    double r0 = 0.0, f0 = f(0.0);
    for (std::size_t i = 1; i <= samples; ++i) {
      const double r1 = radius_cap * static_cast<double>(i) / static_cast<double>(samples);
      const double f1 = f(r1);
      if (f1 == 0.0 || (f0 < 0.0) != (f1 < 0.0)) {
        double a = r0, b = r1, fa = f0;
        for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, b); ++it) {
          const double m = 0.5 * (a + b);
          const double fm = f(m);
          if ((fm < 0.0) == (fa < 0.0) && fm != 0.0) {
            a = m;
            fa = fm;
          } else {
            b = m;
          }
        }
        const double r = f1 == 0.0 ? r1 : 0.5 * (a + b);
        if (r < best_r) {
          best_r = r;
          best = Point{r * e[0], r * e[1], r * e[2]};
        }
        break;
      }
      r0 = r1;
      f0 = f1;
    }
  }
  return best;
}

Point lebesgue_point(const Potential &v, const Grid &grid, double lambda) {
  const std::size_t n = grid.points_per_dim();
  std::vector<double> vals(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    vals[i] = v(grid.node(i));
  double best_score = inf, best_r = inf;
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto idx = grid.unflatten(i);
    double osc = 0.0;
    for (int a = 0; a < grid.dim(); ++a)
      for (long off : {-2L, -1L, 1L, 2L}) {
        const long t = static_cast<long>(idx[a]) + off;
        if (t < 0 || t >= static_cast<long>(n))
          continue;
        auto j = idx;
        j[a] = static_cast<std::size_t>(t);
        osc = std::max(osc, std::abs(vals[grid.flatten(j)] - vals[i]));
      }
    const double score = std::abs(vals[i] - lambda) + osc;
    const double r = norm2(grid.node(i), grid.dim());
    if (score < best_score - 1e-15 || (std::abs(score - best_score) <= 1e-15 && r < best_r)) {
      best_score = score;
      best_r = r;
      best = i;
    }
  }
  return grid.node(best);
}

std::size_t weyl_max_n(WeylMode mode, const Grid &grid, const Point &point, double delta_power) {
  const int d = grid.dim();
  double lim = 0.0;
  if (mode == WeylMode::symbol_point) {
    // The cube of half width 1/n must hold a dual cell and stay below Nyquist.
    lim = 1.0 / grid.dual_spacing();
    double far = 0.0;
    for (int a = 0; a < d; ++a)
      far = std::max(far, std::abs(point[a]));
    if (far >= grid.nyquist())
      return 0;
    if (grid.nyquist() - far < 1.0)
      lim = std::min(lim, 1.0 / (grid.nyquist() - far));
  } else {
    lim = std::pow(grid.spacing(), -1.0 / delta_power);
  }
  return static_cast<std::size_t>(std::floor(lim * (1.0 + 1e-12)));
}

WeylReport weyl_residuals(const Kernel &kernel, const Potential &potential, double lambda,
                          WeylMode mode, const std::vector<std::size_t> &n_list, const Grid &grid,
                          const WeylOptions &opts) {
  if (n_list.empty())
    throw UsageError("Weyl residuals need a nonempty n list");
  for (std::size_t i = 0; i < n_list.size(); ++i)
    if (n_list[i] < 1 || (i > 0 && n_list[i] <= n_list[i - 1]))
      throw UsageError("Weyl n list must be positive and increasing");
  if (!(opts.delta_power >= 1.0))
    throw UsageError("cell exponent must be >= 1 so that delta_n <= 1/n");
  const int d = grid.dim();
  const DiscreteOperator op = DiscreteOperator::assemble(kernel, potential, grid, opts.assembly);

  WeylReport rep;
  rep.mode = mode;
  rep.lambda = lambda;
  if (mode == WeylMode::symbol_point) {
    const SpectralConstants c = spectral_constants(kernel, potential);
    if (lambda < c.a_min - 1e-12 || lambda > c.a_max + 1e-12)
      throw OutOfRangeError("lambda lies outside the symbol range [a_min, a_max]");
    auto root = opts.xi0 ? opts.xi0
                         : symbol_root(kernel, lambda, grid.nyquist(), opts.random_rays, opts.seed);
    if (!root)
      throw OutOfRangeError("no frequency with a_hat(xi) = lambda found below the Nyquist limit");
    rep.point = *root;
  } else {
    rep.point = opts.x0 ? *opts.x0 : lebesgue_point(potential, grid, lambda);
  }
  const std::size_t nmax = weyl_max_n(mode, grid, rep.point, opts.delta_power);
  if (n_list.back() > nmax)
    throw SizingError("grid too coarse for n = " + std::to_string(n_list.back()) +
                          "; largest resolvable n is " + std::to_string(nmax),
                      static_cast<double>(nmax));

  const auto plan = FftPlan::for_grid(grid);
  for (std::size_t n : n_list) {
    WeylEntry e;
    e.n = n;
    const double nn = static_cast<double>(n);
    GridFunction phi(grid, Space::physical);
    if (mode == WeylMode::symbol_point) {
      GridFunction hat(grid, Space::frequency);
      const double height = std::pow(0.5 * nn, 0.5 * d);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const Point xi = grid.frequency_node(k);
        bool in = true;
        for (int a = 0; a < d; ++a)
          in = in && std::abs(xi[a] - rep.point[a]) <= 1.0 / nn + 1e-12;
        if (in) {
          hat.values[k] = height;
          ++e.support_nodes;
        }
      }
      normalize(hat);
      double s = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k)
        s += std::norm((op.multiplier()[k] - lambda) * hat.values[k]);
      e.symbol_term = std::sqrt(s * grid.dual_cell_volume());
      phi = inverse_transform(hat);
      double v = 0.0;
      for (std::size_t j = 0; j < grid.size(); ++j)
        v += std::norm(op.potential_diag()[j] * phi.values[j]);
      e.potential_term = std::sqrt(v * grid.cell_volume());
    } else {
      const double delta = std::pow(nn, -opts.delta_power);
      for (std::size_t j = 0; j < grid.size(); ++j) {
        const Point x = grid.node(j);
        bool in = true;
        for (int a = 0; a < d; ++a)
          in = in && std::abs(x[a] - rep.point[a]) <= delta + 1e-12 * delta;
        if (in) {
          phi.values[j] = 1.0;
          ++e.support_nodes;
        }
      }
      normalize(phi);
      std::vector<cplx> f = phi.values;
      plan->forward(f);
      double s = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k)
        s += std::norm(op.multiplier()[k] * f[k]);
      e.symbol_term = std::sqrt(s * grid.cell_volume() / static_cast<double>(grid.size()));
      double v = 0.0;
      for (std::size_t j = 0; j < grid.size(); ++j)
        v += std::norm((op.potential_diag()[j] - lambda) * phi.values[j]);
      e.potential_term = std::sqrt(v * grid.cell_volume());
    }
    e.residual = eigen_residual(op, phi, lambda);
    rep.entries.push_back(e);
  }
  rep.decreasing = true;
  for (std::size_t i = 1; i < rep.entries.size(); ++i)
    rep.decreasing = rep.decreasing && rep.entries[i].residual < rep.entries[i - 1].residual;
  std::vector<double> x, r, p, s;
  for (const auto &e : rep.entries) {
    x.push_back(static_cast<double>(e.n));
    r.push_back(e.residual);
    p.push_back(e.potential_term);
    s.push_back(e.symbol_term);
  }
  rep.residual_slope = fit_loglog(x, r);
  rep.potential_slope = fit_loglog(x, p);
  rep.symbol_slope = fit_loglog(x, s);
  return rep;
}

} // namespace nlspec
