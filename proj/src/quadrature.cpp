#include "nlspec/quadrature.hpp"

#include "nlspec/errors.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <random>

namespace nlspec {

namespace {

constexpr double pi = std::numbers::pi;

GaussRule compute_rule(std::size_t n) {
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1)
        p1 = x, p0 = 1.0;
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  return rule;
}

struct Node1 {
  double x;
  double w;
};

// Composite Gauss rule on [a, b] with `panels` equal panels.
void append_panels(std::vector<Node1> &out, double a, double b, std::size_t panels,
                   const GaussRule &g) {
  const double h = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
      out.push_back({lo + 0.5 * h * (g.nodes[i] + 1.0), 0.5 * h * g.weights[i]});
  }
}

// Radial shell rule on [R, 2R] with roughly `points` nodes.
std::vector<Node1> radial_rule(double r0, std::size_t points) {
  const std::size_t order = 16;
  const std::size_t panels = std::max<std::size_t>(1, points / order);
  std::vector<Node1> out;
  append_panels(out, r0, 2.0 * r0, panels, gauss_legendre(order));
  return out;
}

template <typename Fn>
double tensor_shell_mean(int dim, double r0, std::size_t points, Fn &&f) {
  const auto radial = radial_rule(r0, points);
  double acc = 0.0;
  if (dim == 1) {
    for (const auto &n : radial)
      acc += n.w * (f(Point{n.x, 0, 0}) + f(Point{-n.x, 0, 0}));
  } else if (dim == 2) {
    const std::size_t m = points;
    const double dt = 2.0 * pi / static_cast<double>(m);
    for (const auto &n : radial)
      for (std::size_t k = 0; k < m; ++k) {
        const double t = dt * (static_cast<double>(k) + 0.5);
        acc += n.w * n.x * dt * f(Point{n.x * std::cos(t), n.x * std::sin(t), 0});
      }
  } else {
    const GaussRule &gc = gauss_legendre(std::max<std::size_t>(points / 2, 8));
    const std::size_t m = points;
    const double dp = 2.0 * pi / static_cast<double>(m);
    for (const auto &n : radial)
      for (std::size_t i = 0; i < gc.nodes.size(); ++i) {
        const double c = gc.nodes[i];
        const double s = std::sqrt(1.0 - c * c);
        for (std::size_t k = 0; k < m; ++k) {
          const double ph = dp * (static_cast<double>(k) + 0.5);
          acc += n.w * n.x * n.x * gc.weights[i] * dp *
                 f(Point{n.x * s * std::cos(ph), n.x * s * std::sin(ph), n.x * c});
        }
      }
  }
  return acc / annulus_measure(dim, r0);
}

template <typename Fn>
AverageResult monte_carlo_shell_mean(int dim, double r0, std::size_t points, std::uint64_t seed,
                                     Fn &&f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni;
  const double lo = std::pow(r0, dim), hi = std::pow(2.0 * r0, dim);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    Point e{0, 0, 0};
    double len = 0.0;
    while (len < 1e-12) {
      for (int a = 0; a < dim; ++a)
        e[a] = normal(rng);
      len = norm2(e, dim);
    }
    const double r = std::pow(lo + uni(rng) * (hi - lo), 1.0 / dim);
    const double v = f(Point{r * e[0] / len, r * e[1] / len, r * e[2] / len});
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(points);
  const double mean = sum / n;
  const double var = std::max(0.0, sum2 / n - mean * mean);
  return {mean, std::sqrt(var / (n - 1.0))};
}

template <typename Fn>
AverageResult shell_mean(int dim, const AnnulusSpec &spec, Fn &&f) {
  spec.validate();
  if (spec.kind == AnnulusQuadrature::monte_carlo)
    return monte_carlo_shell_mean(dim, spec.inner_radius, spec.points, spec.seed, f);
  return {tensor_shell_mean(dim, spec.inner_radius, spec.points, f), 0.0};
}

} // namespace

const GaussRule &gauss_legendre(std::size_t order) {
  if (order < 1)
    throw UsageError("Gauss-Legendre order must be positive");
  static auto *cache = new std::map<std::size_t, GaussRule>;
  static auto *mutex = new std::mutex;
  std::lock_guard lock(*mutex);
  auto it = cache->find(order);
  if (it == cache->end())
    it = cache->emplace(order, compute_rule(order)).first;
  return it->second;
}

void AnnulusSpec::validate() const {
  if (!(inner_radius > 0.0) || !std::isfinite(inner_radius))
    throw UsageError("annulus inner radius must be positive");
  if (points < 16)
    throw UsageError("annulus quadrature needs at least 16 points");
}

double annulus_measure(int dim, double r) {
  switch (dim) {
  case 1: return 2.0 * r;
  case 2: return 3.0 * pi * r * r;
  case 3: return 4.0 / 3.0 * pi * 7.0 * r * r * r;
  default: throw UsageError("dimension must be 1, 2 or 3");
  }
}

AverageResult annulus_average_potential(const Potential &v, const AnnulusSpec &spec) {
  return shell_mean(v.dim(), spec, [&](const Point &x) { return v(x); });
}

AverageResult annulus_average_symbol(const Kernel &a, const AnnulusSpec &spec) {
  return shell_mean(a.dim(), spec, [&](const Point &xi) { return a.symbol(xi); });
}

double ell_hat(const Kernel &a, double r, const EllQuadrature &quad) {
  if (!(r >= 0.0) || !std::isfinite(r))
    throw UsageError("ell_hat radius must be nonnegative");
  if (r == 0.0)
    return 0.0;
  const int d = a.dim();
  const double a_max = spectral_constants(a, Potential::zero(d)).a_max;
  const GaussRule &g = gauss_legendre(d == 1 ? quad.order : (d == 2 ? 12 : 8));

  // Half-line rule on [0, cutoff]: geometric panels toward 0, unit panels
  // beyond 1, each subdivided to resolve oscillations of period ~ 2 pi / r.
  const int levels = d == 1 ? quad.grading_levels : (d == 2 ? 12 : 6);
  const std::size_t max_sub = d == 1 ? quad.max_subdivision : (d == 2 ? 6 : 2);
  auto subdivisions = [&](double width) {
    const auto want = static_cast<std::size_t>(std::ceil(width * r / pi));
    return std::clamp<std::size_t>(want, 1, max_sub);
  };
  std::vector<Node1> half;
  double hi = 1.0;
  for (int k = 0; k < levels; ++k) {
    const double lo = 0.5 * hi;
    append_panels(half, lo, hi, subdivisions(hi - lo), g);
    hi = lo;
  }
  append_panels(half, 0.0, hi, 1, g);
  const auto unit_panels = static_cast<std::size_t>(std::ceil(quad.cutoff - 1.0));
  for (std::size_t p = 0; p < unit_panels; ++p) {
    const double lo = 1.0 + static_cast<double>(p);
    const double up = std::min(quad.cutoff, lo + 1.0);
    append_panels(half, lo, up, subdivisions(up - lo), g);
  }
  std::vector<Node1> line;
  line.reserve(2 * half.size());
  for (const auto &n : half) {
    line.push_back({n.x, n.w});
    line.push_back({-n.x, n.w});
  }

  const std::size_t m = line.size();
  std::size_t total = 1;
  for (int k = 0; k < d; ++k)
    total *= m;
  double acc = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    Point xi{0, 0, 0};
    double w = 1.0, r2 = 0.0;
    for (int k = 0; k < d; ++k) {
      const auto &n = line[rest % m];
      rest /= m;
      xi[k] = r * n.x;
      w *= n.w;
      r2 += n.x * n.x;
    }
    acc += w * (a_max - a.symbol(xi)) * std::exp(-r2);
  }
  return acc;
}

} // namespace nlspec
