#include "nlspec/grid.hpp"

#include "nlspec/errors.hpp"

#include <fftw3.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>

namespace nlspec {

namespace {

// FFTW planning is not thread safe; execution on new arrays is.
std::mutex &planner_mutex() {
  static auto *m = new std::mutex;
  return *m;
}

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i)
    r *= base;
  return r;
}

void require_same_grid(const GridFunction &f, const GridFunction &g) {
  if (!(f.grid == g.grid))
    throw UsageError("grid mismatch");
  if (f.space != g.space)
    throw UsageError("space mismatch (physical vs frequency)");
}

} // namespace

Grid::Grid(int dim, double half_width, std::size_t points_per_dim)
    : dim_(dim), half_width_(half_width), points_(points_per_dim) {
  if (dim < 1 || dim > 3)
    throw UsageError("grid dimension must be 1, 2 or 3");
  if (!(half_width > 0.0) || !std::isfinite(half_width))
    throw UsageError("grid half width must be positive");
  if (points_per_dim < 8 || !std::has_single_bit(points_per_dim))
    throw UsageError("points per dimension must be a power of two >= 8");
  size_ = ipow(points_, dim_);
}

double Grid::dual_spacing() const { return std::numbers::pi / half_width_; }

double Grid::cell_volume() const { return std::pow(spacing(), dim_); }

double Grid::dual_cell_volume() const { return std::pow(1.0 / (2.0 * half_width_), dim_); }

double Grid::nyquist() const { return std::numbers::pi / spacing(); }

long Grid::wavenumber(std::size_t m) const {
  const auto n = static_cast<long>(points_);
  const auto k = static_cast<long>(m);
  return k < n / 2 ? k : k - n;
}

double Grid::frequency(std::size_t m) const {
  return static_cast<double>(wavenumber(m)) * dual_spacing();
}

std::array<std::size_t, 3> Grid::unflatten(std::size_t flat) const {
  std::array<std::size_t, 3> idx{0, 0, 0};
  for (int a = dim_ - 1; a >= 0; --a) {
    idx[a] = flat % points_;
    flat /= points_;
  }
  return idx;
}

std::size_t Grid::flatten(const std::array<std::size_t, 3> &idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < dim_; ++a)
    flat = flat * points_ + idx[a];
  return flat;
}

Point Grid::node(std::size_t flat) const {
  const auto idx = unflatten(flat);
  Point p{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a)
    p[a] = coordinate(idx[a]);
  return p;
}

Point Grid::frequency_node(std::size_t flat) const {
  const auto idx = unflatten(flat);
  Point p{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a)
    p[a] = frequency(idx[a]);
  return p;
}

double norm2(const Point &p, int dim) {
  double s = 0.0;
  for (int a = 0; a < dim; ++a)
    s += p[a] * p[a];
  return std::sqrt(s);
}

GridFunction::GridFunction(Grid g, Space s)
    : grid(g), values(g.size(), cplx(0.0, 0.0)), space(s) {}

GridFunction::GridFunction(Grid g, std::vector<cplx> v, Space s)
    : grid(g), values(std::move(v)), space(s) {
  if (values.size() != grid.size())
    throw UsageError("grid function length does not match grid size");
}

// ---------------------------------------------------------------------------

std::shared_ptr<const FftPlan> FftPlan::for_grid(const Grid &grid) {
  // Intentionally leaked: plans must outlive every static user.
  using Cache = std::map<std::pair<int, std::size_t>, std::shared_ptr<const FftPlan>>;
  static auto *cache = new Cache;
  static auto *cache_mutex = new std::mutex;
  std::lock_guard lock(*cache_mutex);
  auto key = std::make_pair(grid.dim(), grid.points_per_dim());
  auto it = cache->find(key);
  if (it != cache->end())
    return it->second;
  auto plan = std::make_shared<const FftPlan>(grid.dim(), grid.points_per_dim());
  cache->emplace(key, plan);
  return plan;
}

FftPlan::FftPlan(int dim, std::size_t points) : size_(ipow(points, dim)) {
  std::array<int, 3> n{};
  for (int a = 0; a < dim; ++a)
    n[a] = static_cast<int>(points);
  std::lock_guard lock(planner_mutex());
  auto *buf = fftw_alloc_complex(size_);
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  forward_plan_ = fftw_plan_dft(dim, n.data(), buf, buf, FFTW_FORWARD, flags);
  backward_plan_ = fftw_plan_dft(dim, n.data(), buf, buf, FFTW_BACKWARD, flags);
  fftw_free(buf);
  if (!forward_plan_ || !backward_plan_)
    throw Error(ErrorKind::usage, "FFTW planning failed");
}

FftPlan::~FftPlan() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(backward_plan_));
}

void FftPlan::forward(std::span<cplx> data) const {
  auto *p = reinterpret_cast<fftw_complex *>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(forward_plan_), p, p);
}

void FftPlan::backward(std::span<cplx> data) const {
  auto *p = reinterpret_cast<fftw_complex *>(data.data());
  fftw_execute_dft(static_cast<fftw_plan>(backward_plan_), p, p);
}

// ---------------------------------------------------------------------------

namespace {

// exp(-i xi_k . x_0) with x_0 = (-L, ..., -L) equals (-1)^{sum m_a}.
double corner_phase(const Grid &g, std::size_t flat) {
  const auto idx = g.unflatten(flat);
  std::size_t s = 0;
  for (int a = 0; a < g.dim(); ++a)
    s += idx[a];
  return (s % 2 == 0) ? 1.0 : -1.0;
}

} // namespace

GridFunction forward_transform(const GridFunction &f) {
  if (f.space != Space::physical)
    throw UsageError("forward_transform expects a physical-space function");
  GridFunction out(f.grid, f.values, Space::frequency);
  FftPlan::for_grid(f.grid)->forward(out.values);
  const double w = f.grid.cell_volume();
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] *= w * corner_phase(f.grid, i);
  return out;
}

GridFunction inverse_transform(const GridFunction &f) {
  if (f.space != Space::frequency)
    throw UsageError("inverse_transform expects a frequency-space function");
  GridFunction out(f.grid, f.values, Space::physical);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] *= corner_phase(f.grid, i);
  FftPlan::for_grid(f.grid)->backward(out.values);
  const double w = f.grid.dual_cell_volume();
  for (auto &v : out.values)
    v *= w;
  return out;
}

cplx plancherel_inner(const GridFunction &f, const GridFunction &g) {
  require_same_grid(f, g);
  cplx s(0.0, 0.0);
  for (std::size_t i = 0; i < f.values.size(); ++i)
    s += f.values[i] * std::conj(g.values[i]);
  const double w = f.space == Space::physical ? f.grid.cell_volume() : f.grid.dual_cell_volume();
  return s * w;
}

double norm(const GridFunction &f) { return std::sqrt(std::max(0.0, plancherel_inner(f, f).real())); }

void normalize(GridFunction &f) {
  const double n = norm(f);
  if (!(n > 0.0))
    throw UsageError("cannot normalize a zero grid function");
  for (auto &v : f.values)
    v /= n;
}

// ---------------------------------------------------------------------------

void write_samples(const std::filesystem::path &path, const GridFunction &f) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open " + path.string() + " for writing");
  const std::int64_t d = f.grid.dim();
  const auto n = static_cast<std::int64_t>(f.grid.points_per_dim());
  const double l = f.grid.half_width();
  out.write(reinterpret_cast<const char *>(&d), sizeof d);
  out.write(reinterpret_cast<const char *>(&n), sizeof n);
  out.write(reinterpret_cast<const char *>(&l), sizeof l);
  bool real = true;
  for (const auto &v : f.values)
    real = real && v.imag() == 0.0;
  for (const auto &v : f.values) {
    const double re = v.real();
    out.write(reinterpret_cast<const char *>(&re), sizeof re);
    if (!real) {
      const double im = v.imag();
      out.write(reinterpret_cast<const char *>(&im), sizeof im);
    }
  }
  if (!out)
    throw IoError("write failed: " + path.string());
}

GridFunction read_samples(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path.string());
  std::int64_t d = 0, n = 0;
  double l = 0.0;
  in.read(reinterpret_cast<char *>(&d), sizeof d);
  in.read(reinterpret_cast<char *>(&n), sizeof n);
  in.read(reinterpret_cast<char *>(&l), sizeof l);
  if (!in)
    throw IoError("truncated header in " + path.string());
  Grid grid(static_cast<int>(d), l, static_cast<std::size_t>(n));
  const auto payload = std::filesystem::file_size(path) - 3 * sizeof(std::int64_t);
  const std::size_t count = payload / sizeof(double);
  bool complex_data = false;
  if (count == 2 * grid.size())
    complex_data = true;
  else if (count != grid.size())
    throw IoError("sample count does not match header in " + path.string());
  GridFunction f(grid, Space::physical);
  for (auto &v : f.values) {
    double re = 0.0, im = 0.0;
    in.read(reinterpret_cast<char *>(&re), sizeof re);
    if (complex_data)
      in.read(reinterpret_cast<char *>(&im), sizeof im);
    v = cplx(re, im);
  }
  if (!in)
    throw IoError("truncated payload in " + path.string());
  return f;
}

void write_csv(const std::filesystem::path &path, const GridFunction &f) {
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  const char *prefix = f.space == Space::physical ? "x" : "xi";
  for (int a = 0; a < f.grid.dim(); ++a)
    out << prefix << (a + 1) << ',';
  out << "re,im\n";
  for (std::size_t i = 0; i < f.grid.size(); ++i) {
    const Point p = f.space == Space::physical ? f.grid.node(i) : f.grid.frequency_node(i);
    for (int a = 0; a < f.grid.dim(); ++a)
      out << p[a] << ',';
    out << f.values[i].real() << ',' << f.values[i].imag() << '\n';
  }
}

} // namespace nlspec
