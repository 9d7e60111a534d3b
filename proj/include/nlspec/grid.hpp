#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace nlspec {

using cplx = std::complex<double>;
using Point = std::array<double, 3>;

/// Periodic box [-L, L)^d sampled with N points per dimension.
///
/// Nodes are x_j = -L + j h with h = 2L/N. Frequency nodes are
/// xi_k = k pi / L for k in {-N/2, ..., N/2 - 1}; frequency arrays are stored in
/// FFT order, i.e. slot m holds k = m for m < N/2 and k = m - N otherwise.
class Grid {
public:
  Grid(int dim, double half_width, std::size_t points_per_dim);

  int dim() const { return dim_; }
  double half_width() const { return half_width_; }
  std::size_t points_per_dim() const { return points_; }
  std::size_t size() const { return size_; }

  double spacing() const { return 2.0 * half_width_ / static_cast<double>(points_); }
  double dual_spacing() const;
  double cell_volume() const;
  /// (2 pi)^{-d} (pi / L)^d, the weight of one frequency node.
  double dual_cell_volume() const;
  double nyquist() const;

  double coordinate(std::size_t j) const { return -half_width_ + spacing() * static_cast<double>(j); }
  long wavenumber(std::size_t m) const;
  double frequency(std::size_t m) const;

  /// Multi-index of a flat row-major index (unused trailing slots are zero).
  std::array<std::size_t, 3> unflatten(std::size_t flat) const;
  std::size_t flatten(const std::array<std::size_t, 3> &idx) const;

  Point node(std::size_t flat) const;
  Point frequency_node(std::size_t flat) const;

  bool operator==(const Grid &) const = default;

private:
  int dim_;
  double half_width_;
  std::size_t points_;
  std::size_t size_;
};

double norm2(const Point &p, int dim);

enum class Space { physical, frequency };

struct GridFunction {
  Grid grid;
  std::vector<cplx> values;
  Space space = Space::physical;

  GridFunction(Grid g, Space s);
  GridFunction(Grid g, std::vector<cplx> v, Space s);

  template <typename Fn>
  static GridFunction sample(const Grid &g, Fn &&fn) {
    GridFunction f(g, Space::physical);
    for (std::size_t i = 0; i < g.size(); ++i)
      f.values[i] = fn(g.node(i));
    return f;
  }
};

/// Thin wrapper over an FFTW plan for one grid shape. Plans are cached and
/// shared; `forward`/`backward` are unnormalized in-place DFTs and are safe to
/// call concurrently on distinct buffers.
class FftPlan {
public:
  static std::shared_ptr<const FftPlan> for_grid(const Grid &grid);

  FftPlan(int dim, std::size_t points);
  ~FftPlan();
  FftPlan(const FftPlan &) = delete;
  FftPlan &operator=(const FftPlan &) = delete;

  void forward(std::span<cplx> data) const;
  void backward(std::span<cplx> data) const;
  std::size_t size() const { return size_; }

private:
  void *forward_plan_ = nullptr;
  void *backward_plan_ = nullptr;
  std::size_t size_;
};

/// u_hat(xi_k) = h^d sum_j f(x_j) exp(-i xi_k . x_j).
GridFunction forward_transform(const GridFunction &f);
/// Exact inverse of forward_transform: f(x_j) = (2 pi)^{-d} (pi/L)^d sum_k u_hat(xi_k) exp(i xi_k . x_j).
GridFunction inverse_transform(const GridFunction &f);

/// Continuum-consistent inner product <f, g> (linear in f, antilinear in g).
cplx plancherel_inner(const GridFunction &f, const GridFunction &g);
double norm(const GridFunction &f);
void normalize(GridFunction &f);

/// Tabulated-samples binary layout, little endian:
///   int64 d, int64 N, float64 L, then N^d float64 values (row-major).
/// Complex data stores interleaved (re, im) pairs, i.e. 2 N^d values; the
/// reader infers the component count from the file size.
void write_samples(const std::filesystem::path &path, const GridFunction &f);
GridFunction read_samples(const std::filesystem::path &path);

/// CSV with header x1..xd,re,im (physical space) or xi1..xid,re,im.
void write_csv(const std::filesystem::path &path, const GridFunction &f);

} // namespace nlspec
