#pragma once

#include "nlspec/grid.hpp"
#include "nlspec/interval_union.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace nlspec {

using Params = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Decay hypotheses

enum class DecaySide {
  symbol_near_zero,      // a_hat(xi) >= a_max - c |xi|^alpha,  |xi| <= theta
  potential_at_infinity, // V(x) >= C |x|^-gamma,                |x| >= q
  symbol_at_infinity,    // a_hat(xi) >= C |xi|^-alpha,          |xi| >= q
  potential_near_zero,   // V(x) >= V_max - c |x|^gamma,         |x| < theta
};

const char *to_string(DecaySide side);
DecaySide decay_side_from_string(const std::string &s);

struct DecayHypothesis {
  DecaySide side = DecaySide::symbol_near_zero;
  double exponent = 1.0;  // alpha or gamma
  double constant = 1.0;  // c or C
  double threshold = 1.0; // theta or q

  DecayHypothesis() = default;
  DecayHypothesis(DecaySide s, double exponent_, double constant_, double threshold_);
};

nlohmann::json decay_to_json(const DecayHypothesis &hyp);
DecayHypothesis decay_from_json(const nlohmann::json &j);

/// Threshold used when a hypothesis holds on all of R^d.
inline constexpr double unbounded_threshold = 1e6;

// ---------------------------------------------------------------------------
// Kernels

enum class KernelKind { zero, gaussian, box, exponential, cauchy, tabulated };

/// Convolution kernel a in L1(R^d). Builtins are product kernels with closed
/// form symbol; their parameters are `weight` (total mass for densities) and
/// `scale` (standard deviation, half width or decay length).
///
/// Fourier convention: a_hat(xi) = int a(x) exp(-i xi.x) dx.
class Kernel {
public:
  static Kernel zero(int dim);
  static Kernel gaussian(int dim, double scale = 1.0, double weight = 1.0);
  static Kernel box(int dim, double half_width = 1.0, double weight = 1.0);
  static Kernel exponential(int dim, double scale = 1.0, double weight = 1.0);
  static Kernel cauchy(int dim, double scale = 1.0, double weight = 1.0);
  static Kernel builtin(int dim, const std::string &name, const Params &params = {});

  /// Real samples a(x_j) on their own grid. Hermitian symmetry a(-x) = a(x)
  /// is checked to 1e-12; an asymmetric table is rejected unless allowed.
  static Kernel tabulated(GridFunction samples, bool allow_asymmetric = false);
  static Kernel from_file(const std::filesystem::path &path, bool allow_asymmetric = false);

  int dim() const { return dim_; }
  KernelKind kind() const { return kind_; }
  std::string name() const;
  double weight() const { return weight_; }
  double scale() const { return scale_; }

  bool has_closed_form_symbol() const { return kind_ != KernelKind::tabulated; }
  /// Real part of a_hat(xi). Tabulated kernels use the DFT of their samples
  /// and throw OutOfRangeError beyond the table's Nyquist frequency.
  double symbol(const Point &xi) const;
  cplx symbol_complex(const Point &xi) const;
  /// a(x); tabulated kernels use nearest-node lookup and vanish off-table.
  double value(const Point &x) const;

  /// Exact [inf a_hat, sup a_hat] for builtins.
  std::optional<Interval> exact_symbol_range() const;
  /// Exact second moment for builtins; +inf when divergent.
  std::optional<double> exact_second_moment() const;
  /// Half width of a compact support box, when the kernel has one.
  std::optional<double> support_half_width() const;
  bool is_probability_density() const;

  /// max |a(-x) - a(x)| over the table (0 for builtins).
  double asymmetry() const { return asymmetry_; }
  const std::optional<GridFunction> &table() const { return table_; }

  nlohmann::json describe() const;
  /// Inverse of describe(). Relative table paths resolve against `base_dir`.
  static Kernel from_json(const nlohmann::json &j, int dim,
                          const std::filesystem::path &base_dir = {});

private:
  Kernel(int dim, KernelKind kind) : dim_(dim), kind_(kind) {}

  int dim_;
  KernelKind kind_;
  double weight_ = 1.0;
  double scale_ = 1.0;
  double asymmetry_ = 0.0;
  std::optional<GridFunction> table_;
  std::optional<std::filesystem::path> source_;
};

// ---------------------------------------------------------------------------
// Potentials

enum class PotentialKind {
  zero,
  constant,
  power_tail,    // A (1 + |x|)^-gamma
  gaussian_bump, // A exp(-|x|^2 / s^2)
  box,           // A on the cube |x - c|_inf <= w
  rational_peak, // A / (1 + |x|^p)
  clipped_power, // A min(1, (|x| / r0)^-gamma)
  tabulated,
  sum,
};

/// Real bounded potential. Builtins may be translated by `center`.
class Potential {
public:
  static Potential zero(int dim);
  /// Does not vanish at infinity; used for operator tests only.
  static Potential constant(int dim, double value);
  static Potential power_tail(int dim, double amplitude = 1.0, double gamma = 1.0);
  static Potential gaussian_bump(int dim, double amplitude = 1.0, double scale = 1.0);
  static Potential box(int dim, double amplitude, double half_width, Point center = {0, 0, 0});
  static Potential rational_peak(int dim, double amplitude = 1.0, double exponent = 2.0);
  static Potential clipped_power(int dim, double amplitude, double gamma, double core = 1.0);
  static Potential tabulated(GridFunction samples);
  static Potential from_file(const std::filesystem::path &path);
  static Potential sum(const Potential &first, const Potential &second);
  static Potential builtin(int dim, const std::string &name, const Params &params = {},
                           Point center = {0, 0, 0});

  double operator()(const Point &x) const;

  int dim() const { return dim_; }
  PotentialKind kind() const { return kind_; }
  std::string name() const;
  const Params &params() const { return params_; }
  double param(const std::string &key) const;
  const Point &center() const { return center_; }
  Potential translated(const Point &shift) const;

  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  /// Closed form essential range when known (contains 0 for decaying builtins).
  std::optional<IntervalUnion> exact_essential_range() const;
  /// Location of the supremum for builtins (the center for peaked profiles).
  std::optional<Point> argmax() const;
  /// Measure of the support for compactly supported builtins.
  std::optional<double> support_measure() const;

  const std::optional<DecayHypothesis> &decay() const { return decay_; }
  Potential with_decay(DecayHypothesis hyp) const;

  const std::vector<std::shared_ptr<const Potential>> &terms() const { return terms_; }

  nlohmann::json describe() const;
  static Potential from_json(const nlohmann::json &j, int dim,
                             const std::filesystem::path &base_dir = {});

private:
  Potential(int dim, PotentialKind kind) : dim_(dim), kind_(kind) {}
  void set_bounds_from_metadata();

  int dim_;
  PotentialKind kind_;
  Params params_;
  Point center_{0.0, 0.0, 0.0};
  double v_min_ = 0.0;
  double v_max_ = 0.0;
  std::optional<DecayHypothesis> decay_;
  std::optional<GridFunction> table_;
  std::optional<std::filesystem::path> source_;
  std::vector<std::shared_ptr<const Potential>> terms_;
};

/// Default spatial sampling grid used when a potential must be sampled without
/// an operator grid at hand.
Grid default_sampling_grid(int dim);

/// For each delta in {1e-1, ..., 1e-4}, the smallest sampled radius beyond
/// which |V| <= delta on the grid (nullopt when no such radius exists on it).
std::vector<std::pair<double, std::optional<double>>> vanishing_radii(const Potential &v,
                                                                      const Grid &grid);

// ---------------------------------------------------------------------------
// Spectral constants

struct SpectralConstants {
  double a_min = 0.0;
  double a_max = 0.0;
  Point argmax_xi{0.0, 0.0, 0.0};
  double v_min = 0.0;
  double v_max = 0.0;
  double mu0 = 0.0;
  double mu1 = 0.0;
  bool exact_symbol_bounds = false;
};

/// Symbol bounds from a dense frequency grid on [-cap, cap]^d with `samples`
/// nodes per axis, clamped with the limit value 0. Builtins return their exact
/// range unless `prefer_exact` is false.
SpectralConstants spectral_constants(const Kernel &kernel, const Potential &potential,
                                     double freq_cap = 50.0, std::size_t samples = 2001,
                                     bool prefer_exact = true);

SpectralConstants make_constants(double a_min, double a_max, Point argmax_xi, double v_min,
                                 double v_max);

// ---------------------------------------------------------------------------
// Hypothesis checks

struct SamplingSpec {
  /// Upper radius for the *_at_infinity sides (must exceed the threshold).
  double outer_radius = 0.0;
  /// Optional cap on the sampled radius for the *_near_zero sides.
  double radius_cap = unbounded_threshold;
  std::size_t radial_points = 4001;
  std::size_t directions = 16;
};

struct HypothesisReport {
  bool pass = false;
  double worst_margin = 0.0;
  Point worst_location{0.0, 0.0, 0.0};
  std::size_t samples = 0;
  std::string note;
};

HypothesisReport check_hypothesis(const Kernel &kernel, const DecayHypothesis &hyp,
                                  const SamplingSpec &spec = {});
HypothesisReport check_hypothesis(const Potential &potential, const DecayHypothesis &hyp,
                                  const SamplingSpec &spec = {});

// ---------------------------------------------------------------------------
// Moments and essential range

struct MomentQuadrature {
  double radius = 40.0;          // truncation half width of the cube
  std::size_t points = 4096;     // midpoint nodes per axis
  double tail_tolerance = 1e-4;  // relative growth from radius/2 to radius
  bool use_exact = true;
};

struct MomentResult {
  double value = 0.0;
  bool divergent = false;
  double tail_fraction = 0.0;
  bool from_metadata = false;
};

MomentResult second_moment(const Kernel &kernel, const MomentQuadrature &quad = {});

/// Symbol lower bound a_hat(xi) >= 1 - (m/2)|xi|^2 valid for symmetric densities.
DecayHypothesis hypothesis_from_moment(const Kernel &kernel, const MomentQuadrature &quad = {});

/// Essential range of V. Uses the closed form when available (and allowed);
/// otherwise histograms samples on `sampling` into `bins` bins over
/// [v_min, v_max], keeps bins holding at least one cell volume, merges runs of
/// kept bins (and runs separated by at most `eps`) into closed intervals
/// spanning the sampled values, and unions in {0}.
IntervalUnion essential_range(const Potential &potential, std::size_t bins, double eps,
                              const std::optional<Grid> &sampling = std::nullopt,
                              bool use_analytic = true);

} // namespace nlspec
