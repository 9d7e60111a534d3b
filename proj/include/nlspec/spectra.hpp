#pragma once

#include "nlspec/discrete_operator.hpp"
#include "nlspec/interval_union.hpp"
#include "nlspec/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nlspec {

// ---------------------------------------------------------------------------
// Essential spectrum and gaps

struct EssentialOptions {
  bool analytic = true;      // use closed-form essential ranges when available
  std::size_t bins = 1000;
  double eps = 1e-2;         // merge tolerance of the histogram path
  std::optional<Grid> sampling;
  double freq_cap = 50.0;
  std::size_t freq_samples = 2001;
};

IntervalUnion essential_spectrum(const Kernel &kernel, const Potential &potential,
                                 const EssentialOptions &opts = {});

enum class WindowKind { interior_gap, lower_exterior, upper_exterior };
const char *to_string(WindowKind kind);

/// Open gap (lo, hi). Exterior windows include their outer end point.
struct SpectralWindow {
  double lo = 0.0;
  double hi = 0.0;
  WindowKind kind = WindowKind::interior_gap;
};

/// Interior gaps of `ess` plus the exterior windows [lower, min ess) and
/// (max ess, upper] where discrete spectrum may live.
std::vector<SpectralWindow> spectral_gaps(const IntervalUnion &ess, double lower, double upper);

// ---------------------------------------------------------------------------
// Eigenpairs

enum class Classification { unclassified, discrete, essential_artifact, unresolved };
const char *to_string(Classification c);

struct EigenPair {
  double value = 0.0;
  GridFunction vector;        // unit L2 norm
  double residual = 0.0;      // ||L v - lambda v|| / ||v||, recomputed via apply
  double ritz_estimate = 0.0; // solver-internal residual bound
  double boundary_mass = 0.0;
  bool converged = false;
  Classification classification = Classification::unclassified;
  std::optional<double> refined_value; // nearest value on the enlarged box
  std::optional<double> ess_distance;

  EigenPair(double v, GridFunction f) : value(v), vector(std::move(f)) {}
};

struct EigsOptions {
  std::size_t k = 8;
  double tol = 1e-8;
  std::size_t max_iter = 400;
  std::size_t min_iter = 40;
  std::uint64_t seed = 0;
};

struct EigenSolve {
  std::vector<EigenPair> pairs;        // converged, sorted descending
  std::vector<EigenPair> unconverged;  // Ritz pairs that missed the tolerance
  std::size_t iterations = 0;
  std::size_t matvecs = 0;
  bool partial = false;
  std::string method;
  std::vector<double> shifts;          // folding centers tried

  nlohmann::json provenance(const EigsOptions &opts) const;
};

/// Fraction of ||v||^2 on {|x|_inf > 0.8 L}.
double boundary_mass(const GridFunction &v);
double eigen_residual(const DiscreteOperator &op, const GridFunction &v, double lambda);

EigenSolve eigs_above(const DiscreteOperator &op, double threshold, const EigsOptions &opts = {});
EigenSolve eigs_in_window(const DiscreteOperator &op, double lo, double hi,
                          const EigsOptions &opts = {});
/// All eigenpairs of the operator as a dense matrix (small grids only).
EigenSolve eigs_dense(const DiscreteOperator &op);

// ---------------------------------------------------------------------------
// Classification

struct ClassifyOptions {
  double tau_ess = 1e-3;
  double eps_loc = 1e-6;
  double tau_stab = 1e-6;
  EigsOptions solver;
};

/// Lazily solved operator on the box with L and N doubled (spacing kept).
class BoxRefinement {
public:
  BoxRefinement(const DiscreteOperator &op, ClassifyOptions opts = {});

  const Grid &grid() const { return grid_; }
  /// Nearest eigenvalue of the refined operator to lambda (nullopt if none found).
  std::optional<double> nearest(double lambda);
  /// Solve once for every target in a batch (called by classify_eigenpairs).
  void prepare(const std::vector<double> &targets, const IntervalUnion &ess);

private:
  const DiscreteOperator *op_;
  ClassifyOptions opts_;
  Grid grid_;
  std::optional<DiscreteOperator> refined_;
  std::vector<double> values_;
  std::vector<std::pair<double, double>> covered_;

  const DiscreteOperator &refined();
  void solve_window(double lo, double hi, std::size_t k);
};

EigenPair classify_eigenpair(EigenPair pair, const IntervalUnion &ess, BoxRefinement &refine,
                             const ClassifyOptions &opts = {});
std::vector<EigenPair> classify_eigenpairs(std::vector<EigenPair> pairs, const IntervalUnion &ess,
                                           BoxRefinement &refine,
                                           const ClassifyOptions &opts = {});

// ---------------------------------------------------------------------------
// Weyl sequences

enum class WeylMode { symbol_point, potential_point };
const char *to_string(WeylMode m);
WeylMode weyl_mode_from_string(const std::string &s);

struct WeylOptions {
  /// Potential mode cell half width delta_n = n^-delta_power (<= 1/n for power >= 1).
  double delta_power = 2.0;
  std::optional<Point> x0;   // potential mode representative point
  std::optional<Point> xi0;  // symbol mode root, skips the search
  std::size_t random_rays = 32;
  std::uint64_t seed = 0;
  AssemblyOptions assembly;
};

struct WeylEntry {
  std::size_t n = 0;
  double residual = 0.0;
  double symbol_term = 0.0;    // ||(a_hat - lambda) phi_hat|| (symbol mode) or ||a * phi||
  double potential_term = 0.0; // ||(V - lambda) phi|| (potential mode) or ||V phi||
  std::size_t support_nodes = 0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
};

SlopeFit fit_loglog(const std::vector<double> &x, const std::vector<double> &y);

struct WeylReport {
  WeylMode mode = WeylMode::symbol_point;
  double lambda = 0.0;
  Point point{0, 0, 0}; // xi0 or x0
  std::vector<WeylEntry> entries;
  bool decreasing = false;
  SlopeFit residual_slope;
  SlopeFit potential_slope;
  SlopeFit symbol_slope;

  nlohmann::json to_json(int dim) const;
};

/// Smallest-norm root of a_hat(xi) = lambda along coordinate rays, then
/// seeded random rays, refined by bisection.
std::optional<Point> symbol_root(const Kernel &kernel, double lambda, double radius_cap,
                                 std::size_t random_rays = 32, std::uint64_t seed = 0);

/// Node where V is closest to lambda with the least local oscillation.
Point lebesgue_point(const Potential &v, const Grid &grid, double lambda);

WeylReport weyl_residuals(const Kernel &kernel, const Potential &potential, double lambda,
                          WeylMode mode, const std::vector<std::size_t> &n_list, const Grid &grid,
                          const WeylOptions &opts = {});

/// Largest n whose test function the grid resolves.
std::size_t weyl_max_n(WeylMode mode, const Grid &grid, const Point &point, double delta_power);

} // namespace nlspec
