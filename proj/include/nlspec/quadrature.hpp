#pragma once

#include "nlspec/model.hpp"

#include <cstdint>
#include <vector>

namespace nlspec {

struct GaussRule {
  std::vector<double> nodes;   // on [-1, 1]
  std::vector<double> weights;
};

/// Gauss-Legendre rule of the given order (Newton iteration on P_n).
const GaussRule &gauss_legendre(std::size_t order);

enum class AnnulusQuadrature { tensor_grid, monte_carlo };

/// The shell G_R = {R <= |x| <= 2R}.
struct AnnulusSpec {
  double inner_radius = 1.0;
  AnnulusQuadrature kind = AnnulusQuadrature::tensor_grid;
  /// Radial and angular node count for tensor grids, sample count for Monte Carlo.
  std::size_t points = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AverageResult {
  double value = 0.0;
  double std_error = 0.0; // zero for tensor grids
};

AverageResult annulus_average_potential(const Potential &v, const AnnulusSpec &spec);
AverageResult annulus_average_symbol(const Kernel &a, const AnnulusSpec &spec);

double annulus_measure(int dim, double inner_radius);

struct EllQuadrature {
  std::size_t order = 20;
  double cutoff = 6.0;          // e^{-36} is below double resolution of the weight
  int grading_levels = 30;      // geometric refinement toward xi = 0 (d = 1)
  std::size_t max_subdivision = 64;
};

/// l(r) = int (a_max - a_hat(r xi)) exp(-|xi|^2) d xi over the cube |xi|_inf <= cutoff.
double ell_hat(const Kernel &a, double r, const EllQuadrature &quad = {});

} // namespace nlspec
