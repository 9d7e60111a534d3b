#pragma once

#include "nlspec/grid.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace nlspec {

/// y = A x for a Hermitian A; `y` never aliases `x`.
using MatVec = std::function<void(std::span<const cplx> x, std::span<cplx> y)>;

struct LanczosOptions {
  std::size_t k = 6;
  /// Only Ritz values strictly above the threshold are sought. With the
  /// default (-inf) the k largest are returned.
  double threshold = -std::numeric_limits<double>::infinity();
  double tol = 1e-10;
  std::size_t max_iter = 400;
  std::size_t min_iter = 20;
  /// Consecutive checks with an unchanged count before accepting fewer than k.
  std::size_t stable_checks = 3;
  std::uint64_t seed = 0;
};

struct LanczosResult {
  std::vector<double> values;              // descending
  std::vector<std::vector<cplx>> vectors;  // Euclidean unit norm
  std::vector<double> estimates;           // beta_j |s_ji|, the Ritz residual bound
  std::size_t iterations = 0;
  std::size_t restarts = 0;
  bool converged = false;
  bool exhausted = false; // the Krylov space filled the whole vector space
};

/// Lanczos with full reorthogonalization (classical Gram-Schmidt, twice) from
/// a seeded random real start. Restarts with a fresh orthogonal vector on
/// breakdown so invariant subspaces do not end the search early.
LanczosResult lanczos_largest(const MatVec &apply, std::size_t n, const LanczosOptions &opts);

} // namespace nlspec
