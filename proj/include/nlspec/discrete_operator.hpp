#pragma once

#include "nlspec/grid.hpp"
#include "nlspec/model.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nlspec {

struct AssemblyOptions {
  /// Use the closed-form symbol when the kernel has one; otherwise the
  /// multiplier is the DFT of kernel samples on the operator grid.
  bool prefer_analytic_symbol = true;
  double freq_cap = 50.0;
  std::size_t freq_samples = 2001;
};

/// Gram data of a family: A_nm = <(L - shift) phi_n, phi_m>, B_nm = <phi_n, phi_m>.
struct GramMatrices {
  Eigen::MatrixXcd a;
  Eigen::MatrixXcd b;
  Eigen::MatrixXcd potential_part; // <V phi_n, phi_m>
};

/// The periodized operator L_h u = IFFT(a_hat . FFT u) + V u on a grid.
class DiscreteOperator {
public:
  static DiscreteOperator assemble(const Kernel &kernel, const Potential &potential,
                                   const Grid &grid, const AssemblyOptions &opts = {});

  const Grid &grid() const { return grid_; }
  const std::vector<cplx> &multiplier() const { return multiplier_; }
  const std::vector<double> &potential_diag() const { return potential_diag_; }
  const SpectralConstants &constants() const { return constants_; }
  const std::vector<std::string> &warnings() const { return warnings_; }
  const Kernel &kernel() const { return *kernel_; }
  const Potential &potential() const { return *potential_; }
  const AssemblyOptions &options() const { return options_; }
  bool negated() const { return negated_; }
  bool analytic_symbol() const { return analytic_symbol_; }

  /// Same model and options on another grid (negation carried over).
  DiscreteOperator reassemble(const Grid &grid) const;

  GridFunction apply(const GridFunction &u) const;
  /// Raw-array matvec in physical space; `out` may not alias `in`.
  void apply(std::span<const cplx> in, std::span<cplx> out) const;

  /// <(L - shift) u, u>, convolution part on the Fourier side.
  double quadratic_form(const GridFunction &u, double shift = 0.0) const;
  /// <(L - shift) u, v>.
  cplx bilinear_form(const GridFunction &u, const GridFunction &v, double shift = 0.0) const;
  GramMatrices gram(const std::vector<GridFunction> &family, double shift) const;

  double hermiticity_residual(std::size_t trials = 20, std::uint64_t seed = 0) const;
  DiscreteOperator negate() const;

  std::string multiplier_checksum() const;
  std::string potential_checksum() const;
  nlohmann::json provenance() const;

private:
  DiscreteOperator(Grid g) : grid_(std::move(g)) {}

  Grid grid_;
  std::vector<cplx> multiplier_;
  std::vector<double> potential_diag_;
  SpectralConstants constants_;
  std::vector<std::string> warnings_;
  std::shared_ptr<const Kernel> kernel_;
  std::shared_ptr<const Potential> potential_;
  AssemblyOptions options_;
  std::shared_ptr<const FftPlan> plan_;
  bool negated_ = false;
  bool analytic_symbol_ = true;
};

} // namespace nlspec
