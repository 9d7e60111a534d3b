#pragma once

#include "nlspec/discrete_operator.hpp"
#include "nlspec/spectra.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace nlspec {

// ---------------------------------------------------------------------------
// Bump profile

/// Radial profile psi(x) = h chi(|x|): chi vanishes on [0, 1/2] and beyond
/// 5/2, equals 1 on [1, 2], and rises and falls through exp(-1/t) smooth
/// steps. h is fixed by ||psi||_{L2(R^d)} = 1.
class BumpProfile {
public:
  static const BumpProfile &standard(int dim);

  static double smooth_step(double t);
  static double chi(double r);

  int dim() const { return dim_; }
  double plateau_height() const { return height_; }
  double operator()(double r) const { return height_ * chi(r); }

private:
  explicit BumpProfile(int dim);
  int dim_;
  double height_;
};

/// psi_R(x) = R^{-d/2} psi((x - center) / R), times exp(i xi0.x) when modulated,
/// renormalized on the grid.
GridFunction build_bump(const Grid &grid, double radius, const std::optional<Point> &modulation = {},
                        const Point &center = {0, 0, 0});

/// Admissible radii of build_bump on a grid: support 5R/2 < 0.95 L and R/2 >= 8 h.
double bump_max_radius(const Grid &grid);
double bump_min_radius(const Grid &grid);

// ---------------------------------------------------------------------------
// Families

enum class FamilyKind { bump_scaled, gaussian, fourier_side_bump };
const char *to_string(FamilyKind k);

struct TestFamily {
  FamilyKind kind = FamilyKind::bump_scaled;
  std::vector<GridFunction> members;
  std::vector<double> radii;
  int scale_base = 0; // M
  double base_radius = 0.0; // R0, R1 or frequency base
  std::optional<Point> modulation;
  Point center{0, 0, 0};
  double q = 0.0; // dual family frequency band
  bool off_paper = false;
  bool compact_branch = false;

  const Grid &grid() const { return members.front().grid; }
  nlohmann::json to_json() const;
};

/// {psi_{2^{Mn} R0}}_{n=1..N}; the compact-support branch uses 2^{M(2n-1)} R0.
TestFamily scaled_family(const Grid &grid, double r0, int m, std::size_t count,
                         const std::optional<Point> &modulation = {},
                         bool compact_branch = false);

/// Normalized Gaussians R^{-d/2} exp(-|x|^2 / R^2) with R_{j+1} = R_j^4, or the
/// supplied ladder (flagged off-paper).
TestFamily gaussian_family(const Grid &grid, double r1, std::size_t count,
                           const std::vector<double> &ladder = {});

/// Fourier-side bumps supported in {q R < |xi| < 2 q R}, R = 2^{Mn} R0,
/// returned in physical space and centered at `center`.
TestFamily dual_family(const Grid &grid, double q, std::size_t count, int m, double r0 = 1.0,
                       const Point &center = {0, 0, 0});

/// Closed-form overlap of two normalized Gaussians of radii r1, r2.
double gaussian_overlap(int dim, double r1, double r2);

// ---------------------------------------------------------------------------
// Gram certificates

enum class Theorem { t2, t3_integral, heavy_tail, t5_dual };
const char *to_string(Theorem t);

struct Certificate {
  Theorem theorem = Theorem::t2;
  double shift = 0.0;
  Eigen::MatrixXcd gram_a;
  Eigen::MatrixXcd gram_b;
  Eigen::MatrixXcd potential_part;
  std::vector<double> pencil_eigenvalues; // ascending
  double min_eig = 0.0;
  double hermiticity_a = 0.0;
  double hermiticity_b = 0.0;
  double overlap_deviation = 0.0; // max |B - I|
  std::size_t certified_count = 0;
  bool pass = false;
  FamilyKind family_kind = FamilyKind::bump_scaled;
  std::vector<double> radii;
  int scale_base = 0;
  bool off_paper = false;
  nlohmann::json diagnostics = nlohmann::json::object();

  /// Largest |A_nm| / sqrt(|A_nn A_mm|) over n != m.
  double off_diagonal_ratio() const;
  nlohmann::json to_json() const;
};

Certificate gram_certificate(const DiscreteOperator &op, const TestFamily &family, double shift,
                             Theorem theorem = Theorem::t2);

/// Adds the proof-shaped trend diagnostics to a certificate: member lower
/// bounds 1/2 C h^2 meas(G_1) R^-gamma, off-diagonal decay against
/// (R_n R_m)^{-alpha/2}, and for Gaussian families theta_kj.
void add_family_diagnostics(Certificate &cert, const TestFamily &family,
                            const std::optional<DecayHypothesis> &symbol_hyp,
                            const std::optional<DecayHypothesis> &potential_hyp);

struct HeavyTailRatio {
  double radius = 0.0;
  double ell = 0.0;      // l(1/R)
  double average = 0.0;  // <V>(R)
  double ratio = 0.0;
};

std::vector<HeavyTailRatio> heavy_tail_ratios(const Kernel &kernel, const Potential &potential,
                                              const std::vector<double> &radii);

// ---------------------------------------------------------------------------
// Auto-search

struct SearchStep {
  double r0 = 0.0;
  int m = 0;
  std::string outcome; // pass | fail | sizing
  double min_eig = 0.0;
};

struct SearchResult {
  std::optional<Certificate> certificate;
  std::optional<TestFamily> family;
  std::vector<SearchStep> trace;

  nlohmann::json trace_json() const;
};

struct ScaledSearch {
  std::size_t count = 3;
  std::vector<int> m_values{3, 4, 5};
  std::optional<double> r0_start; // default 2 h
  std::size_t max_doublings = 40;
  std::optional<Point> modulation;
  bool compact_branch = false;
  std::optional<double> shift;    // default mu1
};

SearchResult certify_scaled(const DiscreteOperator &op, const ScaledSearch &search);

struct GaussianSearch {
  std::size_t count = 2;
  std::vector<double> r1_values{1.5, 2.0, 3.0};
  std::vector<double> ladder;     // off-paper override
  std::optional<double> shift;
};

SearchResult certify_heavy_tail(const DiscreteOperator &op, const GaussianSearch &search);

struct DualSearch {
  std::size_t count = 2;
  double q = 1.0;
  std::vector<int> m_values{3, 4, 5};
  std::vector<double> r0_values{0.5, 1.0, 2.0};
  std::optional<double> shift;    // default V_max
};

SearchResult certify_dual(const DiscreteOperator &op, const DualSearch &search);

/// Where the potential attains its maximum on the operator grid (the builtin
/// peak when known).
Point potential_peak(const DiscreteOperator &op);

// ---------------------------------------------------------------------------
// Gap certificate

struct GapOptions {
  EigsOptions solver;
  ClassifyOptions classify;
  std::size_t candidates = 8;
  bool confirm = true;
};

/// The unperturbed eigenpair (lambda0, u0) of a * + V0.
struct GapReference {
  double lambda0 = 0.0;
  double a_max = 0.0;
  std::optional<EigenPair> u0;
  IntervalUnion essential;
  std::size_t discrete_found = 0;
};

GapReference solve_gap_reference(const Kernel &kernel, const Potential &v0, const Grid &grid,
                                 const GapOptions &opts = {});

struct GapCertificate {
  double lambda0 = 0.0;
  double a_max = 0.0;
  double theta_minus = 0.0;
  double v1_sup = 0.0;
  double support_measure = 0.0;
  double delta = 0.0;
  double delta_bound = 0.0;
  double margin = 0.0;
  bool pass = false;
  double predicted_lo = 0.0;
  double predicted_hi = 0.0;
  std::optional<double> confirmed_value;
  std::optional<double> confirmed_residual;
  std::size_t confirmed_count = 0;

  nlohmann::json to_json() const;
};

GapCertificate gap_certificate(const Kernel &kernel, const Potential &v0, const Potential &v1,
                               const Grid &grid, const GapReference &ref,
                               const GapOptions &opts = {});

GapCertificate gap_perturbation_certificate(const Kernel &kernel, const Potential &v0,
                                            const Potential &v1, const Grid &grid,
                                            const GapOptions &opts = {});

struct GapScanEntry {
  double half_width = 0.0;
  GapCertificate certificate;
};

/// Box perturbations height * 1{|x - center|_inf <= w} for each w.
std::vector<GapScanEntry> gap_width_scan(const Kernel &kernel, const Potential &v0, double height,
                                         const Point &center, const std::vector<double> &widths,
                                         const Grid &grid, const GapReference &ref,
                                         const GapOptions &opts = {});

} // namespace nlspec
