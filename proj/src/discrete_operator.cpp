#include "nlspec/discrete_operator.hpp"

#include "nlspec/errors.hpp"
#include "nlspec/hash.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nlspec {

namespace {

void require_grid(const Grid &a, const Grid &b) {
  if (!(a == b))
    throw UsageError("grid mismatch between operator and function");
}

void require_physical(const GridFunction &u) {
  if (u.space != Space::physical)
    throw UsageError("operator acts on physical-space functions");
}

cplx physical_inner(std::span<const cplx> f, std::span<const cplx> g, double w) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    acc += f[i] * std::conj(g[i]);
  return acc * w;
}

} // namespace

DiscreteOperator DiscreteOperator::assemble(const Kernel &kernel, const Potential &potential,
                                            const Grid &grid, const AssemblyOptions &opts) {
  if (kernel.dim() != grid.dim() || potential.dim() != grid.dim())
    throw UsageError("kernel, potential and grid dimensions must agree");
  DiscreteOperator op(grid);
  op.kernel_ = std::make_shared<const Kernel>(kernel);
  op.potential_ = std::make_shared<const Potential>(potential);
  op.options_ = opts;
  op.plan_ = FftPlan::for_grid(grid);

  const std::size_t n = grid.size();
  op.multiplier_.resize(n);
  op.analytic_symbol_ = opts.prefer_analytic_symbol && kernel.has_closed_form_symbol();
  if (op.analytic_symbol_) {
    for (std::size_t k = 0; k < n; ++k)
      op.multiplier_[k] = kernel.symbol(grid.frequency_node(k));
  } else {
    // Nodes are integer multiples of h, so the transform of the samples is the
    // exact eigenvalue array of the periodized convolution.
    const GridFunction samples = GridFunction::sample(grid, [&](const Point &x) {
      return cplx(kernel.value(x), 0.0);
    });
    op.multiplier_ = forward_transform(samples).values;
    if (kernel.kind() == KernelKind::tabulated && kernel.asymmetry() > 1e-12)
      op.warnings_.push_back("kernel table is not Hermitian symmetric (max deviation " +
                             std::to_string(kernel.asymmetry()) + ")");
  }

  op.potential_diag_.resize(n);
  for (std::size_t j = 0; j < n; ++j)
    op.potential_diag_[j] = potential(grid.node(j));

  // Aliasing: symbol mass on the Nyquist planes.
  double nyq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto idx = grid.unflatten(k);
    for (int a = 0; a < grid.dim(); ++a)
      if (idx[a] == grid.points_per_dim() / 2)
        nyq = std::max(nyq, std::abs(op.multiplier_[k]));
  }
  if (nyq > 1e-6)
    op.warnings_.push_back("kernel under-resolved: |a_hat| at the Nyquist frequency is " +
                           std::to_string(nyq) + " > 1e-6 (aliasing)");

  SpectralConstants c = spectral_constants(kernel, potential, opts.freq_cap, opts.freq_samples);
  if (!op.analytic_symbol_ || !c.exact_symbol_bounds) {
    for (const auto &m : op.multiplier_) {
      c.a_min = std::min(c.a_min, m.real());
      c.a_max = std::max(c.a_max, m.real());
    }
  }
  for (double v : op.potential_diag_) {
    c.v_min = std::min(c.v_min, v);
    c.v_max = std::max(c.v_max, v);
  }
  op.constants_ = make_constants(c.a_min, c.a_max, c.argmax_xi, c.v_min, c.v_max);
  op.constants_.exact_symbol_bounds = c.exact_symbol_bounds && op.analytic_symbol_;
  return op;
}

DiscreteOperator DiscreteOperator::reassemble(const Grid &grid) const {
  DiscreteOperator op = assemble(*kernel_, *potential_, grid, options_);
  return negated_ ? op.negate() : op;
}

void DiscreteOperator::apply(std::span<const cplx> in, std::span<cplx> out) const {
  const std::size_t n = grid_.size();
  if (in.size() != n || out.size() != n)
    throw UsageError("matvec length mismatch");
  std::copy(in.begin(), in.end(), out.begin());
  plan_->forward(out);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] *= multiplier_[k] * scale;
  plan_->backward(out);
  for (std::size_t j = 0; j < n; ++j)
    out[j] += potential_diag_[j] * in[j];
}

GridFunction DiscreteOperator::apply(const GridFunction &u) const {
  require_grid(grid_, u.grid);
  require_physical(u);
  GridFunction out(grid_, Space::physical);
  apply(u.values, out.values);
  return out;
}

cplx DiscreteOperator::bilinear_form(const GridFunction &u, const GridFunction &v,
                                     double shift) const {
  require_grid(grid_, u.grid);
  require_grid(grid_, v.grid);
  require_physical(u);
  require_physical(v);
  const std::size_t n = grid_.size();
  std::vector<cplx> fu = u.values, fv = v.values;
  plan_->forward(fu);
  plan_->forward(fv);
  // |FFT u|^2 h^d / N^d is the Plancherel weight of the raw transform.
  const double wf = grid_.cell_volume() / static_cast<double>(n);
  cplx fourier = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    fourier += (multiplier_[k] - shift) * fu[k] * std::conj(fv[k]);
  cplx phys = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    phys += potential_diag_[j] * u.values[j] * std::conj(v.values[j]);
  return fourier * wf + phys * grid_.cell_volume();
}

double DiscreteOperator::quadratic_form(const GridFunction &u, double shift) const {
  const cplx q = bilinear_form(u, u, shift);
  const double scale = std::max(1.0, std::abs(q.real()));
  if (std::abs(q.imag()) > 1e-9 * scale)
    throw SelfAdjointnessError("quadratic form has imaginary part " + std::to_string(q.imag()));
  return q.real();
}

GramMatrices DiscreteOperator::gram(const std::vector<GridFunction> &family, double shift) const {
  const std::size_t m = family.size();
  const std::size_t n = grid_.size();
  std::vector<std::vector<cplx>> spectra(m);
  for (std::size_t i = 0; i < m; ++i) {
    require_grid(grid_, family[i].grid);
    require_physical(family[i]);
    spectra[i] = family[i].values;
    plan_->forward(spectra[i]);
  }
  const double wf = grid_.cell_volume() / static_cast<double>(n);
  const double wp = grid_.cell_volume();
  GramMatrices g{Eigen::MatrixXcd(m, m), Eigen::MatrixXcd(m, m), Eigen::MatrixXcd(m, m)};
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = r; c < m; ++c) {
      cplx conv = 0.0, over = 0.0, pot = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const cplx prod = spectra[r][k] * std::conj(spectra[c][k]);
        conv += (multiplier_[k] - shift) * prod;
      }
      const auto &ur = family[r].values;
      const auto &uc = family[c].values;
      for (std::size_t j = 0; j < n; ++j) {
        const cplx prod = ur[j] * std::conj(uc[j]);
        over += prod;
        pot += potential_diag_[j] * prod;
      }
      g.a(r, c) = conv * wf + pot * wp;
      g.b(r, c) = over * wp;
      g.potential_part(r, c) = pot * wp;
      if (c != r) {
        // Conjugate symmetry holds exactly for a real multiplier.
        cplx conv_t = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          conv_t += (multiplier_[k] - shift) * spectra[c][k] * std::conj(spectra[r][k]);
        g.a(c, r) = conv_t * wf + std::conj(pot) * wp;
        g.b(c, r) = std::conj(g.b(r, c));
        g.potential_part(c, r) = std::conj(g.potential_part(r, c));
      }
    }
  return g;
}

double DiscreteOperator::hermiticity_residual(std::size_t trials, std::uint64_t seed) const {
  if (trials < 1)
    throw UsageError("hermiticity check needs at least one trial");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const std::size_t n = grid_.size();
  const double w = grid_.cell_volume();
  std::vector<cplx> u(n), v(n), lu(n), lv(n);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = {normal(rng), normal(rng)};
      v[i] = {normal(rng), normal(rng)};
    }
    apply(u, lu);
    apply(v, lv);
    const cplx d = physical_inner(lu, v, w) - physical_inner(u, lv, w);
    const double nu = std::sqrt(physical_inner(u, u, w).real());
    const double nv = std::sqrt(physical_inner(v, v, w).real());
    worst = std::max(worst, std::abs(d) / (nu * nv));
  }
  return worst;
}

DiscreteOperator DiscreteOperator::negate() const {
  DiscreteOperator op = *this;
  for (auto &m : op.multiplier_)
    m = -m;
  for (auto &v : op.potential_diag_)
    v = -v;
  const auto &c = constants_;
  Point arg = c.argmax_xi;
  op.constants_ = make_constants(-c.a_max, -c.a_min, arg, -c.v_max, -c.v_min);
  op.constants_.exact_symbol_bounds = c.exact_symbol_bounds;
  op.negated_ = !negated_;
  return op;
}

std::string DiscreteOperator::multiplier_checksum() const {
  return sha256_of(std::span<const cplx>(multiplier_));
}

std::string DiscreteOperator::potential_checksum() const {
  return sha256_of(std::span<const double>(potential_diag_));
}

nlohmann::json DiscreteOperator::provenance() const {
  return {{"kernel", kernel_->describe()},
          {"potential", potential_->describe()},
          {"grid",
           {{"dim", grid_.dim()},
            {"half_width", grid_.half_width()},
            {"points", grid_.points_per_dim()}}},
          {"symbol_source", analytic_symbol_ ? "analytic" : "dft_of_samples"},
          {"negated", negated_},
          {"multiplier_sha256", multiplier_checksum()},
          {"potential_sha256", potential_checksum()}};
}

} // namespace nlspec
