#include "nlspec/lanczos.hpp"

#include "nlspec/errors.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace nlspec {

namespace {

cplx dot(std::span<const cplx> a, std::span<const cplx> b) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += std::conj(a[i]) * b[i];
  return acc;
}

double nrm(std::span<const cplx> a) { return std::sqrt(std::max(0.0, dot(a, a).real())); }

void orthogonalize(const std::vector<std::vector<cplx>> &basis, std::vector<cplx> &w) {
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<cplx> coef(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i)
      coef[i] = dot(basis[i], w);
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t t = 0; t < w.size(); ++t)
        w[t] -= coef[i] * basis[i][t];
  }
}

struct Ritz {
  std::vector<double> values;  // descending
  std::vector<double> vectors; // column-major j x m, columns aligned with values
  std::size_t m = 0;
};

// Selected eigenpairs of the symmetric tridiagonal (alpha, beta).
Ritz tridiagonal_top(const std::vector<double> &alpha, const std::vector<double> &beta,
                     std::size_t k, double threshold) {
  const auto j = static_cast<lapack_int>(alpha.size());
  std::vector<double> d = alpha, e(beta.begin(), beta.begin() + (j - 1));
  e.push_back(0.0);
  std::vector<double> w(j), z(static_cast<std::size_t>(j) * j);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(j));
  lapack_int m = 0;
  lapack_int info = 0;
  if (std::isfinite(threshold)) {
    double upper = 0.0;
    for (lapack_int i = 0; i < j; ++i)
      upper = std::max(upper, std::abs(alpha[i]) + 2.0 * std::abs(e[i]));
    upper = 2.0 * upper + 1.0;
    if (threshold >= upper)
      return {};
    info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'V', j, d.data(), e.data(), threshold, upper, 0,
                          0, 0.0, &m, w.data(), z.data(), j, isuppz.data());
  } else {
    const lapack_int want = std::min<lapack_int>(static_cast<lapack_int>(k), j);
    info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', j, d.data(), e.data(), 0.0, 0.0,
                          j - want + 1, j, 0.0, &m, w.data(), z.data(), j, isuppz.data());
  }
  if (info != 0)
    throw ConvergenceError("tridiagonal eigensolver failed (info " + std::to_string(info) + ")");
  Ritz r;
  r.m = static_cast<std::size_t>(m);
  r.values.resize(r.m);
  r.vectors.resize(static_cast<std::size_t>(j) * r.m);
  // dstevr returns ascending order; flip to descending.
  for (std::size_t c = 0; c < r.m; ++c) {
    const std::size_t src = r.m - 1 - c;
    r.values[c] = w[src];
    std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(src * j), j,
                r.vectors.begin() + static_cast<std::ptrdiff_t>(c * j));
  }
  return r;
}

} // namespace

LanczosResult lanczos_largest(const MatVec &apply, std::size_t n, const LanczosOptions &opts) {
  if (opts.k < 1)
    throw UsageError("Lanczos needs k >= 1");
  if (n == 0)
    throw UsageError("Lanczos needs a nonempty space");
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  auto random_start = [&](const std::vector<std::vector<cplx>> &basis) {
    std::vector<cplx> v(n);
    for (auto &x : v)
      x = normal(rng);
    orthogonalize(basis, v);
    const double s = nrm(v);
    for (auto &x : v)
      x /= s;
    return v;
  };

  const std::size_t max_iter = std::min(opts.max_iter, n);
  std::vector<std::vector<cplx>> q;
  std::vector<double> alpha, beta;
  q.push_back(random_start(q));

  LanczosResult res;
  std::vector<cplx> w(n);
  double anorm = 0.0;
  std::size_t next_check = std::max<std::size_t>(opts.min_iter, opts.k);
  std::size_t stable = 0;
  std::size_t last_count = static_cast<std::size_t>(-1);
  Ritz ritz;
  bool done = false;

  for (std::size_t j = 0; j < max_iter && !done; ++j) {
    apply(q[j], w);
    const double a = dot(q[j], w).real();
    alpha.push_back(a);
    for (std::size_t t = 0; t < n; ++t) {
      w[t] -= a * q[j][t];
      if (j > 0)
        w[t] -= beta[j - 1] * q[j - 1][t];
    }
    orthogonalize(q, w);
    double b = nrm(w);
    anorm = std::max(anorm, std::abs(a) + b);
    const bool breakdown = b <= 1e-12 * std::max(anorm, 1e-300);
    const std::size_t steps = j + 1;
    const bool last = steps == max_iter;

    if (breakdown || steps >= next_check || last) {
      // On breakdown the coupling is zero and every Ritz pair of T is exact.
      beta.push_back(breakdown ? 0.0 : b);
      ritz = tridiagonal_top(alpha, beta, opts.k, opts.threshold);
      const double bj = beta.back();
      res.estimates.assign(ritz.m, 0.0);
      for (std::size_t i = 0; i < ritz.m; ++i)
        res.estimates[i] = std::abs(bj * ritz.vectors[i * steps + steps - 1]);
      const std::size_t considered = std::min(ritz.m, opts.k);
      bool all_conv = true;
      for (std::size_t i = 0; i < considered; ++i)
        all_conv = all_conv && res.estimates[i] <= opts.tol;
      if (ritz.m == last_count && all_conv)
        ++stable;
      else
        stable = 0;
      last_count = ritz.m;
      if (all_conv && !breakdown && (ritz.m >= opts.k || stable >= opts.stable_checks))
        done = true;
      if (steps == n) {
        res.exhausted = true;
        done = true;
      }
      beta.pop_back();
      next_check = steps + std::max<std::size_t>(5, steps / 10);
      res.converged = done && all_conv;
    }
    res.iterations = steps;
    if (done || last)
      break;
    if (breakdown) {
      beta.push_back(0.0);
      q.push_back(random_start(q));
      ++res.restarts;
    } else {
      beta.push_back(b);
      for (auto &x : w)
        x /= b;
      q.push_back(w);
    }
  }

  const std::size_t steps = alpha.size();
  const std::size_t take = std::min(ritz.m, opts.k);
  res.values.assign(ritz.values.begin(), ritz.values.begin() + static_cast<std::ptrdiff_t>(take));
  res.estimates.resize(take);
  res.vectors.assign(take, std::vector<cplx>(n, 0.0));
  for (std::size_t i = 0; i < take; ++i) {
    auto &x = res.vectors[i];
    for (std::size_t t = 0; t < steps; ++t) {
      const double s = ritz.vectors[i * steps + t];
      for (std::size_t p = 0; p < n; ++p)
        x[p] += s * q[t][p];
    }
    const double s = nrm(x);
    for (auto &v : x)
      v /= s;
  }
  return res;
}

} // namespace nlspec
