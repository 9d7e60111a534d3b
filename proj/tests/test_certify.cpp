#include "nlspec/certify.hpp"
#include "nlspec/errors.hpp"
#include "nlspec/quadrature.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace nlspec;

namespace {

double gaussian_density(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
double cauchy_density(double x) { return 1.0 / (M_PI * (1.0 + x * x)); }

oracle::FnD potential_fn(const Potential &v) {
  return [v](const std::vector<double> &x) { return v({x[0], 0, 0}); };
}

// Normalized Gaussians R^{-d/2} exp(-|x|^2/R^2): the overlap integral in closed form.
double gaussian_overlap_oracle(int dim, double r1, double r2) {
  return std::pow(2.0 * r1 * r2 / (r1 * r1 + r2 * r2), 0.5 * dim);
}

DiscreteOperator t2_operator(const Grid &g, const Kernel &k = Kernel::gaussian(1)) {
  return DiscreteOperator::assemble(k, Potential::power_tail(1), g);
}

} // namespace

TEST_CASE("bump profile") {
  CHECK(BumpProfile::smooth_step(0.0) == 0.0);
  CHECK(BumpProfile::smooth_step(1.0) == 1.0);
  CHECK(BumpProfile::smooth_step(0.5) == doctest::Approx(0.5));
  for (int i = 0; i <= 600; ++i) {
    const double r = 3.0 * i / 600.0;
    const double c = BumpProfile::chi(r);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    if (r <= 0.5 || r >= 2.5)
      CHECK(c == 0.0);
    if (r >= 1.0 && r <= 2.0)
      CHECK(c == 1.0);
  }
  for (int d = 1; d <= 3; ++d) {
    const auto &p = BumpProfile::standard(d);
    const double h = p.plateau_height();
    CHECK(p(1.5) == h);
    // ||psi||^2 = h^2 |S^{d-1}| int chi(r)^2 r^{d-1} dr.
    const double sphere = d == 1 ? 2.0 : d == 2 ? 2.0 * M_PI : 4.0 * M_PI;
    const double mass = h * h * sphere *
                        oracle::integrate([&](double r) { return std::pow(BumpProfile::chi(r), 2) * std::pow(r, d - 1); },
                                          0.5, 2.5);
    CHECK(std::abs(mass - 1.0) < 1e-10);
  }
}

TEST_CASE("build_bump") {
  const Grid g(1, 256.0, 8192);
  for (double r : {1.0, 8.0, 64.0}) {
    const auto b = build_bump(g, r);
    CHECK(std::abs(norm(b) - 1.0) < 1e-12);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double x = std::abs(g.node(j)[0]);
      if (x <= 0.49 * r || x >= 2.51 * r)
        CHECK(b.values[j] == cplx(0.0));
    }
  }
  const auto plain = build_bump(g, 8.0);
  const auto mod = build_bump(g, 8.0, Point{1.5, 0, 0});
  double diff = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j)
    diff = std::max(diff, std::abs(std::abs(mod.values[j]) - std::abs(plain.values[j])));
  CHECK(diff < 1e-14);
  const auto shifted = build_bump(g, 8.0, {}, Point{30.0, 0, 0});
  CHECK(shifted.values[g.size() / 2] == cplx(0.0));

  CHECK(bump_max_radius(g) == doctest::Approx(0.95 * 256.0 / 2.5));
  try {
    build_bump(g, 200.0);
    FAIL("expected a sizing error");
  } catch (const SizingError &e) {
    CHECK(e.max_feasible() == doctest::Approx(bump_max_radius(g)));
  }
  CHECK_THROWS_AS(build_bump(g, 0.5), SizingError);
  CHECK(bump_min_radius(g) == doctest::Approx(16.0 * g.spacing()));

  const Grid g2(2, 32.0, 256);
  const auto b2 = build_bump(g2, 4.0);
  CHECK(std::abs(norm(b2) - 1.0) < 1e-12);
}

TEST_CASE("bump quadratic form lower bound") {
  // V = (1 + |x|)^-1 >= C |x|^-gamma with C = 1/2, gamma = 1 for |x| >= 1.
  const Grid g(1, 256.0, 1024);
  const auto op = t2_operator(g);
  const double h = BumpProfile::standard(1).plateau_height();
  const double meas = annulus_measure(1, 1.0);
  CHECK(meas == doctest::Approx(2.0));
  const double mu1 = op.constants().mu1;
  CHECK(mu1 == doctest::Approx(1.0));
  for (double r : {16.0, 32.0, 64.0}) {
    const double q = op.quadratic_form(build_bump(g, r), mu1);
    CHECK(q >= 0.5 * 0.5 * h * h * meas / r);
  }
}

TEST_CASE("scaled family") {
  const Grid g(1, 600.0, 2048);
  try {
    scaled_family(g, 2.0, 3, 3);
    FAIL("expected a sizing error");
  } catch (const SizingError &e) {
    CHECK(e.max_feasible() == 2.0);
  }
  const auto fam = scaled_family(g, 2.0, 3, 2);
  REQUIRE(fam.radii.size() == 2);
  CHECK(fam.radii[0] == 16.0);
  CHECK(fam.radii[1] == 128.0);
  for (const auto &m : fam.members)
    CHECK(std::abs(norm(m) - 1.0) < 1e-8);
  CHECK_THROWS_AS(scaled_family(g, 2.0, 2, 2), UsageError);

  const auto op = t2_operator(g);
  const auto c = gram_certificate(op, fam, op.constants().mu1);
  CHECK(c.overlap_deviation <= 1e-10);
  CHECK(c.hermiticity_a <= 1e-10);
  CHECK(c.hermiticity_b <= 1e-10);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      if (i != j)
        CHECK(c.potential_part(i, j) == cplx(0.0));
  CHECK(c.pass == (c.min_eig > 0.0));
}

TEST_CASE("compact kernel branch decouples the family") {
  const Grid g(1, 1024.0, 4096);
  const auto op = DiscreteOperator::assemble(Kernel::box(1), Potential::power_tail(1), g);
  CHECK_THROWS_AS(scaled_family(g, 4.0, 0, 2, {}, true), UsageError);
  const auto fam = scaled_family(g, 4.0, 2, 2, {}, true);
  CHECK(fam.radii[0] == 16.0);
  CHECK(fam.radii[1] == 256.0);
  // Gap between supports (8, 40) and (128, 640) is far wider than the kernel reach 1.
  const auto c = gram_certificate(op, fam, op.constants().mu1);
  const double scale = std::max(std::abs(c.gram_a(0, 0)), std::abs(c.gram_a(1, 1)));
  CHECK(std::abs(c.gram_a(0, 1)) <= 1e-14 * std::max(1.0, scale));
  CHECK(std::abs(c.gram_a(1, 0)) <= 1e-14 * std::max(1.0, scale));
  CHECK(c.potential_part(0, 1) == cplx(0.0));
  // The m = 1 ladder overlaps: neighbouring supports (R, 5R) and (4R, 20R).
  const auto tight = scaled_family(g, 4.0, 1, 2, {}, true);
  CHECK(tight.radii[1] == 4.0 * tight.radii[0]);
  CHECK(std::abs(plancherel_inner(tight.members[0], tight.members[1])) > 0.0);
}

TEST_CASE("off-diagonal decay in M") {
  const Grid g(1, 1600.0, 16384);
  for (const Kernel &k : {Kernel::gaussian(1), Kernel::cauchy(1)}) {
    const auto op = t2_operator(g, k);
    const bool heavy = k.name() == "cauchy";
    std::vector<double> ratios;
    std::vector<Certificate> certs;
    for (int m : {3, 4, 5}) {
      const auto fam = scaled_family(g, 0.5, m, 2);
      auto c = gram_certificate(op, fam, op.constants().mu1);
      add_family_diagnostics(c, fam, heavy ? std::nullopt : std::optional(hypothesis_from_moment(k)), DecayHypothesis(DecaySide::potential_at_infinity, 1.0, 0.5, 1.0));
      ratios.push_back(c.off_diagonal_ratio());
      certs.push_back(std::move(c));
    }
    INFO(k.name(), " ratios ", ratios[0], " ", ratios[1], " ", ratios[2]);
    if (heavy) {
      CHECK(ratios[1] < ratios[0]);
      CHECK(ratios[2] < ratios[1]);
    } else {
      // Disjoint supports under a Gaussian kernel leave only roundoff.
      CHECK(ratios[1] <= ratios[0] + 1e-13);
      CHECK(ratios[2] <= ratios[1] + 1e-13);
      CHECK(ratios[0] < 1e-12);
    }
    // |A_nm| <= C5 (R_n R_m)^{-alpha/2}: the constant fitted at M = 3 covers M = 4, 5
    // up to the roundoff floor.
    if (heavy)
      continue;
    const double c5 = certs[0].diagnostics["implied_c5"].get<double>();
    for (const auto &c : certs)
      for (const auto &row : c.diagnostics["off_diagonal"])
        CHECK(row["magnitude"].get<double>() <= std::max(c5, 1.0) * row["decay_shape"].get<double>() + 1e-15);
    for (const auto &row : certs[0].diagnostics["member_bounds"])
      CHECK(row.contains("holds"));
  }
}

TEST_CASE("off-diagonal trend for a slowly decaying symbol") {
  // Cauchy symbol: a_max - a_hat <= |xi|, alpha = 1.
  const Grid g(1, 1600.0, 16384);
  const auto op = t2_operator(g, Kernel::cauchy(1));
  const DecayHypothesis sym(DecaySide::symbol_near_zero, 1.0, 1.0, 1.0);
  double c5 = 0.0;
  std::vector<Certificate> certs;
  for (int m : {3, 4, 5}) {
    const auto fam = scaled_family(g, 0.5, m, 2);
    auto c = gram_certificate(op, fam, op.constants().mu1);
    add_family_diagnostics(c, fam, sym, std::nullopt);
    if (m == 3)
      c5 = c.diagnostics["implied_c5"].get<double>();
    certs.push_back(std::move(c));
  }
  CHECK(c5 > 0.0);
  for (const auto &c : certs)
    for (const auto &row : c.diagnostics["off_diagonal"])
      CHECK(row["magnitude"].get<double>() <= 1.5 * c5 * row["decay_shape"].get<double>());
}

TEST_CASE("gaussian family") {
  const Grid g(1, 512.0, 4096);
  CHECK(gaussian_overlap(1, 1.5, 5.0625) == doctest::Approx(gaussian_overlap_oracle(1, 1.5, 5.0625)).epsilon(1e-14));
  CHECK(gaussian_overlap(2, 2.0, 16.0) == doctest::Approx(gaussian_overlap_oracle(2, 2.0, 16.0)).epsilon(1e-14));
  const double quad = oracle::integrate(
      [](double x) { return std::sqrt(2.0 / M_PI) / std::sqrt(1.5 * 5.0625) * std::exp(-x * x / (1.5 * 1.5) - x * x / (5.0625 * 5.0625)); },
      -60.0, 60.0);
  CHECK(std::abs(quad - gaussian_overlap_oracle(1, 1.5, 5.0625)) < 1e-12);

  const auto fam = gaussian_family(g, 1.5, 2);
  REQUIRE(fam.radii.size() == 2);
  CHECK(fam.radii[1] == doctest::Approx(std::pow(1.5, 4)));
  for (const auto &m : fam.members)
    CHECK(std::abs(norm(m) - 1.0) < 1e-8);
  CHECK(std::abs(plancherel_inner(fam.members[0], fam.members[1]).real() - gaussian_overlap_oracle(1, 1.5, 5.0625)) < 1e-8);
  CHECK_THROWS_AS(gaussian_family(g, 3.0, 3), SizingError);
  CHECK_THROWS_AS(gaussian_family(Grid(1, 512.0, 1024), 1.5, 2), SizingError);
  CHECK_THROWS_AS(gaussian_family(g, 1.0, 2), UsageError);

  const auto off = gaussian_family(g, 2.0, 3, {2.0, 8.0, 32.0});
  CHECK(off.off_paper);
  CHECK(!fam.off_paper);

  // theta_21^2 tracks R_1^-3: the implied constant stays within a narrow band.
  const auto op = DiscreteOperator::assemble(Kernel::cauchy(1), Potential::power_tail(1, 1.0, 0.2), g);
  std::vector<double> implied, thetas;
  for (double r1 : {1.5, 2.0, 3.0}) {
    const auto f = gaussian_family(g, r1, 2);
    auto c = gram_certificate(op, f, op.constants().mu1, Theorem::heavy_tail);
    add_family_diagnostics(c, f, std::nullopt, std::nullopt);
    const auto &row = c.diagnostics["theta"].at(0);
    thetas.push_back(row["theta"].get<double>());
    implied.push_back(row["implied_constant"].get<double>());
    const auto &ov = c.diagnostics["overlaps"].at(0);
    CHECK(std::abs(ov["computed"].get<double>() - ov["closed_form"].get<double>()) < 1e-8);
  }
  CHECK(thetas[1] < thetas[0]);
  CHECK(thetas[2] < thetas[1]);
  const auto [lo, hi] = std::minmax_element(implied.begin(), implied.end());
  CHECK(*hi / *lo < 4.0);
}

TEST_CASE("gram certificate properties") {
  const Grid g(1, 512.0, 4096);
  SUBCASE("V = 0 at a_max fails") {
    for (const Kernel &k : {Kernel::gaussian(1), Kernel::cauchy(1), Kernel::box(1)}) {
      const auto op = DiscreteOperator::assemble(k, Potential::zero(1), g);
      for (const auto &fam : {scaled_family(g, 1.0, 3, 2), gaussian_family(g, 1.5, 2)}) {
        const auto c = gram_certificate(op, fam, op.constants().a_max);
        CHECK(!c.pass);
        CHECK(c.certified_count == 0);
        CHECK(c.min_eig <= 1e-14);
      }
    }
  }
  SUBCASE("reordering invariance") {
    const auto op = DiscreteOperator::assemble(Kernel::cauchy(1), Potential::power_tail(1, 1.0, 0.2), g);
    const auto fam = gaussian_family(g, 1.5, 2);
    TestFamily rev = fam;
    std::reverse(rev.members.begin(), rev.members.end());
    std::reverse(rev.radii.begin(), rev.radii.end());
    const auto a = gram_certificate(op, fam, 1.0);
    const auto b = gram_certificate(op, rev, 1.0);
    CHECK(a.pass == b.pass);
    CHECK(std::abs(a.min_eig - b.min_eig) <= 1e-12);
    CHECK(a.pass);
    // Independent solve on the same grid.
    EigsOptions o;
    o.k = a.certified_count + 2;
    CHECK(eigs_above(op, 1.0, o).pairs.size() >= a.certified_count);
  }
  SUBCASE("dependent family") {
    const auto op = DiscreteOperator::assemble(Kernel::gaussian(1), Potential::zero(1), g);
    TestFamily fam = scaled_family(g, 1.0, 3, 2);
    fam.members[1] = fam.members[0];
    CHECK_THROWS_AS(gram_certificate(op, fam, 1.0), ConditioningError);
  }
  SUBCASE("grid mismatch") {
    const auto op = DiscreteOperator::assemble(Kernel::gaussian(1), Potential::zero(1), Grid(1, 256.0, 4096));
    CHECK_THROWS_AS(gram_certificate(op, scaled_family(g, 1.0, 3, 2), 1.0), UsageError);
  }
}

TEST_CASE("heavy-tail ratio diagnostic") {
  const auto k = Kernel::cauchy(1);
  const auto v = Potential::power_tail(1, 1.0, 0.2);
  const auto rows = heavy_tail_ratios(k, v, {4, 16, 64, 256});
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double r = rows[i].radius;
    const double ell = oracle::ell_1d([](double xi) { return std::exp(-std::abs(xi)); }, 1.0 / r);
    const double avg = oracle::shell_average_1d([](double x) { return std::pow(1.0 + std::abs(x), -0.2); }, r);
    CHECK(std::abs(rows[i].ell - ell) <= 1e-8 * std::max(1.0, ell));
    CHECK(std::abs(rows[i].average - avg) <= 1e-8);
    CHECK(rows[i].ratio == doctest::Approx(ell / avg).epsilon(1e-7));
    if (i > 0)
      CHECK(rows[i].ratio < rows[i - 1].ratio);
  }
}

TEST_CASE("dual family") {
  const Grid g(1, 8.0, 1024);
  const auto fam = dual_family(g, 1.0, 2, 3, 1.25);
  REQUIRE(fam.radii.size() == 2);
  CHECK(fam.radii[0] == 10.0);
  CHECK(fam.radii[1] == 80.0);
  CHECK_THROWS_AS(dual_family(g, 1.0, 2, 3, 4.0), SizingError);

  const auto k = Kernel::exponential(1, 0.1);
  const auto op = DiscreteOperator::assemble(k, Potential::zero(1), g);
  std::vector<double> forms;
  for (std::size_t n = 0; n < 2; ++n) {
    const auto &m = fam.members[n];
    CHECK(std::abs(norm(m) - 1.0) < 1e-8);
    const double r = fam.radii[n];
    const auto spec = forward_transform(m);
    double total = 0.0, outside = 0.0, lower = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double xi = std::abs(g.frequency_node(j)[0]);
      const double w = std::norm(spec.values[j]);
      total += w;
      if (!(xi > r && xi < 2.0 * r))
        outside += w;
      // a_hat >= 50 |xi|^-2 once |xi| >= 10.
      if (xi > 0.0)
        lower += 50.0 / (xi * xi) * w;
    }
    CHECK(outside <= 1e-10 * total);
    const double form = op.quadratic_form(m);
    CHECK(form >= lower / total * (1.0 - 1e-10));
    forms.push_back(form);
  }
  // The form decays like R^-alpha with alpha = 2.
  const double ratio = forms[1] / forms[0];
  CHECK(ratio == doctest::Approx(std::pow(10.0 / 80.0, 2.0)).epsilon(0.5));
}

TEST_CASE("dual certificate and its dense confirmation") {
  const Grid g(1, 8.0, 1024);
  const auto v = Potential::rational_peak(1, 1.25, 3.0);
  const auto op = DiscreteOperator::assemble(Kernel::exponential(1, 0.1), v, g);
  DualSearch s;
  s.m_values = {3};
  const auto r = certify_dual(op, s);
  REQUIRE(r.certificate.has_value());
  CHECK(r.certificate->pass);
  CHECK(r.certificate->certified_count == 2);
  CHECK(r.certificate->shift == doctest::Approx(1.25));
  const Point peak = potential_peak(op);
  CHECK(peak[0] == 0.0);
  const auto dense = oracle::dense_eigenvalues(oracle::dense_operator(
      1, 8.0, 1024, [](double x) { return 5.0 * std::exp(-std::abs(x) / 0.1); }, potential_fn(v), 3));
  CHECK(oracle::count_above(dense, 1.25) >= 2);
}

TEST_CASE("gap certificate") {
  const auto k = Kernel::gaussian(1);
  const auto v0 = Potential::power_tail(1);
  const Grid g(1, 40.0, 512);
  const auto ref = solve_gap_reference(k, v0, g);
  REQUIRE(ref.u0.has_value());
  CHECK(ref.lambda0 > 1.0);
  CHECK(ref.lambda0 < 2.0);
  const auto dense0 = oracle::dense_eigenvalues(oracle::dense_operator(1, 40.0, 512, gaussian_density, potential_fn(v0), 3));
  CHECK(std::abs(dense0.front() - ref.lambda0) < 1e-7);

  SUBCASE("no perturbation") {
    const auto c = gap_certificate(k, v0, Potential::zero(1), g, ref);
    CHECK(c.delta == 0.0);
    CHECK(c.pass);
    REQUIRE(c.confirmed_value.has_value());
    CHECK(std::abs(*c.confirmed_value - ref.lambda0) < 1e-8);
  }
  SUBCASE("narrow barrier passes and is confirmed") {
    const auto v1 = Potential::box(1, 3.0, 0.5, {6.0, 0, 0});
    const auto c = gap_certificate(k, v0, v1, g, ref);
    CHECK(c.pass);
    CHECK(c.delta < c.margin);
    CHECK(c.delta <= c.delta_bound * (1.0 + 1e-12));
    CHECK(c.predicted_lo > c.a_max);
    CHECK(c.predicted_hi < c.theta_minus);
    REQUIRE(c.confirmed_value.has_value());
    CHECK(*c.confirmed_value > c.predicted_lo);
    CHECK(*c.confirmed_value < c.predicted_hi);
    const auto dense = oracle::dense_eigenvalues(
        oracle::dense_operator(1, 40.0, 512, gaussian_density, potential_fn(Potential::sum(v0, v1)), 3));
    CHECK(std::abs(oracle::nearest(dense, *c.confirmed_value) - *c.confirmed_value) < 1e-7);
  }
  SUBCASE("widening the barrier") {
    const auto scan = gap_width_scan(k, v0, 3.0, {6.0, 0, 0}, {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}, g, ref);
    for (std::size_t i = 1; i < scan.size(); ++i)
      CHECK(scan[i].certificate.delta >= scan[i - 1].certificate.delta);
    CHECK(scan.front().certificate.pass);
    const auto &wide = scan.back().certificate;
    CHECK(!wide.pass);
    CHECK(wide.delta >= wide.margin);
    CHECK(!wide.confirmed_value.has_value());
    for (const auto &e : scan)
      CHECK(e.certificate.pass == (e.certificate.delta < e.certificate.margin));
  }
  SUBCASE("hypothesis and prerequisite failures") {
    CHECK_THROWS_AS(gap_certificate(k, v0, Potential::box(1, 0.5, 0.5, {6.0, 0, 0}), g, ref), HypothesisError);
    CHECK_THROWS_AS(solve_gap_reference(k, Potential::zero(1), g), PrerequisiteError);
    CHECK_THROWS_AS(gap_certificate(k, v0, Potential::zero(1), g, GapReference{}), PrerequisiteError);
  }
}

TEST_CASE("scaled certificate is confirmed by an independent solve") {
  const Grid g(1, 1600.0, 16384);
  const auto op = t2_operator(g);
  const auto r = certify_scaled(op, ScaledSearch{});
  REQUIRE(r.certificate.has_value());
  CHECK(r.certificate->pass);
  CHECK(r.certificate->certified_count == 3);
  CHECK(!r.trace.empty());
  CHECK(r.trace.back().outcome == "pass");
  EigsOptions o;
  o.k = 5;
  const auto s = eigs_above(op, op.constants().mu1, o);
  CHECK(s.pairs.size() >= r.certificate->certified_count);
}
