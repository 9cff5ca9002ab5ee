#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <chrono>
#include <cmath>

#include "paircond/pairing.hpp"

using namespace paircond;

namespace {

RelativeOptions quick() {
  RelativeOptions o;
  o.couplings = false;
  return o;
}

// Even ground state of the 1D square well: k tan(k a) = kappa, k^2 + kappa^2 = V0.
double square_well_binding(double V0, double a) {
  double lo = 1e-12, hi = std::min(V0, std::pow(M_PI / (2 * a), 2)) - 1e-12;
  // f(k) increasing in k on (0, pi / 2a).
  auto f = [&](double k) { return k * std::tan(k * a) - std::sqrt(V0 - k * k); };
  lo = 1e-9;
  hi = std::min(std::sqrt(V0), M_PI / (2 * a)) - 1e-12;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (f(mid) < 0 ? lo : hi) = mid;
  }
  double k = 0.5 * (lo + hi);
  return V0 - k * k;
}

}  // namespace

TEST(Relative, PoschlTellerClosedForm) {
  auto t0 = std::chrono::steady_clock::now();
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 4001, 1, quick());
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_NEAR(gs.E_b, 1.0, 1e-4);
  double err = 0.0;
  const Grid& g = gs.alpha_star.grid;
  for (std::size_t k = 0; k < g.size(); ++k)
    err = std::max(err, std::abs(gs.alpha_star.values[k] - 1.0 / (std::cosh(g.point(k)[0]) * std::sqrt(2.0))));
  EXPECT_LE(err, 1e-4);
  EXPECT_NEAR(gs.rho_star, 1.0, 0.02);
  EXPECT_LT(secs, 5.0);
  // Even and positive.
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(gs.alpha_star.values[k], gs.alpha_star.values[g.size() - 1 - k], 1e-10);
    EXPECT_GE(gs.alpha_star.values[k], -1e-12);
  }
}

TEST(Relative, SquareWellMatchesTranscendentalRoot) {
  Potential V;
  V.kind = Potential::Kind::square_well;
  V.depth = 2.0;
  V.radius = 1.0;
  // Well edges sit midway between nodes so the jump costs only O(ds^2).
  const double ds = 1.0 / 199.5;
  auto gs = solve_relative(V, 4000 * ds, 8001, 1, quick());
  double eb = square_well_binding(2.0, 1.0);
  EXPECT_NEAR(gs.E_b, eb, 1e-4);
  EXPECT_NEAR(gs.rho_star, std::sqrt(eb), 0.02 * std::sqrt(eb));
}

TEST(Relative, RepulsivePotentialHasNoBoundState) {
  Potential V;
  V.kind = Potential::Kind::gaussian_well;
  V.depth = -1.0;
  EXPECT_THROW(solve_relative(V, 10.0, 801, 1, quick()), UsageError);
}

TEST(Relative, SmallBoxIsRejected) {
  EXPECT_THROW(solve_relative(Potential::poschl_teller_default(), 4.0, 801, 1, quick()), UsageError);
}

TEST(Relative, BoxSizeIndependence) {
  RelativeOptions o = quick();
  o.fit_decay = false;
  auto a = solve_relative(Potential::poschl_teller_default(), 14.0, 2801, 1, o);
  auto b = solve_relative(Potential::poschl_teller_default(), 21.0, 4201, 1, o);
  EXPECT_LT(std::abs(a.E_b - b.E_b), std::exp(-14.0));
}

TEST(Relative, SpectralGapAboveGroundState) {
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 2001, 1, quick());
  double second = relative_second_eigenvalue(gs);
  EXPECT_GT(second + gs.E_b, 0.9);
}

TEST(Relative, TwoDimensionalGaussianWellBinds) {
  Potential V;
  V.kind = Potential::Kind::gaussian_well;
  V.depth = 10.0;
  RelativeOptions o = quick();
  o.fit_decay = false;
  auto gs = solve_relative(V, 10.0, 101, 2, o);
  EXPECT_GT(gs.E_b, 0.0);
  EXPECT_NEAR(inner_product(gs.alpha_star, gs.alpha_star), 1.0, 1e-10);
}

TEST(DecayFit, GaussianFieldIsRejected) {
  RelativeGroundState gs;
  gs.L = 20.0;
  gs.alpha_star = RealField::from_function(Grid::uniform(1, -20, 20, 801),
                                           [](const Point3& x) { return std::exp(-x[0] * x[0] / 8); });
  EXPECT_THROW(fit_decay_rate(gs), UsageError);
}

TEST(Couplings, MatchAdaptiveQuadratureOracle) {
  using boost::math::quadrature::gauss_kronrod;
  auto ahat4 = [](double p) {
    double a = M_PI / (std::cosh(M_PI * p / 2) * std::sqrt(2.0));
    return a * a * a * a;
  };
  double g0 = gauss_kronrod<double, 61>::integrate(ahat4, -40.0, 40.0, 15, 1e-14) / (2 * M_PI);
  double g2 = gauss_kronrod<double, 61>::integrate([&](double p) { return p * p * ahat4(p); }, -40.0, 40.0, 15, 1e-14) /
              (2 * M_PI);
  // Frozen high-precision values.
  EXPECT_NEAR(g0, 3.2898681336964529, 1e-12);
  EXPECT_NEAR(g0 + g2, 3.7198241782619372, 1e-12);

  auto t0 = std::chrono::steady_clock::now();
  RelativeOptions o;
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 8001, 1, o);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_NEAR(gs.g_0 / g0, 1.0, 1e-5);
  EXPECT_NEAR(gs.g_bcs / (g0 + g2), 1.0, 1e-5);
  EXPECT_GE(gs.g_bcs, gs.E_b * gs.g_0);
  EXPECT_LT(secs, 5.0);
}

TEST(Couplings, DilationScaling) {
  // alpha(x / s) / sqrt(s) has Fourier transform sqrt(s) alpha^(s p), so g_0 scales as s.
  Grid g = Grid::uniform(1, -30, 30, 6001);
  auto field = [&](double s) {
    return RealField::from_function(g, [s](const Point3& x) { return 1.0 / (std::cosh(x[0] / s) * std::sqrt(2.0 * s)); });
  };
  double base = compute_couplings(field(1.0), 1.0).g_0;
  for (double s : {0.5, 2.0}) EXPECT_NEAR(compute_couplings(field(s), 1.0).g_0 / base, s, 1e-6);
}

TEST(Couplings, ZeroFieldAndBadParameters) {
  RealField z(Grid::uniform(1, -5, 5, 101), 0.0);
  auto c = compute_couplings(z, 1.0);
  EXPECT_EQ(c.g_bcs, 0.0);
  EXPECT_EQ(c.g_0, 0.0);
  auto f = RealField::from_function(z.grid, [](const Point3& x) { return std::exp(-x[0] * x[0]); });
  EXPECT_THROW(compute_couplings(f, 1.0, 100.0), UsageError);
  EXPECT_THROW(compute_couplings(f, 1.0, 10.0, 100), UsageError);
}

TEST(Cutoff, ProfileShape) {
  EXPECT_EQ(chi_profile(0.0), 1.0);
  EXPECT_EQ(chi_profile(1.0), 1.0);
  EXPECT_EQ(chi_profile(-0.7), 1.0);
  EXPECT_EQ(chi_profile(1.5), 0.0);
  EXPECT_EQ(chi_profile(3.0), 0.0);
  EXPECT_NEAR(chi_profile(1.25), 0.5, 1e-15);
  EXPECT_EQ(chi_profile(1.2), chi_profile(-1.2));
}

TEST(Cutoff, DiagnosticsDecayExponentially) {
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 4001);
  auto d10 = cutoff_diagnostics(gs, 10.0, 0.05);
  EXPECT_LE(d10.max_residual(), 1e-2);
  std::vector<CutoffDiagnostics> ds;
  for (double phi : {3.0, 4.0, 5.0, 6.0}) ds.push_back(cutoff_diagnostics(gs, phi, 0.05));
  double C = 0.0;
  for (const auto& d : ds) C = std::max(C, d.max_residual() / d.decay_scale);
  for (std::size_t i = 1; i < ds.size(); ++i) {
    EXPECT_LT(ds[i].norm_residual, ds[i - 1].norm_residual);
    EXPECT_LT(ds[i].g0_residual, ds[i - 1].g0_residual);
    EXPECT_LT(ds[i].gbcs_residual, ds[i - 1].gbcs_residual);
    EXPECT_LT(ds[i].energy_residual, ds[i - 1].energy_residual);
  }
  // A single constant bounds every residual, including far larger phi.
  for (double phi : {8.0, 10.0, 12.0}) {
    auto d = cutoff_diagnostics(gs, phi, 0.05);
    EXPECT_LE(d.max_residual(), C * d.decay_scale);
  }
}

TEST(Cutoff, UncutStateIsAnEigenfunction) {
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 4001);
  EXPECT_NEAR(relative_energy(gs, gs.alpha_star), 0.0, 1e-8);
  auto c = make_cutoff_state(gs, 5.0, 0.1);
  EXPECT_LE(l2_norm(c.a_field), 0.1 * l2_norm(gs.alpha_star) + 1e-15);
  const Grid& g = c.a_field.grid;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (std::abs(g.point(k)[0]) > 7.5) EXPECT_EQ(c.a_field.values[k], 0.0);
}

TEST(PotentialJson, RoundTripAndValidation) {
  auto p = Potential::from_json({{"kind", "square_well"}, {"depth", 3.0}, {"radius", 0.5}});
  EXPECT_EQ(p(0.2), -3.0);
  EXPECT_EQ(p(0.7), 0.0);
  auto q = Potential::from_json(p.to_json());
  EXPECT_EQ(q(0.2), -3.0);
  EXPECT_THROW(Potential::from_json({{"kind", "square_well"}, {"deep", 3.0}}), UsageError);
  EXPECT_THROW(Potential::from_json({{"kind", "morse"}}), UsageError);
  auto t = Potential::from_json({{"kind", "table"}, {"r", {0.0, 1.0, 2.0}}, {"v", {-2.0, -1.0, 0.0}}});
  EXPECT_DOUBLE_EQ(t(0.5), -1.5);
  EXPECT_DOUBLE_EQ(t(-1.5), -0.5);
  EXPECT_DOUBLE_EQ(t(9.0), 0.0);
}
