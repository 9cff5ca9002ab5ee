#include <gtest/gtest.h>

#include <cmath>

#include "paircond/twobody.hpp"

using namespace paircond;

namespace {

TwoBodyProblem unit_problem(double h, int n, std::optional<double> W_const = std::nullopt) {
  Grid g = Grid::uniform(1, 0.0, 1.0, n);
  TwoBodyProblem p{interval_mask(g, 0.0, 1.0), Potential::poschl_teller_default(), std::nullopt, h};
  if (W_const) p.W = RealField(g, *W_const);
  return p;
}

// Lowest Dirichlet eigenvalue of the second difference on n nodes of [0, 1].
double lattice_dirichlet(int n) {
  double dx = 1.0 / (n - 1);
  return 4.0 / (dx * dx) * std::pow(std::sin(M_PI * dx / 2.0), 2);
}

}  // namespace

TEST(TwoBodyOperator, SymmetricOnProductMask) {
  auto p = unit_problem(0.1, 51, 0.7);
  auto A = twobody_operator(p);
  EXPECT_EQ(A.mask.count(), 49u * 49u);
  SparseMatrix K = A.to_sparse();
  SparseMatrix T = K.transpose();
  EXPECT_LE((K - T).norm(), 1e-14 * K.norm());
}

TEST(TwoBodyOperator, RejectsUnsupportedProblems) {
  Grid g2 = Grid::uniform(2, 0.0, 1.0, 11);
  EXPECT_THROW(twobody_operator(TwoBodyProblem{box_mask(g2, {0, 0}, {1, 1}), Potential{}, std::nullopt, 0.5}),
               UsageError);
  EXPECT_THROW(twobody_operator(unit_problem(0.1, 41)), UsageError);   // h spans 4 spacings
  EXPECT_THROW(twobody_operator(unit_problem(0.5, 700)), UsageError);  // product grid too large
  EXPECT_THROW(twobody_operator(unit_problem(1.5, 101)), UsageError);
}

TEST(TwoBodyGround, FreePairIsSeparable) {
  auto p = unit_problem(0.1, 101);
  p.V.kind = Potential::Kind::square_well;
  p.V.depth = 0.0;
  double e = ground_energy(p).eigenvalue;
  EXPECT_NEAR(e, p.h * p.h * lattice_dirichlet(101), 1e-10);
  EXPECT_NEAR(e, p.h * p.h * M_PI * M_PI, 1e-5);
}

TEST(TwoBodyGround, ConstantWShiftsByHSquaredC) {
  const double c = 3.0;
  double e0 = ground_energy(unit_problem(0.1, 101)).eigenvalue;
  double e1 = ground_energy(unit_problem(0.1, 101, c)).eigenvalue;
  EXPECT_NEAR(e1 - e0, 0.01 * c, 1e-10);
}

TEST(TwoBodyGround, ExchangeSymmetricAndPositive) {
  auto p = unit_problem(0.1, 101);
  auto r = ground_energy(p);
  const std::size_t n = 101;
  double vmax = 0.0;
  for (double v : r.eigenvector.values) vmax = std::max(vmax, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      EXPECT_NEAR(r.eigenvector.values[i * n + j], r.eigenvector.values[j * n + i], 1e-8 * vmax);
      EXPECT_GE(r.eigenvector.values[i * n + j], -1e-12 * vmax);
    }
}

TEST(TwoBodyGround, MatchesLeadingAsymptotics) {
  TwoBodyScanConfig c;
  const double h = 0.05;
  auto fine = c.at(h), coarse = c.at(h, 1.5);
  double e = ground_energy(fine).eigenvalue, ec = ground_energy(coarse).eigenvalue;
  double ratio = coarse.mask.grid().spacing(0) / fine.mask.grid().spacing(0);
  double disc = std::abs(e - ec) / (ratio * ratio - 1.0);
  EXPECT_NEAR(e, -1.0 + h * h * M_PI * M_PI / 4.0, 3.0 * h * h * h + disc);
}

TEST(TwoBodyGround, GridConvergenceAtFixedH) {
  TwoBodyScanConfig c;
  c.nodes_per_h = 16;
  double a = ground_energy(c.at(0.1)).eigenvalue;
  double b = ground_energy(c.at(0.1, 2.0 / 3.0)).eigenvalue;
  EXPECT_EQ(c.at(0.1, 2.0 / 3.0).mask.grid().n(0), 241);
  EXPECT_LT(std::abs(a - b), 1e-4);
}

TEST(TwoBodyBounds, DecoupledValueClosedForm) {
  TwoBodyScanConfig c;
  c.nodes_per_h = 20;
  for (double h : {0.1, 0.05}) {
    auto p = c.at(h);
    // Lattice binding error is O((dx / h)^2) = 2.5e-3 relative.
    EXPECT_NEAR(decoupled_lower_bound(p), -1.0 + h * h * M_PI * M_PI / 4.0, 2e-4);
  }
}

TEST(TwoBodyBounds, TrialSandwichAndSupport) {
  TwoBodyScanConfig c;
  for (double h : {0.1, 0.05}) {
    auto p = c.at(h);
    auto t = twobody_trial_upper_bound(p, 1.5);
    double e = ground_energy(p).eigenvalue, lower = decoupled_lower_bound(p);
    double E_b = twobody_relative(p).E_b;
    EXPECT_LE(e, t.value);
    EXPECT_LE(lower, t.value);
    EXPECT_GT(t.dc_minus, M_PI * M_PI / 4.0);
    EXPECT_LE(t.value, -E_b + h * h * t.dc_minus + h * h * h);
    auto pm = product_mask(p.mask);
    for (std::size_t k = 0; k < pm.grid().size(); ++k) {
      if (!pm.inside(k)) EXPECT_EQ(t.trial.values[k], 0.0);
      // Nodes next to the product boundary carry no trial mass either.
      if (pm.inside(k) && pm.dist(k) <= pm.grid().spacing(0) + 1e-12) EXPECT_EQ(t.trial.values[k], 0.0);
    }
  }
}

TEST(TwoBodyBounds, TrialRejectsShortCutoff) {
  TwoBodyScanConfig c;
  auto p = c.at(0.1);
  EXPECT_THROW(twobody_trial_upper_bound(p, 0.1), UsageError);
  EXPECT_THROW(twobody_trial_upper_bound(p, 10.0), UsageError);
}

TEST(TwoBodyScan, SlopeApproachesDirichletConstant) {
  TwoBodyScanConfig c;
  auto r = asymptotic_scan(c, {0.1, 0.07, 0.05, 0.035});
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.columns[4], "slope_partial");
  EXPECT_LT(std::abs(r.summary["D_c_fit"].get<double>() - M_PI * M_PI / 4.0), 0.03 * M_PI * M_PI / 4.0);
  EXPECT_TRUE(r.summary["sandwich"].get<bool>());
  EXPECT_GE(r.summary["nu_hat"].get<double>(), 0.4);
}

TEST(TwoBodyScan, SlopeTracksExternalField) {
  TwoBodyScanConfig c;
  c.W = [](double x) { return 10.0 * std::exp(-std::pow((x - 0.5) / 0.15, 2)); };
  auto r = asymptotic_scan(c, {0.1, 0.07, 0.05, 0.035});
  Grid g = Grid::uniform(1, 0.0, 1.0, 2001);
  auto W = RealField::from_function(g, [&](const Point3& x) { return c.W(x[0]); });
  double dc = compute_dc(interval_mask(g, 0.0, 1.0), W).eigenvalue;
  EXPECT_LT(std::abs(r.summary["D_c_fit"].get<double>() - dc), 0.03 * dc);
  EXPECT_TRUE(r.summary["sandwich"].get<bool>());
}

TEST(TwoBodyScan, RejectsBadLists) {
  TwoBodyScanConfig c;
  EXPECT_THROW(asymptotic_scan(c, {0.05, 0.07, 0.1}), UsageError);
  EXPECT_THROW(asymptotic_scan(c, {0.1, 0.07}), UsageError);
  c.nodes_per_h = 6;  // the Richardson grid would span fewer than 5 nodes per h
  EXPECT_THROW(asymptotic_scan(c, {0.1, 0.07, 0.05}), UsageError);
}
