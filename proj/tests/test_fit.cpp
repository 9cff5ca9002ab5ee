#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "paircond/fit.hpp"

using namespace paircond;

TEST(PowerLaw, ExactQuadratic) {
  std::vector<double> x{0.1, 0.2, 0.4, 0.8}, y;
  for (double v : x) y.push_back(3.0 * v * v);
  auto f = fit_power_law(x, y);
  EXPECT_NEAR(f.exponent, 2.0, 1e-12);
  EXPECT_NEAR(f.prefactor, 3.0, 1e-12);
  EXPECT_FALSE(f.refused);
}

TEST(PowerLaw, LinearWithSmallNoise) {
  std::mt19937 rng(1);
  std::normal_distribution<double> nd(0.0, 1e-6);
  std::vector<double> x, y;
  for (double v = 0.01; v < 0.1; v += 0.01) {
    x.push_back(v);
    y.push_back(v + nd(rng));
  }
  EXPECT_NEAR(fit_power_law(x, y).exponent, 1.0, 0.01);
}

TEST(PowerLaw, ConstantDataIsRefused) {
  EXPECT_TRUE(fit_power_law({1, 2, 3}, {5, 5, 5}).refused);
  EXPECT_TRUE(fit_power_law({1, 2, 3}, {5, 5, 5}, FitModel::linear).refused);
}

TEST(PowerLaw, ScatteredDataIsRefused) {
  EXPECT_TRUE(fit_power_law({1, 2, 3, 4}, {1, 10, 1, 10}).refused);
}

TEST(PowerLaw, DegenerateInputsAreUsageErrors) {
  EXPECT_THROW(fit_power_law({1, 1, 1}, {1, 2, 3}), UsageError);
  EXPECT_THROW(fit_power_law({1, 2}, {1, 2}), UsageError);
  EXPECT_THROW(fit_power_law({1, 2, 3}, {1, -2, 3}), UsageError);
}

TEST(PowerLaw, LinearModelInterceptAndSlope) {
  auto f = fit_power_law({0.1, 0.2, 0.3}, {2.5, 2.7, 2.9}, FitModel::linear);
  EXPECT_NEAR(f.prefactor, 2.3, 1e-12);
  EXPECT_NEAR(f.exponent, 2.0, 1e-12);
}

TEST(Report, CsvUsesShortestRoundTripFloats) {
  ScanReport r;
  r.columns = {"h", "value"};
  r.add_row({0.1, 1.0 / 3.0});
  r.add_row({0.05, 2.0});
  r.sort_rows();
  EXPECT_EQ(r.to_csv(), "h,value\n0.05,2\n0.1,0.3333333333333333\n");
  EXPECT_EQ(std::stod(format_double(0.1 + 0.2)), 0.1 + 0.2);
  EXPECT_THROW(r.add_row({1.0}), UsageError);
}
