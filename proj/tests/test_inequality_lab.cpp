#include <gtest/gtest.h>

#include <cmath>

#include "cdlab/inequality_lab.hpp"
#include "test_support.hpp"

using namespace cdlab;
using cdlab::test::event;

TEST(MomentCheck, UniformLine) {
  const auto s = bernoulli_cube(1, 0.5);
  const auto r = moment_check(s, event({{0}}));
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.expectation, 1.14201270834387074, 1e-14);
  EXPECT_EQ(r.bound, 2.0);
  EXPECT_NEAR(r.margin, 2.0 - 1.14201270834387074, 1e-14);
  EXPECT_EQ(r.outcomes, 2u);
  EXPECT_EQ(r.uncertified, 0u);
}

TEST(MomentCheck, UniformSquareCorner) {
  const auto s = bernoulli_cube(2, 0.5);
  const auto r = moment_check(s, event({{0, 0}}));
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.expectation, 1.30419302601890278, 1e-14);
  EXPECT_EQ(r.bound, 4.0);
  ASSERT_EQ(r.phi_upper.size(), 4u);
  EXPECT_EQ(r.phi_upper[0], 0.0);
  EXPECT_NEAR(r.phi_upper[1], 1.0, 1e-15);
  EXPECT_NEAR(r.phi_upper[3], std::sqrt(2.0), 1e-15);
}

TEST(MomentCheck, FullEventHasZeroMargin) {
  const auto s = bernoulli_cube(3, 0.3);
  const auto r = moment_check(s, full_event(s));
  EXPECT_NEAR(r.expectation, 1.0, 1e-15);
  EXPECT_NEAR(r.bound, 1.0, 1e-15);
  EXPECT_NEAR(r.margin, 0.0, 1e-15);
  EXPECT_EQ(r.gap_budget, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(MomentCheck, ExpectationAndBoundAtLeastOne) {
  RandomSpaceOptions o;
  o.max_outcomes = 512;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto s = random_product_space(o, 41, k);
    const auto r = moment_check(s, random_event(s, 42, k));
    EXPECT_GE(r.expectation, 1.0);
    EXPECT_GE(r.bound, 1.0);
    EXPECT_GE(r.gap_budget, 0.0);
    EXPECT_TRUE(r.pass);
    EXPECT_LE(r.prob_a * r.expectation, 1.0 + r.gap_budget);
  }
}

TEST(MomentCheck, HigherOuterExponent) {
  auto s = bernoulli_cube(4, 0.4);
  s.outer_p = 3.0;
  const auto r = moment_check(s, event({{0, 0, 0, 0}, {1, 1, 0, 0}}));
  EXPECT_TRUE(r.pass);
  EXPECT_LE(r.prob_a * r.expectation, 1.0);
}

TEST(MomentCheck, CapExceededThrows) {
  EXPECT_THROW(moment_check(bernoulli_cube(6, 0.5), event({{0, 0, 0, 0, 0, 0}}), 1e-8, 10), SpaceError);
}

TEST(BaseCase, Values) {
  EXPECT_EQ(base_case_value(1.0), 1.0);
  EXPECT_EQ(base_case_value(0.0), 0.0);
  EXPECT_NEAR(base_case_value(0.5), 0.571006354171935371, 1e-15);
}

TEST(BaseCase, ScanPeaksAtOne) {
  for (std::size_t g : {2u, 11u, 10001u}) {
    const auto r = base_case_scan(g);
    EXPECT_NEAR(r.max_value, 1.0, 1e-9);
    EXPECT_EQ(r.argmax, 1.0);
    EXPECT_EQ(r.points, g);
  }
  EXPECT_THROW(base_case_scan(1), std::invalid_argument);
}

TEST(AlphaG, AtOne) {
  const auto v = alpha_g(1.0);
  EXPECT_EQ(v.alpha, 1.0);
  EXPECT_EQ(v.g, 1.0);
}

TEST(AlphaG, BranchPointTakesSecondBranch) {
  const auto v = alpha_g(std::exp(-0.5));
  EXPECT_EQ(v.alpha, 0.0);
  EXPECT_NEAR(v.g, 1.28402541668774148, 1e-15);
}

TEST(AlphaG, FirstBranch) {
  const auto v = alpha_g(std::exp(-0.25));
  EXPECT_NEAR(v.alpha, 0.5, 1e-15);
  EXPECT_NEAR(v.g, 1.20623024942098071, 1e-14);
}

TEST(AlphaG, ContinuousAtBranchPoint) {
  const double b = std::exp(-0.5);
  const double left = alpha_g(std::nextafter(b, 0.0)).g;
  const double right = alpha_g(std::nextafter(b, 1.0)).g;
  EXPECT_NEAR(left, right, 1e-12);
  EXPECT_NEAR(alpha_g(std::nextafter(b, 1.0)).alpha, 0.0, 1e-12);
}

TEST(AlphaG, RejectsOutOfRange) {
  EXPECT_THROW(alpha_g(0.0), std::invalid_argument);
  EXPECT_THROW(alpha_g(-1.0), std::invalid_argument);
  EXPECT_THROW(alpha_g(1.0 + 1e-12), std::invalid_argument);
}

TEST(AlphaG, AlphaInUnitIntervalAndGAtLeastOne) {
  for (int k = 1; k <= 1000; ++k) {
    const auto v = alpha_g(k / 1000.0);
    EXPECT_GE(v.alpha, 0.0);
    EXPECT_LE(v.alpha, 1.0);
    EXPECT_GE(v.g, 1.0);
  }
}

TEST(Claim, Values) {
  EXPECT_EQ(claim_value(1.0), 0.0);
  EXPECT_NEAR(claim_value(std::exp(-0.5)), -0.109443923599625092, 1e-15);
  EXPECT_NEAR(claim_value(0.9), -0.00115494590386205231, 1e-15);
  EXPECT_LT(claim_value(0.9), 0.0);
}

TEST(Claim, ScanStaysNonpositive) {
  for (std::size_t g : {2u, 100u, 10000u}) {
    const auto r = claim_scan(g);
    EXPECT_LE(r.scan.max_value, 1e-12);
    EXPECT_EQ(r.scan.points, g);
  }
  const auto r = claim_scan(10000);
  EXPECT_EQ(r.f_at_one, 0.0);
  EXPECT_NEAR(r.slope_at_one, 0.0, 1e-6);
  EXPECT_THROW(claim_scan(1), std::invalid_argument);
}

TEST(ProductBound, Values) {
  const auto f = [](double q, double t) { return (q + (1 - q) * (2 - t)) * (q + (1 - q) * t); };
  EXPECT_EQ(f(0.5, 0.0), 0.75);
  for (double q : {0.0, 0.3, 0.9}) EXPECT_EQ(f(q, 1.0), 1.0);
  for (double t : {0.0, 0.4, 1.0}) EXPECT_EQ(f(1.0, t), 1.0);
}

TEST(ProductBound, ScanStaysBelowOne) {
  for (std::size_t g : {2u, 101u, 1000u}) {
    const auto r = product_bound_scan(g);
    EXPECT_LE(r.max_value, 1e-12);
    EXPECT_EQ(r.points, g * g);
  }
  EXPECT_THROW(product_bound_scan(1), std::invalid_argument);
}

TEST(SliceCheck, ProductEventHoldsWithEquality) {
  const auto s = bernoulli_cube(3, 0.4);
  const auto a = event({{0, 0, 0}, {0, 0, 1}, {1, 1, 0}, {1, 1, 1}});
  const auto r = slice_inequalities_check(s, a);
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(r.skipped.empty());
  EXPECT_NEAR(r.max_violation_v, 0.0, 1e-6);
  EXPECT_EQ(r.v, 0u);
}

TEST(SliceCheck, DiagonalOfSquare) {
  const auto s = bernoulli_cube(2, 0.5);
  const auto r = slice_inequalities_check(s, event({{0, 0}, {1, 1}}));
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.checks, 4u);
  EXPECT_EQ(r.v, 0u);
  EXPECT_EQ(r.uncertified, 0u);
}

TEST(SliceCheck, EmptySliceIsSkipped) {
  const auto s = bernoulli_cube(2, 0.5);
  const auto r = slice_inequalities_check(s, event({{0, 1}, {1, 1}}));
  EXPECT_TRUE(r.pass);
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0], 0u);
  EXPECT_EQ(r.v, 1u);
  EXPECT_EQ(r.checks, 2u);
}

TEST(SliceCheck, ZeroProbabilitySlicesStillPickNonemptyHeavySlice) {
  const auto s = bernoulli_cube(2, 0.0);
  const auto r = slice_inequalities_check(s, event({{1, 1}}));
  EXPECT_EQ(r.v, 1u);
  EXPECT_TRUE(r.pass);
}

TEST(SliceCheck, RejectsBadInput) {
  EXPECT_THROW(slice_inequalities_check(bernoulli_cube(1, 0.5), event({{0}})), std::invalid_argument);
  EXPECT_THROW(slice_inequalities_check(bernoulli_cube(2, 0.5), Event{}), std::invalid_argument);
}

class SliceInstances : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SliceInstances, RandomThreeBlockInstancesPass) {
  RandomSpaceOptions o;
  o.min_blocks = 3;
  o.max_blocks = 3;
  const auto s = random_product_space(o, 51, GetParam());
  const auto r = slice_inequalities_check(s, random_event(s, 52, GetParam()));
  EXPECT_TRUE(r.pass) << "heavy " << r.max_violation_v << " other " << r.max_violation_w;
  EXPECT_EQ(r.uncertified, 0u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, SliceInstances, ::testing::Range<std::uint64_t>(0, 15));
