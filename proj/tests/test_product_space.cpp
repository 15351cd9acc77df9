#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "cdlab/numeric.hpp"
#include "cdlab/product_space.hpp"
#include "test_support.hpp"

using namespace cdlab;
using cdlab::test::event;
using cdlab::test::outcome;

TEST(ValidateSpace, TwoPointBlockIsValidWithUnitDiameter) {
  ProductSpace s{{test::two_point_block()}, 2.0};
  const auto d = validate_space(s);
  EXPECT_TRUE(d.valid());
  ASSERT_EQ(d.blocks.size(), 1u);
  EXPECT_DOUBLE_EQ(d.blocks[0].diameter, 1.0);
  EXPECT_EQ(d.outcome_count, 2u);
}

TEST(ValidateSpace, ReportsDiameterViolation) {
  ProductSpace s{{test::two_point_block(0.0, 2.0)}, 2.0};
  const auto d = validate_space(s);
  ASSERT_FALSE(d.valid());
  EXPECT_DOUBLE_EQ(d.blocks[0].diameter, 2.0);
  EXPECT_NE(d.violations[0].find("diameter"), std::string::npos);
  EXPECT_THROW(require_valid(s), SpaceError);
}

TEST(ValidateSpace, ReportsProbabilitySumViolation) {
  ProductSpace s{{BlockSpace{{{0.0}, {1.0}}, NormTag::L2, {0.3, 0.6}}}, 2.0};
  const auto d = validate_space(s);
  ASSERT_FALSE(d.valid());
  EXPECT_NEAR(d.blocks[0].prob_sum, 0.9, 1e-15);
  EXPECT_NE(d.violations[0].find("sum"), std::string::npos);
}

TEST(ValidateSpace, ReportsEveryViolationAtOnce) {
  ProductSpace s{{BlockSpace{{{0.0}, {2.0}}, NormTag::L1, {0.3, 0.6}}, BlockSpace{{}, NormTag::L2, {}}}, 1.5};
  const auto d = validate_space(s);
  EXPECT_GE(d.violations.size(), 4u);
}

TEST(ValidateSpace, DiameterUsesBlockNorm) {
  BlockSpace b{{{0.0, 0.0}, {0.6, 0.6}}, NormTag::L1, {0.5, 0.5}};
  EXPECT_NEAR(b.diameter(), 1.2, 1e-15);
  b.norm = NormTag::L2;
  EXPECT_NEAR(b.diameter(), 0.6 * std::sqrt(2.0), 1e-15);
  b.norm = NormTag::LInf;
  EXPECT_NEAR(b.diameter(), 0.6, 1e-15);
}

TEST(ValidateSpace, OutcomeCapIsReported) {
  const auto cube = bernoulli_cube(12, 0.5);
  EXPECT_TRUE(validate_space(cube).valid());
  EXPECT_FALSE(validate_space(cube, 1000).valid());
}

TEST(BernoulliCube, OneBlockUniform) {
  const auto s = bernoulli_cube(1, 0.5);
  ASSERT_EQ(s.num_blocks(), 1u);
  EXPECT_EQ(s.blocks[0].norm, NormTag::L2);
  EXPECT_EQ(s.blocks[0].probs, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(s.outer_p, 2.0);
}

TEST(BernoulliCube, AllOnesProbability) {
  const auto s = bernoulli_cube(3, 0.3);
  EXPECT_NEAR(outcome_probability(s, outcome({1, 1, 1})), 0.027, 1e-15);
}

TEST(BernoulliCube, DegenerateMeasure) {
  const auto s = bernoulli_cube(2, 0.0);
  EXPECT_EQ(outcome_probability(s, outcome({0, 0})), 1.0);
  EXPECT_EQ(outcome_probability(s, outcome({0, 1})), 0.0);
}

TEST(BernoulliCube, RejectsBadParameters) {
  EXPECT_THROW(bernoulli_cube(2, -0.1), SpaceError);
  EXPECT_THROW(bernoulli_cube(2, 1.5), SpaceError);
  EXPECT_THROW(bernoulli_cube(0, 0.5), SpaceError);
}

TEST(EnumerateOutcomes, UniformSquare) {
  const auto all = enumerate_outcomes(bernoulli_cube(2, 0.5));
  ASSERT_EQ(all.size(), 4u);
  for (const auto& w : all) EXPECT_EQ(w.weight, 0.25);
}

TEST(EnumerateOutcomes, BiasedSquareWeightsInLexOrder) {
  const auto all = enumerate_outcomes(bernoulli_cube(2, 0.3));
  ASSERT_EQ(all.size(), 4u);
  const double expected[] = {0.49, 0.21, 0.21, 0.09};
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(all[k].weight, expected[k], 1e-15);
  EXPECT_EQ(all[0].outcome, outcome({0, 0}));
  EXPECT_EQ(all[1].outcome, outcome({0, 1}));
  EXPECT_EQ(all[3].outcome, outcome({1, 1}));
}

TEST(EnumerateOutcomes, SinglePointBlock) {
  ProductSpace s{{BlockSpace{{{0.25}}, NormTag::L2, {1.0}}}, 2.0};
  const auto all = enumerate_outcomes(s);
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].weight, 1.0);
}

TEST(EnumerateOutcomes, CapExceededThrows) {
  EXPECT_THROW(enumerate_outcomes(bernoulli_cube(5, 0.5), 31), SpaceError);
  EXPECT_NO_THROW(enumerate_outcomes(bernoulli_cube(5, 0.5), 32));
}

TEST(EventProbability, Examples) {
  EXPECT_EQ(event_probability(bernoulli_cube(2, 0.5), event({{0, 0}})), 0.25);
  EXPECT_NEAR(event_probability(bernoulli_cube(2, 0.3), event({{1, 1}})), 0.09, 1e-15);
  const auto s = bernoulli_cube(3, 0.3);
  EXPECT_NEAR(event_probability(s, full_event(s)), 1.0, 1e-15);
  EXPECT_EQ(event_probability(s, Event{}), 0.0);
}

TEST(EventProbability, OutOfRangeIndexThrows) {
  const auto s = bernoulli_cube(2, 0.5);
  EXPECT_THROW(event_probability(s, event({{0, 2}})), SpaceError);
  EXPECT_THROW(event_probability(s, event({{0}})), SpaceError);
}

TEST(Event, DeduplicatesAndSorts) {
  const auto e = event({{1, 0}, {0, 1}, {1, 0}});
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e.outcomes()[0], outcome({0, 1}));
  EXPECT_TRUE(e.contains(outcome({1, 0})));
  EXPECT_FALSE(e.contains(outcome({1, 1})));
  EXPECT_EQ(e.find(outcome({1, 1})), e.size());
}

TEST(Norms, BlockAndDualNorms) {
  const std::vector<double> x{3.0, -4.0};
  EXPECT_EQ(block_norm(NormTag::L1, x), 7.0);
  EXPECT_EQ(block_norm(NormTag::L2, x), 5.0);
  EXPECT_EQ(block_norm(NormTag::LInf, x), 4.0);
  EXPECT_EQ(block_dual_norm(NormTag::L1, x), 4.0);
  EXPECT_EQ(block_dual_norm(NormTag::LInf, x), 7.0);
  EXPECT_EQ(block_dual_norm(NormTag::L2, x), 5.0);
  EXPECT_EQ(parse_norm_tag(to_string(NormTag::LInf)), NormTag::LInf);
  EXPECT_THROW(parse_norm_tag("L3"), SpaceError);
}

TEST(MixedDistance, CombinesBlocksWithOuterExponent) {
  ProductSpace s{{test::two_point_block(), BlockSpace{{{0.0, 0.0}, {0.5, 0.5}}, NormTag::L1, {0.5, 0.5}}}, 3.0};
  const auto x = outcome_point(s, outcome({1, 1}));
  const auto y = outcome_point(s, outcome({0, 0}));
  EXPECT_EQ(x, (std::vector<double>{1.0, 0.5, 0.5}));
  EXPECT_NEAR(mixed_distance(s, x, y, 3.0), std::cbrt(2.0), 1e-15);
  EXPECT_NEAR(mixed_distance(s, x, y, 2.0), std::sqrt(2.0), 1e-15);
}

TEST(SpaceJson, RoundTrip) {
  RandomSpaceOptions o;
  const auto s = random_product_space(o, 11, 3);
  const auto back = space_from_json(nlohmann::json::parse(space_to_json(s).dump()));
  ASSERT_EQ(back.num_blocks(), s.num_blocks());
  for (std::size_t i = 0; i < s.num_blocks(); ++i) {
    EXPECT_EQ(back.blocks[i].points, s.blocks[i].points);
    EXPECT_EQ(back.blocks[i].probs, s.blocks[i].probs);
    EXPECT_EQ(back.blocks[i].norm, s.blocks[i].norm);
  }
  EXPECT_EQ(back.outer_p, s.outer_p);
}

TEST(SpaceJson, ParsesDescriptionAndRejectsMalformed) {
  const auto j = nlohmann::json::parse(
      R"({"blocks": [{"points": [[0], [1]], "norm": "LINF", "probs": [0.25, 0.75]}], "outer_p": 3})");
  const auto s = space_from_json(j);
  EXPECT_EQ(s.blocks[0].norm, NormTag::LInf);
  EXPECT_EQ(s.outer_p, 3.0);
  EXPECT_THROW(space_from_json(nlohmann::json::parse(R"({"blocks": 3})")), SpaceError);
  EXPECT_THROW(load_space_file("/nonexistent/space.json"), SpaceError);
}

TEST(EventJson, RoundTrip) {
  const auto e = event({{0, 1}, {1, 0}});
  const auto back = event_from_json(nlohmann::json::parse(event_to_json(e).dump()));
  EXPECT_EQ(back.outcomes(), e.outcomes());
  EXPECT_THROW(event_from_json(nlohmann::json::parse(R"([[0, -1]])")), SpaceError);
}

// Properties over seeded random spaces.

class RandomSpaces : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomSpaces, GeneratedSpaceIsValid) {
  RandomSpaceOptions o;
  const auto s = random_product_space(o, 5, GetParam());
  EXPECT_TRUE(validate_space(s).valid());
  EXPECT_LE(s.outcome_count(), o.max_outcomes);
  EXPECT_GE(s.num_blocks(), 1u);
}

TEST_P(RandomSpaces, WeightsAreNonnegativeAndSumToOne) {
  RandomSpaceOptions o;
  o.max_outcomes = 4096;
  const auto s = random_product_space(o, 6, GetParam());
  KahanSum total;
  for (const auto& w : enumerate_outcomes(s)) {
    EXPECT_GE(w.weight, 0.0);
    total += w.weight;
  }
  EXPECT_NEAR(total.value(), 1.0, 1e-10);
}

TEST_P(RandomSpaces, ComplementProbabilitiesAddToOne) {
  RandomSpaceOptions o;
  o.max_outcomes = 4096;
  const auto s = random_product_space(o, 7, GetParam());
  const auto a = random_event(s, 8, GetParam());
  const auto c = complement(s, a);
  EXPECT_EQ(a.size() + c.size(), s.outcome_count());
  EXPECT_NEAR(event_probability(s, a) + event_probability(s, c), 1.0, 1e-10);
}

TEST_P(RandomSpaces, ProbabilityIsMonotoneUnderInclusion) {
  RandomSpaceOptions o;
  o.max_outcomes = 4096;
  const auto s = random_product_space(o, 9, GetParam());
  const auto a = random_event(s, 10, GetParam());
  const auto b = random_event(s, 11, GetParam());
  std::vector<Outcome> u = a.outcomes();
  u.insert(u.end(), b.outcomes().begin(), b.outcomes().end());
  const Event ab(std::move(u));
  EXPECT_LE(event_probability(s, a), event_probability(s, ab) + 1e-15);
  EXPECT_LE(event_probability(s, b), event_probability(s, ab) + 1e-15);
}

TEST_P(RandomSpaces, GenerationIsDeterministic) {
  RandomSpaceOptions o;
  const auto a = random_product_space(o, 12, GetParam());
  const auto b = random_product_space(o, 12, GetParam());
  EXPECT_EQ(space_to_json(a).dump(), space_to_json(b).dump());
  EXPECT_EQ(random_event(a, 1, 2).outcomes(), random_event(b, 1, 2).outcomes());
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomSpaces, ::testing::Range<std::uint64_t>(0, 40));
