#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdlab/rng.hpp"
#include "cdlab/sparsify.hpp"

using namespace cdlab;

namespace {

SampledSubspace identity_subspace(std::size_t n, double r = 1.0, double s = 1.5) {
  SampledSubspace sub;
  sub.basis = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  sub.mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  sub.r = r;
  sub.s = s;
  return sub;
}

SampledSubspace constants_subspace(std::size_t N, double r = 1.0, double s = 1.5) {
  SampledSubspace sub;
  sub.basis = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(N), 1);
  sub.mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(N), 1.0 / static_cast<double>(N));
  sub.r = r;
  sub.s = s;
  return sub;
}

SampledSubspace random_measure_subspace(std::uint64_t index) {
  CounterRng rng(81, "measure", index);
  const std::size_t N = 5 + rng.below(20);
  auto sub = gaussian_subspace(3, N, 1.0, 1.5, derive_seed(82, "basis", index));
  Eigen::VectorXd w(static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform() + 0.01;
  // One heavy atom of up to 0.9.
  const double heavy = 0.9 * rng.uniform();
  w *= (1.0 - heavy) / w.sum();
  w(0) += heavy;
  sub.mu = w / w.sum();
  return sub;
}

}  // namespace

TEST(Norms, ZeroVector) {
  const auto sub = gaussian_subspace(3, 50, 1.0, 1.5, 1);
  EXPECT_EQ(lr_norm(Eigen::VectorXd::Zero(3), sub), 0.0);
}

TEST(Norms, SingleAtom) {
  for (double r : {0.5, 1.0, 2.0}) {
    const auto sub = identity_subspace(8, r, std::min(1.5 * r, 2.0 * r));
    EXPECT_NEAR(lr_norm(Eigen::VectorXd::Unit(8, 3), sub), std::pow(1.0 / 8.0, 1.0 / r), 1e-15);
  }
}

TEST(Norms, SamePathForEqualExponents) {
  const auto sub = gaussian_subspace(3, 40, 1.0, 1.5, 2);
  const Eigen::Vector3d x(0.2, -1.0, 0.4);
  EXPECT_EQ(lu_norm(x, sub, 1.5), ls_norm(x, sub));
  EXPECT_EQ(lu_norm(x, sub, 1.0), lr_norm(x, sub));
  EXPECT_THROW(lr_norm(Eigen::Vector2d(1, 0), sub), std::invalid_argument);
}

TEST(Norms, HolderOrdering) {
  const auto sub = gaussian_subspace(4, 100, 1.0, 1.8, 3);
  CounterRng rng(4, "x");
  for (int k = 0; k < 50; ++k) {
    Eigen::Vector4d x;
    for (int j = 0; j < 4; ++j) x(j) = rng.normal();
    EXPECT_LE(lr_norm(x, sub), ls_norm(x, sub) * (1 + 1e-14));
  }
}

TEST(Validate, ReportsEachProblem) {
  auto sub = identity_subspace(3);
  EXPECT_TRUE(validate_subspace(sub).empty());
  auto bad = sub;
  bad.mu(0) = 0.5;
  EXPECT_FALSE(validate_subspace(bad).empty());
  bad = sub;
  bad.s = 2.5;
  EXPECT_FALSE(validate_subspace(bad).empty());
  bad = sub;
  bad.basis.col(2) = bad.basis.col(0) + bad.basis.col(1);
  EXPECT_FALSE(validate_subspace(bad).empty());
  EXPECT_THROW(require_valid(bad), std::invalid_argument);
}

TEST(Validate, JsonDescription) {
  const auto j = nlohmann::json::parse(R"({"basis": [[1, 0], [0, 1], [1, 1]], "mu": [0.25, 0.25, 0.5],
                                           "r": 1, "s": 1.5})");
  const auto sub = subspace_from_json(j);
  EXPECT_EQ(sub.atoms(), 3u);
  EXPECT_EQ(sub.dim(), 2u);
  EXPECT_DOUBLE_EQ(sub.p(), 3.0);
  EXPECT_THROW(subspace_from_json(nlohmann::json::parse(R"({"basis": []})")), std::invalid_argument);
  EXPECT_THROW(load_subspace_file("/nonexistent/basis.json"), std::invalid_argument);
}

TEST(EstimateK, IdentityPeaksAtCoordinates) {
  const std::size_t N = 6;
  const auto sub = identity_subspace(N);
  const auto est = estimate_K(sub, 16, 5);
  const double exact = std::pow(static_cast<double>(N), 1.0 - 1.0 / 1.5);
  EXPECT_NEAR(est.k_hat, exact, 1e-9);
  EXPECT_LE(est.k_hat, exact + 1e-12);
  // Exhaustive check over coordinate vectors.
  for (std::size_t j = 0; j < N; ++j) {
    const Eigen::VectorXd e = Eigen::VectorXd::Unit(N, j);
    EXPECT_NEAR(ls_norm(e, sub) / lr_norm(e, sub), exact, 1e-12);
  }
}

TEST(EstimateK, ConstantsGiveOne) {
  EXPECT_NEAR(estimate_K(constants_subspace(64), 4, 6).k_hat, 1.0, 1e-12);
}

TEST(EstimateK, AtLeastOneAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sub = gaussian_subspace(3, 200, 1.0, 1.5, seed);
    const auto a = estimate_K(sub, 8, seed);
    EXPECT_GE(a.k_hat, 1.0);
    EXPECT_EQ(a.k_hat, estimate_K(sub, 8, seed).k_hat);
  }
  EXPECT_THROW(estimate_K(identity_subspace(2), 0, 1), std::invalid_argument);
}

TEST(SplitAtoms, UniformAtCapIsUnchanged) {
  const auto sub = gaussian_subspace(2, 16, 1.0, 1.5, 7);
  const auto rep = split_atoms(sub, 1.0 / 16.0);
  EXPECT_EQ(rep.atoms_after, 16u);
  EXPECT_EQ(rep.subspace.basis, sub.basis);
  EXPECT_EQ(rep.subspace.mu, sub.mu);
}

TEST(SplitAtoms, HeavyAtomSplitsIntoEqualShares) {
  SampledSubspace sub;
  sub.basis = (Eigen::MatrixXd(2, 1) << 2.0, -1.0).finished();
  sub.mu = Eigen::Vector2d(0.75, 0.25);
  const auto rep = split_atoms(sub, 0.25);
  ASSERT_EQ(rep.atoms_after, 4u);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(rep.subspace.mu(i), 0.25);
  EXPECT_EQ(rep.source, (std::vector<std::size_t>{0, 0, 0, 1}));
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);
  EXPECT_NEAR(lr_norm(x, rep.subspace), lr_norm(x, sub), 1e-12);
  EXPECT_NEAR(ls_norm(x, rep.subspace), ls_norm(x, sub), 1e-12);
}

TEST(SplitAtoms, CapOneIsIdentity) {
  const auto sub = random_measure_subspace(0);
  const auto rep = split_atoms(sub, 1.0);
  EXPECT_EQ(rep.subspace.basis, sub.basis);
  EXPECT_EQ(rep.subspace.mu, sub.mu);
  EXPECT_THROW(split_atoms(sub, 0.0), std::invalid_argument);
}

class RandomMeasures : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomMeasures, SplitPreservesNormsAndRespectsCap) {
  const auto sub = random_measure_subspace(GetParam());
  const std::size_t M = sub.atoms() + GetParam() % 7;
  const double cap = 1.0 / static_cast<double>(M);
  const auto rep = split_atoms(sub, cap);
  EXPECT_LE(rep.max_atom, cap);
  EXPECT_LE(rep.atoms_after, 2 * M);
  EXPECT_TRUE(rep.within_two_m);
  EXPECT_TRUE(rep.atoms_within_two_over_n);
  EXPECT_NEAR(rep.subspace.mu.sum(), 1.0, 1e-12);
  CounterRng rng(83, "vectors", GetParam());
  for (int k = 0; k < 20; ++k) {
    Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    EXPECT_NEAR(lr_norm(x, rep.subspace), lr_norm(x, sub), 1e-10 * lr_norm(x, sub));
    EXPECT_NEAR(ls_norm(x, rep.subspace), ls_norm(x, sub), 1e-10 * ls_norm(x, sub));
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomMeasures, ::testing::Range<std::uint64_t>(0, 25));

TEST(BuildNet, LineGivesTwoAntipodalPoints) {
  const auto sub = gaussian_subspace(1, 30, 1.0, 1.5, 8);
  for (double eps : {0.1, 0.5, 0.9}) {
    const auto net = build_net(sub, eps, 9);
    ASSERT_EQ(net.points.size(), 2u);
    EXPECT_NEAR(net.points[0](0), -net.points[1](0), 1e-12);
    EXPECT_TRUE(net.certified);
  }
}

TEST(BuildNet, PlaneAtHalfIsSmallAndCertified) {
  const auto sub = gaussian_subspace(2, 200, 1.0, 1.5, 10);
  const auto net = build_net(sub, 0.5, 11);
  EXPECT_TRUE(net.certified);
  EXPECT_LE(net.points.size(), 48u);
  EXPECT_GE(net.probes, 10000u);
  for (const auto& x : net.points) EXPECT_NEAR(lr_norm(x, sub), 1.0, 1e-10);
  EXPECT_NEAR(net.theoretical_size, 16.0, 1e-12);
}

TEST(BuildNet, RadiusTwoNeedsOnePoint) {
  const auto sub = gaussian_subspace(3, 100, 1.0, 1.5, 12);
  const auto net = build_net(sub, 2.0, 13);
  EXPECT_EQ(net.points.size(), 1u);
  EXPECT_TRUE(net.certified);
}

TEST(BuildNet, CoversFreshDirections) {
  const auto sub = gaussian_subspace(3, 150, 1.0, 1.5, 14);
  const double eps = 0.4;
  const auto net = build_net(sub, eps, 15);
  ASSERT_TRUE(net.certified);
  CounterRng rng(16, "check");
  std::size_t misses = 0;
  for (int k = 0; k < 500; ++k) {
    Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    x /= lr_norm(x, sub);
    double best = 1e300;
    for (const auto& y : net.points) best = std::min(best, lr_norm(x - y, sub));
    if (best > eps) ++misses;
  }
  // A certified audit of 10^4 probes makes misses on 500 fresh probes rare.
  EXPECT_LE(misses, 2u);
}

TEST(BuildNet, RejectsBadInput) {
  EXPECT_THROW(build_net(gaussian_subspace(7, 100, 1.0, 1.5, 1), 0.5, 1), std::invalid_argument);
  EXPECT_THROW(build_net(gaussian_subspace(2, 100, 1.0, 1.5, 1), 0.0, 1), std::invalid_argument);
}

TEST(ChooseDeltaK, FixedInstance) {
  const auto d = choose_delta_k(4, 2048, 1.5, 1.0, 1.5, 0.25, 1.0);
  EXPECT_NEAR(d.eta, 0.00751403667129668441, 1e-15);
  EXPECT_NEAR(d.delta, 0.957289955365648541, 1e-13);
  EXPECT_NEAR(d.k_target, 3921.05965717769642, 1e-9);
  EXPECT_FALSE(d.delta_exceeds_one);
}

TEST(ChooseDeltaK, ScalingInAtomCount) {
  const double p = 3.0;
  const auto a = choose_delta_k(4, 1000, 1.3, 1.0, 1.5, 0.3, 1.0);
  const auto b = choose_delta_k(4, 1000 * std::pow(2.0, p), 1.3, 1.0, 1.5, 0.3, 1.0);
  EXPECT_NEAR(b.delta, a.delta / 2.0, 1e-14);
  EXPECT_NEAR(b.k_target, a.k_target * std::pow(2.0, p - 1.0), 1e-9);
  // k = 2 eta^{-1/p} n^{1/p} N^{1/q} K^r.
  const double q = 1.5;
  EXPECT_NEAR(a.k_target, 2.0 * std::pow(a.eta, -1.0 / p) * std::pow(4.0, 1.0 / p) * std::pow(1000.0, 1.0 / q) * 1.3,
              1e-9 * a.k_target);
}

TEST(ChooseDeltaK, BoundaryFlagsDeltaOne) {
  const auto probe = choose_delta_k(1, 1, 1.0, 1.0, 1.5, 0.25, 1.0);
  const double N = 100.0;
  const auto d = choose_delta_k(probe.eta * N, N, 1.0, 1.0, 1.5, 0.25, 1.0);
  EXPECT_NEAR(d.delta, 1.0, 1e-14);
  EXPECT_NEAR(d.k_target, 2.0 * N, 1e-11);
  const auto over = choose_delta_k(probe.eta * N * 1.01, N, 1.0, 1.0, 1.5, 0.25, 1.0);
  EXPECT_TRUE(over.delta_exceeds_one);
  EXPECT_THROW(choose_delta_k(4, 100, 1.0, 1.0, 1.5, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(choose_delta_k(4, 100, 1.0, 1.0, 1.5, 0.0, 1.0), std::invalid_argument);
}

TEST(ChooseDeltaK, AlgebraicIdentitiesOnRandomInputs) {
  CounterRng rng(17, "delta-inputs");
  for (int k = 0; k < 200; ++k) {
    const double n = 1 + rng.below(8), N = 100 + rng.below(100000), K = 1 + 2 * rng.uniform();
    const double r = 0.3 + 1.5 * rng.uniform(), s = r * (1.05 + 0.95 * rng.uniform());
    const double eps = 0.05 + 0.9 * rng.uniform(), c = 0.1 + 4 * rng.uniform();
    const auto d = choose_delta_k(n, N, K, r, s, eps, c);
    const double q = s / r, p = q / (q - 1.0);
    EXPECT_NEAR(d.k_target, 2.0 * N * d.delta, 1e-12 * d.k_target);
    EXPECT_NEAR(d.eta * std::pow(d.delta, p) * N / std::pow(K, r * p), n, 1e-12 * n);
  }
}

TEST(Selection, FullSelectionIsIsometric) {
  const auto sub = gaussian_subspace(3, 300, 1.0, 1.5, 18);
  const auto net = build_net(sub, 0.5, 19);
  ASSERT_TRUE(net.certified);
  const auto t = select_and_certify(sub, net, 1.0, 0.25, 20);
  EXPECT_EQ(t.k, 300u);
  EXPECT_TRUE(t.pass);
  EXPECT_NEAR(t.distortion, 1.0, 1e-12);
  EXPECT_EQ(t.scale, 1.0);
  for (double v : t.sums) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Selection, ConstantsFollowBinomialProportion) {
  const std::size_t N = 400;
  const double eps = 0.25;
  const auto sub = constants_subspace(N);
  const auto net = build_net(sub, eps, 21);
  ASSERT_EQ(net.points.size(), 2u);
  const SelectionCertifier cert(sub, net);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto t = cert.trial(0.5, eps, seed);
    const double prop = static_cast<double>(t.k) / N;
    EXPECT_NEAR(t.sums[0], prop, 1e-12);
    EXPECT_EQ(t.pass, std::abs(prop - 0.5) <= eps * 0.5 + 1e-15);
  }
}

TEST(Selection, ExactCenterOnOnePointNet) {
  const auto sub = constants_subspace(10);
  NetSpec net;
  net.points = {Eigen::VectorXd::Ones(1)};
  net.certified = true;
  const SelectionCertifier cert(sub, net);
  std::vector<std::uint8_t> mask(10, 0);
  for (int i = 0; i < 5; ++i) mask[i] = 1;
  const auto t = cert.evaluate_mask(mask, 0.5, 0.1);
  EXPECT_TRUE(t.pass);
  EXPECT_EQ(t.distortion, 1.0);
  EXPECT_EQ(t.k, 5u);
}

TEST(Selection, EmptySelectionFailsWithInfiniteDistortion) {
  const auto sub = constants_subspace(10);
  NetSpec net;
  net.points = {Eigen::VectorXd::Ones(1)};
  net.certified = true;
  const auto t = SelectionCertifier(sub, net).evaluate_mask(std::vector<std::uint8_t>(10, 0), 0.5, 0.1);
  EXPECT_FALSE(t.pass);
  EXPECT_TRUE(std::isinf(t.distortion));
}

TEST(Selection, RequiresCertifiedNet) {
  const auto sub = constants_subspace(10);
  NetSpec net;
  net.points = {Eigen::VectorXd::Ones(1)};
  EXPECT_THROW(select_and_certify(sub, net, 0.5, 0.1, 1), std::invalid_argument);
}

TEST(Selection, InvariantUnderBasisScaling) {
  const auto sub = gaussian_subspace(3, 400, 1.0, 1.5, 22);
  auto scaled = sub;
  scaled.basis *= 7.0;
  const auto n1 = build_net(sub, 0.5, 23);
  const auto n2 = build_net(scaled, 0.5, 23);
  ASSERT_EQ(n1.points.size(), n2.points.size());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = select_and_certify(sub, n1, 0.6, 0.25, seed);
    const auto b = select_and_certify(scaled, n2, 0.6, 0.25, seed);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_EQ(a.pass, b.pass);
    EXPECT_NEAR(a.distortion, b.distortion, 1e-12);
    for (std::size_t k = 0; k < a.sums.size(); ++k) EXPECT_NEAR(a.sums[k], b.sums[k], 1e-12);
  }
}

TEST(Selection, PassFrequencyMatchesBinomial) {
  const std::size_t N = 200;
  const double eps = 0.25, delta = 0.5;
  const auto sub = constants_subspace(N);
  const auto net = build_net(sub, eps, 24);
  const SelectionCertifier cert(sub, net);
  const std::size_t trials = 20000;
  std::size_t pass = 0;
  for (std::size_t t = 0; t < trials; ++t) pass += cert.trial(delta, eps, t).pass ? 1 : 0;
  const auto pmf = binomial_pmf(N, delta);
  double exact = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    if (std::abs(static_cast<double>(k) / N - delta) <= eps * delta) exact += pmf[k];
  }
  const double freq = static_cast<double>(pass) / trials;
  EXPECT_NEAR(freq, exact, 3.0 * std::sqrt(exact * (1 - exact) / trials));
}

TEST(BinomialPmf, SumsToOneAndMatchesSmallCase) {
  const auto pmf = binomial_pmf(4, 0.3);
  EXPECT_NEAR(pmf[2], 6 * 0.09 * 0.49, 1e-15);
  double s = 0.0;
  for (double v : binomial_pmf(500, 0.37)) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_EQ(binomial_pmf(3, 0.0)[0], 1.0);
  EXPECT_EQ(binomial_pmf(3, 1.0)[3], 1.0);
}

TEST(SelectionTail, ConstantsMatchBinomial) {
  const std::size_t N = 256;
  const auto sub = constants_subspace(N);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  const std::vector<double> c{0.02, 0.05, 0.08};
  const std::size_t trials = 20000;
  const auto rep = selection_tail_experiment(sub, x, 0.5, trials, c, 25, 1.0);
  const auto pmf = binomial_pmf(N, 0.5);
  for (const auto& row : rep.rows) {
    double exact = 0.0;
    for (std::size_t k = 0; k <= N; ++k) {
      if (std::abs(static_cast<double>(k) / N - 0.5) > row.c) exact += pmf[k];
    }
    EXPECT_NEAR(row.empirical, exact, 3.0 * std::sqrt(exact * (1 - exact) / trials) + 1e-12);
    EXPECT_FALSE(row.violated);
  }
}

TEST(SelectionTail, LargeDeviationNeverSeen) {
  const auto sub = constants_subspace(64);
  const auto rep = selection_tail_experiment(sub, Eigen::VectorXd::Ones(1), 0.3, 1000, {0.71}, 26, 1.0);
  EXPECT_EQ(rep.rows[0].empirical, 0.0);
}

TEST(SelectionTail, ChecksHypotheses) {
  SampledSubspace sub = constants_subspace(10);
  sub.mu.setConstant(0.05);
  sub.mu(0) = 0.55;
  EXPECT_THROW(selection_tail_experiment(sub, Eigen::VectorXd::Ones(1), 0.5, 10, {0.1}, 1, 1.0),
               std::invalid_argument);
  EXPECT_THROW(selection_tail_experiment(constants_subspace(10), Eigen::VectorXd::Constant(1, 2.0), 0.5, 10,
                                         {0.1}, 1, 1.0),
               std::invalid_argument);
}

TEST(Iterate, OneRoundIsOneSelection) {
  const auto sub = gaussian_subspace(2, 3000, 1.0, 1.5, 27);
  const auto rep = iterate_embedding(sub, 1, {0.3}, uniform_density_provider(8, 28), 1.0, 29);
  ASSERT_EQ(rep.rounds.size(), 1u);
  EXPECT_TRUE(rep.ok);
  const auto& r = rep.rounds[0];
  EXPECT_EQ(r.atoms_before, 3000u);
  EXPECT_LT(r.atoms_after, 3000u);
  EXPECT_TRUE(r.net_certified);
  EXPECT_FALSE(r.seeds.empty());
  EXPECT_LE(r.distortion, 1.3);
}

TEST(Iterate, GaussianRoundsShrinkWithinDistortionBudget) {
  const auto sub = gaussian_subspace(3, 4096, 1.0, 1.5, 30);
  const auto rep = iterate_embedding(sub, 3, {0.25}, uniform_density_provider(16, 31), 1.0, 32);
  ASSERT_TRUE(rep.ok);
  ASSERT_EQ(rep.rounds.size(), 3u);
  double budget = 1.0;
  for (const auto& r : rep.rounds) {
    budget *= 1.25;
    ASSERT_FALSE(r.no_op);
    EXPECT_LT(r.atoms_after, r.atoms_before);
    EXPECT_LE(r.cumulative_distortion, budget);
  }
  const auto again = iterate_embedding(sub, 3, {0.25}, uniform_density_provider(16, 31), 1.0, 32);
  EXPECT_EQ(iteration_csv(rep), iteration_csv(again));
}

TEST(Iterate, SmallInstanceIsNoOp) {
  const auto sub = gaussian_subspace(3, 50, 1.0, 1.5, 33);
  const auto rep = iterate_embedding(sub, 2, {0.25}, uniform_density_provider(4, 34), 1.0, 35);
  ASSERT_EQ(rep.rounds.size(), 2u);
  for (const auto& r : rep.rounds) {
    EXPECT_TRUE(r.no_op);
    EXPECT_EQ(r.atoms_after, 50u);
  }
}

TEST(Iterate, CsvFormat) {
  IterationReport rep;
  IterationRound r;
  r.round = 1;
  r.atoms_before = 10;
  r.atoms_after = 7;
  r.distortion = 0.1;
  rep.rounds.push_back(r);
  EXPECT_EQ(iteration_csv(rep), "round,N,k,distortion\n1,10,7,0.10000000000000001\n");
}
