#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace cdlab {

/// n-dimensional subspace of L_r({1..N}, mu), given by an N x n basis table.
struct SampledSubspace {
  Eigen::MatrixXd basis;
  Eigen::VectorXd mu;
  double r = 1.0;
  double s = 1.5;

  std::size_t atoms() const { return static_cast<std::size_t>(basis.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
  /// q = s / r.
  double q() const { return s / r; }
  /// Conjugate of q.
  double p() const { return q() / (q() - 1.0); }
};

/// Lists violated invariants (weights, rank at 1e-10, 0 < r < s <= 2r).
std::vector<std::string> validate_subspace(const SampledSubspace& sub);
/// Throws std::invalid_argument when validate_subspace reports anything.
void require_valid(const SampledSubspace& sub);

SampledSubspace subspace_from_json(const nlohmann::json& j);
SampledSubspace load_subspace_file(const std::filesystem::path& path);

/// Standard Gaussian basis under the uniform measure.
SampledSubspace gaussian_subspace(std::size_t n, std::size_t num_atoms, double r, double s,
                                  std::uint64_t seed);

/// ||sum_j x_j basis_j||_{L_u(mu)}.
double lu_norm(const Eigen::VectorXd& x, const SampledSubspace& sub, double u);
double lr_norm(const Eigen::VectorXd& x, const SampledSubspace& sub);
double ls_norm(const Eigen::VectorXd& x, const SampledSubspace& sub);

struct KEstimate {
  double k_hat = 1.0;
  Eigen::VectorXd argmax;
  std::size_t evaluations = 0;
};

/// Lower estimate of sup ||x||_s / ||x||_r: coordinate directions plus
/// `budget` random Gaussian starts, each refined by coordinate ascent with a
/// halving step until no move gains more than 1e-9.
KEstimate estimate_K(const SampledSubspace& sub, std::size_t budget, std::uint64_t seed);

struct SplitReport {
  SampledSubspace subspace;
  std::size_t atoms_before = 0;
  std::size_t atoms_after = 0;
  double cap = 1.0;
  double max_atom = 0.0;
  /// Output row k came from input row source[k].
  std::vector<std::size_t> source;
  /// With cap = 1 / M: N' <= 2M and every atom <= 2 / N'.
  bool within_two_m = false;
  bool atoms_within_two_over_n = false;
};

/// Replaces each atom heavier than cap by ceil(mu / cap) equal copies.
SplitReport split_atoms(const SampledSubspace& sub, double cap);

struct NetSpec {
  double epsilon = 0.0;
  /// Coefficient vectors with lr_norm 1.
  std::vector<Eigen::VectorXd> points;
  bool certified = false;
  std::size_t probes = 0;
  std::size_t audit_rounds = 0;
  /// (2 / epsilon)^(n r).
  double theoretical_size = 0.0;
};

struct NetOptions {
  std::size_t probe_count = 10000;
  /// The initial pool of pool_factor * probe_count directions is covered at
  /// radius build_ratio * epsilon; audits use epsilon itself.
  std::size_t pool_factor = 4;
  double build_ratio = 0.85;
  std::size_t size_cap = 200000;
  std::size_t max_audit_rounds = 12;
};

/// Greedy net on random unit directions, grown until a fresh probe sample is
/// covered within epsilon in ||.||_r (r-th power metric when r < 1).
NetSpec build_net(const SampledSubspace& sub, double epsilon, std::uint64_t seed,
                  const NetOptions& options = {});

struct DeltaChoice {
  double eta = 0.0;
  double delta = 0.0;
  double k_target = 0.0;
  /// delta > 1: the instance is too small for the formula.
  bool delta_exceeds_one = false;
};

/// eta = c eps^{rp} / (r log(2/eps)), delta = (n K^{rp} / (eta N))^{1/p}, k = 2 delta N.
DeltaChoice choose_delta_k(double n, double num_atoms, double K, double r, double s,
                           double epsilon, double c_universal);

struct SelectionTrial {
  std::uint64_t seed = 0;
  double delta = 0.0;
  std::vector<std::uint8_t> mask;
  std::size_t k = 0;
  /// S(x) = sum over the mask of mu(i) |x(i)|^r, one per net point.
  std::vector<double> sums;
  double max_deviation = 0.0;
  double distortion = 1.0;
  /// delta^(1/r).
  double scale = 1.0;
  bool pass = false;
};

/// Caches mu(i) |x(i)|^r for every net point so repeated trials cost one mask pass.
class SelectionCertifier {
 public:
  SelectionCertifier(const SampledSubspace& sub, const NetSpec& net);

  SelectionTrial trial(double delta, double epsilon, std::uint64_t seed) const;
  SelectionTrial evaluate_mask(std::vector<std::uint8_t> mask, double delta, double epsilon) const;

 private:
  double r_;
  Eigen::MatrixXd weights_;  // atoms x net points
};

SelectionTrial select_and_certify(const SampledSubspace& sub, const NetSpec& net, double delta,
                                  double epsilon, std::uint64_t seed);

/// Mask of independent Bernoulli(delta) draws for the given seed.
std::vector<std::uint8_t> bernoulli_mask(std::size_t num_atoms, double delta, std::uint64_t seed);

struct SelectionTailRow {
  double c = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
  bool violated = false;
};

struct SelectionTailReport {
  std::size_t trials = 0;
  double K = 1.0;
  std::vector<SelectionTailRow> rows;
};

/// Exceedance frequency of |sum_i d_i mu(i) |x(i)|^r - delta| > c over seeded
/// trials against 4 exp(-c^p N / (8 K^{rp})). Requires mu(i) <= 2/N and
/// lr_norm(x) = 1.
SelectionTailReport selection_tail_experiment(const SampledSubspace& sub, const Eigen::VectorXd& x,
                                              double delta, std::size_t trials,
                                              const std::vector<double>& c_grid, std::uint64_t seed,
                                              double K);

/// P(Binomial(N, delta) = k) for k = 0..N.
std::vector<double> binomial_pmf(std::size_t n, double delta);

struct Density {
  Eigen::VectorXd mu;
  double K = 1.0;
};

/// Supplies a measure and constant with ||x||_s <= K ||x||_r on the subspace.
using DensityProvider = std::function<Density(const SampledSubspace&)>;

/// Uniform measure with K from estimate_K(budget).
DensityProvider uniform_density_provider(std::size_t k_budget, std::uint64_t seed);

struct IterationRound {
  std::size_t round = 0;
  std::size_t atoms_before = 0;
  std::size_t atoms_after = 0;
  double K = 1.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double k_target = 0.0;
  std::size_t net_size = 0;
  bool net_certified = false;
  double distortion = 1.0;
  double cumulative_distortion = 1.0;
  double scale = 1.0;
  std::vector<std::uint64_t> seeds;
  bool no_op = false;
  bool pass = false;
};

struct IterationOptions {
  std::size_t max_retries = 32;
  NetOptions net;
};

struct IterationReport {
  std::vector<IterationRound> rounds;
  bool ok = false;
};

/// Per round: change density, split atoms to 2/N, build a net, choose delta,
/// retry selections until one certifies, then restrict to the selected atoms
/// with mu renormalized. A round whose delta is at least 1 is a no-op.
IterationReport iterate_embedding(const SampledSubspace& sub, std::size_t rounds,
                                  const std::vector<double>& epsilon_per_round,
                                  const DensityProvider& density, double c_universal,
                                  std::uint64_t seed, const IterationOptions& options = {});

/// round, N, k, distortion with 17 significant digits.
std::string iteration_csv(const IterationReport& report);
void write_iteration_csv(const IterationReport& report, const std::filesystem::path& path);

}  // namespace cdlab
