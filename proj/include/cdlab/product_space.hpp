#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cdlab {

/// Thrown when a space, event or outcome violates its invariants.
class SpaceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr std::uint64_t kDefaultOutcomeCap = std::uint64_t{1} << 20;

enum class NormTag { L1, L2, LInf };

std::string to_string(NormTag tag);
NormTag parse_norm_tag(const std::string& text);

/// Norm of x under the tag.
double block_norm(NormTag tag, std::span<const double> x);
/// Norm of x in the dual of the tagged norm (L1 <-> LInf, L2 self-dual).
double block_dual_norm(NormTag tag, std::span<const double> x);

/// One factor of the product: a finite point set of diameter <= 1 with a
/// probability on it.
struct BlockSpace {
  std::vector<std::vector<double>> points;
  NormTag norm = NormTag::L2;
  std::vector<double> probs;

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }
  double diameter() const;
};

/// Omega = Omega_1 x ... x Omega_n inside the l_p-sum of the block spaces.
struct ProductSpace {
  std::vector<BlockSpace> blocks;
  double outer_p = 2.0;

  std::size_t num_blocks() const { return blocks.size(); }
  std::size_t ambient_dim() const;
  /// Product of block sizes, saturating at UINT64_MAX.
  std::uint64_t outcome_count() const;
};

/// One point index per block.
struct Outcome {
  std::vector<std::uint32_t> index;

  friend auto operator<=>(const Outcome&, const Outcome&) = default;
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

/// A deduplicated, lexicographically sorted set of outcomes.
class Event {
 public:
  Event() = default;
  explicit Event(std::vector<Outcome> outcomes);

  const std::vector<Outcome>& outcomes() const { return outcomes_; }
  std::size_t size() const { return outcomes_.size(); }
  bool empty() const { return outcomes_.empty(); }
  bool contains(const Outcome& t) const;
  /// Position of t in outcomes(), or size() if absent.
  std::size_t find(const Outcome& t) const;

 private:
  std::vector<Outcome> outcomes_;
};

struct BlockDiagnostics {
  double diameter = 0.0;
  double prob_sum = 0.0;
  bool dims_consistent = true;
};

struct SpaceDiagnostics {
  std::vector<BlockDiagnostics> blocks;
  std::uint64_t outcome_count = 0;
  std::vector<std::string> violations;

  bool valid() const { return violations.empty(); }
};

/// Collects every invariant violation; never throws.
SpaceDiagnostics validate_space(const ProductSpace& space, std::uint64_t cap = kDefaultOutcomeCap);
/// Throws SpaceError listing the violations when the space is invalid.
void require_valid(const ProductSpace& space, std::uint64_t cap = kDefaultOutcomeCap);

/// n copies of {0, 1} in R^1 with weights (1 - eta, eta).
ProductSpace bernoulli_cube(std::size_t n, double eta);

struct RandomSpaceOptions {
  std::size_t min_points = 2;
  std::size_t max_points = 3;
  std::size_t max_dim = 3;
  std::size_t min_blocks = 1;
  std::size_t max_blocks = 8;
  std::uint64_t max_outcomes = std::uint64_t{1} << 14;
  bool mixed_norms = true;
  double outer_p = 2.0;
};

/// Seeded random space: block count, sizes, dimensions and tags are drawn
/// uniformly; points are uniform in a box rescaled to a diameter in [1/2, 1];
/// probabilities are bounded away from zero. Blocks past the first that would
/// push the outcome count over max_outcomes are not added.
ProductSpace random_product_space(const RandomSpaceOptions& options, std::uint64_t seed,
                                  std::uint64_t index = 0);

/// Each outcome kept independently with probability 1/2; redrawn while empty.
Event random_event(const ProductSpace& space, std::uint64_t seed, std::uint64_t index = 0,
                   std::uint64_t cap = kDefaultOutcomeCap);

/// Throws SpaceError if t does not index the space.
void require_outcome(const ProductSpace& space, const Outcome& t);

double outcome_probability(const ProductSpace& space, const Outcome& t);
double event_probability(const ProductSpace& space, const Event& event);

/// Ambient coordinates of t (blocks concatenated).
std::vector<double> outcome_point(const ProductSpace& space, const Outcome& t);

/// Block-l_p distance (sum_i ||x_i - y_i||_i^p)^(1/p) between ambient points.
double mixed_distance(const ProductSpace& space, std::span<const double> x,
                      std::span<const double> y, double p);

struct WeightedOutcome {
  Outcome outcome;
  double weight = 0.0;
};

/// Visits every outcome in lexicographic order (last block fastest) with its
/// product weight. Throws SpaceError if the count exceeds cap.
template <typename Visitor>
void for_each_outcome(const ProductSpace& space, Visitor&& visit,
                      std::uint64_t cap = kDefaultOutcomeCap);

std::vector<WeightedOutcome> enumerate_outcomes(const ProductSpace& space,
                                                std::uint64_t cap = kDefaultOutcomeCap);

/// All outcomes of the space as an event.
Event full_event(const ProductSpace& space, std::uint64_t cap = kDefaultOutcomeCap);
Event complement(const ProductSpace& space, const Event& event,
                 std::uint64_t cap = kDefaultOutcomeCap);

// JSON structured text: {"blocks": [{"points": [[...]], "norm": "L2", "probs": [...]}], "outer_p": 2}
ProductSpace space_from_json(const nlohmann::json& j);
nlohmann::ordered_json space_to_json(const ProductSpace& space);
ProductSpace load_space_file(const std::filesystem::path& path);
/// Events are lists of index tuples.
Event event_from_json(const nlohmann::json& j);
nlohmann::ordered_json event_to_json(const Event& event);

// ---------------------------------------------------------------------------

template <typename Visitor>
void for_each_outcome(const ProductSpace& space, Visitor&& visit, std::uint64_t cap) {
  const std::uint64_t count = space.outcome_count();
  if (count > cap) {
    throw SpaceError("outcome count " + std::to_string(count) + " exceeds cap " +
                     std::to_string(cap));
  }
  const std::size_t n = space.num_blocks();
  for (const auto& b : space.blocks) {
    if (b.size() == 0) return;
  }
  Outcome t{std::vector<std::uint32_t>(n, 0)};
  // prefix[i] = product of the weights of blocks [0, i).
  std::vector<double> prefix(n + 1, 1.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] * space.blocks[i].probs[0];
  while (true) {
    visit(static_cast<const Outcome&>(t), prefix[n]);
    // odometer increment
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++t.index[i] < space.blocks[i].size()) break;
      t.index[i] = 0;
      if (i == 0) return;
    }
    if (n == 0) return;
    for (std::size_t k = i; k < n; ++k) {
      prefix[k + 1] = prefix[k] * space.blocks[k].probs[t.index[k]];
    }
  }
}

}  // namespace cdlab
