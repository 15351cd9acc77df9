#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "cdlab/product_space.hpp"

namespace cdlab {

/// Certified value of the convex distance from t to conv A.
///
/// `upper` is the block-l_p distance from t to the hull point
/// sum_k coefficients[k] * A[k]; `lower` comes from a dual functional of
/// dual norm at most one, so lower <= phi <= upper always holds.
struct DistanceCert {
  double upper = 0.0;
  double lower = 0.0;
  /// Convex weights, one per outcome of A (in Event order).
  std::vector<double> coefficients;
  bool certified = false;
  std::size_t iterations = 0;
};

struct DistanceOptions {
  double tol = 1e-8;
  /// 0 selects 50 * |A| + 10000.
  std::size_t max_iterations = 0;
};

/// Away-step conditional gradient over the simplex of hull coefficients.
///
/// The solver is built once per (space, A) and may then be queried for many
/// outcomes t; `solve` is const and reentrant. The linear subproblem
/// max_{a in A} <y, a> is evaluated by a bounded depth-first search over a
/// prefix trie of A; subtrees whose best completion cannot beat the incumbent
/// are skipped.
///
/// Blocks whose norm is L1 or LINF in dimension >= 2 are minimized through a
/// smooth surrogate whose parameter shrinks as the iteration converges; the
/// certificate is always evaluated against the exact norms.
class ConvexDistanceSolver {
 public:
  ConvexDistanceSolver(ProductSpace space, Event event);

  DistanceCert solve(const Outcome& t, const DistanceOptions& options = {}) const;

  const ProductSpace& space() const { return space_; }
  const Event& event() const { return event_; }
  double p() const { return space_.outer_p; }

 private:
  struct Scratch;
  class Run;

  double trie_max(const std::vector<std::vector<double>>& score, std::size_t* argmax,
                  double floor = -std::numeric_limits<double>::infinity(),
                  std::size_t floor_atom = 0) const;

  ProductSpace space_;
  Event event_;
  std::vector<std::size_t> offset_;
  std::vector<bool> smoothed_;
  bool any_smoothed_ = false;
  // Trie over the outcomes of A; depth d holds the distinct prefixes of length d + 1.
  // Children of node k at depth d are nodes child_begin_[d][k] .. child_begin_[d][k + 1] - 1.
  std::vector<std::vector<std::uint32_t>> node_label_;
  std::vector<std::vector<std::uint32_t>> child_begin_;
};

/// One-shot convenience wrapper around ConvexDistanceSolver.
DistanceCert convex_distance(const ProductSpace& space, const Event& event, const Outcome& t,
                             double tol = 1e-8);

/// Ambient coordinates of sum_k coefficients[k] * A[k].
std::vector<double> hull_point(const ProductSpace& space, const Event& event,
                               const std::vector<double>& coefficients);

/// Brute force: minimum of sum_i ||t_i - s_i||^p over the simplex grid of step
/// 1 / resolution, returned as a p-th root. Requires |A| <= 4.
double min_norm_oracle(const ProductSpace& space, const Event& event, const Outcome& t,
                       std::size_t grid_resolution);

}  // namespace cdlab
