#pragma once

#include <cstddef>
#include <vector>

#include "cdlab/convex_distance.hpp"
#include "cdlab/product_space.hpp"

namespace cdlab {

/// Exhaustive check of E exp(phi_{A,p}^p / 4) <= 1 / P(A).
struct MomentReport {
  double prob_a = 0.0;
  /// Sum over outcomes of P({t}) exp(upper(t)^p / 4).
  double expectation = 0.0;
  double bound = 0.0;
  double margin = 0.0;
  /// Sum over outcomes of P({t}) (exp(upper^p / 4) - exp(lower^p / 4)).
  double gap_budget = 0.0;
  std::size_t outcomes = 0;
  /// Solves whose gap stayed above tol; they only widen gap_budget.
  std::size_t uncertified = 0;
  /// Upper bounds on phi, one per outcome in enumeration order.
  std::vector<double> phi_upper;
  /// expectation <= bound + gap_budget.
  bool pass = false;
};

MomentReport moment_check(const ProductSpace& space, const Event& event, double tol = 1e-8,
                          std::uint64_t cap = kDefaultOutcomeCap);

struct ScanResult {
  double max_value = 0.0;
  double argmax = 0.0;
  double argmax2 = 0.0;
  std::size_t points = 0;
};

/// Grid maximum of r (r + (1 - r) e^{1/4}) over r in [0, 1].
ScanResult base_case_scan(std::size_t grid_size);
double base_case_value(double r);

struct LedgerScalars {
  double lambda = 1.0;
  double alpha = 1.0;
  double g = 1.0;
};

/// Two-branch alpha(lambda), g(lambda); lambda = e^{-1/2} takes the alpha = 0 branch.
LedgerScalars alpha_g(double lambda);

struct ClaimScan {
  /// Grid maximum of g(lambda) + lambda - 2 over lambda in (0, 1].
  ScanResult scan;
  double f_at_one = 0.0;
  /// Centered difference at lambda = 1.
  double slope_at_one = 0.0;
};

ClaimScan claim_scan(std::size_t grid_size);
double claim_value(double lambda);

/// Grid maximum over [0,1]^2 of (q + (1-q)(2-t)) (q + (1-q)t) - 1; argmax is q, argmax2 is t.
ScanResult product_bound_scan(std::size_t grid_size);

struct SliceReport {
  /// Index in the last block whose slice has the largest probability.
  std::size_t v = 0;
  std::vector<double> slice_probability;
  std::vector<std::size_t> skipped;
  std::size_t checks = 0;
  /// Largest lhs - rhs for the heavy slice (v) and for the other slices.
  double max_violation_v = -1e300;
  double max_violation_w = -1e300;
  /// Solves whose gap stayed above solver_tol; the bounds used stay valid.
  std::size_t uncertified = 0;
  bool pass = false;
};

/// Checks, for every t in the first n blocks,
///   phi_A(t, v)^2 <= phi_{A_v}(t)^2 + tol
///   phi_A(t, w)^2 <= min_a [a phi_{A_w}(t)^2 + (1 - a) phi_{A_v}(t)^2 + (1 - a)^2] + tol
/// where A_w is the slice of A at w in the last block. Distances use outer
/// exponent 2; the left sides use upper bounds and the right sides lower
/// bounds, so a pass holds for the exact distances.
SliceReport slice_inequalities_check(const ProductSpace& space, const Event& event,
                                     double tol = 1e-6, std::size_t alpha_grid = 1001,
                                     double solver_tol = 1e-9);

}  // namespace cdlab
