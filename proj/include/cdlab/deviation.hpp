#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "cdlab/product_space.hpp"

namespace cdlab {

/// f(x) = sum_i <c_i, x_i>.
struct LinearFn {
  std::vector<std::vector<double>> coeffs;
};

/// f(x) = (sum_i ||x_i - z_i||_i^exponent)^(1/exponent).
struct DistanceToPointFn {
  std::vector<double> z;  // ambient coordinates
  double exponent = 2.0;
};

struct AffinePiece {
  std::vector<std::vector<double>> coeffs;
  double offset = 0.0;
};

/// f(x) = max_k <c_k, x> + b_k.
struct MaxAffineFn {
  std::vector<AffinePiece> pieces;
};

using ConvexFnSpec = std::variant<LinearFn, DistanceToPointFn, MaxAffineFn>;

std::string kind_name(const ConvexFnSpec& fn);

/// Throws SpaceError when coefficient shapes do not match the blocks or the
/// reference point leaves the bounding box of the block points.
void validate_fn(const ConvexFnSpec& fn, const ProductSpace& space);

double evaluate(const ConvexFnSpec& fn, const ProductSpace& space, std::span<const double> x);
double evaluate(const ConvexFnSpec& fn, const ProductSpace& space, const Outcome& t);

/// Lipschitz constant of fn with respect to the block-l_p norm of the space.
double lipschitz_p(const ConvexFnSpec& fn, const ProductSpace& space);

struct Center {
  /// Smallest attained m with P(f <= m) >= 1/2 and P(f >= m) >= 1/2.
  double median = 0.0;
  double mean = 0.0;
};

Center exact_center(const ProductSpace& space, const ConvexFnSpec& fn,
                    std::uint64_t cap = kDefaultOutcomeCap);

enum class CenterKind { Median, Mean };

std::string to_string(CenterKind kind);
CenterKind parse_center_kind(const std::string& text);

struct MeanBoundConstants {
  double k = 8.0;
  double delta = 1.0 / 32.0;
};

struct TailRow {
  double c = 0.0;
  double tail = 0.0;
  double bound = 0.0;
  bool violated = false;
};

struct DeviationReport {
  std::string fn_kind;
  double sigma_p = 0.0;
  double median = 0.0;
  double mean = 0.0;
  CenterKind center_kind = CenterKind::Median;
  double center = 0.0;
  std::uint64_t mc_trials = 0;
  std::uint64_t seed = 0;
  std::vector<TailRow> rows;

  bool any_violation() const;
};

/// Median form: 4 exp(-c^p / (4 sigma^p)). Mean form: K exp(-delta c^p / sigma^p).
double deviation_bound(double c, double sigma, double p, CenterKind kind,
                       const MeanBoundConstants& mean_constants = {});

/// Tail P(|f - center| > c) on each grid point, exactly (mc_trials = 0) or
/// from mc_trials seeded samples of the product measure. Sampled rows are
/// flagged only when tail - 3 sqrt(tail / mc_trials) still exceeds the bound.
DeviationReport tail_vs_bound(const ProductSpace& space, const ConvexFnSpec& fn,
                              const std::vector<double>& c_grid, CenterKind center_kind,
                              std::uint64_t mc_trials = 0, std::uint64_t seed = 0,
                              const MeanBoundConstants& mean_constants = {},
                              std::uint64_t cap = kDefaultOutcomeCap);

/// c, tail, bound, violated with 17 significant digits.
std::string tail_csv(const DeviationReport& report);
void write_tail_csv(const DeviationReport& report, const std::filesystem::path& path);

/// Seeded member of the family: 0 linear, 1 distance to point, 2 max-affine.
ConvexFnSpec random_fn(int family, const ProductSpace& space, std::uint64_t seed,
                       std::uint64_t index = 0);

}  // namespace cdlab
