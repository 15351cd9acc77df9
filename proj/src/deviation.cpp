#include "cdlab/deviation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <sstream>
#include <stdexcept>

#include "cdlab/numeric.hpp"
#include "cdlab/rng.hpp"

namespace cdlab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_coeff_shape(const std::vector<std::vector<double>>& coeffs, const ProductSpace& space,
                       const char* what) {
  if (coeffs.size() != space.num_blocks()) {
    throw SpaceError(std::string(what) + ": expected " + std::to_string(space.num_blocks()) +
                     " coefficient blocks, got " + std::to_string(coeffs.size()));
  }
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    if (coeffs[i].size() != space.blocks[i].dim()) {
      throw SpaceError(std::string(what) + ": block " + std::to_string(i) + " has dimension " +
                       std::to_string(space.blocks[i].dim()) + ", coefficients have " +
                       std::to_string(coeffs[i].size()));
    }
  }
}

double linear_value(const std::vector<std::vector<double>>& coeffs, std::span<const double> x) {
  double acc = 0.0;
  std::size_t off = 0;
  for (const auto& c : coeffs) {
    for (std::size_t k = 0; k < c.size(); ++k) acc += c[k] * x[off + k];
    off += c.size();
  }
  return acc;
}

double linear_lipschitz(const std::vector<std::vector<double>>& coeffs, const ProductSpace& space) {
  const double q = conjugate_exponent(space.outer_p);
  double acc = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    acc += std::pow(block_dual_norm(space.blocks[i].norm, coeffs[i]), q);
  }
  return std::pow(acc, 1.0 / q);
}

struct Sample {
  double value;
  double weight;
};

// Lower median of a weighted sample; weights must sum to one.
double lower_median(std::vector<Sample> s) {
  std::sort(s.begin(), s.end(), [](const Sample& a, const Sample& b) { return a.value < b.value; });
  KahanSum cum;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k].weight;
    if (k + 1 < s.size() && s[k + 1].value == s[k].value) continue;
    if (cum.value() >= 0.5 - 1e-12) return s[k].value;
  }
  return s.back().value;
}

}  // namespace

std::string kind_name(const ConvexFnSpec& fn) {
  return std::visit(overloaded{[](const LinearFn&) { return std::string("linear"); },
                               [](const DistanceToPointFn&) { return std::string("distance"); },
                               [](const MaxAffineFn&) { return std::string("max_affine"); }},
                    fn);
}

void validate_fn(const ConvexFnSpec& fn, const ProductSpace& space) {
  std::visit(overloaded{[&](const LinearFn& f) { check_coeff_shape(f.coeffs, space, "linear"); },
                        [&](const DistanceToPointFn& f) {
                          if (f.z.size() != space.ambient_dim()) {
                            throw SpaceError("distance: reference point has wrong dimension");
                          }
                          if (!(f.exponent >= 1.0)) {
                            throw SpaceError("distance: exponent must be >= 1");
                          }
                          std::size_t off = 0;
                          for (const auto& b : space.blocks) {
                            for (std::size_t k = 0; k < b.dim(); ++k) {
                              double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                              for (const auto& pt : b.points) {
                                lo = std::min(lo, pt[k]);
                                hi = std::max(hi, pt[k]);
                              }
                              if (f.z[off + k] < lo || f.z[off + k] > hi) {
                                throw SpaceError("distance: reference point outside the box of the points");
                              }
                            }
                            off += b.dim();
                          }
                        },
                        [&](const MaxAffineFn& f) {
                          if (f.pieces.empty()) throw SpaceError("max_affine: no pieces");
                          for (const auto& piece : f.pieces) {
                            check_coeff_shape(piece.coeffs, space, "max_affine");
                          }
                        }},
             fn);
}

double evaluate(const ConvexFnSpec& fn, const ProductSpace& space, std::span<const double> x) {
  return std::visit(
      overloaded{[&](const LinearFn& f) { return linear_value(f.coeffs, x); },
                 [&](const DistanceToPointFn& f) { return mixed_distance(space, x, f.z, f.exponent); },
                 [&](const MaxAffineFn& f) {
                   double best = -std::numeric_limits<double>::infinity();
                   for (const auto& piece : f.pieces) {
                     best = std::max(best, linear_value(piece.coeffs, x) + piece.offset);
                   }
                   return best;
                 }},
      fn);
}

double evaluate(const ConvexFnSpec& fn, const ProductSpace& space, const Outcome& t) {
  const auto x = outcome_point(space, t);
  return evaluate(fn, space, x);
}

double lipschitz_p(const ConvexFnSpec& fn, const ProductSpace& space) {
  validate_fn(fn, space);
  return std::visit(
      overloaded{[&](const LinearFn& f) { return linear_lipschitz(f.coeffs, space); },
                 [&](const DistanceToPointFn& f) {
                   // ||v||_a <= n^(1/a - 1/p) ||v||_p for a < p, and <= ||v||_p otherwise.
                   if (f.exponent >= space.outer_p) return 1.0;
                   const double n = static_cast<double>(space.num_blocks());
                   return std::pow(n, 1.0 / f.exponent - 1.0 / space.outer_p);
                 },
                 [&](const MaxAffineFn& f) {
                   double best = 0.0;
                   for (const auto& piece : f.pieces) {
                     best = std::max(best, linear_lipschitz(piece.coeffs, space));
                   }
                   return best;
                 }},
      fn);
}

Center exact_center(const ProductSpace& space, const ConvexFnSpec& fn, std::uint64_t cap) {
  require_valid(space, cap);
  validate_fn(fn, space);
  std::vector<Sample> samples;
  KahanSum mean;
  for_each_outcome(
      space,
      [&](const Outcome& t, double w) {
        const double v = evaluate(fn, space, t);
        samples.push_back({v, w});
        mean += w * v;
      },
      cap);
  return {lower_median(std::move(samples)), mean.value()};
}

std::string to_string(CenterKind kind) { return kind == CenterKind::Median ? "median" : "mean"; }

CenterKind parse_center_kind(const std::string& text) {
  if (text == "median") return CenterKind::Median;
  if (text == "mean") return CenterKind::Mean;
  throw std::invalid_argument("center must be 'median' or 'mean', got '" + text + "'");
}

bool DeviationReport::any_violation() const {
  return std::any_of(rows.begin(), rows.end(), [](const TailRow& r) { return r.violated; });
}

double deviation_bound(double c, double sigma, double p, CenterKind kind,
                       const MeanBoundConstants& mc) {
  const double ratio = std::pow(c / sigma, p);  // +inf when sigma = 0
  if (kind == CenterKind::Median) return 4.0 * std::exp(-ratio / 4.0);
  return mc.k * std::exp(-mc.delta * ratio);
}

DeviationReport tail_vs_bound(const ProductSpace& space, const ConvexFnSpec& fn,
                              const std::vector<double>& c_grid, CenterKind center_kind,
                              std::uint64_t mc_trials, std::uint64_t seed,
                              const MeanBoundConstants& mean_constants, std::uint64_t cap) {
  if (c_grid.empty()) throw std::invalid_argument("tail_vs_bound: empty c grid");
  for (std::size_t k = 0; k < c_grid.size(); ++k) {
    if (!(c_grid[k] > 0.0) || (k > 0 && !(c_grid[k] > c_grid[k - 1]))) {
      throw std::invalid_argument("tail_vs_bound: c grid must be positive and ascending");
    }
  }
  require_valid(space, mc_trials == 0 ? cap : UINT64_MAX);
  validate_fn(fn, space);

  DeviationReport rep;
  rep.fn_kind = kind_name(fn);
  rep.sigma_p = lipschitz_p(fn, space);
  rep.center_kind = center_kind;
  rep.mc_trials = mc_trials;
  rep.seed = seed;

  std::vector<Sample> samples;
  if (mc_trials == 0) {
    for_each_outcome(
        space, [&](const Outcome& t, double w) { samples.push_back({evaluate(fn, space, t), w}); },
        cap);
  } else {
    samples.reserve(mc_trials);
    const double w = 1.0 / static_cast<double>(mc_trials);
    Outcome t{std::vector<std::uint32_t>(space.num_blocks(), 0)};
    for (std::uint64_t trial = 0; trial < mc_trials; ++trial) {
      CounterRng rng(seed, "deviation-sample", trial);
      for (std::size_t i = 0; i < space.num_blocks(); ++i) {
        const auto& probs = space.blocks[i].probs;
        double u = rng.uniform();
        std::size_t j = 0;
        while (j + 1 < probs.size() && u >= probs[j]) u -= probs[j++];
        t.index[i] = static_cast<std::uint32_t>(j);
      }
      samples.push_back({evaluate(fn, space, t), w});
    }
  }
  KahanSum mean;
  for (const auto& s : samples) mean += s.weight * s.value;
  rep.mean = mean.value();
  rep.median = lower_median(samples);
  rep.center = center_kind == CenterKind::Median ? rep.median : rep.mean;

  // Deviations sorted descending, then one sweep over the ascending grid.
  std::vector<Sample> dev;
  dev.reserve(samples.size());
  for (const auto& s : samples) dev.push_back({std::abs(s.value - rep.center), s.weight});
  std::sort(dev.begin(), dev.end(), [](const Sample& a, const Sample& b) { return a.value > b.value; });
  const double p = space.outer_p;
  for (double c : c_grid) {
    KahanSum tail;
    for (const auto& d : dev) {
      if (!(d.value > c)) break;
      tail += d.weight;
    }
    TailRow row;
    row.c = c;
    row.tail = std::clamp(tail.value(), 0.0, 1.0);
    row.bound = deviation_bound(c, rep.sigma_p, p, center_kind, mean_constants);
    double allowance = 0.0;
    if (mc_trials > 0) allowance = 3.0 * std::sqrt(row.tail / static_cast<double>(mc_trials));
    row.violated = row.tail - allowance > row.bound;
    rep.rows.push_back(row);
  }
  return rep;
}

std::string tail_csv(const DeviationReport& report) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "c,tail,bound,violated\n";
  for (const auto& r : report.rows) {
    out << r.c << ',' << r.tail << ',' << r.bound << ',' << (r.violated ? "true" : "false") << '\n';
  }
  return out.str();
}

void write_tail_csv(const DeviationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << tail_csv(report);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ConvexFnSpec random_fn(int family, const ProductSpace& space, std::uint64_t seed,
                       std::uint64_t index) {
  CounterRng rng(seed, "random-fn", index * 3 + static_cast<std::uint64_t>(family));
  auto coeffs = [&]() {
    std::vector<std::vector<double>> c;
    for (const auto& b : space.blocks) {
      std::vector<double> ci(b.dim());
      for (auto& v : ci) v = rng.normal();
      c.push_back(std::move(ci));
    }
    return c;
  };
  switch (family) {
    case 0: return LinearFn{coeffs()};
    case 1: {
      DistanceToPointFn f;
      // A random convex combination of the points stays inside the box.
      for (const auto& b : space.blocks) {
        std::vector<double> wts(b.size());
        double total = 0.0;
        for (auto& w : wts) total += (w = rng.uniform() + 1e-3);
        for (std::size_t k = 0; k < b.dim(); ++k) {
          double acc = 0.0;
          double lo = b.points[0][k], hi = lo;
          for (std::size_t j = 0; j < b.size(); ++j) {
            acc += wts[j] / total * b.points[j][k];
            lo = std::min(lo, b.points[j][k]);
            hi = std::max(hi, b.points[j][k]);
          }
          f.z.push_back(std::clamp(acc, lo, hi));
        }
      }
      const double choices[] = {1.0, 2.0, space.outer_p, 4.0};
      f.exponent = choices[rng.below(4)];
      return f;
    }
    case 2: {
      MaxAffineFn f;
      const std::size_t pieces = 1 + rng.below(4);
      for (std::size_t k = 0; k < pieces; ++k) f.pieces.push_back({coeffs(), rng.normal()});
      return f;
    }
    default: throw std::invalid_argument("random_fn: family must be 0, 1 or 2");
  }
}

}  // namespace cdlab
