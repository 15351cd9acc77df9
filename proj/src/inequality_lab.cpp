#include "cdlab/inequality_lab.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "cdlab/numeric.hpp"

namespace cdlab {

namespace {

const double kQuarterExp = std::exp(0.25);

// g(lambda) without the domain check, so the slope at 1 can be sampled from both sides.
double g_formula(double lambda) {
  const double l = std::log(lambda);
  if (2.0 * l > -1.0) return std::exp(-l - l * l);
  return kQuarterExp;
}

double grid_point(std::size_t k, std::size_t grid_size) {
  return static_cast<double>(k) / static_cast<double>(grid_size - 1);
}

}  // namespace

MomentReport moment_check(const ProductSpace& space, const Event& event, double tol,
                          std::uint64_t cap) {
  require_valid(space, cap);
  ConvexDistanceSolver solver(space, event);
  const double p = space.outer_p;
  MomentReport rep;
  rep.prob_a = event_probability(space, event);
  KahanSum expectation, gap;
  for_each_outcome(
      space,
      [&](const Outcome& t, double w) {
        const auto cert = solver.solve(t, {tol, 0});
        if (!cert.certified) ++rep.uncertified;
        const double hi = std::exp(std::pow(cert.upper, p) / 4.0);
        const double lo = std::exp(std::pow(cert.lower, p) / 4.0);
        expectation += w * hi;
        gap += w * (hi - lo);
        rep.phi_upper.push_back(cert.upper);
        ++rep.outcomes;
      },
      cap);
  rep.expectation = expectation.value();
  rep.gap_budget = gap.value();
  rep.bound = 1.0 / rep.prob_a;
  rep.margin = rep.bound - rep.expectation;
  rep.pass = rep.expectation <= rep.bound + rep.gap_budget;
  return rep;
}

double base_case_value(double r) { return r * (r + (1.0 - r) * kQuarterExp); }

ScanResult base_case_scan(std::size_t grid_size) {
  if (grid_size < 2) throw std::invalid_argument("base_case_scan: grid_size must be >= 2");
  ScanResult res;
  res.max_value = -1e300;
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double r = grid_point(k, grid_size);
    const double v = base_case_value(r);
    if (v > res.max_value) {
      res.max_value = v;
      res.argmax = r;
    }
  }
  res.points = grid_size;
  return res;
}

LedgerScalars alpha_g(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("alpha_g: lambda must lie in (0, 1]");
  }
  const double l = std::log(lambda);
  LedgerScalars out;
  out.lambda = lambda;
  if (2.0 * l > -1.0) {
    out.alpha = 1.0 + 2.0 * l;
  } else {
    out.alpha = 0.0;
  }
  out.g = g_formula(lambda);
  return out;
}

double claim_value(double lambda) { return alpha_g(lambda).g + lambda - 2.0; }

ClaimScan claim_scan(std::size_t grid_size) {
  if (grid_size < 2) throw std::invalid_argument("claim_scan: grid_size must be >= 2");
  ClaimScan out;
  out.scan.max_value = -1e300;
  for (std::size_t k = 1; k <= grid_size; ++k) {
    const double lambda = static_cast<double>(k) / static_cast<double>(grid_size);
    const double v = claim_value(lambda);
    if (v > out.scan.max_value) {
      out.scan.max_value = v;
      out.scan.argmax = lambda;
    }
  }
  out.scan.points = grid_size;
  out.f_at_one = claim_value(1.0);
  const double h = 1e-4;
  out.slope_at_one = ((g_formula(1.0 + h) + 1.0 + h) - (g_formula(1.0 - h) + 1.0 - h)) / (2.0 * h);
  return out;
}

ScanResult product_bound_scan(std::size_t grid_size) {
  if (grid_size < 2) throw std::invalid_argument("product_bound_scan: grid_size must be >= 2");
  ScanResult res;
  res.max_value = -1e300;
  for (std::size_t i = 0; i < grid_size; ++i) {
    const double q = grid_point(i, grid_size);
    for (std::size_t j = 0; j < grid_size; ++j) {
      const double t = grid_point(j, grid_size);
      const double v = (q + (1.0 - q) * (2.0 - t)) * (q + (1.0 - q) * t) - 1.0;
      if (v > res.max_value) {
        res.max_value = v;
        res.argmax = q;
        res.argmax2 = t;
      }
    }
  }
  res.points = grid_size * grid_size;
  return res;
}

SliceReport slice_inequalities_check(const ProductSpace& space_in, const Event& event, double tol,
                                     std::size_t alpha_grid, double solver_tol) {
  if (space_in.num_blocks() < 2) {
    throw std::invalid_argument("slice check: the space needs at least two blocks");
  }
  if (event.empty()) throw std::invalid_argument("slice check: event is empty");
  if (alpha_grid < 2) throw std::invalid_argument("slice check: alpha grid must have >= 2 points");
  ProductSpace space = space_in;
  space.outer_p = 2.0;
  require_valid(space);

  ProductSpace head = space;
  head.blocks.pop_back();
  const std::size_t n = head.num_blocks();
  const std::size_t last = space.blocks.back().size();

  std::vector<std::vector<Outcome>> slice(last);
  for (const auto& a : event.outcomes()) {
    slice[a.index[n]].push_back(Outcome{{a.index.begin(), a.index.begin() + n}});
  }
  SliceReport rep;
  rep.slice_probability.assign(last, 0.0);
  std::vector<Event> slices(last);
  for (std::size_t w = 0; w < last; ++w) {
    slices[w] = Event(std::move(slice[w]));
    if (slices[w].empty()) {
      rep.skipped.push_back(w);
    } else {
      rep.slice_probability[w] = event_probability(head, slices[w]);
    }
  }
  // Strict comparison keeps the lowest index among ties.
  while (slices[rep.v].empty()) ++rep.v;
  for (std::size_t w = rep.v + 1; w < last; ++w) {
    if (!slices[w].empty() && rep.slice_probability[w] > rep.slice_probability[rep.v]) rep.v = w;
  }

  ConvexDistanceSolver full(space, event);
  std::vector<std::unique_ptr<ConvexDistanceSolver>> part(last);
  for (std::size_t w = 0; w < last; ++w) {
    if (!slices[w].empty()) part[w] = std::make_unique<ConvexDistanceSolver>(head, slices[w]);
  }
  const DistanceOptions opts{solver_tol, 0};

  for_each_outcome(head, [&](const Outcome& t, double) {
    Outcome tw{t.index};
    tw.index.push_back(0);
    const auto cv = part[rep.v]->solve(t, opts);
    if (!cv.certified) ++rep.uncertified;
    const double dv = cv.lower * cv.lower;
    for (std::size_t w = 0; w < last; ++w) {
      if (!part[w]) continue;
      tw.index[n] = static_cast<std::uint32_t>(w);
      const auto ca = full.solve(tw, opts);
      if (!ca.certified) ++rep.uncertified;
      const double lhs = ca.upper * ca.upper;
      if (w == rep.v) {
        rep.max_violation_v = std::max(rep.max_violation_v, lhs - dv);
      } else {
        const auto cw = part[w]->solve(t, opts);
        if (!cw.certified) ++rep.uncertified;
        const double dw = cw.lower * cw.lower;
        double rhs = 1e300;
        for (std::size_t k = 0; k < alpha_grid; ++k) {
          const double a = grid_point(k, alpha_grid);
          rhs = std::min(rhs, a * dw + (1.0 - a) * dv + (1.0 - a) * (1.0 - a));
        }
        rep.max_violation_w = std::max(rep.max_violation_w, lhs - rhs);
      }
      ++rep.checks;
    }
  });
  rep.pass = rep.max_violation_v <= tol && rep.max_violation_w <= tol;
  return rep;
}

}  // namespace cdlab
