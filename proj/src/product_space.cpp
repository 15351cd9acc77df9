#include "cdlab/product_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdlab/numeric.hpp"
#include "cdlab/rng.hpp"

namespace cdlab {

std::string to_string(NormTag tag) {
  switch (tag) {
    case NormTag::L1: return "L1";
    case NormTag::L2: return "L2";
    case NormTag::LInf: return "LINF";
  }
  return "?";
}

NormTag parse_norm_tag(const std::string& text) {
  if (text == "L1") return NormTag::L1;
  if (text == "L2") return NormTag::L2;
  if (text == "LINF") return NormTag::LInf;
  throw SpaceError("unknown norm tag '" + text + "' (expected L1, L2 or LINF)");
}

double block_norm(NormTag tag, std::span<const double> x) {
  double acc = 0.0;
  switch (tag) {
    case NormTag::L1:
      for (double v : x) acc += std::abs(v);
      return acc;
    case NormTag::L2:
      for (double v : x) acc += v * v;
      return std::sqrt(acc);
    case NormTag::LInf:
      for (double v : x) acc = std::max(acc, std::abs(v));
      return acc;
  }
  return acc;
}

double block_dual_norm(NormTag tag, std::span<const double> x) {
  switch (tag) {
    case NormTag::L1: return block_norm(NormTag::LInf, x);
    case NormTag::L2: return block_norm(NormTag::L2, x);
    case NormTag::LInf: return block_norm(NormTag::L1, x);
  }
  return 0.0;
}

double BlockSpace::diameter() const {
  double diam = 0.0;
  std::vector<double> diff;
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      if (points[a].size() != points[b].size()) continue;
      diff.resize(points[a].size());
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = points[a][k] - points[b][k];
      diam = std::max(diam, block_norm(norm, diff));
    }
  }
  return diam;
}

std::size_t ProductSpace::ambient_dim() const {
  std::size_t d = 0;
  for (const auto& b : blocks) d += b.dim();
  return d;
}

std::uint64_t ProductSpace::outcome_count() const {
  std::uint64_t count = 1;
  for (const auto& b : blocks) {
    const std::uint64_t m = b.size();
    if (m == 0) return 0;
    if (count > UINT64_MAX / m) return UINT64_MAX;
    count *= m;
  }
  return count;
}

Event::Event(std::vector<Outcome> outcomes) : outcomes_(std::move(outcomes)) {
  std::sort(outcomes_.begin(), outcomes_.end());
  outcomes_.erase(std::unique(outcomes_.begin(), outcomes_.end()), outcomes_.end());
}

bool Event::contains(const Outcome& t) const {
  return std::binary_search(outcomes_.begin(), outcomes_.end(), t);
}

std::size_t Event::find(const Outcome& t) const {
  auto it = std::lower_bound(outcomes_.begin(), outcomes_.end(), t);
  if (it == outcomes_.end() || *it != t) return outcomes_.size();
  return static_cast<std::size_t>(it - outcomes_.begin());
}

SpaceDiagnostics validate_space(const ProductSpace& space, std::uint64_t cap) {
  SpaceDiagnostics diag;
  auto report = [&](std::string msg) { diag.violations.push_back(std::move(msg)); };

  if (!(space.outer_p >= 2.0) || !std::isfinite(space.outer_p)) {
    report("outer_p must be a finite real >= 2");
  }
  for (std::size_t i = 0; i < space.blocks.size(); ++i) {
    const auto& b = space.blocks[i];
    BlockDiagnostics bd;
    const std::string where = "block " + std::to_string(i) + ": ";
    if (b.points.empty()) report(where + "no points");
    for (const auto& pt : b.points) {
      if (pt.size() != b.dim()) bd.dims_consistent = false;
      for (double v : pt) {
        if (!std::isfinite(v)) report(where + "non-finite coordinate");
      }
    }
    if (!bd.dims_consistent) report(where + "points have differing dimensions");
    if (b.probs.size() != b.points.size()) {
      report(where + "probs has " + std::to_string(b.probs.size()) + " entries for " +
             std::to_string(b.points.size()) + " points");
    }
    for (double pr : b.probs) {
      if (!(pr >= 0.0) || !std::isfinite(pr)) report(where + "negative or non-finite probability");
    }
    bd.prob_sum = kahan_sum(b.probs);
    if (std::abs(bd.prob_sum - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << where << "probabilities sum to " << bd.prob_sum << ", not 1";
      report(os.str());
    }
    bd.diameter = b.diameter();
    if (bd.diameter > 1.0 + 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << where << "diameter " << bd.diameter << " exceeds 1 under " << to_string(b.norm);
      report(os.str());
    }
    diag.blocks.push_back(bd);
  }
  diag.outcome_count = space.outcome_count();
  if (diag.outcome_count > cap) {
    report("outcome count " + std::to_string(diag.outcome_count) + " exceeds cap " +
           std::to_string(cap));
  }
  return diag;
}

void require_valid(const ProductSpace& space, std::uint64_t cap) {
  const auto diag = validate_space(space, cap);
  if (diag.valid()) return;
  std::string msg = "invalid product space:";
  for (const auto& v : diag.violations) msg += "\n  " + v;
  throw SpaceError(msg);
}

ProductSpace bernoulli_cube(std::size_t n, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw SpaceError("bernoulli_cube: eta must lie in [0, 1]");
  if (n == 0) throw SpaceError("bernoulli_cube: n must be positive");
  BlockSpace two_point{{{0.0}, {1.0}}, NormTag::L2, {1.0 - eta, eta}};
  return ProductSpace{std::vector<BlockSpace>(n, two_point), 2.0};
}

ProductSpace random_product_space(const RandomSpaceOptions& options, std::uint64_t seed,
                                  std::uint64_t index) {
  if (options.min_points == 0 || options.max_points < options.min_points || options.max_dim == 0 ||
      options.min_blocks == 0 || options.max_blocks < options.min_blocks) {
    throw SpaceError("random_product_space: bad options");
  }
  CounterRng rng(seed, "random-space", index);
  ProductSpace space;
  space.outer_p = options.outer_p;
  const std::size_t n =
      options.min_blocks + rng.below(options.max_blocks - options.min_blocks + 1);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    BlockSpace b;
    const std::size_t m = options.min_points + rng.below(options.max_points - options.min_points + 1);
    const std::size_t d = 1 + rng.below(options.max_dim);
    b.norm = options.mixed_norms ? static_cast<NormTag>(rng.below(3)) : NormTag::L2;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> pt(d);
      for (auto& v : pt) v = rng.uniform();
      b.points.push_back(std::move(pt));
    }
    const double target = 0.5 + 0.5 * rng.uniform();
    const double diam = b.diameter();
    if (diam > 0.0) {
      for (auto& pt : b.points) {
        for (auto& v : pt) v *= target / diam;
      }
    }
    // Rescaling can leave the diameter a rounding error above 1.
    while (b.diameter() > 1.0) {
      for (auto& pt : b.points) {
        for (auto& v : pt) v *= 1.0 - 1e-15;
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      b.probs.push_back(0.05 + rng.uniform());
      total += b.probs.back();
    }
    for (auto& pr : b.probs) pr /= total;
    const double drift = 1.0 - kahan_sum(b.probs);
    b.probs.back() += drift;
    if (count * m > options.max_outcomes) break;
    count *= m;
    space.blocks.push_back(std::move(b));
  }
  if (space.blocks.empty()) throw SpaceError("random_product_space: max_outcomes below block size");
  return space;
}

Event random_event(const ProductSpace& space, std::uint64_t seed, std::uint64_t index,
                   std::uint64_t cap) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    CounterRng rng(seed, "random-event", index * 1024 + attempt);
    std::vector<Outcome> picked;
    for_each_outcome(
        space,
        [&](const Outcome& t, double) {
          if (rng.bernoulli(0.5)) picked.push_back(t);
        },
        cap);
    if (!picked.empty()) return Event(std::move(picked));
  }
}

void require_outcome(const ProductSpace& space, const Outcome& t) {
  if (t.index.size() != space.num_blocks()) {
    throw SpaceError("outcome has " + std::to_string(t.index.size()) + " indices, space has " +
                     std::to_string(space.num_blocks()) + " blocks");
  }
  for (std::size_t i = 0; i < t.index.size(); ++i) {
    if (t.index[i] >= space.blocks[i].size()) {
      throw SpaceError("outcome index " + std::to_string(t.index[i]) + " out of range for block " +
                       std::to_string(i));
    }
  }
}

double outcome_probability(const ProductSpace& space, const Outcome& t) {
  require_outcome(space, t);
  double w = 1.0;
  for (std::size_t i = 0; i < t.index.size(); ++i) w *= space.blocks[i].probs[t.index[i]];
  return w;
}

double event_probability(const ProductSpace& space, const Event& event) {
  KahanSum acc;
  for (const auto& t : event.outcomes()) acc += outcome_probability(space, t);
  return acc.value();
}

std::vector<double> outcome_point(const ProductSpace& space, const Outcome& t) {
  require_outcome(space, t);
  std::vector<double> x;
  x.reserve(space.ambient_dim());
  for (std::size_t i = 0; i < t.index.size(); ++i) {
    const auto& pt = space.blocks[i].points[t.index[i]];
    x.insert(x.end(), pt.begin(), pt.end());
  }
  return x;
}

double mixed_distance(const ProductSpace& space, std::span<const double> x,
                      std::span<const double> y, double p) {
  double acc = 0.0;
  std::size_t off = 0;
  std::vector<double> diff;
  for (const auto& b : space.blocks) {
    const std::size_t d = b.dim();
    diff.resize(d);
    for (std::size_t k = 0; k < d; ++k) diff[k] = x[off + k] - y[off + k];
    acc += std::pow(block_norm(b.norm, diff), p);
    off += d;
  }
  return std::pow(acc, 1.0 / p);
}

std::vector<WeightedOutcome> enumerate_outcomes(const ProductSpace& space, std::uint64_t cap) {
  std::vector<WeightedOutcome> out;
  out.reserve(static_cast<std::size_t>(std::min(space.outcome_count(), cap)));
  for_each_outcome(
      space, [&](const Outcome& t, double w) { out.push_back({t, w}); }, cap);
  return out;
}

Event full_event(const ProductSpace& space, std::uint64_t cap) {
  std::vector<Outcome> all;
  for_each_outcome(
      space, [&](const Outcome& t, double) { all.push_back(t); }, cap);
  return Event(std::move(all));
}

Event complement(const ProductSpace& space, const Event& event, std::uint64_t cap) {
  std::vector<Outcome> rest;
  for_each_outcome(
      space,
      [&](const Outcome& t, double) {
        if (!event.contains(t)) rest.push_back(t);
      },
      cap);
  return Event(std::move(rest));
}

ProductSpace space_from_json(const nlohmann::json& j) {
  ProductSpace space;
  try {
    space.outer_p = j.value("outer_p", 2.0);
    for (const auto& jb : j.at("blocks")) {
      BlockSpace b;
      b.points = jb.at("points").get<std::vector<std::vector<double>>>();
      b.norm = parse_norm_tag(jb.value("norm", std::string("L2")));
      b.probs = jb.at("probs").get<std::vector<double>>();
      space.blocks.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SpaceError(std::string("malformed space description: ") + e.what());
  }
  return space;
}

nlohmann::ordered_json space_to_json(const ProductSpace& space) {
  nlohmann::ordered_json j;
  j["outer_p"] = space.outer_p;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const auto& b : space.blocks) {
    nlohmann::ordered_json jb;
    jb["points"] = b.points;
    jb["norm"] = to_string(b.norm);
    jb["probs"] = b.probs;
    j["blocks"].push_back(std::move(jb));
  }
  return j;
}

ProductSpace load_space_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpaceError("cannot open space file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpaceError("cannot parse space file " + path.string() + ": " + e.what());
  }
  return space_from_json(j);
}

Event event_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw SpaceError("malformed event: expected an array of index tuples");
  std::vector<Outcome> outcomes;
  for (const auto& tuple : j) {
    if (!tuple.is_array()) throw SpaceError("malformed event: expected an index tuple, got " + tuple.dump());
    Outcome t;
    for (const auto& v : tuple) {
      if (!v.is_number_unsigned()) {
        throw SpaceError("malformed event: index must be a non-negative integer, got " + v.dump());
      }
      const auto x = v.get<std::uint64_t>();
      if (x > std::numeric_limits<std::uint32_t>::max()) {
        throw SpaceError("malformed event: index " + v.dump() + " is out of range");
      }
      t.index.push_back(static_cast<std::uint32_t>(x));
    }
    outcomes.push_back(std::move(t));
  }
  return Event(std::move(outcomes));
}

nlohmann::ordered_json event_to_json(const Event& event) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& t : event.outcomes()) j.push_back(t.index);
  return j;
}

}  // namespace cdlab
