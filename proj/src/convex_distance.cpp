#include "cdlab/convex_distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "cdlab/numeric.hpp"

namespace cdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Smoothing parameter schedule for polyhedral blocks.
constexpr double kInitialSmoothing = 1e-3;
constexpr double kSmoothingShrink = 0.1;
constexpr std::size_t kZeroProbeIterations = 400;
// Smoothing never exceeds this fraction of the best distance found so far.
constexpr double kRelativeSmoothing = 1e-2;
// Iterations without progress before the smoothing is shrunk anyway.
constexpr std::size_t kStallIterations = 64;
// Bound on consecutive face reductions inside one Newton phase.
constexpr std::size_t kMaxFaceDrops = 16;
// Iterations between full vertex searches while the pooled search is in use.
constexpr std::size_t kFullOracleEvery = 16;

// Norm of x (exact, or its smooth surrogate when `smoothed`) and a gradient of
// that norm written to grad. The surrogate under-estimates the norm by at most
// dim * mu (L1) or mu * log(2 dim) (LINF).
double block_value_and_grad(NormTag tag, bool smoothed, double mu, const double* x,
                            std::size_t d, double* grad) {
  if (d == 1) {
    grad[0] = (x[0] > 0.0) ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
    return std::abs(x[0]);
  }
  if (tag == NormTag::L2 || !smoothed) {
    if (tag == NormTag::L2) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += x[k] * x[k];
      const double nrm = std::sqrt(sq);
      for (std::size_t k = 0; k < d; ++k) grad[k] = nrm > 0.0 ? x[k] / nrm : 0.0;
      return nrm;
    }
    if (tag == NormTag::L1) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        acc += std::abs(x[k]);
        grad[k] = (x[k] > 0.0) ? 1.0 : (x[k] < 0.0 ? -1.0 : 0.0);
      }
      return acc;
    }
    std::size_t arg = 0;
    for (std::size_t k = 0; k < d; ++k) {
      grad[k] = 0.0;
      if (std::abs(x[k]) > std::abs(x[arg])) arg = k;
    }
    grad[arg] = (x[arg] > 0.0) ? 1.0 : (x[arg] < 0.0 ? -1.0 : 0.0);
    return std::abs(x[arg]);
  }
  if (tag == NormTag::L1) {
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double root = std::sqrt(x[k] * x[k] + mu * mu);
      acc += x[k] * x[k] / (root + mu);
      grad[k] = x[k] / root;
    }
    return acc;
  }
  // LINF: mu * log of the mean of exp(+-x_k / mu).
  double m = 0.0;
  for (std::size_t k = 0; k < d; ++k) m = std::max(m, std::abs(x[k]));
  double z = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double ep = std::exp((x[k] - m) / mu);
    const double em = std::exp((-x[k] - m) / mu);
    z += ep + em;
    grad[k] = ep - em;
  }
  for (std::size_t k = 0; k < d; ++k) grad[k] /= z;
  return std::max(0.0, m + mu * (std::log(z) - std::log(2.0 * static_cast<double>(d))));
}

// x^p with cheap paths for the common integer exponents.
inline double power(double x, double p) {
  if (p == 2.0) return x * x;
  if (p == 3.0) return x * x * x;
  if (p == 1.0) return x;
  if (p == 4.0) return (x * x) * (x * x);
  return std::pow(x, p);
}

// Hessian of N(x)^p for the block norm (or surrogate) N, given nv = N(x) and
// u = grad N(x).
void block_power_hessian(NormTag tag, bool smoothed, double mu, double p, const double* x,
                         std::size_t d, double nv, const double* u, Eigen::MatrixXd& h) {
  const Eigen::Map<const Eigen::VectorXd> g(u, static_cast<Eigen::Index>(d));
  if (d == 1 || tag == NormTag::L2 || !smoothed) {
    if (d == 1 || tag == NormTag::L2) {
      // p N^(p-2) (I + (p - 2) u u^T)
      const double a = p * power(nv, p - 2.0);
      h = a * (Eigen::MatrixXd::Identity(d, d) + (p - 2.0) * g * g.transpose());
    } else {
      h = p * (p - 1.0) * power(nv, p - 2.0) * g * g.transpose();
    }
    return;
  }
  h = p * (p - 1.0) * power(nv, p - 2.0) * g * g.transpose();
  const double outer = p * power(nv, p - 1.0);
  if (tag == NormTag::L1) {
    for (std::size_t k = 0; k < d; ++k) {
      const double q = x[k] * x[k] + mu * mu;
      h(k, k) += outer * mu * mu / (q * std::sqrt(q));
    }
    return;
  }
  double m = 0.0;
  for (std::size_t k = 0; k < d; ++k) m = std::max(m, std::abs(x[k]));
  double z = 0.0;
  Eigen::VectorXd c(d);
  for (std::size_t k = 0; k < d; ++k) {
    c(k) = std::exp((x[k] - m) / mu) + std::exp((-x[k] - m) / mu);
    z += c(k);
  }
  c /= z;
  h += (outer / mu) * (Eigen::MatrixXd(c.asDiagonal()) - g * g.transpose());
}

}  // namespace

struct ConvexDistanceSolver::Scratch {
  std::vector<std::vector<double>> score;  // score[block][point]
  struct Frame {
    std::size_t depth;
    std::uint32_t node;
    double value;  // score of the prefix ending at node
  };
  std::vector<double> suffix;
  std::vector<Frame> stack;
};

ConvexDistanceSolver::ConvexDistanceSolver(ProductSpace space, Event event)
    : space_(std::move(space)), event_(std::move(event)) {
  require_valid(space_, UINT64_MAX);
  if (event_.empty()) throw SpaceError("convex distance: event A is empty");
  for (const auto& a : event_.outcomes()) require_outcome(space_, a);

  const std::size_t n = space_.num_blocks();
  offset_.resize(n + 1, 0);
  smoothed_.resize(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = space_.blocks[i];
    offset_[i + 1] = offset_[i] + b.dim();
    smoothed_[i] = b.dim() >= 2 && b.norm != NormTag::L2;
    any_smoothed_ = any_smoothed_ || smoothed_[i];
  }

  node_label_.assign(n, {});
  child_begin_.assign(n, {});
  const auto& atoms = event_.outcomes();
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    std::size_t first_diff = 0;
    if (k > 0) {
      while (first_diff < n && atoms[k].index[first_diff] == atoms[k - 1].index[first_diff]) {
        ++first_diff;
      }
    }
    for (std::size_t d = first_diff; d < n; ++d) {
      if (d + 1 < n) child_begin_[d].push_back(static_cast<std::uint32_t>(node_label_[d + 1].size()));
      node_label_[d].push_back(atoms[k].index[d]);
    }
  }
  for (std::size_t d = 0; d + 1 < n; ++d) {
    child_begin_[d].push_back(static_cast<std::uint32_t>(node_label_[d + 1].size()));
  }
}

double ConvexDistanceSolver::trie_max(const std::vector<std::vector<double>>& score,
                                      std::size_t* argmax, double floor,
                                      std::size_t floor_atom) const {
  thread_local Scratch buf;
  const std::size_t n = space_.num_blocks();
  if (n == 0) {
    if (argmax) *argmax = 0;
    return 0.0;
  }
  // suffix[d] bounds the best completion of depths d..n-1 ignoring membership in A.
  auto& suffix = buf.suffix;
  suffix.assign(n + 1, 0.0);
  double scale = 0.0;
  for (std::size_t d = n; d-- > 0;) {
    double m = -kInf, a = 0.0;
    for (double v : score[d]) {
      m = std::max(m, v);
      a = std::max(a, std::abs(v));
    }
    suffix[d] = suffix[d + 1] + m;
    scale += a;
  }
  // Slack keeps pruning conservative against rounding in the partial sums.
  const double slack = 1e-12 * scale;
  double best = floor;
  std::size_t arg = floor_atom;
  bool found = floor > -kInf;
  auto& stack = buf.stack;
  stack.clear();
  const auto& root = node_label_[0];
  for (std::size_t k = root.size(); k-- > 0;) {
    stack.push_back({0, static_cast<std::uint32_t>(k), score[0][root[k]]});
  }
  while (!stack.empty()) {
    const auto f = stack.back();
    stack.pop_back();
    if (found && f.value + suffix[f.depth + 1] < best - slack) continue;
    if (f.depth + 1 == n) {
      if (!found || f.value > best || (f.value == best && f.node < arg)) {
        best = f.value;
        arg = f.node;
        found = true;
      }
      continue;
    }
    const auto& begin = child_begin_[f.depth];
    const auto& lab = node_label_[f.depth + 1];
    const auto& sc = score[f.depth + 1];
    // Push in reverse so children are visited in index order.
    for (std::uint32_t c = begin[f.node + 1]; c-- > begin[f.node];) {
      stack.push_back({f.depth + 1, c, f.value + sc[lab[c]]});
    }
  }
  if (argmax) *argmax = arg;
  return best;
}

class ConvexDistanceSolver::Run {
 public:
  Run(const ConvexDistanceSolver& solver, const Outcome& t, const DistanceOptions& options)
      : sv_(solver),
        atoms_(solver.event_.outcomes()),
        n_(solver.space_.num_blocks()),
        dim_(solver.offset_[n_]),
        p_(solver.space_.outer_p),
        p_dual_(conjugate_exponent(p_)),
        tol_(options.tol),
        tpt_(outcome_point(solver.space_, t)),
        s_(dim_, 0.0),
        r_(dim_, 0.0),
        u_(dim_, 0.0),
        y_(dim_, 0.0),
        dir_(dim_, 0.0),
        norms_(n_, 0.0),
        slot_(atoms_.size(), -1),
        in_pool_(atoms_.size(), false) {
    std::size_t max_block_dim = 1;
    for (const auto& b : solver.space_.blocks) max_block_dim = std::max(max_block_dim, b.dim());
    mu_min_ = tol_ / (1000.0 * static_cast<double>(max_block_dim));
    score_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) score_[i].resize(solver.space_.blocks[i].size());
  }

  DistanceCert run(std::size_t max_iter) {
    start_at_nearest_vertex();
    std::size_t iter = descend(0, max_iter);
    if (best_upper_ >= tol_ && best_upper_ - best_lower_ > tol_ && best_lower_ < tol_) {
      // t may lie in the hull, where the lower bound cannot help: project
      // Euclidean-wise from the best point found so far.
      euclid_ = true;
      for (auto a : active_) slot_[a] = -1;
      active_ = best_active_;
      weight_ = best_weight_;
      for (std::size_t k = 0; k < active_.size(); ++k) slot_[active_[k]] = static_cast<std::int32_t>(k);
      rebuild_point();
      iter = descend(iter, iter + max_iter);
    }
    return finish(iter);
  }

 private:
  // Main loop; returns the iteration counter on exit.
  std::size_t descend(std::size_t iter, std::size_t max_iter) {
    std::size_t stagnant = 0;
    std::size_t stalled = 0;
    std::size_t since_full = 0;
    bool force_full = true;
    for (; iter < max_iter; ++iter) {
      if (iter % 128 == 127) rebuild_point();
      const double upper = std::pow(exact_objective(), 1.0 / p_);
      if (upper < best_upper_) {
        if (upper < best_upper_ * (1.0 - 1e-12)) stalled = 0;
        best_upper_ = upper;
        best_active_ = active_;
        best_weight_ = weight_;
      }
      if (best_upper_ < tol_) break;
      if (!euclid_ && sv_.any_smoothed_ && mu_ > mu_min_) {
        const double cap = std::max(kRelativeSmoothing * best_upper_, mu_min_);
        if (mu_ > cap || ++stalled > kStallIterations) {
          mu_ = std::max(std::min(mu_ * kSmoothingShrink, cap), mu_min_);
          stalled = 0;
        }
      }

      const double y_dual = evaluate_gradient();
      if (!(y_dual > 0.0)) break;

      // score[i][j] = <y_i, omega_ij - t_i>; the max over A is the FW vertex.
      fill_scores();
      double z = 0.0;  // <y, s - t>
      for (std::size_t k = 0; k < dim_; ++k) z += y_[k] * (s_[k] - tpt_[k]);
      // Cheap vertex search over atoms seen so far; the full trie runs when that
      // search looks converged, after a failed step, or periodically.
      std::size_t fw_atom = 0;
      double top = 0.0;
      bool full = euclid_ || force_full || ++since_full >= kFullOracleEvery;
      bool pooled = false;
      if (!full) {
        top = pool_max(&fw_atom);
        pooled = true;
        const double threshold = std::max(0.5 * tol_, sv_.any_smoothed_ ? mu_ : 0.0);
        full = (top - z) / y_dual <= threshold;
      }
      if (full) {
        if (!pooled) top = pool_max(&fw_atom);
        top = sv_.trie_max(score_, &fw_atom, top, fw_atom);
        remember(fw_atom);
        force_full = false;
        since_full = 0;
      }
      if (euclid_) {
        if (!(top - z > 1e-15 * y_dual * y_dual)) break;
      } else if (full) {
        const double lower = -top / y_dual;
        if (lower > best_lower_) best_lower_ = lower;
        if (best_upper_ - best_lower_ <= tol_) break;
        // A lower bound that never leaves zero after many steps points at t in the hull.
        if (best_lower_ <= 0.0 && ++stagnant > kZeroProbeIterations) break;
        const double gap_phi = (top - z) / y_dual;
        if (sv_.any_smoothed_ && mu_ > mu_min_ && gap_phi <= mu_) {
          mu_ = std::max(mu_ * kSmoothingShrink, mu_min_);
          continue;
        }
      }
      bool moved = false;
      if (slot_[fw_atom] < 0) {
        moved = away_step_iteration(fw_atom, top, z);
        if (moved) {
          evaluate_gradient();
          newton_phase();
        }
      } else {
        moved = newton_phase() || away_step_iteration(fw_atom, top, z);
      }
      if (!moved) {
        if (!full) {
          force_full = true;
          continue;
        }
        if (!euclid_ && sv_.any_smoothed_ && mu_ > mu_min_) {
          mu_ = std::max(mu_ * kSmoothingShrink, mu_min_);
          continue;
        }
        break;
      }
    }
    return iter;
  }

  void remember(std::size_t atom) {
    if (!in_pool_[atom]) {
      in_pool_[atom] = true;
      pool_.push_back(static_cast<std::uint32_t>(atom));
    }
  }

  // Best score over the pooled atoms; scores must be current. Lowest index wins ties.
  double pool_max(std::size_t* argmax) const {
    double top = -kInf;
    for (auto a : pool_) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_; ++i) acc += score_[i][atoms_[a].index[i]];
      if (acc > top || (acc == top && a < *argmax)) {
        top = acc;
        *argmax = a;
      }
    }
    return top;
  }

  NormTag tag(std::size_t i) const { return euclid_ ? NormTag::L2 : sv_.space_.blocks[i].norm; }
  bool smooth(std::size_t i) const { return !euclid_ && sv_.smoothed_[i]; }
  double q() const { return euclid_ ? 2.0 : p_; }

  const std::vector<double>& coord(std::size_t atom, std::size_t block) const {
    return sv_.space_.blocks[block].points[atoms_[atom].index[block]];
  }

  std::size_t block_dim(std::size_t i) const { return sv_.offset_[i + 1] - sv_.offset_[i]; }

  double exact_objective() {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t o = sv_.offset_[i], d = block_dim(i);
      for (std::size_t k = 0; k < d; ++k) r_[o + k] = tpt_[o + k] - s_[o + k];
      acc += power(block_norm(sv_.space_.blocks[i].norm, std::span(&r_[o], d)), p_);
    }
    return acc;
  }

  // y = gradient in r of the smoothed objective at r = t - s; returns its exact dual norm.
  double evaluate_gradient() {
    double dual_acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t o = sv_.offset_[i], d = block_dim(i);
      for (std::size_t k = 0; k < d; ++k) r_[o + k] = tpt_[o + k] - s_[o + k];
      norms_[i] = block_value_and_grad(tag(i), smooth(i), mu_, &r_[o], d, &u_[o]);
      const double w = q() * power(norms_[i], q() - 1.0);
      for (std::size_t k = 0; k < d; ++k) y_[o + k] = w * u_[o + k];
      dual_acc +=
          power(block_dual_norm(tag(i), std::span(&y_[o], d)), euclid_ ? 2.0 : p_dual_);
    }
    return std::pow(dual_acc, euclid_ ? 0.5 : 1.0 / p_dual_);
  }

  void fill_scores() {
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& b = sv_.space_.blocks[i];
      const std::size_t o = sv_.offset_[i];
      for (std::size_t j = 0; j < b.size(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < b.dim(); ++k) acc += y_[o + k] * (b.points[j][k] - tpt_[o + k]);
        score_[i][j] = acc;
      }
    }
  }

  void start_at_nearest_vertex() {
    std::vector<double> diff;
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& b = sv_.space_.blocks[i];
      diff.resize(b.dim());
      for (std::size_t j = 0; j < b.size(); ++j) {
        for (std::size_t k = 0; k < b.dim(); ++k) diff[k] = tpt_[sv_.offset_[i] + k] - b.points[j][k];
        score_[i][j] = -power(block_norm(b.norm, diff), p_);
      }
    }
    std::size_t start = 0;
    sv_.trie_max(score_, &start);
    active_.assign(1, static_cast<std::uint32_t>(start));
    weight_.assign(1, 1.0);
    slot_[start] = 0;
    remember(start);
    rebuild_point();
  }

  void rebuild_point() {
    std::fill(s_.begin(), s_.end(), 0.0);
    double total = 0.0;
    for (double w : weight_) total += w;
    for (auto& w : weight_) w /= total;
    for (std::size_t k = 0; k < active_.size(); ++k) {
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& pt = coord(active_[k], i);
        for (std::size_t c = 0; c < pt.size(); ++c) s_[sv_.offset_[i] + c] += weight_[k] * pt[c];
      }
    }
  }

  void add_atom(std::size_t atom, double w) {
    slot_[atom] = static_cast<std::int32_t>(active_.size());
    active_.push_back(static_cast<std::uint32_t>(atom));
    weight_.push_back(w);
  }

  void drop_slot(std::size_t k) {
    slot_[active_[k]] = -1;
    active_[k] = active_.back();
    weight_[k] = weight_.back();
    active_.pop_back();
    weight_.pop_back();
    if (k < active_.size()) slot_[active_[k]] = static_cast<std::int32_t>(k);
  }

  // Derivative in gamma of the smoothed objective at s + gamma * dir.
  double slope(double gamma) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t o = sv_.offset_[i], d = block_dim(i);
      for (std::size_t k = 0; k < d; ++k) r_[o + k] = tpt_[o + k] - s_[o + k] - gamma * dir_[o + k];
      const double nv = block_value_and_grad(tag(i), smooth(i), mu_, &r_[o], d, &u_[o]);
      const double w = q() * power(nv, q() - 1.0);
      double inner = 0.0;
      for (std::size_t k = 0; k < d; ++k) inner += u_[o + k] * dir_[o + k];
      acc -= w * inner;
    }
    return acc;
  }

  // Exact minimization of the convex surrogate over [0, gamma_max]: Illinois
  // false position on the slope, keeping a bracket so the result never overshoots.
  double line_search(double gamma_max) {
    double hi = gamma_max, s_hi = slope(gamma_max);
    if (s_hi <= 0.0) return gamma_max;
    double lo = 0.0, s_lo = slope(0.0);
    if (s_lo >= 0.0) return 0.0;
    // Near the minimizer the objective error is quadratic in the step error.
    const double flat = 1e-10 * -s_lo;
    int side = 0;
    for (int it = 0; it < 100 && hi - lo > 1e-10 * hi && -s_lo > flat; ++it) {
      double x = (lo * s_hi - hi * s_lo) / (s_hi - s_lo);
      if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
      const double fx = slope(x);
      if (fx > 0.0) {
        hi = x;
        s_hi = fx;
        if (side == 1) s_lo *= 0.5;
        side = 1;
      } else {
        lo = x;
        s_lo = fx;
        if (fx == 0.0) break;
        if (side == -1) s_hi *= 0.5;
        side = -1;
      }
    }
    return lo;
  }

  // One away-step conditional gradient iteration. Scores must be current.
  bool away_step_iteration(std::size_t fw_atom, double top, double z) {
    const double gap_fw = top - z;
    std::size_t away = 0;
    double away_score = kInf;
    for (std::size_t k = 0; k < active_.size(); ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_; ++i) acc += score_[i][atoms_[active_[k]].index[i]];
      if (acc < away_score) {
        away_score = acc;
        away = k;
      }
    }
    const double gap_away = z - away_score;
    if (!(std::max(gap_fw, gap_away) > 0.0)) return false;

    const bool fw_step = gap_fw >= gap_away;
    double gamma_max = 1.0;
    if (fw_step) {
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& pt = coord(fw_atom, i);
        for (std::size_t c = 0; c < pt.size(); ++c) {
          dir_[sv_.offset_[i] + c] = pt[c] - s_[sv_.offset_[i] + c];
        }
      }
    } else {
      const double wv = weight_[away];
      gamma_max = wv / (1.0 - wv);
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& pt = coord(active_[away], i);
        for (std::size_t c = 0; c < pt.size(); ++c) {
          dir_[sv_.offset_[i] + c] = s_[sv_.offset_[i] + c] - pt[c];
        }
      }
    }
    const double gamma = line_search(gamma_max);
    if (!(gamma > 0.0)) return false;

    for (std::size_t k = 0; k < dim_; ++k) s_[k] += gamma * dir_[k];
    if (fw_step) {
      if (gamma >= 1.0) {
        for (auto a : active_) slot_[a] = -1;
        active_.clear();
        weight_.clear();
        add_atom(fw_atom, 1.0);
        rebuild_point();
        return true;
      }
      for (auto& w : weight_) w *= (1.0 - gamma);
      if (slot_[fw_atom] < 0) {
        add_atom(fw_atom, gamma);
      } else {
        weight_[static_cast<std::size_t>(slot_[fw_atom])] += gamma;
      }
    } else {
      for (auto& w : weight_) w *= (1.0 + gamma);
      weight_[away] -= gamma;
      if (gamma >= gamma_max || weight_[away] <= 0.0) {
        drop_slot(away);
        rebuild_point();
      }
    }
    return true;
  }

  // Newton steps on the active face, repeated on the smaller face whenever a
  // step stops at the simplex boundary. Gradient state must be current.
  bool newton_phase() {
    bool moved = false;
    for (std::size_t rep = 0; rep < kMaxFaceDrops && newton_step(); ++rep) {
      moved = true;
      if (!truncated_) break;
      evaluate_gradient();
    }
    return moved;
  }

  // Newton step for the smoothed objective restricted to the active face,
  // truncated at the boundary of the simplex. Gradient state must be current.
  bool newton_step() {
    const std::size_t m = active_.size();
    if (m < 2) return false;
    Eigen::MatrixXd verts(dim_, m);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& pt = coord(active_[k], i);
        for (std::size_t c = 0; c < pt.size(); ++c) verts(sv_.offset_[i] + c, k) = pt[c];
      }
    }
    // Hessian in r is block diagonal.
    Eigen::MatrixXd hv(dim_, m);
    hv.setZero();
    Eigen::MatrixXd block;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t o = sv_.offset_[i], d = block_dim(i);
      block.resize(d, d);
      block_power_hessian(tag(i), smooth(i), mu_, q(), &r_[o], d,
                          norms_[i], &u_[o], block);
      hv.middleRows(o, d) = block * verts.middleRows(o, d);
    }
    Eigen::MatrixXd kkt(m + 1, m + 1);
    kkt.topLeftCorner(m, m) = verts.transpose() * hv;
    // The Hessian scales like phi^(p-2); normalize it against the unit constraint row.
    double scale = kkt.topLeftCorner(m, m).cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    kkt.topLeftCorner(m, m) /= scale;
    kkt.topRightCorner(m, 1).setOnes();
    kkt.bottomLeftCorner(1, m).setOnes();
    kkt(m, m) = 0.0;
    Eigen::VectorXd rhs(m + 1);
    const Eigen::Map<const Eigen::VectorXd> y(y_.data(), static_cast<Eigen::Index>(dim_));
    rhs.head(m) = verts.transpose() * y / scale;  // minus the lambda-gradient
    rhs(m) = 0.0;
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    const Eigen::VectorXd step = sol.head(m);
    if (!step.allFinite() || step.dot(rhs.head(m)) <= 0.0) return false;

    double gamma_pos = kInf;
    std::size_t blocking = m;
    for (std::size_t k = 0; k < m; ++k) {
      if (step(k) < 0.0 && weight_[k] / -step(k) < gamma_pos) {
        gamma_pos = weight_[k] / -step(k);
        blocking = k;
      }
    }
    const Eigen::VectorXd dir = verts * step;
    for (std::size_t k = 0; k < dim_; ++k) dir_[k] = dir(static_cast<Eigen::Index>(k));
    const double gamma_max = std::min(gamma_pos, 1.0);
    const double gamma = line_search(gamma_max);
    if (!(gamma > 0.0)) return false;

    for (std::size_t k = 0; k < m; ++k) weight_[k] += gamma * step(k);
    truncated_ = blocking < m && gamma >= gamma_pos;
    if (truncated_) weight_[blocking] = 0.0;
    for (std::size_t k = active_.size(); k-- > 0;) {
      if (weight_[k] <= 0.0) drop_slot(k);
    }
    rebuild_point();
    return true;
  }

  DistanceCert finish(std::size_t iter) {
    DistanceCert cert;
    cert.coefficients.assign(atoms_.size(), 0.0);
    for (std::size_t k = 0; k < best_active_.size(); ++k) {
      cert.coefficients[best_active_[k]] = best_weight_[k];
    }
    const double total = kahan_sum(cert.coefficients);
    for (auto& c : cert.coefficients) c /= total;
    const auto hull = hull_point(sv_.space_, sv_.event_, cert.coefficients);
    cert.upper = mixed_distance(sv_.space_, tpt_, hull, p_);
    cert.iterations = iter;
    if (cert.upper < tol_) {
      cert.lower = 0.0;
      cert.certified = true;
    } else {
      cert.lower = std::min(best_lower_, cert.upper);
      cert.certified = cert.upper - cert.lower <= tol_;
    }
    return cert;
  }

  const ConvexDistanceSolver& sv_;
  const std::vector<Outcome>& atoms_;
  std::size_t n_, dim_;
  double p_, p_dual_, tol_;
  bool euclid_ = false;
  bool truncated_ = false;
  double mu_ = kInitialSmoothing;
  double mu_min_ = 0.0;
  std::vector<double> tpt_, s_, r_, u_, y_, dir_, norms_;
  std::vector<std::vector<double>> score_;
  std::vector<std::uint32_t> active_;
  std::vector<double> weight_;
  std::vector<std::int32_t> slot_;
  std::vector<bool> in_pool_;
  std::vector<std::uint32_t> pool_;
  double best_upper_ = kInf;
  double best_lower_ = 0.0;
  std::vector<std::uint32_t> best_active_;
  std::vector<double> best_weight_;
};

DistanceCert ConvexDistanceSolver::solve(const Outcome& t, const DistanceOptions& options) const {
  if (!(options.tol > 0.0)) throw std::invalid_argument("convex distance: tol must be positive");
  require_outcome(space_, t);
  const std::size_t num_atoms = event_.size();
  if (const std::size_t hit = event_.find(t); hit < num_atoms) {
    DistanceCert cert;
    cert.coefficients.assign(num_atoms, 0.0);
    cert.coefficients[hit] = 1.0;
    cert.certified = true;
    return cert;
  }
  const std::size_t max_iter =
      options.max_iterations ? options.max_iterations : 50 * num_atoms + 10000;
  return Run(*this, t, options).run(max_iter);
}

DistanceCert convex_distance(const ProductSpace& space, const Event& event, const Outcome& t,
                             double tol) {
  return ConvexDistanceSolver(space, event).solve(t, DistanceOptions{tol, 0});
}

std::vector<double> hull_point(const ProductSpace& space, const Event& event,
                               const std::vector<double>& coefficients) {
  if (coefficients.size() != event.size()) {
    throw std::invalid_argument("hull_point: one coefficient per outcome of A is required");
  }
  const std::size_t dim = space.ambient_dim();
  std::vector<KahanSum> acc(dim);
  for (std::size_t a = 0; a < event.size(); ++a) {
    if (coefficients[a] == 0.0) continue;
    std::size_t off = 0;
    for (std::size_t i = 0; i < space.num_blocks(); ++i) {
      const auto& pt = space.blocks[i].points[event.outcomes()[a].index[i]];
      for (std::size_t c = 0; c < pt.size(); ++c) acc[off + c] += coefficients[a] * pt[c];
      off += pt.size();
    }
  }
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim; ++k) out[k] = acc[k].value();
  return out;
}

double min_norm_oracle(const ProductSpace& space, const Event& event, const Outcome& t,
                       std::size_t grid_resolution) {
  if (event.empty()) throw SpaceError("min_norm_oracle: event A is empty");
  if (event.size() > 4) throw std::invalid_argument("min_norm_oracle: |A| must be at most 4");
  if (grid_resolution == 0) throw std::invalid_argument("min_norm_oracle: resolution must be positive");
  require_outcome(space, t);
  const double p = space.outer_p;
  const std::size_t m = event.size();
  const std::size_t dim = space.ambient_dim();
  const auto tpt = outcome_point(space, t);
  std::vector<std::vector<double>> verts;
  for (const auto& a : event.outcomes()) verts.push_back(outcome_point(space, a));

  const double res = static_cast<double>(grid_resolution);
  std::vector<double> point(dim);
  double best = kInf;
  std::vector<std::size_t> steps(m, 0);
  // Enumerate compositions of grid_resolution into m nonnegative parts.
  auto visit = [&]() {
    for (std::size_t k = 0; k < dim; ++k) {
      double acc = 0.0;
      for (std::size_t a = 0; a < m; ++a) acc += static_cast<double>(steps[a]) / res * verts[a][k];
      point[k] = acc;
    }
    const double d = mixed_distance(space, tpt, point, p);
    best = std::min(best, std::pow(d, p));
  };
  auto recurse = [&](auto&& self, std::size_t idx, std::size_t remaining) -> void {
    if (idx + 1 == m) {
      steps[idx] = remaining;
      visit();
      return;
    }
    for (std::size_t k = 0; k <= remaining; ++k) {
      steps[idx] = k;
      self(self, idx + 1, remaining - k);
    }
  };
  recurse(recurse, 0, grid_resolution);
  return std::pow(best, 1.0 / p);
}

}  // namespace cdlab
