#include "cdlab/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <sstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cdlab/numeric.hpp"
#include "cdlab/rng.hpp"

namespace cdlab {

namespace {

inline double abs_pow(double a, double u) {
  a = std::abs(a);
  if (u == 1.0) return a;
  if (u == 2.0) return a * a;
  if (u == 1.5) return a * std::sqrt(a);
  return std::pow(a, u);
}

double weighted_power_sum(const Eigen::VectorXd& values, const Eigen::VectorXd& mu, double u) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) acc += mu(i) * abs_pow(values(i), u);
  return acc;
}

Eigen::VectorXd random_direction(CounterRng& rng, std::size_t n) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < g.size(); ++k) g(k) = rng.normal();
  return g;
}

}  // namespace

std::vector<std::string> validate_subspace(const SampledSubspace& sub) {
  std::vector<std::string> out;
  if (sub.basis.rows() == 0 || sub.basis.cols() == 0) out.push_back("basis is empty");
  if (sub.mu.size() != sub.basis.rows()) {
    out.push_back("mu has " + std::to_string(sub.mu.size()) + " weights for " +
                  std::to_string(sub.basis.rows()) + " atoms");
  }
  if ((sub.mu.array() < 0.0).any() || !sub.mu.allFinite()) {
    out.push_back("mu has negative or non-finite weights");
  }
  if (std::abs(kahan_sum(std::span<const double>(sub.mu.data(), static_cast<std::size_t>(sub.mu.size()))) - 1.0) >
      1e-12) {
    out.push_back("mu does not sum to 1");
  }
  if (!(sub.r > 0.0 && sub.r < sub.s && sub.s <= 2.0 * sub.r)) {
    out.push_back("exponents must satisfy 0 < r < s <= 2r");
  }
  if (sub.basis.rows() > 0 && sub.basis.cols() > 0 && sub.basis.allFinite()) {
    // Rank of the basis columns, measured in L2(mu) so that null atoms do not count.
    Eigen::MatrixXd weighted = sub.basis;
    if (sub.mu.size() == sub.basis.rows()) {
      weighted = sub.mu.array().max(0.0).sqrt().matrix().asDiagonal() * sub.basis;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(weighted);
    qr.setThreshold(1e-10);
    if (static_cast<std::size_t>(qr.rank()) < sub.dim()) out.push_back("basis columns are dependent");
  } else if (!sub.basis.allFinite()) {
    out.push_back("basis has non-finite entries");
  }
  return out;
}

void require_valid(const SampledSubspace& sub) {
  const auto v = validate_subspace(sub);
  if (v.empty()) return;
  std::string msg = "invalid subspace:";
  for (const auto& s : v) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

SampledSubspace subspace_from_json(const nlohmann::json& j) {
  SampledSubspace sub;
  try {
    const auto rows = j.at("basis").get<std::vector<std::vector<double>>>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    sub.r = j.at("r").get<double>();
    sub.s = j.at("s").get<double>();
    const std::size_t n = rows.empty() ? 0 : rows.front().size();
    sub.basis.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != n) throw std::invalid_argument("basis rows have differing lengths");
      for (std::size_t k = 0; k < n; ++k) {
        sub.basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
    }
    sub.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed subspace description: ") + e.what());
  }
  return sub;
}

SampledSubspace load_subspace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open subspace file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("cannot parse subspace file " + path.string() + ": " + e.what());
  }
  return subspace_from_json(j);
}

SampledSubspace gaussian_subspace(std::size_t n, std::size_t num_atoms, double r, double s,
                                  std::uint64_t seed) {
  SampledSubspace sub;
  sub.r = r;
  sub.s = s;
  sub.basis.resize(static_cast<Eigen::Index>(num_atoms), static_cast<Eigen::Index>(n));
  CounterRng rng(seed, "gaussian-subspace");
  for (Eigen::Index i = 0; i < sub.basis.rows(); ++i) {
    for (Eigen::Index k = 0; k < sub.basis.cols(); ++k) sub.basis(i, k) = rng.normal();
  }
  sub.mu = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(num_atoms),
                                     1.0 / static_cast<double>(num_atoms));
  return sub;
}

double lu_norm(const Eigen::VectorXd& x, const SampledSubspace& sub, double u) {
  if (x.size() != sub.basis.cols()) throw std::invalid_argument("lu_norm: dimension mismatch");
  if (!(u > 0.0)) throw std::invalid_argument("lu_norm: exponent must be positive");
  const Eigen::VectorXd values = sub.basis * x;
  return std::pow(weighted_power_sum(values, sub.mu, u), 1.0 / u);
}

double lr_norm(const Eigen::VectorXd& x, const SampledSubspace& sub) { return lu_norm(x, sub, sub.r); }
double ls_norm(const Eigen::VectorXd& x, const SampledSubspace& sub) { return lu_norm(x, sub, sub.s); }

KEstimate estimate_K(const SampledSubspace& sub, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw std::invalid_argument("estimate_K: budget must be >= 1");
  const std::size_t n = sub.dim();
  KEstimate est;
  est.k_hat = 0.0;
  auto ratio = [&](const Eigen::VectorXd& x) {
    ++est.evaluations;
    const Eigen::VectorXd v = sub.basis * x;
    const double rr = weighted_power_sum(v, sub.mu, sub.r);
    if (!(rr > 0.0)) return 0.0;
    return std::pow(weighted_power_sum(v, sub.mu, sub.s), 1.0 / sub.s) / std::pow(rr, 1.0 / sub.r);
  };
  auto ascend = [&](Eigen::VectorXd x) {
    x.normalize();
    double best = ratio(x);
    for (double h = 0.5; h >= 1e-6;) {
      bool moved = false;
      for (std::size_t j = 0; j < n; ++j) {
        for (double sign : {1.0, -1.0}) {
          Eigen::VectorXd y = x;
          y(static_cast<Eigen::Index>(j)) += sign * h;
          const double norm = y.norm();
          if (!(norm > 0.0)) continue;
          y /= norm;
          const double v = ratio(y);
          if (v > best + 1e-9) {
            best = v;
            x = y;
            moved = true;
          }
        }
      }
      if (!moved) h *= 0.5;
    }
    if (best > est.k_hat) {
      est.k_hat = best;
      est.argmax = x;
    }
  };
  for (std::size_t j = 0; j < n; ++j) {
    ascend(Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j)));
  }
  CounterRng rng(seed, "estimate-k");
  for (std::size_t b = 0; b < budget; ++b) ascend(random_direction(rng, n));
  if (!(est.k_hat > 0.0)) throw std::invalid_argument("estimate_K: every direction has zero norm");
  return est;
}

SplitReport split_atoms(const SampledSubspace& sub, double cap) {
  if (!(cap > 0.0)) throw std::invalid_argument("split_atoms: cap must be positive");
  SplitReport rep;
  rep.cap = cap;
  rep.atoms_before = sub.atoms();
  std::vector<std::size_t> copies(sub.atoms(), 1);
  for (std::size_t i = 0; i < sub.atoms(); ++i) {
    const double m = sub.mu(static_cast<Eigen::Index>(i));
    if (cap >= 1.0 || m <= cap) continue;
    std::size_t c = static_cast<std::size_t>(std::ceil(m / cap));
    while (m / static_cast<double>(c) > cap) ++c;
    copies[i] = c;
  }
  const std::size_t total = std::accumulate(copies.begin(), copies.end(), std::size_t{0});
  rep.subspace.r = sub.r;
  rep.subspace.s = sub.s;
  rep.subspace.basis.resize(static_cast<Eigen::Index>(total), sub.basis.cols());
  rep.subspace.mu.resize(static_cast<Eigen::Index>(total));
  std::size_t row = 0;
  for (std::size_t i = 0; i < sub.atoms(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < copies[i]; ++c, ++row) {
      const auto rr = static_cast<Eigen::Index>(row);
      rep.subspace.basis.row(rr) = sub.basis.row(ii);
      rep.subspace.mu(rr) = sub.mu(ii) / static_cast<double>(copies[i]);
      rep.source.push_back(i);
    }
  }
  rep.atoms_after = total;
  rep.max_atom = total ? rep.subspace.mu.maxCoeff() : 0.0;
  const double two_m = 2.0 / cap;
  rep.within_two_m = static_cast<double>(total) <= two_m * (1.0 + 1e-12);
  rep.atoms_within_two_over_n = rep.max_atom <= 2.0 / static_cast<double>(total) * (1.0 + 1e-12);
  return rep;
}

NetSpec build_net(const SampledSubspace& sub, double epsilon, std::uint64_t seed,
                  const NetOptions& options) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("build_net: epsilon must be positive");
  if (sub.dim() == 0 || sub.dim() > 6) throw std::invalid_argument("build_net: need 1 <= n <= 6");
  if (!(sub.r <= 2.0)) throw std::invalid_argument("build_net: r must be at most 2");
  const std::size_t n = sub.dim();
  const auto N = sub.basis.rows();

  // ||v||_r <= ||v||_{L2(mu)} on a probability space, so Gram distance <= eps proves coverage.
  const Eigen::MatrixXd gram = sub.basis.transpose() * sub.mu.asDiagonal() * sub.basis;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("build_net: singular Gram matrix");
  const Eigen::MatrixXd whiten = llt.matrixU();

  NetSpec net;
  net.epsilon = epsilon;
  net.theoretical_size = std::pow(2.0 / epsilon, static_cast<double>(n) * sub.r);
  std::vector<Eigen::VectorXd> white;    // whitened coordinates of net points
  std::vector<Eigen::VectorXd> values;   // function values of net points
  constexpr std::size_t kExactChecks = 8;

  auto unit = [&](CounterRng& rng, Eigen::VectorXd& x, Eigen::VectorXd& v) {
    for (;;) {
      x = random_direction(rng, n);
      v = sub.basis * x;
      const double norm = std::pow(weighted_power_sum(v, sub.mu, sub.r), 1.0 / sub.r);
      if (norm > 0.0) {
        x /= norm;
        v /= norm;
        return;
      }
    }
  };
  std::vector<std::pair<double, std::size_t>> near;
  auto covered = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& v, double radius) {
    const double radius_r = std::pow(radius, sub.r);
    near.clear();
    for (std::size_t k = 0; k < white.size(); ++k) {
      const double d = (white[k] - w).norm();
      if (d <= radius) return true;
      near.emplace_back(d, k);
    }
    const std::size_t take = std::min(kExactChecks, near.size());
    std::partial_sort(near.begin(), near.begin() + static_cast<std::ptrdiff_t>(take), near.end());
    for (std::size_t m = 0; m < take; ++m) {
      const auto& y = values[near[m].second];
      double acc = 0.0;
      for (Eigen::Index i = 0; i < N; ++i) acc += sub.mu(i) * abs_pow(v(i) - y(i), sub.r);
      if (acc <= radius_r) return true;
    }
    return false;
  };
  auto add = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
    net.points.push_back(x);
    white.push_back(whiten * x);
    values.push_back(v);
  };

  Eigen::VectorXd x, v;
  // Unit vectors are at most this far apart, so one point covers the sphere.
  const double sphere_diameter = sub.r >= 1.0 ? 2.0 : std::pow(2.0, 1.0 / sub.r);
  if (epsilon >= sphere_diameter) {
    CounterRng rng(seed, "net-pool");
    unit(rng, x, v);
    add(x, v);
    net.certified = true;
    return net;
  }
  {
    CounterRng rng(seed, "net-pool");
    const double radius = options.build_ratio * epsilon;
    const std::size_t pool = options.pool_factor * options.probe_count;
    for (std::size_t k = 0; k < pool && net.points.size() < options.size_cap; ++k) {
      unit(rng, x, v);
      if (!covered(whiten * x, v, radius)) add(x, v);
    }
  }
  for (std::size_t round = 0; round < options.max_audit_rounds; ++round) {
    CounterRng rng(seed, "net-probe", round);
    std::size_t misses = 0;
    for (std::size_t k = 0; k < options.probe_count; ++k) {
      unit(rng, x, v);
      if (!covered(whiten * x, v, epsilon)) {
        ++misses;
        if (net.points.size() < options.size_cap) add(x, v);
      }
    }
    net.probes += options.probe_count;
    net.audit_rounds = round + 1;
    if (misses == 0) {
      net.certified = true;
      break;
    }
    if (net.points.size() >= options.size_cap) break;
  }
  return net;
}

DeltaChoice choose_delta_k(double n, double num_atoms, double K, double r, double s,
                           double epsilon, double c_universal) {
  if (!(n > 0.0 && num_atoms > 0.0 && K > 0.0 && r > 0.0 && s > r && c_universal > 0.0)) {
    throw std::invalid_argument("choose_delta_k: inputs must be positive with s > r");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("choose_delta_k: epsilon must lie in (0, 1)");
  }
  const double q = s / r;
  const double p = q / (q - 1.0);
  DeltaChoice out;
  out.eta = c_universal * std::pow(epsilon, r * p) / (r * std::log(2.0 / epsilon));
  out.delta = std::pow(n * std::pow(K, r * p) / (out.eta * num_atoms), 1.0 / p);
  out.k_target = 2.0 * out.delta * num_atoms;
  out.delta_exceeds_one = out.delta > 1.0;
  return out;
}

std::vector<std::uint8_t> bernoulli_mask(std::size_t num_atoms, double delta, std::uint64_t seed) {
  CounterRng rng(seed, "bernoulli-mask");
  std::vector<std::uint8_t> mask(num_atoms);
  for (auto& m : mask) m = rng.bernoulli(delta) ? 1 : 0;
  return mask;
}

SelectionCertifier::SelectionCertifier(const SampledSubspace& sub, const NetSpec& net) : r_(sub.r) {
  if (net.points.empty()) throw std::invalid_argument("selection: empty net");
  weights_.resize(sub.basis.rows(), static_cast<Eigen::Index>(net.points.size()));
  for (std::size_t k = 0; k < net.points.size(); ++k) {
    if (net.points[k].size() != sub.basis.cols()) {
      throw std::invalid_argument("selection: net point has wrong dimension");
    }
    const Eigen::VectorXd v = sub.basis * net.points[k];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      weights_(i, static_cast<Eigen::Index>(k)) = sub.mu(i) * abs_pow(v(i), r_);
    }
  }
}

SelectionTrial SelectionCertifier::evaluate_mask(std::vector<std::uint8_t> mask, double delta,
                                                 double epsilon) const {
  if (mask.size() != static_cast<std::size_t>(weights_.rows())) {
    throw std::invalid_argument("selection: mask length differs from atom count");
  }
  SelectionTrial t;
  t.delta = delta;
  t.scale = std::pow(delta, 1.0 / r_);
  Eigen::RowVectorXd sums = Eigen::RowVectorXd::Zero(weights_.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      sums += weights_.row(static_cast<Eigen::Index>(i));
      ++t.k;
    }
  }
  t.mask = std::move(mask);
  t.sums.assign(sums.data(), sums.data() + sums.size());
  const double lo = sums.minCoeff(), hi = sums.maxCoeff();
  t.max_deviation = std::max(hi - delta, delta - lo);
  t.distortion = lo > 0.0 ? std::pow(hi / lo, 1.0 / r_) : std::numeric_limits<double>::infinity();
  t.pass = lo > 0.0 && t.max_deviation <= std::pow(epsilon, r_) * delta;
  return t;
}

SelectionTrial SelectionCertifier::trial(double delta, double epsilon, std::uint64_t seed) const {
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("selection: delta must lie in (0, 1]");
  auto t = evaluate_mask(bernoulli_mask(static_cast<std::size_t>(weights_.rows()), delta, seed),
                         delta, epsilon);
  t.seed = seed;
  return t;
}

SelectionTrial select_and_certify(const SampledSubspace& sub, const NetSpec& net, double delta,
                                  double epsilon, std::uint64_t seed) {
  if (!net.certified) throw std::invalid_argument("selection: net is not certified");
  return SelectionCertifier(sub, net).trial(delta, epsilon, seed);
}

SelectionTailReport selection_tail_experiment(const SampledSubspace& sub, const Eigen::VectorXd& x,
                                              double delta, std::size_t trials,
                                              const std::vector<double>& c_grid, std::uint64_t seed,
                                              double K) {
  const auto N = sub.basis.rows();
  const double cap = 2.0 / static_cast<double>(N);
  if ((sub.mu.array() > cap * (1.0 + 1e-12)).any()) {
    throw std::invalid_argument("selection_tail_experiment: some atom exceeds 2/N");
  }
  if (std::abs(lr_norm(x, sub) - 1.0) > 1e-10) {
    throw std::invalid_argument("selection_tail_experiment: x must have unit norm");
  }
  if (trials == 0) throw std::invalid_argument("selection_tail_experiment: trials must be positive");
  const Eigen::VectorXd v = sub.basis * x;
  std::vector<double> w(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) w[static_cast<std::size_t>(i)] = sub.mu(i) * abs_pow(v(i), sub.r);

  std::vector<double> dev(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng rng(seed, "selection-tail", t);
    double acc = 0.0;
    for (double wi : w) {
      if (rng.bernoulli(delta)) acc += wi;
    }
    dev[t] = std::abs(acc - delta);
  }
  std::sort(dev.begin(), dev.end());
  SelectionTailReport rep;
  rep.trials = trials;
  rep.K = K;
  const double p = sub.p();
  for (double c : c_grid) {
    const auto above = dev.end() - std::upper_bound(dev.begin(), dev.end(), c);
    SelectionTailRow row;
    row.c = c;
    row.empirical = static_cast<double>(above) / static_cast<double>(trials);
    row.bound = 4.0 * std::exp(-std::pow(c, p) * static_cast<double>(N) /
                               (8.0 * std::pow(K, sub.r * p)));
    row.violated = row.empirical - 3.0 * std::sqrt(row.empirical / static_cast<double>(trials)) > row.bound;
    rep.rows.push_back(row);
  }
  return rep;
}

std::vector<double> binomial_pmf(std::size_t n, double delta) {
  std::vector<double> pmf(n + 1, 0.0);
  if (delta <= 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (delta >= 1.0) {
    pmf[n] = 1.0;
    return pmf;
  }
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    pmf[k] = std::exp(std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0) +
                      kk * std::log(delta) + (nn - kk) * std::log1p(-delta));
  }
  return pmf;
}

DensityProvider uniform_density_provider(std::size_t k_budget, std::uint64_t seed) {
  return [k_budget, seed](const SampledSubspace& sub) {
    Density d;
    d.mu = Eigen::VectorXd::Constant(sub.basis.rows(), 1.0 / static_cast<double>(sub.basis.rows()));
    SampledSubspace uniform = sub;
    uniform.mu = d.mu;
    d.K = estimate_K(uniform, k_budget, derive_seed(seed, "uniform-density", sub.atoms())).k_hat;
    return d;
  };
}

IterationReport iterate_embedding(const SampledSubspace& sub, std::size_t rounds,
                                  const std::vector<double>& epsilon_per_round,
                                  const DensityProvider& density, double c_universal,
                                  std::uint64_t seed, const IterationOptions& options) {
  if (rounds == 0) throw std::invalid_argument("iterate: rounds must be >= 1");
  if (epsilon_per_round.empty()) throw std::invalid_argument("iterate: no epsilon given");
  require_valid(sub);
  IterationReport rep;
  SampledSubspace cur = sub;
  double cumulative = 1.0;
  rep.ok = true;
  for (std::size_t j = 0; j < rounds; ++j) {
    IterationRound rd;
    rd.round = j + 1;
    rd.epsilon = epsilon_per_round[std::min(j, epsilon_per_round.size() - 1)];
    rd.atoms_before = cur.atoms();

    Density dens = density(cur);
    if (dens.mu.size() != cur.basis.rows()) throw std::runtime_error("density provider: wrong size");
    for (Eigen::Index i = 0; i < cur.basis.rows(); ++i) {
      if (cur.mu(i) == dens.mu(i)) continue;
      if (!(dens.mu(i) > 0.0)) throw std::runtime_error("density provider: zero weight on an atom");
      // Keeps x -> x isometric between the two measures.
      cur.basis.row(i) *= std::pow(cur.mu(i) / dens.mu(i), 1.0 / cur.r);
    }
    cur.mu = dens.mu;
    rd.K = dens.K;
    cur = split_atoms(cur, 2.0 / static_cast<double>(cur.atoms())).subspace;

    const auto choice = choose_delta_k(static_cast<double>(cur.dim()), static_cast<double>(cur.atoms()),
                                       dens.K, cur.r, cur.s, rd.epsilon, c_universal);
    rd.delta = choice.delta;
    rd.k_target = choice.k_target;
    if (choice.delta >= 1.0) {
      rd.no_op = true;
      rd.pass = true;
      rd.atoms_after = cur.atoms();
      rd.cumulative_distortion = cumulative;
      rep.rounds.push_back(std::move(rd));
      continue;
    }
    const auto net = build_net(cur, rd.epsilon, derive_seed(seed, "iterate-net", j), options.net);
    rd.net_size = net.points.size();
    rd.net_certified = net.certified;
    const SelectionCertifier certifier(cur, net);
    SelectionTrial chosen;
    for (std::size_t attempt = 0; attempt < options.max_retries && !rd.pass; ++attempt) {
      const std::uint64_t s = derive_seed(seed, "iterate-select", (j << 32) | attempt);
      rd.seeds.push_back(s);
      chosen = certifier.trial(choice.delta, rd.epsilon, s);
      rd.pass = chosen.pass && net.certified;
    }
    if (!rd.pass) {
      rd.atoms_after = cur.atoms();
      rd.cumulative_distortion = cumulative;
      rep.rounds.push_back(std::move(rd));
      rep.ok = false;
      break;
    }
    rd.distortion = chosen.distortion;
    rd.scale = chosen.scale;
    cumulative *= chosen.distortion;
    rd.cumulative_distortion = cumulative;

    SampledSubspace next;
    next.r = cur.r;
    next.s = cur.s;
    next.basis.resize(static_cast<Eigen::Index>(chosen.k), cur.basis.cols());
    next.mu.resize(static_cast<Eigen::Index>(chosen.k));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < chosen.mask.size(); ++i) {
      if (!chosen.mask[i]) continue;
      next.basis.row(row) = cur.basis.row(static_cast<Eigen::Index>(i));
      next.mu(row) = cur.mu(static_cast<Eigen::Index>(i));
      ++row;
    }
    next.mu /= next.mu.sum();
    cur = std::move(next);
    rd.atoms_after = cur.atoms();
    rep.rounds.push_back(std::move(rd));
  }
  return rep;
}

std::string iteration_csv(const IterationReport& report) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "round,N,k,distortion\n";
  for (const auto& r : report.rounds) {
    out << r.round << ',' << r.atoms_before << ',' << r.atoms_after << ',' << r.distortion << '\n';
  }
  return out.str();
}

void write_iteration_csv(const IterationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << iteration_csv(report);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace cdlab
