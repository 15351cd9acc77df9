#include "cdlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <locale>
#include <set>
#include <sstream>

#include "cdlab/deviation.hpp"
#include "cdlab/inequality_lab.hpp"
#include "cdlab/product_space.hpp"
#include "cdlab/rng.hpp"
#include "cdlab/sparsify.hpp"

namespace cdlab {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

// Typed access to a parameter object; every value read (or defaulted) is
// echoed into `out`, and keys never read are rejected by finish().
class Params {
 public:
  Params(const json& in, ojson& out, std::string where)
      : in_(in), out_(out), where_(std::move(where)) {
    if (!in_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    T v = std::move(fallback);
    if (in_.contains(key)) {
      try {
        v = in_.at(key).get<T>();
      } catch (const json::exception&) {
        throw ConfigError(where_ + ": parameter '" + key + "' has the wrong type");
      }
    }
    out_[key] = v;
    return v;
  }

  /// Raw sub-document; echoed verbatim.
  const json& raw(const std::string& key) {
    used_.insert(key);
    const json& v = in_.at(key);
    out_[key] = ojson::parse(v.dump());
    return v;
  }

  Params child(const std::string& key) {
    used_.insert(key);
    out_[key] = ojson::object();
    static const json kEmpty = json::object();
    return Params(in_.contains(key) ? in_.at(key) : kEmpty, out_[key], where_ + "." + key);
  }

  void finish() const {
    for (const auto& item : in_.items()) {
      if (!used_.count(item.key())) {
        throw ConfigError(where_ + ": unknown parameter '" + item.key() + "'");
      }
    }
  }

 private:
  const json& in_;
  ojson& out_;
  std::string where_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const RunConfig& cfg, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : cfg.base_dir / path;
}

void require_positive(double v, const std::string& what) {
  if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

RandomSpaceOptions read_space_options(Params p, RandomSpaceOptions o) {
  o.min_blocks = p.get<std::size_t>("min_blocks", o.min_blocks);
  o.max_blocks = p.get<std::size_t>("max_blocks", o.max_blocks);
  o.min_points = p.get<std::size_t>("min_points", o.min_points);
  o.max_points = p.get<std::size_t>("max_points", o.max_points);
  o.max_dim = p.get<std::size_t>("max_dim", o.max_dim);
  o.max_outcomes = p.get<std::uint64_t>("max_outcomes", o.max_outcomes);
  o.mixed_norms = p.get<bool>("mixed_norms", o.mixed_norms);
  p.finish();
  if (o.min_blocks == 0 || o.max_blocks < o.min_blocks || o.min_points == 0 ||
      o.max_points < o.min_points || o.max_dim == 0) {
    throw ConfigError("space_options: inconsistent bounds");
  }
  return o;
}

// A fixed space from "space", "space_file" or "bernoulli_cube", if any.
std::optional<ProductSpace> read_fixed_space(Params& p, const RunConfig& cfg) {
  const int given = int(p.has("space")) + int(p.has("space_file")) + int(p.has("bernoulli_cube"));
  if (given > 1) throw ConfigError("give at most one of space, space_file, bernoulli_cube");
  try {
    if (p.has("space")) return space_from_json(p.raw("space"));
    if (p.has("space_file")) {
      const auto path = resolve(cfg, p.get<std::string>("space_file", ""));
      if (!std::filesystem::exists(path)) throw ConfigError("space file not found: " + path.string());
      return load_space_file(path);
    }
    if (p.has("bernoulli_cube")) {
      Params c = p.child("bernoulli_cube");
      const auto n = c.get<std::size_t>("n", 1);
      const auto eta = c.get<double>("eta", 0.5);
      c.finish();
      return bernoulli_cube(n, eta);
    }
  } catch (const SpaceError& e) {
    throw ConfigError(e.what());
  }
  return std::nullopt;
}

std::string label_p(double p) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << p;
  return os.str();
}

SampledSubspace read_subspace(Params& p, const RunConfig& cfg) {
  if (p.has("subspace_file") && p.has("gaussian")) {
    throw ConfigError("give at most one of subspace_file, gaussian");
  }
  SampledSubspace sub;
  try {
    if (p.has("subspace_file")) {
      const auto path = resolve(cfg, p.get<std::string>("subspace_file", ""));
      if (!std::filesystem::exists(path)) {
        throw ConfigError("subspace file not found: " + path.string());
      }
      sub = load_subspace_file(path);
    } else {
      Params g = p.child("gaussian");
      const auto n = g.get<std::size_t>("n", 4);
      const auto N = g.get<std::size_t>("N", 2048);
      const auto r = g.get<double>("r", 1.0);
      const auto s = g.get<double>("s", 1.5);
      g.finish();
      if (n == 0 || N == 0) throw ConfigError("gaussian: n and N must be positive");
      sub = gaussian_subspace(n, N, r, s, derive_seed(cfg.seed, "subspace"));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto problems = validate_subspace(sub);
  if (!problems.empty()) {
    std::string msg = "invalid subspace:";
    for (const auto& s : problems) msg += " " + s + ";";
    throw ConfigError(msg);
  }
  return sub;
}

NetOptions read_net_options(Params& p) {
  NetOptions o;
  o.probe_count = p.get<std::size_t>("net_probes", o.probe_count);
  o.max_audit_rounds = p.get<std::size_t>("net_audit_rounds", o.max_audit_rounds);
  if (o.probe_count == 0) throw ConfigError("net_probes must be positive");
  return o;
}

// Non-finite doubles are not JSON numbers.
ojson num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

// ---------------------------------------------------------------------------

void run_moment_sweep(const RunConfig& cfg, RunResult& res) {
  Params p(cfg.params, res.config, "verify-theorem1");
  const double tol = p.get<double>("tol", 1e-8);
  require_positive(tol, "tol");
  auto fixed = read_fixed_space(p, cfg);
  std::vector<Event> file_events;
  if (p.has("event_file")) {
    const auto path = resolve(cfg, p.get<std::string>("event_file", ""));
    std::ifstream in(path);
    if (!in) throw ConfigError("event file not found: " + path.string());
    try {
      json j;
      in >> j;
      for (const auto& e : j) file_events.push_back(event_from_json(e));
    } catch (const std::exception& e) {
      throw ConfigError("cannot read event file " + path.string() + ": " + e.what());
    }
  }
  const auto num_events = p.get<std::size_t>("events", 20);
  const auto num_spaces = fixed ? 1 : p.get<std::size_t>("random_spaces", 20);
  RandomSpaceOptions defaults;
  defaults.max_outcomes = std::uint64_t{1} << 12;
  const auto opts = read_space_options(p.child("space_options"), defaults);
  std::vector<double> outer = p.get<std::vector<double>>(
      "outer_p", fixed ? std::vector<double>{fixed->outer_p} : std::vector<double>{2.0});
  p.finish();
  for (double q : outer) {
    if (!(q >= 2.0)) throw ConfigError("outer_p values must be >= 2");
  }

  ojson spaces = ojson::array();
  for (std::size_t i = 0; i < num_spaces; ++i) {
    ProductSpace space = fixed ? *fixed : random_product_space(opts, cfg.seed, i);
    try {
      require_valid(space);
    } catch (const SpaceError& e) {
      throw ConfigError(e.what());
    }
    std::vector<Event> events = file_events;
    for (const auto& e : events) {
      if (e.empty()) throw ConfigError("event file contains an empty event");
      for (const auto& t : e.outcomes()) {
        try {
          require_outcome(space, t);
        } catch (const SpaceError& err) {
          throw ConfigError(std::string("event file: ") + err.what());
        }
      }
    }
    for (std::size_t j = 0; j < num_events; ++j) {
      events.push_back(random_event(space, cfg.seed, i * 4096 + j));
    }
    spaces.push_back({{"index", i},
                      {"blocks", space.num_blocks()},
                      {"outcomes", space.outcome_count()},
                      {"events", events.size()}});
    for (std::size_t j = 0; j < events.size(); ++j) {
      std::vector<MomentReport> reports;
      std::vector<double> phi2;
      for (double q : outer) {
        ProductSpace sp = space;
        sp.outer_p = q;
        reports.push_back(moment_check(sp, events[j], tol));
        if (q == 2.0) phi2 = reports.back().phi_upper;
      }
      for (std::size_t qi = 0; qi < outer.size(); ++qi) {
        const double q = outer[qi];
        const auto& r = reports[qi];
        const std::string tag = "s" + std::to_string(i) + "/e" + std::to_string(j) + "/p" + label_p(q);
        CheckRow row;
        row.name = "moment/" + tag;
        row.pass = r.pass;
        row.margin = r.bound + r.gap_budget - r.expectation;
        row.detail = {{"space", i},
                      {"event", j},
                      {"outer_p", q},
                      {"prob_a", r.prob_a},
                      {"expectation", r.expectation},
                      {"bound", r.bound},
                      {"margin", r.margin},
                      {"gap_budget", r.gap_budget},
                      {"normalized", r.prob_a * r.expectation},
                      {"outcomes", r.outcomes},
                      {"uncertified", r.uncertified}};
        res.checks.push_back(std::move(row));
        if (q > 2.0 && !phi2.empty()) {
          double worst = -1e300;
          for (std::size_t k = 0; k < r.phi_upper.size(); ++k) {
            worst = std::max(worst, std::pow(r.phi_upper[k], q) - phi2[k] * phi2[k]);
          }
          CheckRow pw;
          pw.name = "pointwise/" + tag;
          pw.margin = 3.0 * tol - worst;
          pw.pass = pw.margin >= 0.0;
          pw.detail = {{"max_excess", worst}, {"allowance", 3.0 * tol}};
          res.checks.push_back(std::move(pw));
        }
      }
    }
  }
  res.results["spaces"] = std::move(spaces);
}

void run_ledger(const RunConfig& cfg, RunResult& res) {
  Params p(cfg.params, res.config, "ledger");
  const auto base_grid = p.get<std::size_t>("base_grid", 10001);
  const auto claim_grid = p.get<std::size_t>("claim_grid", 10000);
  const auto product_grid = p.get<std::size_t>("product_grid", 1000);
  const auto slice_instances = p.get<std::size_t>("slice_instances", 50);
  const auto slice_tol = p.get<double>("slice_tol", 1e-6);
  const auto alpha_grid = p.get<std::size_t>("alpha_grid", 1001);
  RandomSpaceOptions defaults;
  defaults.min_blocks = 3;
  defaults.max_blocks = 3;
  const auto opts = read_space_options(p.child("slice_space_options"), defaults);
  p.finish();
  if (base_grid < 2 || claim_grid < 2 || product_grid < 2 || alpha_grid < 2) {
    throw ConfigError("grid sizes must be at least 2");
  }
  if (opts.min_blocks < 2) throw ConfigError("slice instances need at least two blocks");

  const auto base = base_case_scan(base_grid);
  {
    CheckRow row{"ledger/base_case", false, 1e-9 - std::abs(base.max_value - 1.0), {}};
    row.pass = row.margin >= 0.0 && base.argmax == 1.0;
    row.detail = {{"max", base.max_value}, {"argmax", base.argmax}, {"points", base.points}};
    res.checks.push_back(std::move(row));
  }
  const auto claim = claim_scan(claim_grid);
  {
    CheckRow row{"ledger/claim_max", false, 1e-12 - claim.scan.max_value, {}};
    row.pass = row.margin >= 0.0;
    row.detail = {{"max", claim.scan.max_value}, {"argmax", claim.scan.argmax}, {"points", claim.scan.points}};
    res.checks.push_back(std::move(row));
    CheckRow f1{"ledger/claim_f_at_one", false, 1e-12 - std::abs(claim.f_at_one), {}};
    f1.pass = f1.margin >= 0.0;
    f1.detail = {{"value", claim.f_at_one}};
    res.checks.push_back(std::move(f1));
    CheckRow d1{"ledger/claim_slope_at_one", false, 1e-6 - std::abs(claim.slope_at_one), {}};
    d1.pass = d1.margin >= 0.0;
    d1.detail = {{"value", claim.slope_at_one}};
    res.checks.push_back(std::move(d1));
  }
  {
    const double b = std::exp(-0.5);
    const double lo = alpha_g(std::nextafter(b, 0.0)).g;
    const double hi = alpha_g(std::nextafter(b, 1.0)).g;
    CheckRow row{"ledger/g_continuity", false, 1e-12 - std::abs(hi - lo), {}};
    row.pass = row.margin >= 0.0;
    row.detail = {{"left", lo}, {"right", hi}};
    res.checks.push_back(std::move(row));
  }
  const auto pb = product_bound_scan(product_grid);
  {
    CheckRow row{"ledger/product_bound", false, 1e-12 - pb.max_value, {}};
    row.pass = row.margin >= 0.0;
    row.detail = {{"max", pb.max_value}, {"q", pb.argmax}, {"t", pb.argmax2}, {"points", pb.points}};
    res.checks.push_back(std::move(row));
  }
  for (std::size_t k = 0; k < slice_instances; ++k) {
    const auto space = random_product_space(opts, cfg.seed, k);
    const auto event = random_event(space, derive_seed(cfg.seed, "slice-event"), k);
    const auto rep = slice_inequalities_check(space, event, slice_tol, alpha_grid);
    CheckRow row;
    row.name = "ledger/slice/" + std::to_string(k);
    row.pass = rep.pass;
    row.margin = slice_tol - std::max(rep.max_violation_v, rep.max_violation_w);
    ojson skipped = ojson::array();
    for (auto w : rep.skipped) skipped.push_back(w);
    row.detail = {{"v", rep.v},
                  {"checks", rep.checks},
                  {"max_violation_heavy", num(rep.max_violation_v)},
                  {"max_violation_other", num(rep.max_violation_w)},
                  {"skipped", skipped},
                  {"uncertified", rep.uncertified}};
    res.checks.push_back(std::move(row));
  }
}

void run_deviation(const RunConfig& cfg, RunResult& res) {
  Params p(cfg.params, res.config, "deviation");
  auto fixed = read_fixed_space(p, cfg);
  const auto num_spaces = fixed ? 1 : p.get<std::size_t>("random_spaces", 20);
  RandomSpaceOptions defaults;
  defaults.max_outcomes = std::uint64_t{1} << 12;
  const auto opts = read_space_options(p.child("space_options"), defaults);
  const auto families =
      p.get<std::vector<std::string>>("families", {"linear", "distance", "max_affine"});
  const auto centers = p.get<std::vector<std::string>>("centers", {"median", "mean"});
  const auto c_grid_abs = p.get<std::vector<double>>("c_grid", {});
  const auto c_points = p.get<std::size_t>("c_points", 50);
  const auto c_max_sigma = p.get<double>("c_max_sigma", 3.0);
  const auto mc_trials = p.get<std::uint64_t>("mc_trials", 0);
  MeanBoundConstants mbc;
  mbc.k = p.get<double>("mean_K", mbc.k);
  mbc.delta = p.get<double>("mean_delta", mbc.delta);
  const auto write_curves = p.get<bool>("write_curves", true);
  p.finish();
  if (c_grid_abs.empty() && c_points == 0) throw ConfigError("c_points must be positive");
  require_positive(c_max_sigma, "c_max_sigma");
  std::vector<int> fam;
  for (const auto& f : families) {
    if (f == "linear") fam.push_back(0);
    else if (f == "distance") fam.push_back(1);
    else if (f == "max_affine") fam.push_back(2);
    else throw ConfigError("unknown function family '" + f + "'");
  }
  std::vector<CenterKind> kinds;
  try {
    for (const auto& c : centers) kinds.push_back(parse_center_kind(c));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  for (std::size_t i = 0; i < num_spaces; ++i) {
    const ProductSpace space = fixed ? *fixed : random_product_space(opts, cfg.seed, i);
    try {
      require_valid(space, mc_trials ? UINT64_MAX : kDefaultOutcomeCap);
    } catch (const SpaceError& e) {
      throw ConfigError(e.what());
    }
    for (int f : fam) {
      const auto fn = random_fn(f, space, cfg.seed, i);
      const double sigma = lipschitz_p(fn, space);
      std::vector<double> grid = c_grid_abs;
      if (grid.empty()) {
        const double scale = sigma > 0.0 ? sigma * c_max_sigma : 1.0;
        for (std::size_t k = 1; k <= c_points; ++k) {
          grid.push_back(scale * static_cast<double>(k) / static_cast<double>(c_points));
        }
      }
      for (auto kind : kinds) {
        DeviationReport rep;
        try {
          rep = tail_vs_bound(space, fn, grid, kind, mc_trials, derive_seed(cfg.seed, "deviation", i),
                              mbc);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
        const std::string tag = "s" + std::to_string(i) + "_" + kind_name(fn) + "_" + to_string(kind);
        CheckRow row;
        row.name = "deviation/" + tag;
        row.pass = !rep.any_violation();
        row.margin = 1e300;
        for (const auto& r : rep.rows) row.margin = std::min(row.margin, r.bound - r.tail);
        row.detail = {{"space", i},
                      {"family", kind_name(fn)},
                      {"center_kind", to_string(kind)},
                      {"sigma_p", sigma},
                      {"median", rep.median},
                      {"mean", rep.mean},
                      {"mc_trials", rep.mc_trials},
                      {"seed", rep.seed}};
        res.checks.push_back(std::move(row));
        if (write_curves) res.curves.push_back({"curves/deviation_" + tag + ".csv", tail_csv(rep)});
      }
    }
  }
}

void run_sparsify(const RunConfig& cfg, RunResult& res) {
  Params p(cfg.params, res.config, "sparsify");
  const auto sub = read_subspace(p, cfg);
  const auto epsilon = p.get<double>("epsilon", 0.25);
  const auto c_list = p.get<std::vector<double>>("c_universal", {1.0, 2.0, 4.0, 8.0});
  const auto trials = p.get<std::size_t>("trials", 100);
  const auto required = p.get<double>("required_pass_rate", 0.5);
  const auto k_budget = p.get<std::size_t>("k_budget", 32);
  const bool k_given = p.has("K");
  const double k_override = p.get<double>("K", 0.0);
  const auto net_opts = read_net_options(p);
  p.finish();
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (c_list.empty()) throw ConfigError("c_universal list is empty");
  for (double c : c_list) require_positive(c, "c_universal");
  if (trials == 0) throw ConfigError("trials must be positive");
  if (k_budget == 0) throw ConfigError("k_budget must be positive");
  if (k_given && !(k_override >= 1.0)) throw ConfigError("K must be at least 1");

  const double K = k_given ? k_override : estimate_K(sub, k_budget, derive_seed(cfg.seed, "estimate-k")).k_hat;
  const auto net = build_net(sub, epsilon, derive_seed(cfg.seed, "sparsify-net"), net_opts);
  res.results["subspace"] = {{"n", sub.dim()}, {"N", sub.atoms()}, {"r", sub.r}, {"s", sub.s}};
  res.results["K"] = K;
  res.results["K_source"] = k_given ? "config" : "estimate";
  res.results["net"] = {{"size", net.points.size()},
                        {"certified", net.certified},
                        {"probes", net.probes},
                        {"audit_rounds", net.audit_rounds},
                        {"theoretical_size", net.theoretical_size}};
  {
    CheckRow row{"sparsify/net_certified", net.certified, net.certified ? 0.0 : -1.0, {}};
    row.detail = {{"size", net.points.size()}};
    res.checks.push_back(std::move(row));
  }
  const SelectionCertifier certifier(sub, net);
  ojson per_c = ojson::array();
  std::optional<double> smallest;
  for (std::size_t ci = 0; ci < c_list.size(); ++ci) {
    const double c = c_list[ci];
    const auto choice = choose_delta_k(static_cast<double>(sub.dim()), static_cast<double>(sub.atoms()),
                                       K, sub.r, sub.s, epsilon, c);
    ojson entry = {{"c_universal", c},
                   {"eta", choice.eta},
                   {"delta", choice.delta},
                   {"k_target", choice.k_target},
                   {"delta_exceeds_one", choice.delta_exceeds_one}};
    std::size_t passed = 0;
    ojson rows = ojson::array();
    std::string csv = "seed,k,distortion,max_deviation,pass\n";
    if (!choice.delta_exceeds_one) {
      for (std::size_t t = 0; t < trials; ++t) {
        const std::uint64_t s = derive_seed(cfg.seed, "sparsify-trial", ci * 1000000 + t);
        const auto tr = certifier.trial(choice.delta, epsilon, s);
        passed += tr.pass ? 1 : 0;
        rows.push_back({{"seed", s},
                        {"k", tr.k},
                        {"distortion", num(tr.distortion)},
                        {"max_deviation", tr.max_deviation},
                        {"pass", tr.pass}});
        csv += std::to_string(s) + "," + std::to_string(tr.k) + "," + format_double(tr.distortion) + "," +
               format_double(tr.max_deviation) + "," + (tr.pass ? "true" : "false") + "\n";
      }
    }
    const double rate = static_cast<double>(passed) / static_cast<double>(trials);
    entry["pass_rate"] = rate;
    entry["trials"] = std::move(rows);
    per_c.push_back(std::move(entry));
    res.curves.push_back({"trials_c" + label_p(c) + ".csv", csv});
    const bool ok = net.certified && !choice.delta_exceeds_one && rate >= required;
    if (ci == 0) {
      CheckRow row{"sparsify/selection_default_c", ok, rate - required, {}};
      row.detail = {{"c_universal", c}, {"pass_rate", rate}, {"delta", choice.delta}};
      res.checks.push_back(std::move(row));
    }
    if (ok) {
      smallest = c;
      break;
    }
  }
  res.results["selection"] = std::move(per_c);
  res.results["smallest_passing_c"] = smallest ? ojson(*smallest) : ojson(nullptr);
}

void run_iterate(const RunConfig& cfg, RunResult& res) {
  Params p(cfg.params, res.config, "iterate");
  const auto sub = read_subspace(p, cfg);
  const auto rounds = p.get<std::size_t>("rounds", 3);
  std::vector<double> eps;
  if (p.has("epsilon") && cfg.params.at("epsilon").is_array()) {
    eps = p.get<std::vector<double>>("epsilon", {});
  } else {
    eps = {p.get<double>("epsilon", 0.25)};
  }
  const auto c_universal = p.get<double>("c_universal", 1.0);
  const auto k_budget = p.get<std::size_t>("k_budget", 32);
  IterationOptions io;
  io.max_retries = p.get<std::size_t>("max_retries", io.max_retries);
  io.net = read_net_options(p);
  p.finish();
  if (rounds == 0) throw ConfigError("rounds must be positive");
  if (eps.empty()) throw ConfigError("epsilon list is empty");
  for (double e : eps) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  }
  require_positive(c_universal, "c_universal");

  const auto rep = iterate_embedding(sub, rounds, eps,
                                     uniform_density_provider(k_budget, derive_seed(cfg.seed, "density")),
                                     c_universal, cfg.seed, io);
  ojson rows = ojson::array();
  double allowed = 1.0;
  bool decreasing = true;
  for (const auto& r : rep.rounds) {
    allowed *= 1.0 + r.epsilon;
    if (!r.no_op && r.pass && !(r.atoms_after < r.atoms_before)) decreasing = false;
    ojson seeds = ojson::array();
    for (auto s : r.seeds) seeds.push_back(s);
    rows.push_back({{"round", r.round},
                    {"N", r.atoms_before},
                    {"k", r.atoms_after},
                    {"K", r.K},
                    {"epsilon", r.epsilon},
                    {"delta", r.delta},
                    {"k_target", r.k_target},
                    {"net_size", r.net_size},
                    {"net_certified", r.net_certified},
                    {"distortion", num(r.distortion)},
                    {"cumulative_distortion", num(r.cumulative_distortion)},
                    {"scale", r.scale},
                    {"no_op", r.no_op},
                    {"pass", r.pass},
                    {"seeds", seeds}});
  }
  res.results["rounds"] = std::move(rows);
  const double cumulative = rep.rounds.empty() ? 1.0 : rep.rounds.back().cumulative_distortion;
  res.checks.push_back({"iterate/rounds_certified", rep.ok && rep.rounds.size() == rounds,
                        static_cast<double>(rep.rounds.size()) - static_cast<double>(rounds),
                        {{"completed", rep.rounds.size()}}});
  res.checks.push_back({"iterate/atoms_decrease", decreasing, 0.0, ojson::object()});
  res.checks.push_back({"iterate/distortion_within_product", cumulative <= allowed, allowed - cumulative,
                        {{"cumulative", num(cumulative)}, {"allowed", allowed}}});
  res.curves.push_back({"iterate.csv", iteration_csv(rep)});
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::VerifyMoment: return "verify-theorem1";
    case Command::Ledger: return "ledger";
    case Command::Deviation: return "deviation";
    case Command::Sparsify: return "sparsify";
    case Command::Iterate: return "iterate";
  }
  return "?";
}

Command parse_command(const std::string& text) {
  for (auto c : {Command::VerifyMoment, Command::Ledger, Command::Deviation, Command::Sparsify,
                 Command::Iterate}) {
    if (to_string(c) == text) return c;
  }
  throw ConfigError("unknown command '" + text + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

RunConfig load_run_config(Command command, const std::filesystem::path& config_path,
                          std::optional<std::uint64_t> seed_override,
                          const std::filesystem::path& out_dir) {
  RunConfig cfg;
  cfg.command = command;
  cfg.out_dir = out_dir;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file: " + config_path.string());
    try {
      in >> cfg.params;
    } catch (const json::exception& e) {
      throw ConfigError("cannot parse config file " + config_path.string() + ": " + e.what());
    }
    if (!cfg.params.is_object()) throw ConfigError("config file must hold a JSON object");
    cfg.base_dir = config_path.parent_path();
    if (cfg.base_dir.empty()) cfg.base_dir = ".";
    if (cfg.params.contains("seed")) {
      try {
        cfg.seed = cfg.params.at("seed").get<std::uint64_t>();
      } catch (const json::exception&) {
        throw ConfigError("seed must be an unsigned 64-bit integer");
      }
      cfg.params.erase("seed");
    }
  }
  if (seed_override) cfg.seed = *seed_override;
  return cfg;
}

bool RunResult::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRow& c) { return c.pass; });
}

RunResult execute(const RunConfig& config) {
  RunResult res;
  res.command = config.command;
  res.seed = config.seed;
  res.timestamp = utc_timestamp();
  switch (config.command) {
    case Command::VerifyMoment: run_moment_sweep(config, res); break;
    case Command::Ledger: run_ledger(config, res); break;
    case Command::Deviation: run_deviation(config, res); break;
    case Command::Sparsify: run_sparsify(config, res); break;
    case Command::Iterate: run_iterate(config, res); break;
  }
  return res;
}

ojson report_json(const RunResult& result) {
  ojson j;
  j["command"] = to_string(result.command);
  j["timestamp"] = result.timestamp;
  j["seed"] = result.seed;
  j["config"] = result.config;
  std::size_t failed = 0;
  ojson rows = ojson::array();
  for (const auto& c : result.checks) {
    if (!c.pass) ++failed;
    rows.push_back({{"name", c.name}, {"pass", c.pass}, {"margin", num(c.margin)}, {"detail", c.detail}});
  }
  j["summary"] = {{"checks", result.checks.size()}, {"failed", failed}, {"all_pass", failed == 0}};
  j["checks"] = std::move(rows);
  j["results"] = result.results;
  ojson curves = ojson::array();
  for (const auto& c : result.curves) curves.push_back(c.relative_path.generic_string());
  j["curves"] = std::move(curves);
  return j;
}

void emit_report(const RunResult& result, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string());
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
  };
  write(out_dir / "report.json", report_json(result).dump(2) + "\n");
  for (const auto& c : result.curves) write(out_dir / c.relative_path, c.content);
}

int run(const RunConfig& config, std::ostream& err) {
  auto emit_error = [&](const std::string& kind, const std::string& what) {
    RunResult res;
    res.command = config.command;
    res.seed = config.seed;
    res.timestamp = utc_timestamp();
    res.results["error"] = {{"kind", kind}, {"message", what}};
    try {
      emit_report(res, config.out_dir);
    } catch (const std::exception&) {
    }
  };
  try {
    RunResult res = execute(config);
    emit_report(res, config.out_dir);
    std::size_t failed = 0;
    for (const auto& c : res.checks) {
      if (!c.pass) {
        ++failed;
        err << "FAIL " << c.name << "\n";
      }
    }
    err << to_string(config.command) << ": " << res.checks.size() - failed << "/" << res.checks.size()
        << " checks passed\n";
    return failed == 0 ? exit_code::kOk : exit_code::kCheckFailed;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    emit_error("config", e.what());
    return exit_code::kParseError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    emit_error("internal", e.what());
    return exit_code::kInternalError;
  }
}

}  // namespace cdlab
