#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/eigen.h>

#include <nlohmann/json.hpp>

#include "cdlab/convex_distance.hpp"
#include "cdlab/deviation.hpp"
#include "cdlab/harness.hpp"
#include "cdlab/inequality_lab.hpp"
#include "cdlab/product_space.hpp"
#include "cdlab/sparsify.hpp"

namespace py = pybind11;
using namespace cdlab;

namespace {

Outcome to_outcome(const std::vector<std::uint32_t>& index) { return Outcome{index}; }

Event to_event(const std::vector<std::vector<std::uint32_t>>& outcomes) {
  std::vector<Outcome> v;
  v.reserve(outcomes.size());
  for (const auto& o : outcomes) v.push_back(Outcome{o});
  return Event(std::move(v));
}

std::vector<std::vector<std::uint32_t>> from_event(const Event& e) {
  std::vector<std::vector<std::uint32_t>> out;
  for (const auto& o : e.outcomes()) out.push_back(o.index);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Convex distance inequality lab";

  py::register_exception<SpaceError>(m, "SpaceError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<NormTag>(m, "NormTag")
      .value("L1", NormTag::L1)
      .value("L2", NormTag::L2)
      .value("LINF", NormTag::LInf);

  py::class_<BlockSpace>(m, "BlockSpace")
      .def(py::init([](std::vector<std::vector<double>> points, NormTag norm, std::vector<double> probs) {
             return BlockSpace{std::move(points), norm, std::move(probs)};
           }),
           py::arg("points"), py::arg("norm"), py::arg("probs"))
      .def_readwrite("points", &BlockSpace::points)
      .def_readwrite("norm", &BlockSpace::norm)
      .def_readwrite("probs", &BlockSpace::probs)
      .def("diameter", &BlockSpace::diameter);

  py::class_<ProductSpace>(m, "ProductSpace")
      .def(py::init([](std::vector<BlockSpace> blocks, double p) {
             ProductSpace s{std::move(blocks), p};
             require_valid(s, UINT64_MAX);
             return s;
           }),
           py::arg("blocks"), py::arg("outer_p") = 2.0)
      .def_readonly("blocks", &ProductSpace::blocks)
      .def_readwrite("outer_p", &ProductSpace::outer_p)
      .def("outcome_count", &ProductSpace::outcome_count)
      .def("to_json", [](const ProductSpace& s) { return space_to_json(s).dump(); })
      .def_static("from_json", [](const std::string& text) { return space_from_json(nlohmann::json::parse(text)); });

  m.def("bernoulli_cube", &bernoulli_cube, py::arg("n"), py::arg("eta"));
  m.def(
      "random_product_space",
      [](std::uint64_t seed, std::uint64_t index, std::size_t max_blocks, std::uint64_t max_outcomes,
         double outer_p) {
        RandomSpaceOptions o;
        o.max_blocks = max_blocks;
        o.max_outcomes = max_outcomes;
        o.outer_p = outer_p;
        return random_product_space(o, seed, index);
      },
      py::arg("seed"), py::arg("index") = 0, py::arg("max_blocks") = 8,
      py::arg("max_outcomes") = std::uint64_t{1} << 14, py::arg("outer_p") = 2.0);
  m.def(
      "random_event",
      [](const ProductSpace& s, std::uint64_t seed, std::uint64_t index) {
        return from_event(random_event(s, seed, index));
      },
      py::arg("space"), py::arg("seed"), py::arg("index") = 0);
  m.def(
      "event_probability",
      [](const ProductSpace& s, const std::vector<std::vector<std::uint32_t>>& a) {
        return event_probability(s, to_event(a));
      },
      py::arg("space"), py::arg("event"));

  py::class_<DistanceCert>(m, "DistanceCert")
      .def_readonly("upper", &DistanceCert::upper)
      .def_readonly("lower", &DistanceCert::lower)
      .def_readonly("coefficients", &DistanceCert::coefficients)
      .def_readonly("certified", &DistanceCert::certified)
      .def_readonly("iterations", &DistanceCert::iterations);

  m.def(
      "convex_distance",
      [](const ProductSpace& s, const std::vector<std::vector<std::uint32_t>>& a,
         const std::vector<std::uint32_t>& t, double tol) {
        return convex_distance(s, to_event(a), to_outcome(t), tol);
      },
      py::arg("space"), py::arg("event"), py::arg("t"), py::arg("tol") = 1e-8);

  py::class_<MomentReport>(m, "MomentReport")
      .def_readonly("prob_a", &MomentReport::prob_a)
      .def_readonly("expectation", &MomentReport::expectation)
      .def_readonly("bound", &MomentReport::bound)
      .def_readonly("margin", &MomentReport::margin)
      .def_readonly("gap_budget", &MomentReport::gap_budget)
      .def_readonly("outcomes", &MomentReport::outcomes)
      .def_readonly("uncertified", &MomentReport::uncertified)
      .def_readonly("pass_", &MomentReport::pass);

  m.def(
      "moment_check",
      [](const ProductSpace& s, const std::vector<std::vector<std::uint32_t>>& a, double tol) {
        return moment_check(s, to_event(a), tol);
      },
      py::arg("space"), py::arg("event"), py::arg("tol") = 1e-8);

  m.def("base_case_value", &base_case_value, py::arg("r"));
  m.def("claim_value", &claim_value, py::arg("lam"));
  m.def(
      "alpha_g", [](double lam) {
        const auto s = alpha_g(lam);
        return py::make_tuple(s.alpha, s.g);
      },
      py::arg("lam"));

  m.def(
      "deviation_bound",
      [](double c, double sigma, double p, const std::string& kind) {
        return deviation_bound(c, sigma, p, parse_center_kind(kind));
      },
      py::arg("c"), py::arg("sigma"), py::arg("p"), py::arg("kind") = "median");

  m.def(
      "choose_delta_k",
      [](double n, double num_atoms, double K, double r, double s, double eps, double c) {
        const auto d = choose_delta_k(n, num_atoms, K, r, s, eps, c);
        return py::dict(py::arg("eta") = d.eta, py::arg("delta") = d.delta, py::arg("k_target") = d.k_target,
                        py::arg("delta_exceeds_one") = d.delta_exceeds_one);
      },
      py::arg("n"), py::arg("num_atoms"), py::arg("K"), py::arg("r"), py::arg("s"), py::arg("epsilon"),
      py::arg("c_universal") = 1.0);

  py::class_<SampledSubspace>(m, "SampledSubspace")
      .def(py::init([](Eigen::MatrixXd basis, Eigen::VectorXd mu, double r, double s) {
             SampledSubspace sub{std::move(basis), std::move(mu), r, s};
             require_valid(sub);
             return sub;
           }),
           py::arg("basis"), py::arg("mu"), py::arg("r"), py::arg("s"))
      .def_readonly("basis", &SampledSubspace::basis)
      .def_readonly("mu", &SampledSubspace::mu)
      .def_readonly("r", &SampledSubspace::r)
      .def_readonly("s", &SampledSubspace::s);

  m.def("gaussian_subspace", &gaussian_subspace, py::arg("n"), py::arg("num_atoms"), py::arg("r"),
        py::arg("s"), py::arg("seed"));
  m.def("lr_norm", &lr_norm, py::arg("x"), py::arg("subspace"));
  m.def(
      "split_atoms",
      [](const SampledSubspace& sub, double cap) { return split_atoms(sub, cap).subspace; },
      py::arg("subspace"), py::arg("cap"));

  m.def(
      "run_command",
      [](const std::string& command, const std::string& params_json, std::uint64_t seed) {
        RunConfig cfg;
        cfg.command = parse_command(command);
        try {
          cfg.params = nlohmann::json::parse(params_json);
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(e.what());
        }
        cfg.seed = seed;
        py::gil_scoped_release release;
        const auto res = execute(cfg);
        return report_json(res).dump();
      },
      py::arg("command"), py::arg("params_json") = "{}", py::arg("seed") = 0);
}
