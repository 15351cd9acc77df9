#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cdlab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Convex distance inequality lab"};
  app.require_subcommand(1);

  struct Options {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "out";
  };
  Options opts;

  const std::pair<cdlab::Command, const char*> commands[] = {
      {cdlab::Command::VerifyMoment, "Check E exp(phi^p / 4) <= 1 / P(A) on product spaces"},
      {cdlab::Command::Ledger, "Scan the scalar inequalities and the slice inequalities"},
      {cdlab::Command::Deviation, "Compare exact deviation tails of convex functions with their bounds"},
      {cdlab::Command::Sparsify, "Random atom selection with certified distortion on a net"},
      {cdlab::Command::Iterate, "Repeat density change, splitting and selection for several rounds"},
  };
  for (const auto& [cmd, help] : commands) {
    auto* sub = app.add_subcommand(cdlab::to_string(cmd), help);
    sub->add_option("--config", opts.config, "JSON parameter file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Master seed (overrides the config file)");
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
  }

  if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
    std::cerr << "error: unknown subcommand '" << argv[1] << "'\n";
    return cdlab::exit_code::kParseError;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cdlab::exit_code::kParseError;
  }

  try {
    const auto* chosen = app.get_subcommands().front();
    const auto command = cdlab::parse_command(chosen->get_name());
    std::optional<std::uint64_t> seed;
    if (chosen->count("--seed") > 0) seed = opts.seed;
    const auto config = cdlab::load_run_config(command, opts.config, seed, opts.out);
    return cdlab::run(config, std::cerr);
  } catch (const cdlab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cdlab::exit_code::kParseError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return cdlab::exit_code::kInternalError;
  }
}
