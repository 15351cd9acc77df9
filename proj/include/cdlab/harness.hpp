#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cdlab {

enum class Command { VerifyMoment, Ledger, Deviation, Sparsify, Iterate };

std::string to_string(Command c);
Command parse_command(const std::string& text);

/// Bad configuration or unreadable input; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kParseError = 2;
inline constexpr int kInternalError = 3;
}  // namespace exit_code

struct RunConfig {
  Command command = Command::Ledger;
  /// Command parameters as read from the config file (may be empty).
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";
  /// Relative input paths resolve against this directory.
  std::filesystem::path base_dir = ".";
};

/// Reads a JSON config; a top-level "seed" is taken as the default seed.
RunConfig load_run_config(Command command, const std::filesystem::path& config_path,
                          std::optional<std::uint64_t> seed_override,
                          const std::filesystem::path& out_dir);

struct CheckRow {
  std::string name;
  bool pass = false;
  double margin = 0.0;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct CsvFile {
  std::filesystem::path relative_path;
  std::string content;
};

struct RunResult {
  Command command = Command::Ledger;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<CheckRow> checks;
  nlohmann::ordered_json results = nlohmann::ordered_json::object();
  std::vector<CsvFile> curves;
  std::string timestamp;

  bool all_pass() const;
};

/// Runs the command. Throws ConfigError for bad parameters.
RunResult execute(const RunConfig& config);

/// Report document; the timestamp is the only field that varies between reruns.
nlohmann::ordered_json report_json(const RunResult& result);

/// Writes report.json and the CSV curves under out_dir.
void emit_report(const RunResult& result, const std::filesystem::path& out_dir);

/// execute + emit_report, mapping failures to exit codes. Diagnostics go to err.
int run(const RunConfig& config, std::ostream& err);

/// Fixed-point-free formatting with 17 significant digits.
std::string format_double(double v);

}  // namespace cdlab
