#pragma once

// Command-line entry point: make-dataset, train, render, eval, inspect and
// ablate. Settings come from an optional flat `key = value` file; flags
// override the file, and the resolved settings are written next to outputs.

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

namespace freqfield {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
/// Unknown keys and malformed lines throw ConfigError with the line number.
std::map<std::string, std::string> parse_config_text(const std::string& text);

/// Every recognized key with its default value.
const std::map<std::string, std::string>& config_defaults();

/// Serialized form of a resolved configuration (sorted, one key per line).
std::string format_config(const std::map<std::string, std::string>& values);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace freqfield
