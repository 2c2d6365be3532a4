#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dodt/trainer/trainer.hpp"

namespace dodt::cli {

// Everything a training run needs. The file form is INI-style:
//
//   [run]
//   env = pendulum
//   seeds = 0,1,2
//   [odt]
//   context = 20
//
// Lines starting with ';' are comments. Unknown sections or keys, duplicate
// keys and malformed values are rejected.
struct RunConfig {
  trainer::DodtConfig dodt;
  trainer::Algo algo = trainer::Algo::kDodt;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs/default";
  bool wall_clock = false;  // record wall_clock_s in metrics files
  std::string init_odt_checkpoint;
  std::string init_dreamer_checkpoint;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldInfo {
  std::string section;
  std::string key;
  std::string doc;
  std::string default_value;
};

// Desk-scale defaults: one round runs in well under a minute on one core.
RunConfig default_run_config();

// Every settable field with its documentation and default, in file order.
std::vector<FieldInfo> config_fields();

// Parses on top of default_run_config(). `source` names the input in
// diagnostics ("<source>:<line>: ...").
RunConfig parse_config(std::istream& in, const std::string& source);
RunConfig load_config(const std::filesystem::path& path);

// Writes every field, documented, in a form parse_config reads back to the
// same configuration.
void write_config(std::ostream& out, const RunConfig& config);
std::string to_string(const RunConfig& config);

// Throws ConfigError naming the first invalid field.
void validate(const RunConfig& config);

}  // namespace dodt::cli
