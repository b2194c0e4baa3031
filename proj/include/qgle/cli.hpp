#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "qgle/config.hpp"
#include "qgle/ergodicity.hpp"

namespace qgle {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitFailed = 1, kExitUsage = 2, kExitRuntime = 3 };

struct CheckRow {
  std::string name;
  Certificate certificate;
};

/// Certificates requested by the config (all applicable ones by default).
std::vector<CheckRow> run_certificates(const Config& config);

/// Runs a subcommand; argv[0] is the program name.
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace qgle
