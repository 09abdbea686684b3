#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tirelevel::cli {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kOutputDirEnv = "TIRELEVEL_OUTPUT_DIR";

/// Exit code for command-line usage errors (unknown flag, missing argument).
inline constexpr int kUsageExit = 2;

/// Defaults for every key a run configuration may contain.
nlohmann::json default_config();

/// Reads a config document and checks its `version`. Throws Io, Config or Version.
nlohmann::json load_config(const std::filesystem::path& path);

/// Runs one subcommand. Output goes to `out`; failures are reported on `err` as a single
/// JSON line and mapped to a nonzero exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main(int argc, char** argv);

}  // namespace tirelevel::cli
