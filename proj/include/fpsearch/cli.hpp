#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fpsearch::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntimeCap = 3;

/// Environment variable that overrides the default master seed.
inline constexpr const char* kSeedEnv = "FPSEARCH_SEED";

/// Runs one command line (program name excluded). Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpsearch::cli
