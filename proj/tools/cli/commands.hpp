#ifndef RETRANK_TOOLS_COMMANDS_HPP
#define RETRANK_TOOLS_COMMANDS_HPP

#include <string>
#include <vector>

#include "retrank/core_types.hpp"
#include "retrank/scorer_gateway.hpp"

namespace retrank::cli {

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kTransport = 3 };

int exit_code_for(ErrorCode code);

/// Parses argv and runs one subcommand. Errors are reported on stderr as a
/// single JSON object and mapped to an exit code.
int run(int argc, char** argv);

inline constexpr const char* kScorerUrlEnv = "RETRANK_SCORER_URL";

struct ScorerSpec {
    std::string kind;   ///< mock | oracle | http | model
    std::string value;  ///< seed, url or model path
};

/// `mock[:seed]`, `oracle`, `http:<url>` (or `http` with RETRANK_SCORER_URL), `model:<path>`.
ScorerSpec parse_scorer_spec(const std::string& spec);

}  // namespace retrank::cli

#endif  // RETRANK_TOOLS_COMMANDS_HPP
