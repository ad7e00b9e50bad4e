#pragma once

#include <string>
#include <vector>

#include "mafm/error.hpp"

namespace mafm::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

enum ExitCode : int {
  exit_ok = 0,
  exit_config = 2,
  exit_io = 3,
  exit_degenerate = 4,
  exit_ill_conditioned = 5,
  exit_all_failed = 6,
};

int exit_code_for(ErrorKind kind) noexcept;

/// Lowercase hex SHA-256 of the canonical (key-sorted, compact) JSON text of `json_text`.
std::string config_digest(const std::string& json_text);

/// Runs one CLI invocation in-process; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

int run_cli(int argc, char** argv);

}  // namespace mafm::cli
