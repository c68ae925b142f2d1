#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

namespace curator {

struct ProcessOutcome {
    bool spawned = false;
    std::string spawn_error;
    bool timed_out = false;
    /// Exit code, or -signal when the child was killed by a signal.
    int exit_status = 0;
    /// Complete newline-terminated stdout lines received before exit/timeout.
    std::vector<std::string> lines;
};

/// Runs argv[0] (PATH lookup) with `input` on stdin, collecting stdout lines.
/// stderr is inherited. The child is killed when `timeout` elapses.
ProcessOutcome run_process(const std::vector<std::string>& argv, std::string_view input,
                           std::chrono::milliseconds timeout);

}  // namespace curator
