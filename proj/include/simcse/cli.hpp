#pragma once

namespace simcse::cli {

/// Dispatches one subcommand (gen-toy, train, eval-sts, analyze, augment).
/// Returns 0 on success, 1 on validation or usage errors, 2 on runtime
/// failures.
int run(int argc, char** argv);

}  // namespace simcse::cli
