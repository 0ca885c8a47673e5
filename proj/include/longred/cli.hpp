#pragma once

namespace longred {

// Entry point for the `longred` tool. Subcommands: train, extend, drift,
// bound, sample-positions, pack, gen-corpus.
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O error.
int run_command(int argc, const char* const* argv);

}  // namespace longred
