#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace captime {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `captime` tool. Subcommands: pretrain-encoder, train,
/// evaluate, forecast, synth, ablate, gradcheck, inspect-attn.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace captime
