#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace divco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

// Environment variable naming the default output root.
inline constexpr const char* kOutputEnv = "DIVCO_OUT";

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::vector<std::string> sets;
};

int cmd_train(const Options& opts, const std::optional<std::string>& resume, std::ostream& out,
              std::ostream& err);
int cmd_compare(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_sweep(const Options& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const Options& opts, const std::string& checkpoint, std::ostream& out,
             std::ostream& err);

// Parses argv (subcommand first) and dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace divco::cli
