#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace qdspin {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;     ///< config, CSV, or domain error
inline constexpr int kExitNumeric = 2;   ///< fit non-convergence, integration failure

struct CliOptions {
    std::string config_path;  ///< empty: all defaults
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;     ///< 0: hardware concurrency
    std::optional<bool> svg;  ///< overrides output.svg
};

// Each command writes its artifacts plus config.ini (the effective config) into
// out_dir and returns an exit code. Input errors propagate as exceptions;
// run_cli maps them to codes.
int cmd_simulate_ramsey(const CliOptions& opt);
int cmd_simulate_pumping(const CliOptions& opt);
int cmd_scan_polarization(const CliOptions& opt);
int cmd_calibrate_rotation(const CliOptions& opt);
int cmd_fit(const CliOptions& opt, const std::string& data_path, const std::string& model_name);

int run_cli(int argc, char** argv);

}  // namespace qdspin
