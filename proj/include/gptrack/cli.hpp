#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace gptrack::cli {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;       // malformed input files or config
inline constexpr int kExitNumerical = 3;   // factorization / solver breakdown
inline constexpr int kExitContract = 4;    // precondition violations
inline constexpr int kExitAssertion = 5;   // scenario assertion block violated

struct GlobalOptions {
  std::optional<std::uint64_t> seed;  // overrides the configured seeds
  std::string out_dir = ".";
  bool quiet = false;
};

/// fit-hyper: fit per-channel kernels on a tracking CSV and write the
/// hyperparameter JSON. The scenario config (optional) supplies the kernel
/// family and optimizer settings.
int cmd_fit_hyper(const std::string& tracking_csv, const std::string& config_path,
                  const std::string& out_path, const GlobalOptions& options);

/// predict: load a tracking CSV and a hyperparameter file, predict the
/// horizon grid starting at t_now and write the horizon CSV.
int cmd_predict(const std::string& tracking_csv, const std::string& hyper_path,
                std::optional<double> t_now, double ts, int horizon,
                const std::string& out_csv, const GlobalOptions& options);

/// simulate: run the closed-loop scenario and write the log CSV, metrics
/// JSON and the configured SVG plots into the output directory.
int cmd_simulate(const std::string& config_path, const GlobalOptions& options);

/// report: recompute metrics from a log CSV and emit the plots.
int cmd_report(const std::string& log_csv, const GlobalOptions& options);

}  // namespace gptrack::cli
