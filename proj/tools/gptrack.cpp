#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gptrack/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learning-supported tracking pipeline: GP reference prediction, "
               "closed-loop inverse kinematics and tracking MPC for a 7-joint arm"};
  app.require_subcommand(1);

  gptrack::cli::GlobalOptions global;
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the configured seeds");
  app.add_option("--out", global.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--quiet", global.quiet, "Suppress progress output");

  std::string config_path;
  app.add_option("--config", config_path, "Scenario configuration (JSON)");

  auto* fit = app.add_subcommand("fit-hyper", "Fit per-channel GP hyperparameters");
  std::string fit_csv, fit_out = "hyperparameters.json";
  fit->add_option("tracking_csv", fit_csv, "Tracking recording (CSV)")->required();
  fit->add_option("--hyper-out", fit_out, "Output hyperparameter file")
      ->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Predict the reference horizon");
  std::string predict_csv, predict_hyper, predict_out = "horizon.csv";
  double predict_ts = 0.005;
  int predict_n = 30;
  std::optional<double> predict_t_now;
  predict->add_option("tracking_csv", predict_csv, "Tracking recording (CSV)")->required();
  predict->add_option("--hyper", predict_hyper, "Hyperparameter file")->required();
  predict->add_option("--t-now", predict_t_now,
                      "Prediction start time [s]; defaults to the last sample");
  predict->add_option("--ts", predict_ts, "Grid spacing [s]")->capture_default_str();
  predict->add_option("--horizon", predict_n, "Number of grid steps")
      ->capture_default_str();
  predict->add_option("--horizon-out", predict_out, "Output horizon CSV")
      ->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Run the closed-loop scenario");

  auto* report = app.add_subcommand("report", "Recompute metrics and plots from a log");
  std::string report_csv;
  report->add_option("log_csv", report_csv, "Log produced by simulate")->required();

  CLI11_PARSE(app, argc, argv);
  global.seed = seed;

  if (fit->parsed()) {
    return gptrack::cli::cmd_fit_hyper(fit_csv, config_path, fit_out, global);
  }
  if (predict->parsed()) {
    return gptrack::cli::cmd_predict(predict_csv, predict_hyper, predict_t_now,
                                     predict_ts, predict_n, predict_out, global);
  }
  if (simulate->parsed()) {
    if (config_path.empty()) {
      std::cerr << "gptrack simulate: --config is required\n";
      return gptrack::cli::kExitParse;
    }
    return gptrack::cli::cmd_simulate(config_path, global);
  }
  if (report->parsed()) {
    return gptrack::cli::cmd_report(report_csv, global);
  }
  return gptrack::cli::kExitParse;
}
