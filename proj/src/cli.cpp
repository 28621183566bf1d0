#include "gptrack/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include "gptrack/config.hpp"
#include "gptrack/csv.hpp"
#include "gptrack/errors.hpp"
#include "gptrack/svg.hpp"

namespace gptrack::cli {

namespace fs = std::filesystem;

namespace {

int map_exception(const std::exception& e, const char* command) {
  std::cerr << "gptrack " << command << ": " << e.what() << "\n";
  try {
    throw;
  } catch (const ParseError&) {
    return kExitParse;
  } catch (const ContractViolation&) {
    return kExitContract;
  } catch (const NumericalError&) {
    return kExitNumerical;
  } catch (const std::exception&) {
    return kExitNumerical;
  }
}

const char* kChannelNames[kChannels] = {"x", "y", "z", "roll", "pitch", "yaw"};

sim::GpConfig gp_config_from(const std::string& config_path) {
  if (config_path.empty()) return sim::GpConfig{};
  return io::load_scenario(config_path).sim.gp;
}

io::HyperparameterFile fit_channels(const io::TrackingSeries& series,
                                    const sim::GpConfig& gp_cfg,
                                    std::optional<std::uint64_t> seed_override,
                                    bool quiet) {
  const int rows = series.rows();
  const int count = std::min(gp_cfg.fit_window, rows);
  const int offset = rows - count;
  const Eigen::VectorXd times = series.t.segment(offset, count);
  const std::string digest =
      io::window_digest(times, series.pose.middleCols(offset, count));

  io::HyperparameterFile file;
  for (int c = 0; c < kChannels; ++c) {
    gp::HyperOptions options = gp_cfg.hyper;
    if (seed_override) options.seed = *seed_override;
    options.seed += static_cast<std::uint64_t>(c);
    const Eigen::VectorXd targets =
        series.pose.row(c).segment(offset, count).transpose();
    const gp::FitResult fit = gp::optimize_hyperparams(
        gp_cfg.kernel_family, gp::TrainingSet{times, targets, 0.0}, options);
    if (!quiet) {
      std::cout << "channel " << kChannelNames[c]
                << ": mll = " << io::format_double(fit.mll)
                << ", noise_var = " << io::format_double(fit.noise_var) << "\n";
    }
    file.channels.push_back(
        io::HyperparameterFile::Channel{fit.kernel, fit.noise_var, fit.mll, digest});
  }
  return file;
}

void write_plots(const sim::SimLog& log, const fs::path& out_dir,
                 const std::vector<std::string>& plots) {
  const double rad2deg = io::deg_per_rad();
  const int ticks = log.ticks();
  const int stride = std::max(1, ticks / 2000);

  auto downsampled = [&](auto getter) {
    io::Series s;
    for (int k = 0; k < ticks; k += stride) {
      s.x.push_back(log.t[k]);
      s.y.push_back(getter(k));
    }
    return s;
  };

  for (const std::string& plot : plots) {
    if (plot == "gp_error") {
      io::Panel pos{"GP one-step prediction error, position", "t [s]", "error [mm]", {}};
      io::Panel ang{"GP one-step prediction error, orientation", "t [s]", "error [deg]", {}};
      for (int c = 0; c < kChannels; ++c) {
        io::Series s;
        s.label = kChannelNames[c];
        for (int k = 0; k < ticks; ++k) {
          if (!log.onestep_valid[k]) continue;
          const double err = log.onestep(c, k) - log.truth(c, k);
          s.x.push_back(log.t[k]);
          s.y.push_back(c < 3 ? err * io::kMmPerM : err * rad2deg);
        }
        (c < 3 ? pos : ang).series.push_back(std::move(s));
      }
      io::write_svg((out_dir / "gp_error.svg").string(), {pos, ang});
    } else if (plot == "pose") {
      io::Panel pos{"Cartesian position, reference vs robot", "t [s]", "position [mm]", {}};
      io::Panel ang{"Orientation, reference vs robot", "t [s]", "angle [deg]", {}};
      for (int c = 0; c < kChannels; ++c) {
        const double scale = c < 3 ? io::kMmPerM : rad2deg;
        io::Series ref = downsampled([&](int k) { return log.ref_pose(c, k) * scale; });
        ref.label = std::string(kChannelNames[c]) + " ref";
        io::Series act = downsampled([&](int k) { return log.fk_pose(c, k) * scale; });
        act.label = std::string(kChannelNames[c]) + " robot";
        auto& panel = c < 3 ? pos : ang;
        panel.series.push_back(std::move(ref));
        panel.series.push_back(std::move(act));
      }
      io::write_svg((out_dir / "pose.svg").string(), {pos, ang});
    } else if (plot == "pose_error") {
      io::Panel pos{"Cartesian position error", "t [s]", "error [mm]", {}};
      io::Panel ang{"Orientation error", "t [s]", "error [deg]", {}};
      io::Series pn = downsampled([&](int k) {
        return (log.fk_pose.col(k).head<3>() - log.ref_pose.col(k).head<3>()).norm() *
               io::kMmPerM;
      });
      pn.label = "|position error|";
      io::Series an = downsampled([&](int k) {
        double worst = 0.0;
        for (int i = 3; i < kChannels; ++i) {
          worst = std::max(worst, std::abs(kin::wrap_angle(log.fk_pose(i, k) -
                                                           log.ref_pose(i, k))));
        }
        return worst * rad2deg;
      });
      an.label = "max |angle error|";
      pos.series.push_back(std::move(pn));
      ang.series.push_back(std::move(an));
      io::write_svg((out_dir / "pose_error.svg").string(), {pos, ang});
    }
  }
}

void print_metric_summary(const sim::Metrics& m) {
  const double rad2deg = io::deg_per_rad();
  std::cout << "metric                     value\n"
            << "max position error [mm]    " << io::format_double(m.max_pos_err * io::kMmPerM)
            << "\n"
            << "rms position error [mm]    " << io::format_double(m.rms_pos_err * io::kMmPerM)
            << "\n"
            << "max angle error [deg]      " << io::format_double(m.max_ang_err * rad2deg)
            << "\n"
            << "rms angle error [deg]      " << io::format_double(m.rms_ang_err * rad2deg)
            << "\n"
            << "dropouts                   " << m.dropout_count << "\n"
            << "mean solver iterations     " << io::format_double(m.mean_solver_iterations)
            << "\n"
            << "wall clock [s]             " << io::format_double(m.wall_clock_seconds)
            << "\n";
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

int cmd_fit_hyper(const std::string& tracking_csv, const std::string& config_path,
                  const std::string& out_path, const GlobalOptions& options) {
  try {
    const io::TrackingSeries series = io::read_tracking_csv(tracking_csv);
    if (series.rows() == 0) {
      throw ParseError(tracking_csv + ": no data rows");
    }
    if (series.rows() < 200) {
      std::cerr << "gptrack fit-hyper: warning: only " << series.rows()
                << " rows, 200 or more are recommended\n";
    }
    const sim::GpConfig gp_cfg = gp_config_from(config_path);
    const io::HyperparameterFile file =
        fit_channels(series, gp_cfg, options.seed, options.quiet);
    io::save_hyperparameters(out_path, file);
    if (!options.quiet) std::cout << "wrote " << out_path << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, "fit-hyper");
  }
}

int cmd_predict(const std::string& tracking_csv, const std::string& hyper_path,
                std::optional<double> t_now, double ts, int horizon,
                const std::string& out_csv, const GlobalOptions& options) {
  try {
    const io::TrackingSeries series = io::read_tracking_csv(tracking_csv);
    if (series.rows() == 0) {
      throw ParseError(tracking_csv + ": no data rows");
    }
    const io::HyperparameterFile hyper = io::load_hyperparameters(hyper_path);

    ref::ObservationWindow window;
    const int offset = std::max(0, series.rows() - window.capacity());
    for (int r = offset; r < series.rows(); ++r) {
      window.push(ref::PoseSample{series.t[r], series.pose.col(r)});
    }
    const double start = t_now.value_or(window.last_time());
    if (start < window.last_time()) {
      throw ContractViolation("predict: t_now must not precede the last sample");
    }

    const Vector6d thresholds = sim::GpConfig{}.variance_thresholds;
    const ref::ReferencePrediction prediction =
        ref::predict_reference(window, hyper.models(), start, ts, horizon, thresholds);
    io::write_horizon_csv(out_csv, prediction.grid, prediction.pose_mean,
                          prediction.pose_velocity, prediction.pose_variance);
    if (!options.quiet) {
      std::cout << "wrote " << out_csv << " (" << prediction.grid.size() << " rows)\n";
      for (int c = 0; c < kChannels; ++c) {
        if (prediction.safety_flags[static_cast<std::size_t>(c)]) {
          std::cout << "safety flag: channel " << kChannelNames[c]
                    << " variance above threshold\n";
        }
      }
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, "predict");
  }
}

int cmd_simulate(const std::string& config_path, const GlobalOptions& options) {
  try {
    io::ScenarioConfig cfg = io::load_scenario(config_path);
    if (options.seed) {
      cfg.sim.sensor.seed = *options.seed;
      cfg.sim.gp.hyper.seed = *options.seed + 1;
      cfg.sim.disturbance.seed = *options.seed + 2;
    }

    const auto started = std::chrono::steady_clock::now();
    const sim::SimLog log = sim::run(cfg.sim);
    sim::Metrics metrics = sim::compute_metrics(log);
    metrics.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const fs::path out_dir(options.out_dir);
    fs::create_directories(out_dir);
    io::write_log_csv((out_dir / cfg.log_csv).string(), log);
    write_json(out_dir / cfg.metrics_json, io::metrics_to_json(metrics));
    write_plots(log, out_dir, cfg.plots);

    if (!options.quiet) print_metric_summary(metrics);

    const std::vector<std::string> violated =
        io::check_assertions(metrics, cfg.assertions);
    if (!violated.empty()) {
      for (const std::string& name : violated) {
        std::cerr << "gptrack simulate: assertion violated: " << name << "\n";
      }
      return kExitAssertion;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, "simulate");
  }
}

int cmd_report(const std::string& log_csv, const GlobalOptions& options) {
  try {
    const sim::SimLog log = io::read_log_csv(log_csv);
    const sim::Metrics metrics = sim::compute_metrics(log);

    const fs::path out_dir(options.out_dir);
    fs::create_directories(out_dir);
    write_json(out_dir / "metrics.json", io::metrics_to_json(metrics));
    write_plots(log, out_dir, {"gp_error", "pose", "pose_error"});
    if (!options.quiet) print_metric_summary(metrics);
    return kExitOk;
  } catch (const std::exception& e) {
    return map_exception(e, "report");
  }
}

}  // namespace gptrack::cli
