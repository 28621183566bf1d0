#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gptrack/reference.hpp"
#include "gptrack/sim.hpp"

namespace gptrack::io {

/// Complete simulation scenario plus output paths, plot toggles and the
/// optional assertion block, parsed from one JSON document. Units are SI
/// (m, rad, s) except the assertion thresholds, which carry their unit in
/// the key name. Unknown keys are rejected.
struct ScenarioConfig {
  sim::SimConfig sim;
  std::string log_csv = "log.csv";
  std::string metrics_json = "metrics.json";
  std::vector<std::string> plots = {"gp_error", "pose", "pose_error"};
  int horizon_snapshot_stride = 0;
  std::map<std::string, double> assertions;  // e.g. max_pos_err_mm -> 0.3
};

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const nlohmann::json& j, const std::string& context);

nlohmann::json kernel_to_json(const gp::KernelSpec& spec);
gp::KernelSpec kernel_from_json(const nlohmann::json& j, const std::string& context);

/// Fitted kernels for the six output channels with provenance: marginal
/// log likelihood at the optimum and a digest of the training window.
struct HyperparameterFile {
  struct Channel {
    gp::KernelSpec kernel;
    double noise_var = 0.0;
    double mll = 0.0;
    std::string window_digest;
  };
  std::vector<Channel> channels;  // exactly kChannels entries

  ref::ChannelModels models() const;
};

void save_hyperparameters(const std::string& path, const HyperparameterFile& file);
HyperparameterFile load_hyperparameters(const std::string& path);

/// FNV-1a over the raw bytes of the sample times and values.
std::string window_digest(const Eigen::VectorXd& times, const Matrix6Xd& pose);

nlohmann::json metrics_to_json(const sim::Metrics& metrics);

/// Returns the names of violated assertions (empty when all hold).
std::vector<std::string> check_assertions(const sim::Metrics& metrics,
                                          const std::map<std::string, double>& assertions);

}  // namespace gptrack::io
