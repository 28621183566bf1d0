#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gptrack/sim.hpp"
#include "gptrack/types.hpp"

namespace gptrack::io {

inline constexpr double kMmPerM = 1000.0;
double deg_per_rad();

/// Shortest representation that parses back to the identical double.
std::string format_double(double value);
double parse_double(const std::string& text, const std::string& context);

/// Tracking recording: header "t,x,y,z,roll,pitch,yaw", units s/mm/deg,
/// LF line endings. In memory everything is SI (m, rad).
struct TrackingSeries {
  Eigen::VectorXd t;
  Matrix6Xd pose;

  int rows() const { return static_cast<int>(t.size()); }
};

TrackingSeries read_tracking_csv(const std::string& path);
void write_tracking_csv(const std::string& path, const TrackingSeries& series);

/// Closed-loop log: one metadata comment line, a header and one row per
/// control tick. Lengths in mm, angles in deg (including joint data).
void write_log_csv(const std::string& path, const sim::SimLog& log);
sim::SimLog read_log_csv(const std::string& path);

/// Horizon prediction table for the predict command: t plus per-channel
/// mean, velocity and variance in mm/deg units.
void write_horizon_csv(const std::string& path, const Eigen::VectorXd& grid,
                       const Matrix6Xd& mean, const Matrix6Xd& velocity,
                       const Matrix6Xd& variance);

}  // namespace gptrack::io
