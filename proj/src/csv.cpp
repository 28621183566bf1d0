#include "gptrack/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gptrack/errors.hpp"

namespace gptrack::io {

double deg_per_rad() { return 180.0 / std::numbers::pi; }

std::string format_double(double value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end) {
    throw ParseError(context + ": not a number: '" + text + "'");
  }
  return value;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw ParseError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open for reading: " + path);
  return in;
}

constexpr const char* kTrackingHeader = "t,x,y,z,roll,pitch,yaw";

// pose channels: positions scale with mm, angles with deg
double channel_to_file(int c, double si) {
  return c < 3 ? si * kMmPerM : si * deg_per_rad();
}
double channel_from_file(int c, double file_value) {
  return c < 3 ? file_value / kMmPerM : file_value / deg_per_rad();
}

}  // namespace

TrackingSeries read_tracking_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != kTrackingHeader) {
    throw ParseError(path + ": expected header '" + kTrackingHeader + "'");
  }
  std::vector<std::array<double, 7>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != 7) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    }
    std::array<double, 7> row;
    for (int i = 0; i < 7; ++i) {
      row[static_cast<std::size_t>(i)] =
          parse_double(fields[static_cast<std::size_t>(i)],
                       path + ":" + std::to_string(line_no));
    }
    rows.push_back(row);
  }
  TrackingSeries series;
  series.t.resize(static_cast<Eigen::Index>(rows.size()));
  series.pose.resize(kChannels, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    series.t[static_cast<Eigen::Index>(r)] = rows[r][0];
    for (int c = 0; c < kChannels; ++c) {
      series.pose(c, static_cast<Eigen::Index>(r)) =
          channel_from_file(c, rows[r][static_cast<std::size_t>(c + 1)]);
    }
  }
  return series;
}

void write_tracking_csv(const std::string& path, const TrackingSeries& series) {
  std::ofstream out = open_output(path);
  out << kTrackingHeader << "\n";
  for (int r = 0; r < series.rows(); ++r) {
    out << format_double(series.t[r]);
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(channel_to_file(c, series.pose(c, r)));
    }
    out << "\n";
  }
}

namespace {

const char* kPoseSuffix[kChannels] = {"x", "y", "z", "roll", "pitch", "yaw"};

std::string log_header() {
  std::string h = "t";
  auto pose_block = [&](const char* prefix) {
    for (int c = 0; c < kChannels; ++c) {
      h += ',';
      h += prefix;
      h += '_';
      h += kPoseSuffix[c];
    }
  };
  auto joint_block = [&](const char* prefix) {
    for (int j = 1; j <= kJoints; ++j) {
      h += ',';
      h += prefix;
      h += '_';
      h += std::to_string(j);
    }
  };
  pose_block("truth");
  h += ",sensor_due,meas_valid";
  pose_block("meas");
  pose_block("gp");
  pose_block("gpvar");
  h += ",onestep_valid";
  pose_block("onestep");
  pose_block("ref");
  pose_block("fk");
  joint_block("qr");
  joint_block("qdr");
  joint_block("q");
  joint_block("qd");
  joint_block("u");
  h += ",solver_iters,primal_res,dual_res,clik_err";
  return h;
}

double variance_to_file(int c, double si) {
  const double scale = c < 3 ? kMmPerM : deg_per_rad();
  return si * scale * scale;
}
double variance_from_file(int c, double file_value) {
  const double scale = c < 3 ? kMmPerM : deg_per_rad();
  return file_value / (scale * scale);
}

}  // namespace

void write_log_csv(const std::string& path, const sim::SimLog& log) {
  std::ofstream out = open_output(path);
  out << "# gptrack-log v1 ts=" << format_double(log.ts)
      << " sensor_period=" << format_double(log.sensor_period)
      << " settle=" << format_double(log.settle_time) << "\n";
  out << log_header() << "\n";

  const double rad2deg = deg_per_rad();
  for (int k = 0; k < log.ticks(); ++k) {
    out << format_double(log.t[k]);
    auto pose_cols = [&](const Matrix6Xd& m) {
      for (int c = 0; c < kChannels; ++c) {
        out << ',' << format_double(channel_to_file(c, m(c, k)));
      }
    };
    auto joint_cols = [&](const Matrix7Xd& m) {
      for (int j = 0; j < kJoints; ++j) {
        out << ',' << format_double(m(j, k) * rad2deg);
      }
    };
    pose_cols(log.truth);
    out << ',' << log.sensor_due[k] << ',' << log.meas_valid[k];
    pose_cols(log.meas);
    pose_cols(log.gp_mean);
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(variance_to_file(c, log.gp_var(c, k)));
    }
    out << ',' << log.onestep_valid[k];
    pose_cols(log.onestep);
    pose_cols(log.ref_pose);
    pose_cols(log.fk_pose);
    joint_cols(log.q_ref);
    joint_cols(log.qd_ref);
    for (int j = 0; j < kStates; ++j) {
      out << ',' << format_double(log.x(j, k) * rad2deg);
    }
    joint_cols(log.u);
    out << ',' << log.solver_iterations[k] << ',' << format_double(log.primal_residual[k])
        << ',' << format_double(log.dual_residual[k]) << ','
        << format_double(log.clik_error[k]) << "\n";
  }
}

sim::SimLog read_log_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# gptrack-log v1 ", 0) != 0) {
    throw ParseError(path + ": missing gptrack-log metadata line");
  }

  sim::SimLog log;
  {
    std::stringstream meta(line.substr(std::string("# gptrack-log v1 ").size()));
    std::string token;
    bool have_ts = false, have_period = false, have_settle = false;
    while (meta >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw ParseError(path + ": bad metadata token " + token);
      const std::string key = token.substr(0, eq);
      const double value = parse_double(token.substr(eq + 1), path + " metadata");
      if (key == "ts") {
        log.ts = value;
        have_ts = true;
      } else if (key == "sensor_period") {
        log.sensor_period = value;
        have_period = true;
      } else if (key == "settle") {
        log.settle_time = value;
        have_settle = true;
      } else {
        throw ParseError(path + ": unknown metadata key " + key);
      }
    }
    if (!have_ts || !have_period || !have_settle) {
      throw ParseError(path + ": incomplete metadata line");
    }
  }

  if (!std::getline(in, line) || line != log_header()) {
    throw ParseError(path + ": unexpected log header");
  }

  std::vector<std::vector<double>> rows;
  const std::size_t expected = split_line(log_header()).size();
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != expected) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(expected) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::vector<double> row(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      row[i] = parse_double(fields[i], path + ":" + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }

  const int ticks = static_cast<int>(rows.size());
  log.t.resize(ticks);
  log.truth.resize(kChannels, ticks);
  log.meas.resize(kChannels, ticks);
  log.sensor_due.resize(ticks);
  log.meas_valid.resize(ticks);
  log.gp_mean.resize(kChannels, ticks);
  log.gp_var.resize(kChannels, ticks);
  log.onestep_valid.resize(ticks);
  log.onestep.resize(kChannels, ticks);
  log.ref_pose.resize(kChannels, ticks);
  log.fk_pose.resize(kChannels, ticks);
  log.q_ref.resize(kJoints, ticks);
  log.qd_ref.resize(kJoints, ticks);
  log.x.resize(kStates, ticks);
  log.u.resize(kJoints, ticks);
  log.solver_iterations.resize(ticks);
  log.primal_residual.resize(ticks);
  log.dual_residual.resize(ticks);
  log.clik_error.resize(ticks);

  const double rad2deg = deg_per_rad();
  for (int k = 0; k < ticks; ++k) {
    const std::vector<double>& row = rows[static_cast<std::size_t>(k)];
    std::size_t i = 0;
    auto next = [&] { return row[i++]; };
    log.t[k] = next();
    auto pose_cols = [&](Matrix6Xd& m) {
      for (int c = 0; c < kChannels; ++c) m(c, k) = channel_from_file(c, next());
    };
    auto joint_cols = [&](Matrix7Xd& m) {
      for (int j = 0; j < kJoints; ++j) m(j, k) = next() / rad2deg;
    };
    pose_cols(log.truth);
    log.sensor_due[k] = static_cast<int>(next());
    log.meas_valid[k] = static_cast<int>(next());
    pose_cols(log.meas);
    pose_cols(log.gp_mean);
    for (int c = 0; c < kChannels; ++c) log.gp_var(c, k) = variance_from_file(c, next());
    log.onestep_valid[k] = static_cast<int>(next());
    pose_cols(log.onestep);
    pose_cols(log.ref_pose);
    pose_cols(log.fk_pose);
    joint_cols(log.q_ref);
    joint_cols(log.qd_ref);
    for (int j = 0; j < kStates; ++j) log.x(j, k) = next() / rad2deg;
    joint_cols(log.u);
    log.solver_iterations[k] = static_cast<int>(next());
    log.primal_residual[k] = next();
    log.dual_residual[k] = next();
    log.clik_error[k] = next();
  }
  return log;
}

void write_horizon_csv(const std::string& path, const Eigen::VectorXd& grid,
                       const Matrix6Xd& mean, const Matrix6Xd& velocity,
                       const Matrix6Xd& variance) {
  std::ofstream out = open_output(path);
  out << "t";
  for (const char* suffix : kPoseSuffix) out << ",mean_" << suffix;
  for (const char* suffix : kPoseSuffix) out << ",vel_" << suffix;
  for (const char* suffix : kPoseSuffix) out << ",var_" << suffix;
  out << "\n";
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    out << format_double(grid[k]);
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(channel_to_file(c, mean(c, k)));
    }
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(channel_to_file(c, velocity(c, k)));
    }
    for (int c = 0; c < kChannels; ++c) {
      out << ',' << format_double(variance_to_file(c, variance(c, k)));
    }
    out << "\n";
  }
}

}  // namespace gptrack::io
