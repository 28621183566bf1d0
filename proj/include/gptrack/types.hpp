#pragma once

#include <Eigen/Dense>

namespace gptrack {

inline constexpr int kJoints = 7;
inline constexpr int kChannels = 6;
inline constexpr int kStates = 2 * kJoints;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector7d = Eigen::Matrix<double, 7, 1>;
using Vector14d = Eigen::Matrix<double, 14, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix6x7d = Eigen::Matrix<double, 6, 7>;
using Matrix7x6d = Eigen::Matrix<double, 7, 6>;
using Matrix14d = Eigen::Matrix<double, 14, 14>;
using Matrix14x7d = Eigen::Matrix<double, 14, 7>;

using Matrix6Xd = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Matrix7Xd = Eigen::Matrix<double, 7, Eigen::Dynamic>;
using Matrix14Xd = Eigen::Matrix<double, 14, Eigen::Dynamic>;

}  // namespace gptrack
