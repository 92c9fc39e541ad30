#pragma once

#include <Eigen/Dense>

#include <vector>

namespace lie_svi {

/// Rotation and body angular velocity at time t.
struct TrajectorySample {
  double t = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
};

using Trajectory = std::vector<TrajectorySample>;

}  // namespace lie_svi
