#pragma once

#include <Eigen/Dense>

namespace bridgeforge {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace bridgeforge
