#pragma once

#include <Eigen/Dense>

namespace soad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

}  // namespace soad
