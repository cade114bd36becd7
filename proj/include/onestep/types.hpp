#pragma once

#include <Eigen/Dense>

namespace onestep {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Upper bound on state and input dimension. Keeps the hot integration
// paths free of heap allocation.
inline constexpr int kMaxDim = 8;

// Stack-allocated storage for state/input sized quantities.
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

}  // namespace onestep
