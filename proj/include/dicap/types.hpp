#pragma once

#include <Eigen/Dense>

namespace dicap {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VecXd = Vec<double>;
using MatXd = Mat<double>;

inline constexpr double kLn2 = 0.6931471805599453094;

/// Natural-log value expressed in bits.
inline double nats_to_bits(double nats) { return nats / kLn2; }

}  // namespace dicap
