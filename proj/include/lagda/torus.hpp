#pragma once

#include <Eigen/Dense>

namespace lagda {

inline constexpr double kTwoPi = 2.0 * M_PI;

/// Maps a coordinate into [0, 2pi).
double wrap_coordinate(double x);
Eigen::Vector2d wrap_point(const Eigen::Vector2d& x);

/// Componentwise x_new - x_old mapped into (-pi, pi].
Eigen::Vector2d unwrap_increment(const Eigen::Vector2d& x_new, const Eigen::Vector2d& x_old);

}  // namespace lagda
