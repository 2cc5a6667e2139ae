#include "lagda/torus.hpp"

#include <cmath>

namespace lagda {

double wrap_coordinate(double x) {
  double y = x - kTwoPi * std::floor(x / kTwoPi);
  // floor can round y up to exactly 2pi for tiny negative x.
  if (y >= kTwoPi) y -= kTwoPi;
  if (y < 0.0) y = 0.0;
  return y;
}

Eigen::Vector2d wrap_point(const Eigen::Vector2d& x) {
  return {wrap_coordinate(x[0]), wrap_coordinate(x[1])};
}

Eigen::Vector2d unwrap_increment(const Eigen::Vector2d& x_new, const Eigen::Vector2d& x_old) {
  Eigen::Vector2d d = x_new - x_old;
  for (int i = 0; i < 2; ++i) {
    d[i] -= kTwoPi * std::ceil((d[i] - M_PI) / kTwoPi);
  }
  return d;
}

}  // namespace lagda
