#include "gawm/se2.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gawm {

double wrap_angle(double angle) {
  if (!std::isfinite(angle)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  // remainder() is exact and lands in [-pi, pi].
  double r = std::remainder(angle, kTwoPi);
  if (r <= -std::numbers::pi) {
    r += kTwoPi;
  }
  return r;
}

Pose2::Pose2(double theta, double x, double y) : Pose2(theta, Eigen::Vector2d(x, y)) {}

Pose2::Pose2(double theta, const Eigen::Vector2d& pos) : theta_(wrap_angle(theta)), pos_(pos) {
  if (!pos_.allFinite()) {
    throw std::invalid_argument("Pose2: non-finite position");
  }
}

Eigen::Matrix2d Pose2::rotation() const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

Eigen::Matrix3d Pose2::matrix() const {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = rotation();
  m.topRightCorner<2, 1>() = pos_;
  return m;
}

void DistanceParams::validate() const {
  if (!(alpha_rot >= 0.0) || !std::isfinite(alpha_rot)) {
    throw std::invalid_argument("DistanceParams: alpha_rot must be finite and >= 0, got " +
                                std::to_string(alpha_rot));
  }
}

Pose2 se2_identity() { return Pose2{}; }

Pose2 se2_compose(const Pose2& g1, const Pose2& g2) {
  return Pose2(g1.theta() + g2.theta(), g1.position() + g1.rotation() * g2.position());
}

Pose2 se2_inverse(const Pose2& g) {
  const Eigen::Matrix2d rt = g.rotation().transpose();
  return Pose2(-g.theta(), -(rt * g.position()));
}

double state_distance(const Pose2& s1, const Pose2& s2, const DistanceParams& params) {
  params.validate();
  const double translation = (s1.position() - s2.position()).norm();
  const double rotation = std::abs(wrap_angle(s1.theta() - s2.theta()));
  return translation + params.alpha_rot * rotation;
}

}  // namespace gawm
