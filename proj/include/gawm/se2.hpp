#pragma once

#include <Eigen/Core>

namespace gawm {

/// Wraps an angle into (-pi, pi]. The half turn is always represented as +pi.
double wrap_angle(double angle);

/**
 * @brief Planar rigid motion, stored as a heading angle and a position.
 *
 * The heading is kept wrapped into (-pi, pi] and the position is always
 * finite; the constructor enforces both.
 */
class Pose2 {
 public:
  Pose2() = default;
  Pose2(double theta, double x, double y);
  Pose2(double theta, const Eigen::Vector2d& pos);

  double theta() const { return theta_; }
  double x() const { return pos_.x(); }
  double y() const { return pos_.y(); }
  const Eigen::Vector2d& position() const { return pos_; }

  /// 2x2 rotation matrix R(theta).
  Eigen::Matrix2d rotation() const;

  /// 3x3 homogeneous matrix [R p; 0 1].
  Eigen::Matrix3d matrix() const;

  bool operator==(const Pose2&) const = default;

 private:
  double theta_ = 0.0;
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero();
};

struct DistanceParams {
  /// Weight of the rotational term relative to the translational one.
  double alpha_rot = 1.0;

  void validate() const;
};

Pose2 se2_identity();

/// (R1 R2, p1 + R1 p2)
Pose2 se2_compose(const Pose2& g1, const Pose2& g2);

/// (R^T, -R^T p)
Pose2 se2_inverse(const Pose2& g);

/// ||p1 - p2|| + alpha_rot * |wrap(theta1 - theta2)|
double state_distance(const Pose2& s1, const Pose2& s2, const DistanceParams& params = {});

}  // namespace gawm
