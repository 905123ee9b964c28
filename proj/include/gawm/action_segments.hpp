#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gawm/random.hpp"
#include "gawm/se2.hpp"

namespace gawm {

/// Body-frame ego-motion increment (dx, dy, dtheta).
struct ActionIncrement {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;

  /// Finite and |dtheta| <= pi.
  bool is_local() const;

  ActionIncrement operator-() const { return {-dx, -dy, -dtheta}; }
  ActionIncrement operator+(const ActionIncrement& o) const {
    return {dx + o.dx, dy + o.dy, dtheta + o.dtheta};
  }
  ActionIncrement& operator+=(const ActionIncrement& o) {
    dx += o.dx;
    dy += o.dy;
    dtheta += o.dtheta;
    return *this;
  }
  bool operator==(const ActionIncrement&) const = default;
};

inline ActionIncrement operator*(double w, const ActionIncrement& a) {
  return {w * a.dx, w * a.dy, w * a.dtheta};
}

/// The rigid motion (R(dtheta), (dx, dy)) an increment denotes.
Pose2 pose_of(const ActionIncrement& a);

struct ActionSegment {
  std::vector<ActionIncrement> increments;

  ActionSegment() = default;
  explicit ActionSegment(std::vector<ActionIncrement> incs);

  std::size_t size() const { return increments.size(); }
  bool empty() const { return increments.empty(); }
  const ActionIncrement& operator[](std::size_t i) const { return increments[i]; }

  /// Sub-segment [offset, offset + length); throws std::out_of_range if it does not fit.
  ActionSegment slice(std::size_t offset, std::size_t length) const;

  /// Componentwise sum of all increments.
  ActionIncrement cumulative_sum() const;

  bool operator==(const ActionSegment&) const = default;
};

struct DirichletParams {
  double concentration = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// l zero increments. Throws std::invalid_argument for l == 0.
ActionSegment make_identity_segment(std::size_t l);

/// Forward-inverse cycle (a_1..a_l, -a_l..-a_1).
ActionSegment make_inverse_segment(const ActionSegment& u);

/// Symmetric Dirichlet(concentration) weights of dimension l, drawn from a
/// generator seeded with params.seed.
std::vector<double> sample_dirichlet_weights(std::size_t l, const DirichletParams& params);

/// Same, drawing from an existing stream.
std::vector<double> sample_dirichlet_weights(std::size_t l, double concentration, Rng& rng);

/// u_b[i] = w_i * sum_j u_a[j] with Dirichlet weights.
ActionSegment make_compatibility_segment(const ActionSegment& u_a, const DirichletParams& params);

/// u_b[i] = weights[i] * sum_j u_a[j] for caller-supplied simplex weights.
ActionSegment make_compatibility_segment(const ActionSegment& u_a, std::span<const double> weights);

}  // namespace gawm
