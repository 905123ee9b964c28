#include "gawm/action_segments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gawm {

bool ActionIncrement::is_local() const {
  return std::isfinite(dx) && std::isfinite(dy) && std::isfinite(dtheta) &&
         std::abs(dtheta) <= std::numbers::pi;
}

Pose2 pose_of(const ActionIncrement& a) { return Pose2(a.dtheta, a.dx, a.dy); }

ActionSegment::ActionSegment(std::vector<ActionIncrement> incs) : increments(std::move(incs)) {
  for (std::size_t i = 0; i < increments.size(); ++i) {
    if (!increments[i].is_local()) {
      throw std::invalid_argument("ActionSegment: increment " + std::to_string(i) +
                                  " is non-finite or outside the local regime");
    }
  }
}

ActionSegment ActionSegment::slice(std::size_t offset, std::size_t length) const {
  if (offset > size() || length > size() - offset) {
    throw std::out_of_range("ActionSegment::slice: [" + std::to_string(offset) + ", " +
                            std::to_string(offset + length) + ") exceeds length " +
                            std::to_string(size()));
  }
  ActionSegment out;
  out.increments.assign(increments.begin() + static_cast<std::ptrdiff_t>(offset),
                        increments.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return out;
}

ActionIncrement ActionSegment::cumulative_sum() const {
  ActionIncrement total;
  for (const auto& a : increments) {
    total += a;
  }
  return total;
}

void DirichletParams::validate() const {
  if (!(concentration > 0.0) || !std::isfinite(concentration)) {
    throw std::invalid_argument("DirichletParams: concentration must be positive, got " +
                                std::to_string(concentration));
  }
}

ActionSegment make_identity_segment(std::size_t l) {
  if (l == 0) {
    throw std::invalid_argument("make_identity_segment: length must be >= 1");
  }
  ActionSegment out;
  out.increments.assign(l, ActionIncrement{});
  return out;
}

ActionSegment make_inverse_segment(const ActionSegment& u) {
  if (u.empty()) {
    throw std::invalid_argument("make_inverse_segment: empty segment");
  }
  ActionSegment out;
  out.increments.reserve(2 * u.size());
  out.increments = u.increments;
  for (auto it = u.increments.rbegin(); it != u.increments.rend(); ++it) {
    out.increments.push_back(-*it);
  }
  return out;
}

std::vector<double> sample_dirichlet_weights(std::size_t l, double concentration, Rng& rng) {
  DirichletParams{concentration, 0}.validate();
  if (l == 0) {
    throw std::invalid_argument("sample_dirichlet_weights: dimension must be >= 1");
  }
  if (l == 1) {
    return {1.0};
  }
  // Normalize Gamma variates in log space so tiny concentrations cannot
  // underflow every component to zero.
  std::vector<double> logs(l);
  for (auto& v : logs) {
    v = rng.log_gamma_variate(concentration);
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  for (auto& v : logs) {
    v = std::exp(v - top);
    total += v;
  }
  for (auto& v : logs) {
    v /= total;
  }
  return logs;
}

std::vector<double> sample_dirichlet_weights(std::size_t l, const DirichletParams& params) {
  params.validate();
  Rng rng(params.seed);
  return sample_dirichlet_weights(l, params.concentration, rng);
}

ActionSegment make_compatibility_segment(const ActionSegment& u_a, std::span<const double> weights) {
  if (u_a.empty()) {
    throw std::invalid_argument("make_compatibility_segment: empty segment");
  }
  if (weights.size() != u_a.size()) {
    throw std::invalid_argument("make_compatibility_segment: expected " +
                                std::to_string(u_a.size()) + " weights, got " +
                                std::to_string(weights.size()));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("make_compatibility_segment: weights must be finite and >= 0");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("make_compatibility_segment: weights must sum to 1");
  }
  if (u_a.size() == 1) {
    return u_a;
  }
  const ActionIncrement sum = u_a.cumulative_sum();
  ActionSegment out;
  out.increments.reserve(u_a.size());
  for (double w : weights) {
    out.increments.push_back(w * sum);
  }
  return out;
}

ActionSegment make_compatibility_segment(const ActionSegment& u_a, const DirichletParams& params) {
  if (u_a.empty()) {
    throw std::invalid_argument("make_compatibility_segment: empty segment");
  }
  const auto weights = sample_dirichlet_weights(u_a.size(), params);
  return make_compatibility_segment(u_a, weights);
}

}  // namespace gawm
