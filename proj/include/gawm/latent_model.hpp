#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gawm/action_segments.hpp"
#include "gawm/random.hpp"
#include "gawm/reference_models.hpp"
#include "gawm/se2.hpp"

namespace gawm {

using LatentState = Eigen::VectorXd;

/// Decoded heading features (cos, sin) vanished; the heading is undefined.
class DegenerateHeadingError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A recorded computation produced a NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pose features (x, y, cos theta, sin theta).
Eigen::Vector4d pose_features(const Pose2& pose);

/**
 * Fixed random linear map from pose features to a d-dimensional latent.
 *
 * The projection is drawn once from `seed` and must have full column rank;
 * draws with condition number above kMaxCondition are rejected and redrawn
 * from the next derived seed.
 */
class FeatureEncoder {
 public:
  static constexpr double kMaxCondition = 1e6;

  FeatureEncoder(Eigen::MatrixXd projection, double obs_noise_sigma, std::uint64_t seed = 0);

  static FeatureEncoder sample(std::size_t latent_dim, std::uint64_t seed,
                               double obs_noise_sigma = 0.0);

  const Eigen::MatrixXd& projection() const { return projection_; }
  double obs_noise_sigma() const { return obs_noise_sigma_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t latent_dim() const { return static_cast<std::size_t>(projection_.rows()); }
  double condition_number() const;

 private:
  Eigen::MatrixXd projection_;
  double obs_noise_sigma_;
  std::uint64_t seed_;
};

/// Left inverse of an encoder projection; stands in for the pose estimator.
class FeatureDecoder {
 public:
  explicit FeatureDecoder(const FeatureEncoder& encoder);
  explicit FeatureDecoder(Eigen::MatrixXd pinv) : pinv_(std::move(pinv)) {}

  const Eigen::MatrixXd& pinv() const { return pinv_; }

 private:
  Eigen::MatrixXd pinv_;
};

/// z = P (x, y, cos, sin) + N(0, sigma^2 I). Draws no noise when sigma == 0.
LatentState encode(const Pose2& pose, const FeatureEncoder& encoder, Rng& noise);

/// Noise-free encoding.
LatentState encode(const Pose2& pose, const FeatureEncoder& encoder);

/// Throws DegenerateHeadingError when both heading features are below 1e-12.
Pose2 decode(const LatentState& z, const FeatureDecoder& decoder);

/**
 * One-hidden-layer residual transition network.
 *
 *   h  = tanh(W1 [z; a] + b1)
 *   z' = z + W2 h + b2
 *
 * Parameters live in one flat vector laid out as W1 (row-major, H x (d+3)),
 * b1 (H), W2 (row-major, d x H), b2 (d).
 */
class DynamicsNet {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  DynamicsNet(std::size_t latent_dim, std::size_t hidden);
  DynamicsNet(std::size_t latent_dim, std::size_t hidden, Eigen::VectorXd params);

  /// Glorot-uniform first layer; second layer scaled by output_scale.
  static DynamicsNet random(std::size_t latent_dim, std::size_t hidden, std::uint64_t seed,
                            double output_scale = 1.0);

  static std::size_t parameter_count(std::size_t latent_dim, std::size_t hidden);

  std::size_t latent_dim() const { return d_; }
  std::size_t hidden() const { return h_; }
  std::size_t input_dim() const { return d_ + 3; }

  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }

  Eigen::Map<const RowMatrix> w1() const;
  Eigen::Map<const Eigen::VectorXd> b1() const;
  Eigen::Map<const RowMatrix> w2() const;
  Eigen::Map<const Eigen::VectorXd> b2() const;

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return h_ * (d_ + 3); }
  std::size_t w2_offset() const { return b1_offset() + h_; }
  std::size_t b2_offset() const { return w2_offset() + h_ * d_; }

 private:
  std::size_t d_;
  std::size_t h_;
  Eigen::VectorXd params_;
};

Eigen::VectorXd net_input(const LatentState& z, const ActionIncrement& a);

LatentState net_step(const LatentState& z, const ActionIncrement& a, const DynamicsNet& net);

/// Folds net_step over u; the empty segment returns z0.
LatentState latent_rollout_endpoint(const LatentState& z0, const ActionSegment& u,
                                    const DynamicsNet& net);

/**
 * Reverse-mode record of latent rollouts and squared-distance losses.
 *
 * Nodes are latent vectors. Leaves come from `input` (optionally detached)
 * or `detach`; interior nodes from `step`. Loss terms are weighted squared
 * L2 distances. `backward` returns the exact gradient of the summed loss
 * with respect to the network parameters and to every non-detached leaf.
 */
class RolloutTape {
 public:
  using NodeId = std::size_t;

  struct Gradient {
    Eigen::VectorXd params;
    /// Indexed by node id; empty vectors for interior nodes and detached leaves.
    std::vector<Eigen::VectorXd> inputs;
  };

  explicit RolloutTape(const DynamicsNet& net);

  NodeId input(const LatentState& z, bool detached = false);
  /// New leaf carrying the value of `node`; gradient stops here.
  NodeId detach(NodeId node);
  NodeId step(NodeId z, const ActionIncrement& a);
  NodeId rollout(NodeId z0, const ActionSegment& u);

  /// weight * ||a - b||^2
  void add_squared_distance(NodeId a, NodeId b, double weight = 1.0);
  /// weight * ||a - target||^2
  void add_squared_distance(NodeId a, const LatentState& target, double weight = 1.0);

  const LatentState& value(NodeId node) const { return nodes_.at(node).value; }
  std::size_t node_count() const { return nodes_.size(); }
  double loss() const;

  /// Throws NonFiniteError if any recorded value, the loss or a gradient is non-finite.
  Gradient backward() const;

 private:
  enum class Kind { kLeaf, kDetachedLeaf, kStep };

  struct Node {
    Kind kind;
    LatentState value;
    NodeId parent = 0;
    Eigen::VectorXd input;   // [z; a] for steps
    Eigen::VectorXd hidden;  // tanh activations for steps
  };

  struct LossTerm {
    NodeId a;
    bool has_node_b;
    NodeId b;
    LatentState target;
    double weight;
  };

  const DynamicsNet& net_;
  std::vector<Node> nodes_;
  std::vector<LossTerm> terms_;
};

/// A learned model exposed as a state-space world model:
/// s' = decode(net_step(encode(s, noise), a)).
class LatentWorldModel final : public WorldModel {
 public:
  LatentWorldModel(FeatureEncoder encoder, DynamicsNet net, std::string label = "latent");

  Pose2 step(const Pose2& state, const ActionIncrement& action, Rng& noise) const override;
  std::string name() const override { return label_; }

  const FeatureEncoder& encoder() const { return encoder_; }
  const FeatureDecoder& decoder() const { return decoder_; }
  const DynamicsNet& net() const { return net_; }

 private:
  FeatureEncoder encoder_;
  FeatureDecoder decoder_;
  DynamicsNet net_;
  std::string label_;
};

}  // namespace gawm
