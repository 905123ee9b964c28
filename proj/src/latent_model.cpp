#include "gawm/latent_model.hpp"

#include <cmath>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace gawm {

Eigen::Vector4d pose_features(const Pose2& pose) {
  return {pose.x(), pose.y(), std::cos(pose.theta()), std::sin(pose.theta())};
}

// ---------------------------------------------------------------------------
// Encoder / decoder

FeatureEncoder::FeatureEncoder(Eigen::MatrixXd projection, double obs_noise_sigma,
                               std::uint64_t seed)
    : projection_(std::move(projection)), obs_noise_sigma_(obs_noise_sigma), seed_(seed) {
  if (projection_.cols() != 4 || projection_.rows() < 4) {
    throw std::invalid_argument("FeatureEncoder: projection must be d x 4 with d >= 4");
  }
  if (!projection_.allFinite()) {
    throw std::invalid_argument("FeatureEncoder: non-finite projection");
  }
  if (!(obs_noise_sigma_ >= 0.0) || !std::isfinite(obs_noise_sigma_)) {
    throw std::invalid_argument("FeatureEncoder: obs_noise_sigma must be finite and >= 0");
  }
  if (!(condition_number() <= kMaxCondition)) {
    throw std::invalid_argument("FeatureEncoder: projection is rank deficient or ill-conditioned");
  }
}

double FeatureEncoder::condition_number() const {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(projection_);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return sv(0) / sv(sv.size() - 1);
}

FeatureEncoder FeatureEncoder::sample(std::size_t latent_dim, std::uint64_t seed,
                                      double obs_noise_sigma) {
  if (latent_dim < 4) {
    throw std::invalid_argument("FeatureEncoder::sample: latent_dim must be >= 4");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, {attempt}));
    Eigen::MatrixXd p(static_cast<Eigen::Index>(latent_dim), 4);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < 4; ++c) {
        p(r, c) = scale * rng.normal();
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p);
    const auto& sv = svd.singularValues();
    if (sv(3) > 0.0 && sv(0) / sv(3) <= kMaxCondition) {
      return FeatureEncoder(std::move(p), obs_noise_sigma, seed);
    }
  }
}

FeatureDecoder::FeatureDecoder(const FeatureEncoder& encoder)
    : pinv_(encoder.projection().completeOrthogonalDecomposition().pseudoInverse()) {}

LatentState encode(const Pose2& pose, const FeatureEncoder& encoder, Rng& noise) {
  LatentState z = encoder.projection() * pose_features(pose);
  if (encoder.obs_noise_sigma() > 0.0) {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z(i) += encoder.obs_noise_sigma() * noise.normal();
    }
  }
  return z;
}

LatentState encode(const Pose2& pose, const FeatureEncoder& encoder) {
  return encoder.projection() * pose_features(pose);
}

Pose2 decode(const LatentState& z, const FeatureDecoder& decoder) {
  if (z.size() != decoder.pinv().cols()) {
    throw std::invalid_argument("decode: latent dimension mismatch");
  }
  const Eigen::Vector4d f = decoder.pinv() * z;
  if (!f.allFinite()) {
    throw NonFiniteError("decode: non-finite features");
  }
  if (std::hypot(f(2), f(3)) < 1e-12) {
    throw DegenerateHeadingError("decode: heading features vanish, heading undefined");
  }
  return Pose2(std::atan2(f(3), f(2)), f(0), f(1));
}

// ---------------------------------------------------------------------------
// Dynamics network

std::size_t DynamicsNet::parameter_count(std::size_t latent_dim, std::size_t hidden) {
  return (latent_dim + 3) * hidden + hidden + hidden * latent_dim + latent_dim;
}

DynamicsNet::DynamicsNet(std::size_t latent_dim, std::size_t hidden)
    : DynamicsNet(latent_dim, hidden,
                  Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(latent_dim, hidden)))) {}

DynamicsNet::DynamicsNet(std::size_t latent_dim, std::size_t hidden, Eigen::VectorXd params)
    : d_(latent_dim), h_(hidden), params_(std::move(params)) {
  if (d_ == 0 || h_ == 0) {
    throw std::invalid_argument("DynamicsNet: dimensions must be positive");
  }
  if (static_cast<std::size_t>(params_.size()) != parameter_count(d_, h_)) {
    throw std::invalid_argument("DynamicsNet: expected " + std::to_string(parameter_count(d_, h_)) +
                                " parameters, got " + std::to_string(params_.size()));
  }
}

DynamicsNet DynamicsNet::random(std::size_t latent_dim, std::size_t hidden, std::uint64_t seed,
                                double output_scale) {
  DynamicsNet net(latent_dim, hidden);
  Rng rng(seed);
  auto& p = net.params_;
  const double lim1 = std::sqrt(6.0 / static_cast<double>(net.input_dim() + hidden));
  const double lim2 = output_scale * std::sqrt(6.0 / static_cast<double>(hidden + latent_dim));
  for (std::size_t i = net.w1_offset(); i < net.b1_offset(); ++i) {
    p(static_cast<Eigen::Index>(i)) = lim1 * (2.0 * rng.uniform() - 1.0);
  }
  for (std::size_t i = net.w2_offset(); i < net.b2_offset(); ++i) {
    p(static_cast<Eigen::Index>(i)) = lim2 * (2.0 * rng.uniform() - 1.0);
  }
  return net;
}

Eigen::Map<const DynamicsNet::RowMatrix> DynamicsNet::w1() const {
  return {params_.data() + w1_offset(), static_cast<Eigen::Index>(h_),
          static_cast<Eigen::Index>(d_ + 3)};
}
Eigen::Map<const Eigen::VectorXd> DynamicsNet::b1() const {
  return {params_.data() + b1_offset(), static_cast<Eigen::Index>(h_)};
}
Eigen::Map<const DynamicsNet::RowMatrix> DynamicsNet::w2() const {
  return {params_.data() + w2_offset(), static_cast<Eigen::Index>(d_),
          static_cast<Eigen::Index>(h_)};
}
Eigen::Map<const Eigen::VectorXd> DynamicsNet::b2() const {
  return {params_.data() + b2_offset(), static_cast<Eigen::Index>(d_)};
}

Eigen::VectorXd net_input(const LatentState& z, const ActionIncrement& a) {
  Eigen::VectorXd x(z.size() + 3);
  x.head(z.size()) = z;
  x(z.size()) = a.dx;
  x(z.size() + 1) = a.dy;
  x(z.size() + 2) = a.dtheta;
  return x;
}

LatentState net_step(const LatentState& z, const ActionIncrement& a, const DynamicsNet& net) {
  if (static_cast<std::size_t>(z.size()) != net.latent_dim()) {
    throw std::invalid_argument("net_step: latent dimension mismatch");
  }
  const Eigen::VectorXd h = (net.w1() * net_input(z, a) + net.b1()).array().tanh().matrix();
  return z + net.w2() * h + net.b2();
}

LatentState latent_rollout_endpoint(const LatentState& z0, const ActionSegment& u,
                                    const DynamicsNet& net) {
  LatentState z = z0;
  for (const auto& a : u.increments) {
    z = net_step(z, a, net);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Reverse mode

RolloutTape::RolloutTape(const DynamicsNet& net) : net_(net) {}

RolloutTape::NodeId RolloutTape::input(const LatentState& z, bool detached) {
  if (static_cast<std::size_t>(z.size()) != net_.latent_dim()) {
    throw std::invalid_argument("RolloutTape::input: latent dimension mismatch");
  }
  nodes_.push_back({detached ? Kind::kDetachedLeaf : Kind::kLeaf, z, 0, {}, {}});
  return nodes_.size() - 1;
}

RolloutTape::NodeId RolloutTape::detach(NodeId node) {
  LatentState v = nodes_.at(node).value;
  nodes_.push_back({Kind::kDetachedLeaf, std::move(v), 0, {}, {}});
  return nodes_.size() - 1;
}

RolloutTape::NodeId RolloutTape::step(NodeId z, const ActionIncrement& a) {
  Eigen::VectorXd x = net_input(nodes_.at(z).value, a);
  Eigen::VectorXd h = (net_.w1() * x + net_.b1()).array().tanh().matrix();
  LatentState out = nodes_[z].value + net_.w2() * h + net_.b2();
  nodes_.push_back({Kind::kStep, std::move(out), z, std::move(x), std::move(h)});
  return nodes_.size() - 1;
}

RolloutTape::NodeId RolloutTape::rollout(NodeId z0, const ActionSegment& u) {
  NodeId cur = z0;
  for (const auto& a : u.increments) {
    cur = step(cur, a);
  }
  return cur;
}

void RolloutTape::add_squared_distance(NodeId a, NodeId b, double weight) {
  nodes_.at(a);
  nodes_.at(b);
  terms_.push_back({a, true, b, {}, weight});
}

void RolloutTape::add_squared_distance(NodeId a, const LatentState& target, double weight) {
  if (nodes_.at(a).value.size() != target.size()) {
    throw std::invalid_argument("RolloutTape: target dimension mismatch");
  }
  terms_.push_back({a, false, 0, target, weight});
}

double RolloutTape::loss() const {
  double total = 0.0;
  for (const auto& t : terms_) {
    const auto& other = t.has_node_b ? nodes_[t.b].value : t.target;
    total += t.weight * (nodes_[t.a].value - other).squaredNorm();
  }
  return total;
}

RolloutTape::Gradient RolloutTape::backward() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) {
      throw NonFiniteError("RolloutTape::backward: node " + std::to_string(i) + " is non-finite");
    }
  }
  if (!std::isfinite(loss())) {
    throw NonFiniteError("RolloutTape::backward: non-finite loss");
  }

  const auto d = static_cast<Eigen::Index>(net_.latent_dim());
  const auto hdim = static_cast<Eigen::Index>(net_.hidden());
  std::vector<Eigen::VectorXd> adj(nodes_.size(), Eigen::VectorXd::Zero(d));
  for (const auto& t : terms_) {
    const auto& other = t.has_node_b ? nodes_[t.b].value : t.target;
    const Eigen::VectorXd g = 2.0 * t.weight * (nodes_[t.a].value - other);
    adj[t.a] += g;
    if (t.has_node_b) {
      adj[t.b] -= g;
    }
  }

  Gradient grad;
  grad.params = Eigen::VectorXd::Zero(net_.params().size());
  Eigen::Map<DynamicsNet::RowMatrix> gw1(grad.params.data() + net_.w1_offset(), hdim, d + 3);
  Eigen::Map<Eigen::VectorXd> gb1(grad.params.data() + net_.b1_offset(), hdim);
  Eigen::Map<DynamicsNet::RowMatrix> gw2(grad.params.data() + net_.w2_offset(), d, hdim);
  Eigen::Map<Eigen::VectorXd> gb2(grad.params.data() + net_.b2_offset(), d);
  const auto w1 = net_.w1();
  const auto w2 = net_.w2();

  grad.inputs.assign(nodes_.size(), Eigen::VectorXd());
  // Node ids are a topological order: parents are always created first.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& n = nodes_[i];
    const Eigen::VectorXd& g = adj[i];
    switch (n.kind) {
      case Kind::kDetachedLeaf:
        break;
      case Kind::kLeaf:
        grad.inputs[i] = g;
        break;
      case Kind::kStep: {
        gb2 += g;
        gw2.noalias() += g * n.hidden.transpose();
        const Eigen::VectorXd gpre =
            ((w2.transpose() * g).array() * (1.0 - n.hidden.array().square())).matrix();
        gb1 += gpre;
        gw1.noalias() += gpre * n.input.transpose();
        adj[n.parent] += g + w1.leftCols(d).transpose() * gpre;
        break;
      }
    }
  }
  if (!grad.params.allFinite()) {
    throw NonFiniteError("RolloutTape::backward: non-finite gradient");
  }
  return grad;
}

// ---------------------------------------------------------------------------

LatentWorldModel::LatentWorldModel(FeatureEncoder encoder, DynamicsNet net, std::string label)
    : encoder_(std::move(encoder)), decoder_(encoder_), net_(std::move(net)), label_(std::move(label)) {
  if (net_.latent_dim() != encoder_.latent_dim()) {
    throw std::invalid_argument("LatentWorldModel: encoder and network latent dims differ");
  }
}

Pose2 LatentWorldModel::step(const Pose2& state, const ActionIncrement& action, Rng& noise) const {
  return decode(net_step(encode(state, encoder_, noise), action, net_), decoder_);
}

}  // namespace gawm
