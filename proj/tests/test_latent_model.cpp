#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gawm/latent_model.hpp"

using namespace gawm;

namespace {

constexpr double kPi = std::numbers::pi;

Pose2 random_pose(Rng& rng) {
  return Pose2(kPi * (2.0 * rng.uniform() - 1.0), 5.0 * (2.0 * rng.uniform() - 1.0),
               5.0 * (2.0 * rng.uniform() - 1.0));
}

ActionIncrement random_action(Rng& rng, double scale = 0.5) {
  return {scale * rng.normal(), scale * rng.normal(), 0.3 * rng.normal()};
}

// Builds a loss on a fresh tape; used for both the analytic gradient and the
// finite-difference oracle so the two share only the forward definition.
template <typename Record>
double tape_loss(const DynamicsNet& net, Record&& record) {
  RolloutTape tape(net);
  record(tape);
  return tape.loss();
}

template <typename Record>
double max_fd_relative_error(const DynamicsNet& net, Record&& record, int coords, std::uint64_t seed) {
  RolloutTape tape(net);
  record(tape);
  const Eigen::VectorXd analytic = tape.backward().params;
  Rng rng(seed);
  double worst = 0.0;
  const double h = 1e-5;
  for (int c = 0; c < coords; ++c) {
    const auto i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(net.params().size())));
    DynamicsNet plus = net, minus = net;
    plus.params()(i) += h;
    minus.params()(i) -= h;
    const double fd = (tape_loss(plus, record) - tape_loss(minus, record)) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic(i)), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic(i)) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("encoder sampling is full rank and seeded") {
  const auto enc = FeatureEncoder::sample(16, 3);
  CHECK(enc.latent_dim() == 16);
  CHECK(enc.condition_number() < FeatureEncoder::kMaxCondition);
  CHECK(FeatureEncoder::sample(16, 3).projection() == enc.projection());
  CHECK_FALSE(FeatureEncoder::sample(16, 4).projection() == enc.projection());
  CHECK_THROWS_AS(FeatureEncoder::sample(3, 1), std::invalid_argument);

  Eigen::MatrixXd rank_deficient = Eigen::MatrixXd::Zero(6, 4);
  rank_deficient.topLeftCorner<3, 3>().setIdentity();
  CHECK_THROWS_AS(FeatureEncoder(rank_deficient, 0.0), std::invalid_argument);
}

TEST_CASE("decoder is a left inverse") {
  const auto enc = FeatureEncoder::sample(16, 11);
  const FeatureDecoder dec(enc);
  CHECK((dec.pinv() * enc.projection() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("encode") {
  const auto enc = FeatureEncoder::sample(16, 5);
  Rng rng(0);
  const LatentState z = encode(Pose2{}, enc, rng);
  CHECK((z - enc.projection() * Eigen::Vector4d(0, 0, 1, 0)).norm() == 0.0);

  const auto noisy = FeatureEncoder::sample(16, 5, 0.1);
  Rng a(42), b(42);
  const LatentState za = encode(Pose2(0.3, 1, 2), noisy, a);
  const LatentState zb = encode(Pose2(0.3, 1, 2), noisy, b);
  CHECK(za == zb);
  CHECK((za - encode(Pose2(0.3, 1, 2), noisy)).norm() > 0.0);
}

TEST_CASE("encode-decode round trip on 1000 random poses") {
  const auto enc = FeatureEncoder::sample(16, 6);
  const FeatureDecoder dec(enc);
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose2 p = random_pose(rng);
    const Pose2 q = decode(encode(p, enc), dec);
    worst = std::max({worst, (p.position() - q.position()).norm(),
                      std::abs(wrap_angle(p.theta() - q.theta()))});
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("decode of a hand-built latent") {
  const auto enc = FeatureEncoder::sample(8, 2);
  const FeatureDecoder dec(enc);
  const Pose2 p = decode(enc.projection() * Eigen::Vector4d(1, 2, 0, 1), dec);
  CHECK(p.x() == doctest::Approx(1.0));
  CHECK(p.y() == doctest::Approx(2.0));
  CHECK(p.theta() == doctest::Approx(kPi / 2));
  CHECK_THROWS_AS(decode(enc.projection() * Eigen::Vector4d(1, 2, 0, 0), dec), DegenerateHeadingError);
}

TEST_CASE("network parameter count") {
  CHECK(DynamicsNet::parameter_count(16, 64) == 19 * 64 + 64 + 64 * 16 + 16);
  CHECK(DynamicsNet(16, 64).params().size() == 19 * 64 + 64 + 64 * 16 + 16);
  CHECK_THROWS_AS(DynamicsNet(4, 2, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("zero network is the identity") {
  const DynamicsNet net(16, 64);
  Rng rng(3);
  const LatentState z = Eigen::VectorXd::Random(16);
  CHECK(net_step(z, random_action(rng), net) == z);
  const ActionSegment u({random_action(rng), random_action(rng), random_action(rng)});
  CHECK(latent_rollout_endpoint(z, u, net) == z);
}

TEST_CASE("tiny network evaluated by hand") {
  // d = 1, H = 1: W1 = [w_z w_dx w_dy w_dth], b1, W2 = [v], b2.
  Eigen::VectorXd p(DynamicsNet::parameter_count(1, 1));
  p << 0.5, 1.0, -2.0, 0.25, 0.1, 3.0, -0.2;
  const DynamicsNet net(1, 1, p);
  LatentState z(1);
  z << 0.4;
  const ActionIncrement a{0.3, 0.1, -0.8};
  const double pre = 0.5 * 0.4 + 1.0 * 0.3 - 2.0 * 0.1 + 0.25 * -0.8 + 0.1;
  const double expected = 0.4 + 3.0 * std::tanh(pre) - 0.2;
  CHECK(net_step(z, a, net)(0) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("network output stays finite on large inputs") {
  const auto net = DynamicsNet::random(16, 64, 9);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    LatentState z(16);
    for (Eigen::Index j = 0; j < 16; ++j) z(j) = 20.0 * rng.uniform() - 10.0;
    const ActionIncrement a{20.0 * rng.uniform() - 10.0, 20.0 * rng.uniform() - 10.0,
                            2.0 * rng.uniform() - 1.0};
    CHECK(net_step(z, a, net).allFinite());
  }
}

TEST_CASE("rollout endpoint folds net_step") {
  const auto net = DynamicsNet::random(8, 16, 10);
  Rng rng(5);
  const LatentState z0 = Eigen::VectorXd::Random(8);
  CHECK(latent_rollout_endpoint(z0, ActionSegment{}, net) == z0);
  const ActionIncrement a1 = random_action(rng), a2 = random_action(rng);
  CHECK(latent_rollout_endpoint(z0, ActionSegment({a1, a2}), net) ==
        net_step(net_step(z0, a1, net), a2, net));
}

TEST_CASE("tape forward matches direct evaluation") {
  const auto net = DynamicsNet::random(8, 16, 12);
  Rng rng(6);
  const LatentState z0 = Eigen::VectorXd::Random(8);
  const ActionSegment u({random_action(rng), random_action(rng), random_action(rng)});
  RolloutTape tape(net);
  const auto end = tape.rollout(tape.input(z0), u);
  CHECK(tape.value(end) == latent_rollout_endpoint(z0, u, net));
}

TEST_CASE("gradient of the squared distance to a constant") {
  const DynamicsNet net(6, 4);
  RolloutTape tape(net);
  const LatentState z = Eigen::VectorXd::Random(6);
  const LatentState c = Eigen::VectorXd::Random(6);
  const auto node = tape.input(z);
  tape.add_squared_distance(node, c);
  const auto grad = tape.backward();
  CHECK((grad.inputs[node] - 2.0 * (z - c)).norm() < 1e-15);
  CHECK(grad.params.norm() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  const auto net = DynamicsNet::random(16, 64, 13, 0.5);
  Rng rng(7);
  const LatentState z0 = Eigen::VectorXd::Random(16);
  const LatentState target = Eigen::VectorXd::Random(16);
  std::vector<ActionIncrement> incs;
  for (int i = 0; i < 4; ++i) incs.push_back(random_action(rng));
  const ActionSegment u(incs);
  const ActionSegment u_inv = make_inverse_segment(u);  // depth 8

  SUBCASE("one step to a constant") {
    auto rec = [&](RolloutTape& t) { t.add_squared_distance(t.step(t.input(z0, true), incs[0]), target); };
    CHECK(max_fd_relative_error(net, rec, 100, 1) <= 1e-4);
  }
  SUBCASE("depth-8 rollout back to its start") {
    auto rec = [&](RolloutTape& t) {
      const auto s = t.input(z0, true);
      t.add_squared_distance(t.rollout(s, u_inv), s);
    };
    CHECK(max_fd_relative_error(net, rec, 100, 2) <= 1e-4);
  }
  SUBCASE("two rollouts compared with each other") {
    const ActionSegment u_b = make_compatibility_segment(u, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    auto rec = [&](RolloutTape& t) {
      const auto s = t.input(z0, true);
      t.add_squared_distance(t.rollout(s, u), t.rollout(s, u_b), 0.7);
    };
    CHECK(max_fd_relative_error(net, rec, 100, 3) <= 1e-4);
  }
}

TEST_CASE("input gradient matches finite differences") {
  const auto net = DynamicsNet::random(6, 8, 14);
  Rng rng(8);
  const LatentState z0 = Eigen::VectorXd::Random(6);
  const ActionSegment u({random_action(rng), random_action(rng)});
  auto loss_at = [&](const LatentState& z) {
    return latent_rollout_endpoint(z, u, net).squaredNorm();
  };
  RolloutTape tape(net);
  const auto leaf = tape.input(z0);
  tape.add_squared_distance(tape.rollout(leaf, u), LatentState::Zero(6));
  const auto grad = tape.backward().inputs[leaf];
  for (Eigen::Index i = 0; i < 6; ++i) {
    LatentState p = z0, m = z0;
    p(i) += 1e-6;
    m(i) -= 1e-6;
    CHECK(grad(i) == doctest::Approx((loss_at(p) - loss_at(m)) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("detach truncates gradient flow") {
  const auto net = DynamicsNet::random(8, 16, 15);
  Rng rng(9);
  const LatentState z0 = Eigen::VectorXd::Random(8);
  const ActionIncrement upstream = random_action(rng);
  const ActionSegment u({random_action(rng), random_action(rng)});

  // Upstream step recorded, then cut.
  RolloutTape cut(net);
  const auto leaf = cut.input(z0);
  const auto z_t = cut.detach(cut.step(leaf, upstream));
  cut.add_squared_distance(cut.rollout(z_t, u), z_t);
  const auto g_cut = cut.backward();

  // Same loss with the upstream step never recorded.
  RolloutTape fresh(net);
  const auto z_t2 = fresh.input(net_step(z0, upstream, net), true);
  fresh.add_squared_distance(fresh.rollout(z_t2, u), z_t2);
  const auto g_fresh = fresh.backward();

  CHECK(g_cut.params == g_fresh.params);
  CHECK(g_cut.inputs[leaf].norm() == 0.0);

  // A detached input leaf reports no gradient.
  RolloutTape t(net);
  const auto d = t.input(z0, true);
  t.add_squared_distance(t.step(d, upstream), LatentState::Zero(8));
  CHECK(t.backward().inputs[d].size() == 0);
}

TEST_CASE("backward rejects non-finite graphs") {
  const auto net = DynamicsNet::random(4, 4, 16);
  RolloutTape tape(net);
  LatentState z = LatentState::Zero(4);
  z(1) = std::numeric_limits<double>::infinity();
  tape.add_squared_distance(tape.step(tape.input(z), {}), LatentState::Zero(4));
  CHECK_THROWS_AS(tape.backward(), NonFiniteError);
}

TEST_CASE("latent world model wraps encode, step and decode") {
  const auto enc = FeatureEncoder::sample(16, 17);
  const LatentWorldModel identity(enc, DynamicsNet(16, 32));
  Rng rng(10);
  const Pose2 s(0.4, 1.0, -2.0);
  const Pose2 out = identity.step(s, {0.3, 0.0, 0.1}, rng);
  CHECK((out.position() - s.position()).norm() < 1e-9);
  CHECK(std::abs(wrap_angle(out.theta() - s.theta())) < 1e-9);
  CHECK_THROWS_AS(LatentWorldModel(enc, DynamicsNet(8, 4)), std::invalid_argument);
}
