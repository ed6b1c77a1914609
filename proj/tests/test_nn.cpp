#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "trefree/checkpoint.hpp"
#include "trefree/errors.hpp"
#include "trefree/gaussian.hpp"
#include "trefree/nn.hpp"

using namespace trefree;
using namespace trefree::nn;
using Eigen::VectorXd;

namespace {

std::span<const double> sp(const VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

PolicyNet random_net(NetShape shape, std::uint64_t seed, double scale = 0.5) {
  PolicyNet net(shape);
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, scale);
  for (Eigen::Index i = 0; i < net.values().size(); ++i) net.values()[i] = n01(rng);
  return net;
}

VectorXd random_vec(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = n01(rng);
  return v;
}

// Straight-line evaluator over raw offsets into the flat parameter vector.
struct Reference {
  std::vector<double> mean;
  std::vector<double> log_std;
  double value = 0.0;
};

Reference reference_forward(const PolicyNet& net, const VectorXd& obs) {
  const NetShape s = net.shape();
  const double* p = net.values().data();
  const int o = s.obs_dim, h = s.hidden, a = s.act_dim;
  const double* sw = p;
  const double* sb = sw + h * o;
  const double* aw = sb + h;
  const double* ab = aw + h * h;
  const double* mw = ab + h;
  const double* mb = mw + a * h;
  const double* ls = mb + a;
  const double* cw = ls + a;
  const double* cb = cw + h * h;
  const double* vw = cb + h;
  const double* vb = vw + h;

  std::vector<double> z1(h), z2(h), z3(h);
  for (int i = 0; i < h; ++i) {
    double acc = sb[i];
    for (int j = 0; j < o; ++j) acc += sw[i * o + j] * obs[j];
    z1[i] = std::tanh(acc);
  }
  for (int i = 0; i < h; ++i) {
    double acc = ab[i];
    double acc_c = cb[i];
    for (int j = 0; j < h; ++j) {
      acc += aw[i * h + j] * z1[j];
      acc_c += cw[i * h + j] * z1[j];
    }
    z2[i] = std::tanh(acc);
    z3[i] = std::tanh(acc_c);
  }
  Reference r;
  for (int k = 0; k < a; ++k) {
    double acc = mb[k];
    for (int j = 0; j < h; ++j) acc += mw[k * h + j] * z2[j];
    r.mean.push_back(acc);
    r.log_std.push_back(ls[k]);
  }
  r.value = vb[0];
  for (int j = 0; j < h; ++j) r.value += vw[j] * z3[j];
  return r;
}

}  // namespace

TEST_CASE("layout") {
  const ParamLayout layout({3, 2, 5});
  CHECK(layout.size() == 5 * 3 + 5 + 25 + 5 + 10 + 2 + 2 + 25 + 5 + 5 + 1);
  CHECK(layout.info(Tensor::kMeanW).rows == 2);
  CHECK(layout.info(Tensor::kMeanW).cols == 5);
  CHECK(layout.info(Tensor::kValueB).offset + 1 == layout.size());
  CHECK_THROWS_AS(ParamLayout({0, 1, 4}), InvalidArgument);
}

TEST_CASE("forward: closed forms") {
  const PolicyNet zero({3, 2, 8});
  const VectorXd obs = random_vec(3, 1);
  const GaussianDist d = forward_policy(zero, sp(obs));
  CHECK(d.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK((d.std.array() == 1.0).all());
  CHECK(forward_value(zero, sp(obs)) == 0.0);

  PolicyNet net = random_net({3, 2, 8}, 2);
  net.tensor(Tensor::kSharedW).setZero();
  const VectorXd doubled = 2.0 * obs;
  CHECK(forward_policy(net, sp(obs)).mean == forward_policy(net, sp(doubled)).mean);
  CHECK(forward_value(net, sp(obs)) == forward_value(net, sp(doubled)));

  VectorXd bad = obs;
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(net, sp(bad)), InvalidArgument);
  CHECK_THROWS_AS(forward(net, sp(random_vec(4, 3))), InvalidArgument);
}

TEST_CASE("forward matches a straight-line evaluator") {
  for (int trial = 0; trial < 10; ++trial) {
    const NetShape shape{1 + trial % 4, 1 + trial % 3, 4 + 7 * trial};
    const PolicyNet net = random_net(shape, 100 + trial);
    const VectorXd obs = random_vec(shape.obs_dim, 200 + trial);
    const ForwardCache c = forward(net, sp(obs));
    const Reference r = reference_forward(net, obs);
    for (int k = 0; k < shape.act_dim; ++k) {
      CHECK(std::abs(c.mean[k] - r.mean[k]) <= 1e-12);
      CHECK(std::abs(c.dist().std[k] - std::exp(r.log_std[k])) <= 1e-12);
    }
    CHECK(std::abs(c.value - r.value) <= 1e-12);
    // Bitwise determinism within the process.
    const ForwardCache again = forward(net, sp(obs));
    CHECK(again.mean == c.mean);
    CHECK(again.value == c.value);
  }
}

TEST_CASE("shared layer couples policy and value") {
  const PolicyNet net = random_net({3, 2, 16}, 7);
  const VectorXd obs = random_vec(3, 8);
  PolicyNet moved = net;
  moved.tensor(Tensor::kSharedW)(2, 1) += 0.1;
  CHECK(forward_policy(moved, sp(obs)).mean != forward_policy(net, sp(obs)).mean);
  CHECK(forward_value(moved, sp(obs)) != forward_value(net, sp(obs)));
}

TEST_CASE("orthogonal initialization") {
  Rng rng(5);
  const PolicyNet net = PolicyNet::initialized({4, 2, 64}, rng);
  const Eigen::MatrixXd a = net.tensor(Tensor::kActorW);
  CHECK((a.transpose() * a - 2.0 * Eigen::MatrixXd::Identity(64, 64)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(net.segment(Tensor::kLogStd).cwiseAbs().maxCoeff() == 0.0);
  CHECK(net.segment(Tensor::kSharedB).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd m = net.tensor(Tensor::kMeanW);
  CHECK((m * m.transpose() - 1e-4 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(net.tensor(Tensor::kValueW).norm() - 1.0) < 1e-12);
}

TEST_CASE("gaussian log_prob") {
  GaussianDist d{VectorXd::Zero(1), VectorXd::Ones(1)};
  const VectorXd zero = VectorXd::Zero(1);
  CHECK(log_prob(d, sp(zero)) == doctest::Approx(-0.9189385332).epsilon(1e-10));

  GaussianDist e{random_vec(3, 1), (random_vec(3, 2).array().exp()).matrix()};
  CHECK(log_prob(e, sp(e.mean)) ==
        doctest::Approx(-(e.std.array().log() + kHalfLog2Pi).sum()).epsilon(1e-14));

  // Density integrates to one on a fine grid.
  GaussianDist g{VectorXd::Constant(1, 0.7), VectorXd::Constant(1, 0.35)};
  double integral = 0.0;
  const double step = 1e-3;
  for (double x = 0.7 - 12 * 0.35; x <= 0.7 + 12 * 0.35; x += step) {
    const VectorXd a = VectorXd::Constant(1, x);
    integral += std::exp(log_prob(g, sp(a))) * step;
  }
  CHECK(std::abs(integral - 1.0) <= 1e-4);

  GaussianDist bad{VectorXd::Zero(1), VectorXd::Zero(1)};
  CHECK_THROWS_AS(log_prob(bad, sp(zero)), DomainError);
  CHECK_THROWS_AS(entropy(bad), DomainError);
}

TEST_CASE("gaussian entropy, kl, sample") {
  GaussianDist a{random_vec(2, 3), (0.3 * random_vec(2, 4)).array().exp().matrix()};
  CHECK(kl(a, a) == 0.0);
  CHECK(entropy(a) == doctest::Approx((a.std.array().log() + 0.5 * (1.0 + std::log(2 * std::numbers::pi))).sum()));

  GaussianDist p{VectorXd::Zero(1), VectorXd::Ones(1)};
  GaussianDist q{VectorXd::Ones(1), VectorXd::Ones(1)};
  CHECK(kl(p, q) == doctest::Approx(0.5).epsilon(1e-15));

  GaussianDist s{VectorXd::Constant(1, -0.4), VectorXd::Constant(1, 1.7)};
  Rng rng(9);
  constexpr int n = 1000000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample(s, rng)[0];
  CHECK(std::abs(sum / n - (-0.4)) <= 4.0 * 1.7 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("gaussian gradients against finite differences") {
  const VectorXd mu = random_vec(3, 10);
  const VectorXd ls = 0.3 * random_vec(3, 11);
  const VectorXd act = random_vec(3, 12);
  const GaussianDist fixed{random_vec(3, 13), (0.2 * random_vec(3, 14)).array().exp().matrix()};
  const auto dist = [](const VectorXd& m, const VectorXd& l) {
    return GaussianDist{m, l.array().exp().matrix()};
  };
  const DistGrad lp = log_prob_grad(dist(mu, ls), sp(act));
  const DistGrad en = entropy_grad(dist(mu, ls));
  const DistGrad kg = kl_grad_second(fixed, dist(mu, ls));
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    VectorXd mu_p = mu, mu_m = mu, ls_p = ls, ls_m = ls;
    mu_p[i] += h;
    mu_m[i] -= h;
    ls_p[i] += h;
    ls_m[i] -= h;
    CHECK(lp.d_mean[i] == doctest::Approx((log_prob(dist(mu_p, ls), sp(act)) - log_prob(dist(mu_m, ls), sp(act))) / (2 * h)).epsilon(1e-7));
    CHECK(lp.d_log_std[i] == doctest::Approx((log_prob(dist(mu, ls_p), sp(act)) - log_prob(dist(mu, ls_m), sp(act))) / (2 * h)).epsilon(1e-7));
    CHECK(en.d_log_std[i] == doctest::Approx(1.0));
    CHECK(kg.d_mean[i] == doctest::Approx((kl(fixed, dist(mu_p, ls)) - kl(fixed, dist(mu_m, ls))) / (2 * h)).epsilon(1e-7));
    CHECK(kg.d_log_std[i] == doctest::Approx((kl(fixed, dist(mu, ls_p)) - kl(fixed, dist(mu, ls_m))) / (2 * h)).epsilon(1e-7));
  }
}

TEST_CASE("backward: closed forms") {
  const PolicyNet zero({3, 2, 8});
  const VectorXd obs = random_vec(3, 1);
  HeadGrad head{VectorXd::Zero(2), VectorXd::Zero(2), 1.0};
  const GradBuffer g = backward(zero, forward(zero, sp(obs)), head);
  CHECK(g.segment(Tensor::kValueB)[0] == 1.0);
  CHECK(g.values().cwiseAbs().sum() == 1.0);

  // KL(stop_grad(d) || d) is stationary at identical parameters.
  const PolicyNet net = random_net({3, 2, 8}, 4);
  const ForwardCache c = forward(net, sp(obs));
  const DistGrad k = kl_grad_second(c.dist(), c.dist());
  CHECK(k.d_mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(k.d_log_std.cwiseAbs().maxCoeff() == 0.0);
  const GradBuffer gk = backward(net, c, {k.d_mean, k.d_log_std, 0.0});
  CHECK(gk.values().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward and jvp against finite differences") {
  const NetShape shape{3, 2, 6};
  const PolicyNet net = random_net(shape, 21);
  const VectorXd obs = random_vec(3, 22);
  const VectorXd act = random_vec(2, 23);
  // loss = log_prob(action) + 0.7 * value
  const auto loss = [&](const PolicyNet& n) {
    const ForwardCache c = forward(n, sp(obs));
    return log_prob(c.dist(), sp(act)) + 0.7 * c.value;
  };
  const ForwardCache c = forward(net, sp(obs));
  const DistGrad lp = log_prob_grad(c.dist(), sp(act));
  const GradBuffer g = backward(net, c, {lp.d_mean, lp.d_log_std, 0.7});

  const double h = 1e-5;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.values().size(); ++i) {
    PolicyNet up = net, dn = net;
    up.values()[i] += h;
    dn.values()[i] -= h;
    const double fd = (loss(up) - loss(dn)) / (2 * h);
    worst = std::max(worst, std::abs(fd - g.values()[i]) / std::max({std::abs(fd), std::abs(g.values()[i]), 1e-4}));
  }
  CHECK(worst <= 1e-5);

  ParamVector dir(shape);
  dir.values() = random_vec(static_cast<int>(net.size()), 24);
  const HeadGrad j = jvp(net, c, dir);
  PolicyNet up = net, dn = net;
  up.values() += h * dir.values();
  dn.values() -= h * dir.values();
  const ForwardCache cu = forward(up, sp(obs)), cd = forward(dn, sp(obs));
  CHECK(((cu.mean - cd.mean) / (2 * h) - j.d_mean).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(((cu.log_std - cd.log_std) / (2 * h) - j.d_log_std).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs((cu.value - cd.value) / (2 * h) - j.d_value) < 1e-7);
}

TEST_CASE("non-finite intermediate names the node") {
  PolicyNet net = random_net({2, 1, 4}, 30);
  net.tensor(Tensor::kMeanW)(0, 1) = std::numeric_limits<double>::infinity();
  const VectorXd obs = random_vec(2, 31);
  try {
    forward(net, sp(obs));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("mean") != std::string::npos);
  }
}

TEST_CASE("adam") {
  const NetShape shape{2, 1, 4};
  PolicyNet net = random_net(shape, 40);
  const PolicyNet start = net;
  AdamState state(net.size());

  GradBuffer zero(shape);
  adam_step(net, zero, state, 1e-3);
  CHECK(net.values() == start.values());

  GradBuffer g(shape);
  g.values() = random_vec(static_cast<int>(net.size()), 41);
  AdamState fresh(net.size());
  PolicyNet a = start;
  adam_step(a, g, fresh, 0.0);
  CHECK(a.values() == start.values());

  // First step: m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
  AdamState first(net.size());
  PolicyNet b = start;
  const double lr = 3e-4;
  adam_step(b, g, first, lr);
  for (Eigen::Index i = 0; i < g.values().size(); ++i) {
    const double gi = g.values()[i];
    const double expected = start.values()[i] - lr * gi / (std::abs(gi) + 1e-8);
    CHECK(std::abs(b.values()[i] - expected) <= 1e-15);
  }
  CHECK(first.step == 1);

  GradBuffer bad = g;
  bad.values()[3] = std::numeric_limits<double>::quiet_NaN();
  PolicyNet c = start;
  AdamState st(net.size());
  CHECK_THROWS_AS(adam_step(c, bad, st, lr), NumericError);
  CHECK(c.values() == start.values());
  CHECK(st.step == 0);

  // The clamp bounds log_std after every update.
  PolicyNet d = start;
  d.segment(Tensor::kLogStd)[0] = 1.99999;
  GradBuffer push(shape);
  push.segment(Tensor::kLogStd)[0] = -1.0;
  AdamState sp_state(net.size());
  adam_step(d, push, sp_state, 0.5);
  CHECK(d.segment(Tensor::kLogStd)[0] == kLogStdMax);
}

TEST_CASE("checkpoint round trips") {
  const PolicyNet net = random_net({4, 2, 9}, 50);
  const auto dir = std::filesystem::temp_directory_path() / "trefree_test_ckpt";
  std::filesystem::create_directories(dir);
  save_binary(net, dir / "net.ckpt");
  const PolicyNet back = load_binary(dir / "net.ckpt");
  CHECK(back.shape() == net.shape());
  CHECK(std::memcmp(back.values().data(), net.values().data(), net.size() * sizeof(double)) == 0);

  const PolicyNet from_json = net_from_json(nlohmann::json::parse(to_json(net).dump()));
  CHECK(from_json.values() == net.values());

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_binary(dir / "bad.ckpt"), InvalidArgument);
  CHECK_THROWS_AS(load_binary(dir / "missing.ckpt"), InvalidArgument);
  std::filesystem::remove_all(dir);
}
