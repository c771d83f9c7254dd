#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "aslip/ppo.hpp"

using namespace aslip;
using namespace aslip::rl;

namespace {

const double kLog2Pi = std::log(2.0 * M_PI);

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

Mlp random_net(std::vector<int> sizes, std::uint64_t seed, double gain = 1.0) {
  Mlp net(std::move(sizes));
  std::mt19937_64 rng(seed);
  net.init(rng, gain);
  VectorXd p = net.parameters();
  std::normal_distribution<double> N(0.0, 0.1);
  for (int i = 0; i < p.size(); ++i) p(i) += N(rng);  // nonzero biases too
  net.set_parameters(p);
  return net;
}

MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  MatrixXd m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = N(rng);
  return m;
}

// Central differences of f over every parameter of `net`.
template <class F>
VectorXd fd_gradient(Mlp net, F f, double h = 1e-6) {
  VectorXd p = net.parameters(), g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    VectorXd q = p;
    q(i) += h;
    net.set_parameters(q);
    const double up = f(net);
    q(i) = p(i) - h;
    net.set_parameters(q);
    g(i) = (up - f(net)) / (2 * h);
  }
  return g;
}

PpoConfig bandit_config() {
  PpoConfig cfg;
  cfg.sample_size = 1024;
  cfg.learning_rate = 1e-3;
  return cfg;
}

EnvFactory bandit_factory() {
  return [](int) { return std::make_unique<QuadraticBandit>(); };
}

}  // namespace

TEST_CASE("policy density examples") {
  Mlp net({3, 8, 2});  // zero weights
  CHECK(net.forward(VectorXd(VectorXd::Random(3))).isZero(0.0));

  const VectorXd mean = VectorXd::Zero(4), log_std = VectorXd::Constant(4, -2.0);
  CHECK(gaussian_log_prob(mean, log_std, mean) == doctest::Approx(8.0 - 2.0 * kLog2Pi).epsilon(1e-14));
  // one standard deviation away in one coordinate costs exactly one half
  VectorXd a = mean;
  a(2) = std::exp(-2.0);
  CHECK(gaussian_log_prob(mean, log_std, a) == doctest::Approx(7.5 - 2.0 * kLog2Pi).epsilon(1e-14));
  CHECK_THROWS_AS(gaussian_log_prob(mean, log_std, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("log-probability gradient matches finite differences") {
  const VectorXd mean = VectorXd::Random(5), log_std = VectorXd::LinSpaced(5, -2.0, 0.5), a = VectorXd::Random(5);
  const VectorXd g = gaussian_log_prob_grad(mean, log_std, a);
  for (int i = 0; i < 5; ++i) {
    VectorXd up = mean, dn = mean;
    up(i) += 1e-6;
    dn(i) -= 1e-6;
    const double fd = (gaussian_log_prob(up, log_std, a) - gaussian_log_prob(dn, log_std, a)) / 2e-6;
    CHECK(rel_err(g(i), fd) < 1e-6);
  }
}

TEST_CASE("sampled actions have the configured spread") {
  std::mt19937_64 rng(4);
  const VectorXd mean = VectorXd::Constant(2, 0.3), log_std = VectorXd::Constant(2, -2.0);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const SampledAction s = sample_action(mean, log_std, rng);
    CHECK(s.log_prob == doctest::Approx(gaussian_log_prob(mean, log_std, s.action)).epsilon(1e-15));
    sum += s.action(0);
    sq += (s.action(0) - 0.3) * (s.action(0) - 0.3);
  }
  CHECK(std::abs(sum / n - 0.3) < 5 * std::exp(-2.0) / std::sqrt(n));
  CHECK(std::sqrt(sq / n) == doctest::Approx(std::exp(-2.0)).epsilon(0.03));
}

TEST_CASE("network backward pass matches finite differences") {
  const Mlp net = random_net({4, 7, 5, 3}, 11);
  const MatrixXd x = random_matrix(4, 6, 12), w = random_matrix(3, 6, 13);
  Mlp::Tape tape;
  const MatrixXd y = net.forward(x, tape);
  // batched and single-sample paths agree
  for (int j = 0; j < 6; ++j) CHECK((net.forward(VectorXd(x.col(j))) - y.col(j)).norm() < 1e-13);

  const VectorXd g = net.backward(tape, w);
  const VectorXd fd = fd_gradient(net, [&](const Mlp& n) { return n.forward(x).cwiseProduct(w).sum(); });
  REQUIRE(g.size() == net.parameter_count());
  for (int i = 0; i < g.size(); ++i) CHECK(rel_err(g(i), fd(i)) < 1e-5);
}

TEST_CASE("parameter round trip and shape checks") {
  Mlp net = random_net({3, 4, 2}, 5);
  CHECK(net.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2);
  const VectorXd p = net.parameters();
  Mlp other({3, 4, 2});
  other.set_parameters(p);
  CHECK(other.parameters() == p);
  CHECK_THROWS_AS(other.set_parameters(VectorXd::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(net.forward(VectorXd(VectorXd::Zero(2))), std::invalid_argument);
  CHECK_THROWS_AS(Mlp({3}), std::invalid_argument);
}

TEST_CASE("advantage estimation examples") {
  const std::vector<double> r{1, 1, 1}, v{0.5, 0.4, 0.3}, nv{0.4, 0.3, 0.0};
  const std::vector<bool> term{false, false, true}, end{false, false, true};

  SUBCASE("lambda 0 gives one-step TD errors") {
    const GaeResult g = compute_gae(r, v, nv, term, end, 0.99, 0.0);
    CHECK(g.advantages[0] == doctest::Approx(1 + 0.99 * 0.4 - 0.5).epsilon(1e-15));
    CHECK(g.advantages[1] == doctest::Approx(1 + 0.99 * 0.3 - 0.4).epsilon(1e-15));
    CHECK(g.advantages[2] == doctest::Approx(1 - 0.3).epsilon(1e-15));
  }
  SUBCASE("lambda 1 with zero values gives the discounted reward-to-go") {
    const std::vector<double> z(3, 0.0);
    const GaeResult g = compute_gae(r, z, z, term, end, 0.99, 1.0);
    CHECK(g.returns[0] == doctest::Approx(2.9701).epsilon(1e-14));
    CHECK(g.returns[1] == doctest::Approx(1.99).epsilon(1e-14));
    CHECK(g.returns[2] == 1.0);
  }
  SUBCASE("lambda 0.95 with zero values") {
    const std::vector<double> z(3, 0.0);
    const GaeResult g = compute_gae(r, z, z, term, end, 0.99, 0.95);
    CHECK(g.returns[0] == doctest::Approx(1 + 0.9405 * (1 + 0.9405)).epsilon(1e-14));
  }
  SUBCASE("lambda 1 telescopes to the Monte Carlo return whatever the values") {
    const GaeResult g = compute_gae(r, v, nv, term, end, 0.99, 1.0);
    CHECK(g.returns[0] == doctest::Approx(2.9701).epsilon(1e-14));
  }
  SUBCASE("a truncated end bootstraps and stops the recursion") {
    const std::vector<double> r4{1, 1, 1, 1}, v4{0, 0, 0, 0}, nv4{0, 2.0, 0, 0};
    const GaeResult g =
        compute_gae(r4, v4, nv4, {false, false, false, true}, {false, true, false, true}, 0.5, 1.0);
    CHECK(g.returns[1] == doctest::Approx(1 + 0.5 * 2.0).epsilon(1e-15));
    CHECK(g.returns[0] == doctest::Approx(1 + 0.5 * 2.0).epsilon(1e-15));
    CHECK(g.returns[2] == doctest::Approx(1.5).epsilon(1e-15));
  }
  CHECK_THROWS_AS(compute_gae(r, v, nv, term, {false}, 0.99, 0.95), std::invalid_argument);
}

TEST_CASE("clipped surrogate examples and bound") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(clipped_surrogate(1.0, -0.7, 0.2) == -0.7);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);  // pessimistic side stays unclipped
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> R(0.0, 5.0), A(-3.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    const double ratio = R(rng), adv = A(rng);
    CHECK(clipped_surrogate(ratio, adv, 0.2) <= 1.2 * std::abs(adv) + 1e-15);
  }
}

TEST_CASE("advantage normalization") {
  RolloutBatch b;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(3.0, 7.0);
  for (int i = 0; i < 999; ++i) b.advantages.push_back(N(rng));
  b.normalize_advantages();
  const double n = b.advantages.size();
  const double mean = std::accumulate(b.advantages.begin(), b.advantages.end(), 0.0) / n;
  double var = 0;
  for (double a : b.advantages) var += (a - mean) * (a - mean);
  CHECK(std::abs(mean) <= 1e-9);
  CHECK(std::abs(std::sqrt(var / n) - 1.0) <= 1e-6);
}

TEST_CASE("running normalizer merges batches consistently") {
  const MatrixXd data = random_matrix(3, 300, 21) * 4.0;
  RunningNorm whole(3), parts(3);
  whole.update(data);
  double last = 0;
  for (int start = 0; start < 300; start += 37) {
    parts.update(data.middleCols(start, std::min(37, 300 - start)));
    CHECK(parts.count() > last);
    last = parts.count();
  }
  CHECK(parts.count() == 300);
  CHECK((parts.mean() - whole.mean()).norm() < 1e-12);
  CHECK((parts.variance() - whole.variance()).norm() < 1e-10);
  const VectorXd mean = data.rowwise().mean();
  CHECK((whole.mean() - mean).norm() < 1e-12);
  CHECK((whole.variance() - (data.colwise() - mean).rowwise().squaredNorm() / 300.0).norm() < 1e-10);

  const VectorXd z = whole.normalize(VectorXd(data.col(0)));
  for (int i = 0; i < 3; ++i)
    CHECK(z(i) == doctest::Approx((data(i, 0) - mean(i)) / std::sqrt(whole.variance()(i))).epsilon(1e-7));
  const VectorXd far = whole.normalize(VectorXd(VectorXd::Constant(3, 1e6)));
  CHECK(far.maxCoeff() == RunningNorm::kClip);
}

TEST_CASE("PPO loss gradients match finite differences") {
  const int od = 5, ad = 3, n = 40;
  PolicyNet policy{random_net({od, 16, 16, ad}, 31, 0.5), VectorXd::Constant(ad, -0.5)};
  const Mlp value = random_net({od, 16, 16, 1}, 32);

  RolloutBatch b;
  b.observations = random_matrix(od, n, 33);
  const MatrixXd mu = policy.mean.forward(b.observations);
  b.actions = mu + 0.3 * random_matrix(ad, n, 34);
  std::mt19937_64 rng(35);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int j = 0; j < n; ++j) {
    // old log-probs near the current ones so most ratios lie inside the clip band
    b.log_probs.push_back(gaussian_log_prob(mu.col(j), policy.log_std, b.actions.col(j)) + 0.1 * N(rng));
    b.advantages.push_back(N(rng));
    b.returns.push_back(N(rng));
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // drop samples sitting within a whisker of a clip boundary
  std::vector<int> safe;
  for (int j : idx) {
    const double ratio =
        std::exp(gaussian_log_prob(mu.col(j), policy.log_std, b.actions.col(j)) - b.log_probs[j]);
    if (std::abs(std::abs(ratio - 1.0) - 0.2) > 1e-3) safe.push_back(j);
  }
  REQUIRE(safe.size() > 30);

  VectorXd gp, gv;
  const LossStats s = ppo_loss(policy, value, b, safe, 0.2, &gp, &gv);
  CHECK(s.clip_fraction > 0.0);  // both branches exercised
  CHECK(s.clip_fraction < 1.0);

  const VectorXd fdp = fd_gradient(policy.mean, [&](const Mlp& m) {
    return ppo_loss(PolicyNet{m, policy.log_std}, value, b, safe, 0.2, nullptr, nullptr).policy_loss;
  });
  const VectorXd fdv = fd_gradient(value, [&](const Mlp& m) {
    return ppo_loss(policy, m, b, safe, 0.2, nullptr, nullptr).value_loss;
  });
  CHECK((gp - fdp).norm() <= 1e-5 * std::max(1.0, fdp.norm()));
  CHECK((gv - fdv).norm() <= 1e-5 * std::max(1.0, fdv.norm()));
}

TEST_CASE("Adam first step moves each parameter by the learning rate") {
  Adam opt(3, 0.01, 1e-12);
  VectorXd p(3);
  p << 1.0, -2.0, 0.5;
  opt.step(p, VectorXd((VectorXd(3) << 3.0, -0.2, 0.0).finished()));
  CHECK(p(0) == doctest::Approx(0.99).epsilon(1e-9));
  CHECK(p(1) == doctest::Approx(-1.99).epsilon(1e-9));
  CHECK(p(2) == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("configuration validation") {
  PpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.minibatch = cfg.sample_size + 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.gae_lambda = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("PPO learns the quadratic bandit") {
  const PpoConfig cfg = bandit_config();
  TrainOptions opts;
  opts.total_steps = 50LL * cfg.sample_size;
  opts.seed = 3;
  const TrainResult res = train(bandit_factory(), cfg, opts);
  REQUIRE(res.curve.size() == 50);
  const double optimum = 1.0 - std::exp(2.0 * cfg.log_std);
  CHECK(res.curve.back().mean_step_reward >= 0.95 * optimum);

  // the curve, smoothed over five updates, never drops by more than sampling noise
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 5 <= res.curve.size(); i += 5) {
    double s = 0;
    for (std::size_t k = i; k < i + 5; ++k) s += res.curve[k].mean_step_reward;
    smooth.push_back(s / 5);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] >= smooth[i - 1] - 0.01);

  // the mean action tracks the observation
  for (double x : {-0.8, -0.2, 0.5, 0.9}) CHECK(res.agent.act({x})(0) == doctest::Approx(x).epsilon(0.1));
}

TEST_CASE("training is deterministic for a seed and worker count") {
  PpoConfig cfg = bandit_config();
  cfg.sample_size = 256;
  TrainOptions opts;
  opts.total_steps = 5 * 256;
  opts.workers = 3;
  opts.seed = 77;
  const TrainResult a = train(bandit_factory(), cfg, opts), b = train(bandit_factory(), cfg, opts);
  CHECK(a.agent.policy.mean.parameters() == b.agent.policy.mean.parameters());
  CHECK(a.agent.value.parameters() == b.agent.value.parameters());
  std::ostringstream ca, cb;
  write_curve_csv(a.curve, ca);
  write_curve_csv(b.curve, cb);
  CHECK(ca.str() == cb.str());

  opts.seed = 78;
  const TrainResult c = train(bandit_factory(), cfg, opts);
  CHECK(c.agent.policy.mean.parameters() != a.agent.policy.mean.parameters());
}

TEST_CASE("checkpoint round trip") {
  PpoConfig cfg = bandit_config();
  cfg.sample_size = 128;
  TrainOptions opts;
  opts.total_steps = 256;
  const TrainResult res = train(bandit_factory(), cfg, opts);

  const auto path = std::filesystem::temp_directory_path() / "aslip_ppo_checkpoint_test.json";
  save_checkpoint(res.agent, cfg, path.string());
  PpoConfig back;
  const Agent a = load_checkpoint(path.string(), &back);
  CHECK(a.policy.mean.parameters() == res.agent.policy.mean.parameters());
  CHECK(a.value.parameters() == res.agent.value.parameters());
  CHECK(a.policy.log_std == res.agent.policy.log_std);
  CHECK(a.norm.count() == res.agent.norm.count());
  CHECK(a.norm.mean() == res.agent.norm.mean());
  CHECK(a.norm.m2() == res.agent.norm.m2());
  CHECK(a.steps == res.agent.steps);
  CHECK(back.sample_size == 128);
  CHECK(back.learning_rate == cfg.learning_rate);
  for (double x : {-0.5, 0.25}) CHECK(a.act({x}) == res.agent.act({x}));

  // resuming continues the step count
  opts.total_steps = 128;
  const TrainResult more = train(bandit_factory(), cfg, opts, &a);
  CHECK(more.agent.steps == a.steps + 128);

  {
    std::ofstream out(path);
    out << "{\"format_version\": 99}";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointError);
  {
    std::ofstream out(path);
    out << "{\"format_version\": 1, \"policy\": ";
  }
  CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path.string()), CheckpointError);
}

TEST_CASE("on-policy surrogate is the mean advantage with the plain policy gradient") {
  PolicyNet policy{random_net({1, 3, 1}, 41), VectorXd::Constant(1, -1.0)};
  REQUIRE(policy.mean.parameter_count() == 10);
  const Mlp value = random_net({1, 3, 1}, 42);
  RolloutBatch b;
  b.observations = random_matrix(1, 12, 43);
  const MatrixXd mu = policy.mean.forward(b.observations);
  b.actions = mu + 0.4 * random_matrix(1, 12, 44);
  std::mt19937_64 rng(45);
  std::normal_distribution<double> N(0.0, 1.0);
  double mean_adv = 0;
  for (int j = 0; j < 12; ++j) {
    b.log_probs.push_back(gaussian_log_prob(mu.col(j), policy.log_std, b.actions.col(j)));
    b.advantages.push_back(N(rng));
    b.returns.push_back(N(rng));
    mean_adv += b.advantages.back() / 12;
  }
  std::vector<int> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  VectorXd gp, gv;
  const LossStats s = ppo_loss(policy, value, b, idx, 0.2, &gp, &gv);
  CHECK(-s.policy_loss == doctest::Approx(mean_adv).epsilon(1e-14));
  CHECK(s.clip_fraction == 0.0);

  // -(1/m) sum A grad log pi, assembled sample by sample
  VectorXd plain = VectorXd::Zero(10);
  for (int j = 0; j < 12; ++j) {
    Mlp::Tape tape;
    policy.mean.forward(MatrixXd(b.observations.col(j)), tape);
    const VectorXd d = gaussian_log_prob_grad(mu.col(j), policy.log_std, b.actions.col(j));
    plain -= b.advantages[j] / 12 * policy.mean.backward(tape, MatrixXd(d));
  }
  CHECK((gp - plain).norm() <= 1e-12 * std::max(1.0, plain.norm()));

  const VectorXd fd = fd_gradient(policy.mean, [&](const Mlp& m) {
    return ppo_loss(PolicyNet{m, policy.log_std}, value, b, idx, 0.2, nullptr, nullptr).policy_loss;
  });
  for (int i = 0; i < 10; ++i) CHECK(rel_err(gp(i), fd(i)) < 1e-5);
}
