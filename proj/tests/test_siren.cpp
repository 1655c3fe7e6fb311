#include <doctest.h>

#include <algorithm>
#include <random>

#include "ecnr/assign.hpp"
#include "ecnr/siren.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace ecnr;
using MatD = Eigen::MatrixXd;

namespace {

MlpGroupConfig small_config(int m) {
  MlpGroupConfig cfg;
  cfg.m = m;
  cfg.neurons = 6;
  cfg.latent_dim = 3;
  return cfg;
}

MatD random_coords(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatD c(n, 3);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  return c;
}

double block_loss(const MlpGroup<double>& g, int mlp, const MatD& coords, Eigen::Index block, const Eigen::VectorXd& target) {
  ForwardCache<double> cache;
  forward_one(g, mlp, coords, g.latents.row(block), cache);
  return (cache.output - target).squaredNorm() / static_cast<double>(coords.rows());
}

}  // namespace

TEST_CASE("initialization") {
  SUBCASE("first-layer weights within 1/fan_in") {
    MlpGroupConfig cfg;
    cfg.m = 4;
    const auto g = init_group<double>(cfg, 8, 1);
    CHECK(g.weights[0].flat().cwiseAbs().maxCoeff() <= 1.0 / cfg.fan_in(0));
    CHECK(g.latents.cwiseAbs().maxCoeff() <= 1e-4);
    for (int l = 1; l < cfg.layer_count(); ++l)
      CHECK(g.weights[l].flat().cwiseAbs().maxCoeff() <= std::sqrt(6.0 / cfg.fan_in(l)) / cfg.omega0);
  }
  SUBCASE("seeded") {
    MlpGroupConfig cfg;
    cfg.m = 2;
    const auto a = init_group<float>(cfg, 3, 7), b = init_group<float>(cfg, 3, 7), c = init_group<float>(cfg, 3, 8);
    for (int l = 0; l < cfg.layer_count(); ++l) {
      CHECK(a.weights[l] == b.weights[l]);
      CHECK(a.biases[l] == b.biases[l]);
      CHECK(!(a.weights[l] == c.weights[l]));
    }
    CHECK(a.latents == b.latents);
    CHECK(a.latents != c.latents);
  }
  SUBCASE("hidden weights follow the uniform spread") {
    MlpGroupConfig cfg;
    cfg.m = 20;
    const auto g = init_group<double>(cfg, 1, 3);
    const auto& w = g.weights[1].flat();
    REQUIRE(w.size() >= 10000);
    const double mean = w.mean();
    const double sd = std::sqrt((w.array() - mean).square().mean());
    const double expected = std::sqrt(6.0 / cfg.fan_in(1)) / cfg.omega0 / std::sqrt(3.0);
    CHECK(std::abs(sd - expected) <= 0.1 * expected);
  }
  SUBCASE("shapes") {
    MlpGroupConfig cfg;
    cfg.m = 3;
    const auto g = make_group<float>(cfg, 5);
    CHECK(cfg.in_dim() == 19);
    CHECK(g.layer_count() == 4);
    CHECK(g.weights[0].rows() == 19);
    CHECK(g.weights[0].cols() == 24);
    CHECK(g.weights[3].cols() == 1);
    CHECK(g.latents.rows() == 5);
    CHECK(g.latents.cols() == 16);
  }
}

TEST_CASE("block coordinates span [-1, 1]") {
  const auto c = block_coordinates<double>({4, 3, 1});
  REQUIRE(c.rows() == 12);
  CHECK(c(0, 0) == -1.0);
  CHECK(c(3, 0) == 1.0);
  CHECK(c(4, 1) == 0.0);
  CHECK(c(11, 1) == 1.0);
  CHECK((c.col(2).array() == 0.0).all());
}

TEST_CASE("forward") {
  std::mt19937_64 rng(1);
  SUBCASE("zero parameters give zero output") {
    auto g = make_group<double>(small_config(2), 2);
    g.latents.setRandom();
    const std::vector<int> ids{0, 1};
    const auto out = forward(g, ids, random_coords(10, rng), g.latents);
    CHECK((out.array() == 0.0).all());
  }
  SUBCASE("one neuron matches the closed form") {
    MlpGroupConfig cfg;
    cfg.m = 1;
    cfg.hidden_layers = 1;
    cfg.neurons = 1;
    cfg.latent_dim = 1;
    auto g = make_group<double>(cfg, 1);
    const Eigen::Vector4d w1(0.3, -0.2, 0.5, 0.7);  // x, y, z, latent
    g.weights[0].slice(0) = w1;
    g.biases[0].slice(0)(0, 0) = 0.1;
    g.weights[1].slice(0)(0, 0) = 1.7;
    g.biases[1].slice(0)(0, 0) = -0.4;
    g.latents(0, 0) = 0.25;
    const auto coords = random_coords(7, rng);
    ForwardCache<double> cache;
    forward_one(g, 0, coords, g.latents.row(0), cache);
    for (Eigen::Index i = 0; i < 7; ++i) {
      const double pre = w1[0] * coords(i, 0) + w1[1] * coords(i, 1) + w1[2] * coords(i, 2) + w1[3] * 0.25 + 0.1;
      CHECK(cache.output[i] == doctest::Approx(1.7 * std::sin(30.0 * pre) - 0.4).epsilon(1e-12));
    }
  }
  SUBCASE("batched equals independent forwards bit for bit") {
    auto g = init_group<float>(MlpGroupConfig{.m = 3}, 5, 2);
    const auto coords = block_coordinates<float>({4, 4, 4});
    const std::vector<int> ids{2, 0, 1, 2, 2};
    const auto out = forward(g, ids, coords, g.latents);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ForwardCache<float> cache;
      forward_one(g, ids[i], coords, g.latents.row(static_cast<Eigen::Index>(i)), cache);
      CHECK(out.col(static_cast<Eigen::Index>(i)) == cache.output);
    }
  }
  SUBCASE("same MLP and input give identical rows") {
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 2, 3);
    g.latents.row(1) = g.latents.row(0);
    const std::vector<int> ids{1, 1};
    const auto out = forward(g, ids, block_coordinates<float>({2, 2, 2}), g.latents);
    CHECK(out.col(0) == out.col(1));
  }
  SUBCASE("bad MLP id") {
    auto g = make_group<float>(MlpGroupConfig{.m = 1}, 1);
    ForwardCache<float> cache;
    CHECK_THROWS_AS(forward_one(g, 1, block_coordinates<float>({2, 2, 2}), g.latents.row(0), cache), Error);
  }
}

TEST_CASE("backward matches central differences") {
  std::mt19937_64 rng(5);
  auto g = init_group<double>(small_config(2), 2, 11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Eigen::Index i = 0; i < g.latents.size(); ++i) g.latents.data()[i] = u(rng);
  const auto coords = random_coords(4, rng);
  const std::vector<Eigen::VectorXd> targets{Eigen::VectorXd::Random(4), Eigen::VectorXd::Random(4)};
  // step of 1e-4 in the units of the sine argument
  const double h = 1e-4 / g.cfg.omega0;
  double worst = 0.0;
  for (int mlp = 0; mlp < 2; ++mlp) {
    const Eigen::Index block = mlp;
    ForwardCache<double> cache;
    MlpGrad<double> grad;
    forward_one(g, mlp, coords, g.latents.row(block), cache);
    const double loss = backward_one(g, mlp, coords, g.latents.row(block), targets[static_cast<std::size_t>(mlp)], cache, grad);
    CHECK(loss == doctest::Approx(block_loss(g, mlp, coords, block, targets[static_cast<std::size_t>(mlp)])));
    auto f = [&] { return block_loss(g, mlp, coords, block, targets[static_cast<std::size_t>(mlp)]); };
    for (int l = 0; l < g.layer_count(); ++l) {
      auto w = g.weights[l].slice(mlp);
      for (Eigen::Index i = 0; i < w.size(); ++i)
        worst = std::max(worst, testing::relative_error(grad.weights[static_cast<std::size_t>(l)](i),
                                                        testing::central_difference(w.data()[i], h, f)));
      auto b = g.biases[l].slice(mlp);
      for (Eigen::Index i = 0; i < b.size(); ++i)
        worst = std::max(worst, testing::relative_error(grad.biases[static_cast<std::size_t>(l)](i),
                                                        testing::central_difference(b.data()[i], h, f)));
    }
    for (Eigen::Index j = 0; j < g.latents.cols(); ++j)
      worst = std::max(worst, testing::relative_error(grad.latent(j), testing::central_difference(g.latents(block, j), h, f)));
    // The other MLP's parameters do not influence this block.
    auto other = g.weights[1].slice(1 - mlp);
    CHECK(testing::central_difference(other.data()[0], h, f) == 0.0);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("backward respects masks and perfect fits") {
  auto g = init_group<double>(small_config(1), 1, 4);
  const auto coords = block_coordinates<double>({2, 2, 2});
  ForwardCache<double> cache;
  MlpGrad<double> grad;
  forward_one(g, 0, coords, g.latents.row(0), cache);
  SUBCASE("pruned parameters get zero gradient") {
    g.weight_mask[1].slice(0)(2, 3) = 0.0;
    g.bias_mask[2].slice(0)(0, 1) = 0.0;
    g.apply_masks();
    forward_one(g, 0, coords, g.latents.row(0), cache);
    backward_one(g, 0, coords, g.latents.row(0), Eigen::VectorXd::Ones(8), cache, grad);
    CHECK(grad.weights[1](2, 3) == 0.0);
    CHECK(grad.biases[2](0, 1) == 0.0);
    CHECK(grad.weights[1].cwiseAbs().sum() > 0.0);
  }
  SUBCASE("zero residual gives zero gradients") {
    const Eigen::VectorXd target = cache.output;
    const double loss = backward_one(g, 0, coords, g.latents.row(0), target, cache, grad);
    CHECK(loss == 0.0);
    for (int l = 0; l < g.layer_count(); ++l) {
      CHECK(grad.weights[static_cast<std::size_t>(l)].cwiseAbs().maxCoeff() == 0.0);
      CHECK(grad.biases[static_cast<std::size_t>(l)].cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(grad.latent.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam") {
  auto g = init_group<double>(small_config(2), 2, 9);
  const auto coords = block_coordinates<double>({2, 2, 2});
  ForwardCache<double> cache;
  MlpGrad<double> grad;
  forward_one(g, 1, coords, g.latents.row(1), cache);
  backward_one(g, 1, coords, g.latents.row(1), Eigen::VectorXd::Ones(8), cache, grad);
  AdamConfig cfg;
  SUBCASE("first step moves by lr * g / (|g| + eps)") {
    cfg.weight_decay = 0.0;
    const auto before = g;
    const double lr = 1e-3;
    adam_update_mlp(g, 1, grad, lr, cfg);
    adam_update_latent(g, 1, grad.latent, lr, cfg);
    for (int l = 0; l < g.layer_count(); ++l) {
      const auto& gw = grad.weights[static_cast<std::size_t>(l)];
      const MatD expected = before.weights[l].slice(1).array() - lr * gw.array() / (gw.array().abs() + cfg.eps);
      CHECK((g.weights[l].slice(1) - expected).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(g.weights[l].slice(0) == before.weights[l].slice(0));
    }
    const Eigen::RowVectorXd expected_latent =
        before.latents.row(1).array() - lr * grad.latent.array() / (grad.latent.array().abs() + cfg.eps);
    CHECK((g.latents.row(1) - expected_latent).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(g.latents.row(0) == before.latents.row(0));
  }
  SUBCASE("decoupled weight decay on weights only") {
    for (auto& w : grad.weights) w.setZero();
    for (auto& b : grad.biases) b.setZero();
    const auto before = g;
    adam_update_mlp(g, 0, grad, 0.1, cfg);
    CHECK((g.weights[2].slice(0) - before.weights[2].slice(0) * (1.0 - 0.1 * cfg.weight_decay)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(g.biases[2].slice(0) == before.biases[2].slice(0));
  }
  SUBCASE("zero learning rate changes nothing") {
    const auto before = g;
    adam_update_mlp(g, 1, grad, 0.0, cfg);
    adam_update_latent(g, 1, grad.latent, 0.0, cfg);
    for (int l = 0; l < g.layer_count(); ++l) {
      CHECK(g.weights[l] == before.weights[l]);
      CHECK(g.biases[l] == before.biases[l]);
    }
    CHECK(g.latents == before.latents);
  }
  SUBCASE("step counters") {
    const std::vector<int> ids{1, 1};
    const std::vector<Eigen::Index> blocks{1, -1};
    const std::vector<MlpGrad<double>> grads{grad, grad};
    adam_step<double>(g, ids, blocks, grads, 1e-3, cfg);
    CHECK(g.mlp_steps == std::vector<int>{0, 2});
    CHECK(g.latent_steps == std::vector<int>{0, 1});
  }
  SUBCASE("pruned parameters stay zero") {
    g.weight_mask[0].slice(1)(0, 0) = 0.0;
    g.apply_masks();
    for (int i = 0; i < 5; ++i) adam_update_mlp(g, 1, grad, 1e-2, cfg);
    CHECK(g.weights[0].slice(1)(0, 0) == 0.0);
  }
}

TEST_CASE("schedule validation") {
  TrainSchedule s;
  CHECK_NOTHROW(s.validate());
  s.prune_sparsity = {0.3, 0.2, 0.45, 0.5};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.prune_epochs = {150, 225};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = TrainSchedule{};
  s.prune_sparsity.back() = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

namespace {

struct Toy {
  Assignment a;
  std::vector<Eigen::VectorXf> blocks;
  Eigen::MatrixXf coords;
};

Toy toy(int m, int per_mlp, const std::function<float(int, const Eigen::Vector3f&)>& value, std::int64_t edge = 4) {
  Toy t;
  t.coords = block_coordinates<float>({edge, edge, edge});
  const int n = m * per_mlp;
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  std::vector<int> cluster(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    ids[static_cast<std::size_t>(b)] = b;
    cluster[static_cast<std::size_t>(b)] = b % m;
    Eigen::VectorXf v(t.coords.rows());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = value(b, t.coords.row(i).transpose());
    t.blocks.push_back(v);
  }
  t.a = make_assignment(1, m, ids, cluster);
  return t;
}

TrainSchedule no_prune(int epochs) {
  TrainSchedule s;
  s.epochs = epochs;
  s.prune_epochs.clear();
  s.prune_sparsity.clear();
  return s;
}

}  // namespace

TEST_CASE("training") {
  SUBCASE("constant-zero blocks are fit") {
    const auto t = toy(2, 2, [](int, const Eigen::Vector3f&) { return 0.0f; });
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 4, 1);
    const auto r = train_scale(g, t.a, t.blocks, t.coords, no_prune(100));
    REQUIRE(r.epoch_loss.size() == 100);
    CHECK(r.epoch_loss.back() < 1e-6);
  }
  SUBCASE("loss decreases over 20-epoch windows") {
    const auto t = toy(
        2, 2,
        [](int b, const Eigen::Vector3f& p) {
          return 0.5f * std::sin(2.0f * p.x() + static_cast<float>(b)) * std::cos(1.5f * p.y()) + 0.2f * p.z();
        },
        8);
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 4, 2);
    const auto r = train_scale(g, t.a, t.blocks, t.coords, no_prune(200));
    // best epoch of each 20-epoch window
    auto best = [&](std::size_t w) {
      return *std::min_element(r.epoch_loss.begin() + static_cast<std::ptrdiff_t>(20 * w),
                               r.epoch_loss.begin() + static_cast<std::ptrdiff_t>(20 * w + 20));
    };
    for (std::size_t w = 1; w < r.epoch_loss.size() / 20; ++w) CHECK(best(w) <= 1.05 * best(w - 1));
    CHECK(r.epoch_loss.back() < 0.01 * r.epoch_loss.front());
  }
  SUBCASE("clusters of unequal complexity report different block loss") {
    const auto t = toy(2, 3, [](int b, const Eigen::Vector3f& p) {
      return b % 2 == 0 ? 0.1f : std::sin(9.0f * p.x() + 3.0f * b) * std::sin(7.0f * p.y()) * std::cos(8.0f * p.z());
    });
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 6, 3);
    const auto r = train_scale(g, t.a, t.blocks, t.coords, no_prune(60));
    REQUIRE(r.mlp_loss.size() == 2);
    CHECK(r.mlp_loss[1] > 10.0 * r.mlp_loss[0]);
  }
  SUBCASE("prune hook fires on schedule and the learning rate decays") {
    const auto t = toy(2, 2, [](int b, const Eigen::Vector3f& p) { return 0.3f * p.x() + 0.1f * b; });
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 4, 4);
    TrainSchedule s;
    s.epochs = 12;
    s.prune_epochs = {3, 6, 9};
    s.prune_sparsity = {0.1, 0.2, 0.3};
    std::vector<double> seen;
    std::ostringstream log;
    train_scale<float>(g, t.a, t.blocks, t.coords, s,
                       [&](MlpGroup<float>& grp, const std::vector<double>& loss, double sparsity) {
                         CHECK(loss.size() == 2);
                         seen.push_back(sparsity);
                         grp.weight_mask[1].flat()[static_cast<Eigen::Index>(seen.size())] = 0.0f;
                         grp.apply_masks();
                       },
                       &log, 1, 1);
    CHECK(seen == s.prune_sparsity);
    CHECK(log.str().find("event=prune scale=1 epoch=6 sparsity=0.2 lr=0.0005625") != std::string::npos);
    CHECK(log.str().find("event=epoch scale=1 epoch=11") != std::string::npos);
    for (int i = 1; i <= 3; ++i) CHECK(g.weights[1].flat()[i] == 0.0f);
  }
  SUBCASE("pruned parameters stay zero at every later epoch") {
    const auto t = toy(2, 2, [](int b, const Eigen::Vector3f& p) { return std::sin(3.0f * p.x()) + 0.1f * b; });
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 4, 5);
    for (Eigen::Index i = 0; i < g.weight_mask[2].flat().size(); i += 3) g.weight_mask[2].flat()[i] = 0.0f;
    g.apply_masks();
    for (int e = 0; e < 10; ++e) {
      train_scale(g, t.a, t.blocks, t.coords, no_prune(1));
      for (Eigen::Index i = 0; i < g.weight_mask[2].flat().size(); i += 3) CHECK(g.weights[2].flat()[i] == 0.0f);
    }
  }
  SUBCASE("result does not depend on the thread count") {
    const auto t = toy(4, 2, [](int b, const Eigen::Vector3f& p) { return std::cos(2.0f * p.y() + b); });
    auto g1 = init_group<float>(MlpGroupConfig{.m = 4}, 8, 6);
    auto g2 = g1;
    const int saved = thread_count();
    set_thread_count(1);
    train_scale(g1, t.a, t.blocks, t.coords, no_prune(5));
    set_thread_count(3);
    train_scale(g2, t.a, t.blocks, t.coords, no_prune(5));
    set_thread_count(saved);
    for (int l = 0; l < g1.layer_count(); ++l) CHECK(g1.weights[l] == g2.weights[l]);
    CHECK(g1.latents == g2.latents);
  }
  SUBCASE("inference reproduces the training forward") {
    const auto t = toy(2, 2, [](int, const Eigen::Vector3f& p) { return p.x(); });
    auto g = init_group<float>(MlpGroupConfig{.m = 2}, 4, 7);
    const auto out = infer_blocks(g, t.a, t.coords);
    REQUIRE(out.size() == 4);
    ForwardCache<float> cache;
    forward_one(g, 1, t.coords, g.latents.row(3), cache);
    CHECK(out[3] == cache.output);
  }
  SUBCASE("divergence is reported") {
    const auto t = toy(1, 1, [](int, const Eigen::Vector3f&) { return std::numeric_limits<float>::infinity(); });
    auto g = init_group<float>(MlpGroupConfig{.m = 1}, 1, 8);
    CHECK_THROWS_AS(train_scale(g, t.a, t.blocks, t.coords, no_prune(2)), DivergenceError);
  }
}
