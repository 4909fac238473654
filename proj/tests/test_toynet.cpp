#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "l2e/error.hpp"
#include "l2e/toynet.hpp"
#include "oracles.hpp"

using namespace l2e;

namespace {

ExperimentConfig small_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.task.n_samples = 600;
  cfg.task.seed = seed;
  cfg.net.depth = 4;
  cfg.net.width = 16;
  cfg.train.steps = 120;
  cfg.train.seed = seed;
  cfg.inhibition.warmup_batches = 5;
  cfg.materialize();
  return cfg;
}

Matrix random_matrix(oracle::Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values) v = rng.gaussian();
  return m;
}

}  // namespace

TEST_CASE("generate_task") {
  SyntheticFeatureTask cfg;
  const TaskSplit a = generate_task(cfg);
  const TaskSplit b = generate_task(cfg);
  CHECK(a.train.x == b.train.x);
  CHECK(a.train.labels == b.train.labels);
  CHECK(a.eval.x == b.eval.x);
  CHECK(cfg.n_features == 9);
  CHECK(a.train.labels.size() == 2700);
  CHECK(a.eval.labels.size() == 300);
  std::vector<std::size_t> per(9, 0);
  for (const FeatureId l : a.train.labels) ++per.at(l);
  for (const std::size_t n : per) CHECK(n > 200);

  SyntheticFeatureTask bad = cfg;
  bad.n_features = 1;
  CHECK_THROWS_AS(generate_task(bad), error);
  bad = cfg;
  bad.input_dim = 4;
  CHECK_THROWS_AS(generate_task(bad), error);
}

TEST_CASE("forward") {
  SUBCASE("zero network gives uniform logits") {
    ToyNetConfig cfg;
    const ToyNet net(cfg);
    oracle::Rng rng(1);
    const ForwardResult r = net.forward(random_matrix(rng, 4, cfg.input_dim));
    for (const Matrix& p : r.pre) {
      for (const double v : p.values) CHECK(v == 0.0);
    }
    for (const double v : r.logits.values) CHECK(v == 0.0);
  }
  SUBCASE("identity layer passes its input through") {
    ToyNetConfig cfg;
    cfg.input_dim = 4;
    cfg.depth = 1;
    cfg.width = 4;
    cfg.n_classes = 2;
    ToyNet net(cfg);
    for (std::size_t i = 0; i < 4; ++i) net.layers()[0].weight[i * 4 + i] = 1.0;
    Matrix x(1, 4, 1.0);
    const ForwardResult r = net.forward(x);
    CHECK(r.post[0].values == x.values);
  }
  SUBCASE("forward is pure") {
    const ToyNet net = ToyNet::random(ToyNetConfig{}, 3);
    oracle::Rng rng(2);
    const Matrix x = random_matrix(rng, 8, 16);
    const ForwardResult a = net.forward(x);
    const ForwardResult b = net.forward(x);
    CHECK(a.logits == b.logits);
    for (std::size_t l = 0; l < a.post.size(); ++l) CHECK(a.post[l] == b.post[l]);
    for (const Matrix& p : a.post) {
      for (const double v : p.values) CHECK(v >= 0.0);  // ReLU
    }
  }
  SUBCASE("shape mismatch") {
    const ToyNet net = ToyNet::random(ToyNetConfig{}, 3);
    CHECK_THROWS_AS(net.forward(Matrix(2, 5)), error);
  }
}

TEST_CASE("full gradient matches central differences, including the L_MS path") {
  ToyNetConfig cfg;
  cfg.input_dim = 5;
  cfg.depth = 2;
  cfg.width = 8;
  cfg.n_classes = 3;
  ToyNet net = ToyNet::random(cfg, 11);
  oracle::Rng rng(12);
  for (auto& layer : net.layers()) {
    for (double& b : layer.bias) b = 0.1 * rng.gaussian();
  }
  const Matrix x = random_matrix(rng, 6, 5);
  const std::vector<FeatureId> y{0, 1, 2, 0, 1, 2};
  std::vector<MsPenalty> pen(2);
  for (std::size_t l = 0; l < 2; ++l) {
    pen[l].layer = l;
    pen[l].mask.resize(6 * 8);
    for (auto& m : pen[l].mask) m = rng.uniform() < 0.4 ? 1 : 0;
    pen[l].means.resize(8);
    for (double& m : pen[l].means) m = rng.uniform(0.0, 1.0);
  }
  const double lambda = 0.3;
  const double eps = 1e-8;
  const auto [loss, grads] = loss_and_gradients(net, x, y, pen, lambda, eps);
  CHECK(loss.ms != 0.0);
  CHECK(loss.total == doctest::Approx(loss.task + lambda * loss.ms));

  std::size_t checked = 0;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    for (const bool is_bias : {false, true}) {
      auto& params = is_bias ? net.layers()[l].bias : net.layers()[l].weight;
      const auto& g = is_bias ? grads.bias[l] : grads.weight[l];
      for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        params[p] = saved + h;
        const double up = evaluate_loss(net, x, y, pen, lambda, eps).total;
        params[p] = saved - h;
        const double down = evaluate_loss(net, x, y, pen, lambda, eps).total;
        params[p] = saved;
        const double fd = (up - down) / (2.0 * h);
        CHECK(std::abs(fd - g[p]) <= 1e-4 * std::max(std::abs(fd), std::abs(g[p])) + 1e-8);
        ++checked;
      }
    }
  }
  CHECK(checked == net.parameter_count());
}

TEST_CASE("stop-gradient: running means change the loss but not the gradient path") {
  ToyNetConfig cfg;
  cfg.input_dim = 5;
  cfg.depth = 2;
  cfg.width = 8;
  cfg.n_classes = 3;
  const ToyNet net = ToyNet::random(cfg, 21);
  oracle::Rng rng(22);
  const Matrix x = random_matrix(rng, 4, 5);
  const std::vector<FeatureId> y{0, 1, 2, 0};
  MsPenalty p;
  p.layer = 1;
  p.mask.assign(4 * 8, 1);
  p.means.assign(8, 0.25);
  const auto a = loss_and_gradients(net, x, y, std::vector<MsPenalty>{p}, 0.5, 1e-8);
  MsPenalty shifted = p;
  for (double& m : shifted.means) m += 0.5;
  const auto b = loss_and_gradients(net, x, y, std::vector<MsPenalty>{shifted}, 0.5, 1e-8);
  CHECK(a.first.ms != b.first.ms);
  // no parameter produces the means, so only the z path contributes: the
  // gradient equals lambda * sum over entries of dL/dz * dz/dparam with the
  // means held fixed, which is exactly what a finite difference sees
  const double h = 1e-6;
  ToyNet probe = net;
  double& w = probe.layers()[0].weight[3];
  const double saved = w;
  w = saved + h;
  const double up = evaluate_loss(probe, x, y, std::vector<MsPenalty>{shifted}, 0.5, 1e-8).total;
  w = saved - h;
  const double down = evaluate_loss(probe, x, y, std::vector<MsPenalty>{shifted}, 0.5, 1e-8).total;
  const double fd = (up - down) / (2 * h);
  CHECK(std::abs(fd - b.second.weight[0][3]) <= 1e-4 * std::abs(fd) + 1e-8);
}

TEST_CASE("train_step") {
  SUBCASE("lambda = 0 is bit-identical to training without inhibition") {
    ExperimentConfig cfg = small_config(5);
    const TaskSplit data = generate_task(cfg.task);
    const TrainingReport with_hooks = train_arm(cfg, data, "a", 0.0);
    ExperimentConfig off = cfg;
    off.train.inhibition_enabled = false;
    const TrainingReport without = train_arm(off, data, "b", 0.0);
    REQUIRE(with_hooks.steps.size() == without.steps.size());
    for (std::size_t s = 0; s < without.steps.size(); ++s) {
      CHECK(with_hooks.steps[s].task_loss == without.steps[s].task_loss);
    }
    CHECK(with_hooks.final_eval_accuracy == without.final_eval_accuracy);
  }
  SUBCASE("non-finite loss is reported as divergence") {
    ExperimentConfig cfg = small_config(5);
    TrainingState st(ToyNet::random(cfg.net, 1), cfg.inhibition);
    Matrix x(4, cfg.net.input_dim, NAN);
    const std::vector<FeatureId> y{0, 1, 2, 3};
    try {
      train_step(st, x, y, 0.05);
      FAIL("expected training-diverged");
    } catch (const error& e) {
      CHECK(e.code() == errc::training_diverged);
    }
  }
  SUBCASE("step records and the feedback identity") {
    ExperimentConfig cfg = small_config(9);
    cfg.inhibition.lambda = 1e-3;
    const TaskSplit data = generate_task(cfg.task);
    const TrainingReport r = train_arm(cfg, data, "l2e", cfg.inhibition.lambda);
    REQUIRE(r.steps.size() == cfg.train.steps);
    const std::size_t entries = cfg.train.batch_size * cfg.net.width;
    const double k = static_cast<double>(target_count(cfg.inhibition.rate, entries));
    for (std::size_t h = 0; h < r.hooked_layers.size(); ++h) {
      double replay = 0.0;
      bool started = false;
      for (const StepRecord& s : r.steps) {
        REQUIRE(s.tau_star.size() == r.hooked_layers.size());
        if (s.warmup) {
          replay = s.tau_star[h];
          continue;
        }
        if (!started) started = true;
        replay += (s.k_star[h] - k) / static_cast<double>(entries);
        CHECK(s.tau_star[h] == replay);
      }
      CHECK(started);
    }
  }
}

TEST_CASE("repeated batch: a selected neuron's MS does not increase") {
  ToyNetConfig cfg;
  cfg.input_dim = 6;
  cfg.depth = 2;
  cfg.width = 8;
  cfg.n_classes = 2;
  InhibitionConfig inh;
  inh.rate = 1.0 / 8.0;
  inh.lambda = 1000.0;
  inh.hooked_layers = {0};
  TrainingState st(ToyNet::random(cfg, 4), inh);

  oracle::Rng rng(5);
  // pre-filled statistics so the repeated batch barely moves them
  st.banks.emplace_back(8);
  for (int i = 0; i < 20000; ++i) {
    const Matrix probe = random_matrix(rng, 1, 6);
    st.banks[0].update_and_score(st.net.forward(probe).post[0].row(0));
  }
  const Matrix x = random_matrix(rng, 1, 6);
  const std::vector<FeatureId> y{0};
  auto entry_ms = [&](std::size_t j) {
    return st.banks[0].score(j, st.net.forward(x).post[0](0, j));
  };
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t j = 0; j < 8; ++j) {
    if (st.banks[0].variance(j) >= kVarianceFloor) ranked.emplace_back(entry_ms(j), j);
  }
  REQUIRE(ranked.size() >= 2);
  std::sort(ranked.rbegin(), ranked.rend());
  const std::size_t target = ranked[0].second;
  REQUIRE(ranked[0].first > ranked[1].first + 1e-3);
  // threshold between the top two entries: only the target is selected
  st.thresholds.emplace_back(8, 1, 0, 0.5 * (ranked[0].first + ranked[1].first));

  double prev = entry_ms(target);
  const double first = prev;
  int selected_steps = 0;
  while (entry_ms(target) >= st.thresholds[0].tau_star() && selected_steps < 200) {
    const StepRecord rec = train_step(st, x, y, 1e-6);
    CHECK(rec.k_star[0] == 1.0);
    const double now = entry_ms(target);
    CHECK(now <= prev);
    prev = now;
    ++selected_steps;
  }
  CHECK(selected_steps > 1);
  CHECK(prev < first);
}

TEST_CASE("zero-noise task is learned perfectly") {
  ExperimentConfig cfg;
  cfg.task.noise = 0.0;
  cfg.task.n_samples = 900;
  cfg.train.steps = 800;
  cfg.train.inhibition_enabled = false;
  cfg.materialize();
  const TaskSplit data = generate_task(cfg.task);
  const TrainingReport r = train_arm(cfg, data, "baseline", 0.0);
  CHECK(r.final_eval_accuracy == 1.0);
}

TEST_CASE("determinism and arm pairing") {
  ExperimentConfig cfg = small_config(3);
  const auto [b1, l1] = run_experiment(cfg);
  const auto [b2, l2] = run_experiment(cfg);
  CHECK(b1.final_tau_star == b2.final_tau_star);
  CHECK(l1.final_tau_star == l2.final_tau_star);
  for (std::size_t s = 0; s < l1.steps.size(); ++s) {
    CHECK(l1.steps[s].task_loss == l2.steps[s].task_loss);
    CHECK(l1.steps[s].tau_star == l2.steps[s].tau_star);
  }
  CHECK(b1.lambda == 0.0);
  CHECK(l1.lambda == cfg.inhibition.lambda);

  ExperimentConfig zero = cfg;
  zero.inhibition.lambda = 0.0;
  const auto [b3, l3] = run_experiment(zero);
  CHECK(b3.final_tau_star == l3.final_tau_star);
  CHECK(b3.final_eval_accuracy == l3.final_eval_accuracy);
}

TEST_CASE("hook placement") {
  CHECK(middle_layers(6) == std::vector<std::size_t>{2, 3});
  CHECK(middle_layers(1) == std::vector<std::size_t>{0});
  ExperimentConfig cfg;
  cfg.hook_all_layers = true;
  cfg.materialize();
  CHECK(cfg.inhibition.hooked_layers.size() == 6);
}
