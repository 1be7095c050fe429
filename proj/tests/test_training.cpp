#include <doctest.h>

#include "smt/checkpoint.hpp"
#include "smt/error.hpp"
#include "smt/train.hpp"
#include "test_util.hpp"

using namespace smt;

namespace {

SmtConfig tiny_config() {
  SmtConfig c;
  c.image_height = 8;
  c.image_width = 8;
  c.patch_size = 4;
  c.ts_len = 6;
  c.embed_dim = 8;
  c.layers = 1;
  c.heads = 2;
  c.mlp_ratio = 2;
  return c;
}

std::vector<Example> toy_examples(const SmtConfig& c, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    auto img = std::make_shared<Image>(c.image_height, c.image_width, c.channels);
    for (auto& v : img->pixels) v = rng.uniform();
    ex.input.frames.push_back(img);
    ex.input.series = Tensor({1, c.ts_len});
    for (auto& v : ex.input.series.values) v = rng.uniform();
    ex.target = 0.5 * ex.input.series.values.back() + 0.3 * img->pixels[0];
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig quick_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.seed = 77;
  t.lr_peak = 5e-3;
  t.lr_warmup_start = 5e-4;
  return t;
}

// Straightforward AdamW used as an oracle.
struct RefAdamW {
  std::vector<std::vector<double>> m, v;
  int t = 0;
  void step(std::vector<std::vector<double>>& theta, const std::vector<std::vector<double>>& grad,
            const std::vector<bool>& decay, double lr, double wd, double b1, double b2, double eps) {
    if (m.empty()) {
      for (auto& p : theta) m.emplace_back(p.size(), 0.0), v.emplace_back(p.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      for (std::size_t k = 0; k < theta[i].size(); ++k) {
        if (decay[i]) theta[i][k] *= 1.0 - lr * wd;
        m[i][k] = b1 * m[i][k] + (1 - b1) * grad[i][k];
        v[i][k] = b2 * v[i][k] + (1 - b2) * grad[i][k] * grad[i][k];
        const double mh = m[i][k] / (1 - std::pow(b1, t));
        const double vh = v[i][k] / (1 - std::pow(b2, t));
        theta[i][k] -= lr * mh / (std::sqrt(vh) + eps);
      }
    }
  }
};

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_schedule(0, c) == 5e-5);
  CHECK(lr_schedule(2, c) == 5e-4);
  CHECK(lr_schedule(100, c) == 2.5e-4);
  CHECK(lr_schedule(1, c) == doctest::Approx(2.75e-4).epsilon(1e-12));
  CHECK(std::abs(lr_schedule(2 - 1e-6, c) - lr_schedule(2 + 1e-6, c)) < 1e-9);
  CHECK(lr_schedule(51, c) == doctest::Approx(3.75e-4).epsilon(1e-12));
  for (double e = 2; e < 100; e += 0.5) CHECK(lr_schedule(e, c) >= lr_schedule(e + 0.5, c));
}

TEST_CASE("train config round trip and validation") {
  TrainConfig c;
  c.weight_decay = 0.05;
  c.seed = 9;
  KeyValues kv;
  c.write(kv);
  CHECK(TrainConfig::read(kv) == c);
  c.early_stop_patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_peak = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adamw hand cases") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  std::vector<Parameter> p{{"w", Tensor({3}, {1, -2, 3}), true}};
  auto state = OptimizerState::zeros_like(p);
  p[0].value.zero_grad();
  adamw_step(p, state, 0.1, cfg);
  CHECK(p[0].value.values == std::vector<Real>{1, -2, 3});
  CHECK(state.step == 1);

  std::vector<Parameter> q{{"w", Tensor({1}, {0}), true}};
  auto s2 = OptimizerState::zeros_like(q);
  q[0].value.grad = {1.0};
  adamw_step(q, s2, 0.1, cfg);
  CHECK(q[0].value.values[0] == doctest::Approx(-0.1).epsilon(1e-6));

  cfg.weight_decay = 0.01;
  std::vector<Parameter> r{{"w", Tensor({2}, {1, 2}), true}};
  auto s3 = OptimizerState::zeros_like(r);
  r[0].value.grad = {0.3, -0.2};
  adamw_step(r, s3, 0.0, cfg);
  CHECK(r[0].value.values == std::vector<Real>{1, 2});

  r[0].value.grad = {std::nan(""), 0};
  try {
    adamw_step(r, s3, 0.1, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
}

TEST_CASE("adamw matches a reference implementation") {
  for (double wd : {0.0, 0.01, 0.3}) {
    Rng rng(51);
    TrainConfig cfg;
    cfg.weight_decay = wd;
    std::vector<Parameter> p{{"a", testutil::random_tensor({4, 3}, rng), true},
                             {"b", testutil::random_tensor({3}, rng), false}};
    std::vector<std::vector<double>> theta{p[0].value.values, p[1].value.values};
    auto state = OptimizerState::zeros_like(p);
    RefAdamW ref;
    double worst = 0;
    for (int step = 0; step < 100; ++step) {
      std::vector<std::vector<double>> grads;
      for (auto& par : p) {
        par.value.grad.resize(par.value.size());
        for (auto& g : par.value.grad) g = rng.normal();
        grads.push_back(par.value.grad);
      }
      const double lr = rng.uniform(1e-4, 1e-2);
      adamw_step(p, state, lr, cfg);
      ref.step(theta, grads, {true, false}, lr, wd, cfg.beta1, cfg.beta2, cfg.eps);
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t k = 0; k < theta[i].size(); ++k)
          worst = std::max(worst, std::abs(theta[i][k] - p[i].value.values[k]));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  const SmtConfig c = tiny_config();
  const auto tr = toy_examples(c, 24, 1), va = toy_examples(c, 8, 2);
  const TrainConfig t = quick_train(8);
  SmtModel a(c, 3), b(c, 3);
  const auto ra = train(a, tr, va, t);
  const auto rb = train(b, tr, va, t);
  REQUIRE(ra.history.size() == rb.history.size());
  for (std::size_t i = 0; i < ra.history.size(); ++i) {
    CHECK(ra.history[i].train_loss == rb.history[i].train_loss);
    CHECK(ra.history[i].val_loss == rb.history[i].val_loss);
  }
  for (const auto& h : ra.history) CHECK(ra.best_val_loss <= h.val_loss);
  CHECK(ra.history.back().train_loss < ra.history.front().train_loss);
  SmtModel best(c, ra.best_params);
  CHECK(evaluate_mse(best, va) == ra.best_val_loss);

  CHECK_THROWS_AS(train(a, {}, va, t), ConfigError);
  CHECK_THROWS_AS(train(a, tr, {}, t), ConfigError);
}

TEST_CASE("early stopping after patience epochs") {
  const SmtConfig c = tiny_config();
  const auto tr = toy_examples(c, 8, 3), va = toy_examples(c, 4, 4);
  TrainConfig t = quick_train(100);
  t.lr_peak = 1e-300;
  t.lr_warmup_start = 1e-300;
  t.early_stop_patience = 3;
  SmtModel m(c, 5);
  const auto r = train(m, tr, va, t);
  CHECK(r.early_stopped);
  CHECK(r.best_epoch == 0);
  CHECK(r.history.size() == 3 + 1);
}

TEST_CASE("resume reproduces a continuous run") {
  const SmtConfig c = tiny_config();
  const auto tr = toy_examples(c, 20, 5), va = toy_examples(c, 6, 6);
  const TrainConfig t = quick_train(6);
  SmtModel full(c, 8);
  const auto whole = train(full, tr, va, t);

  SmtModel part(c, 8);
  TrainOptions first;
  first.stop_before_epoch = 3;
  const auto head = train(part, tr, va, t, first);
  REQUIRE(head.history.size() == 3);

  // Through a 64-bit checkpoint with optimizer state.
  Checkpoint ck = make_checkpoint(c, t, KeyValues{}, head.final_state.params, ValueBits::f64,
                                  &head.final_state.optimizer);
  ck.best_val_loss = head.best_val_loss;
  ck.epoch = static_cast<std::uint32_t>(head.final_state.next_epoch);
  ck.best_epoch = static_cast<std::uint32_t>(head.best_epoch);
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(ck));
  TrainState state{back.params, *back.optimizer, back.epoch, back.best_val_loss, back.best_epoch};
  TrainOptions second;
  second.resume = &state;
  SmtModel resumed(c, 999);
  const auto tail = train(resumed, tr, va, t, second);
  REQUIRE(tail.history.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tail.history[i].train_loss == whole.history[3 + i].train_loss);
    CHECK(tail.history[i].val_loss == whole.history[3 + i].val_loss);
  }
  for (std::size_t i = 0; i < full.parameters().size(); ++i) {
    CHECK(resumed.parameters()[i].value.values == full.parameters()[i].value.values);
  }
}

TEST_CASE("checkpoint round trip") {
  const SmtConfig c = tiny_config();
  Rng rng(52);
  SmtModel m(c, 4);
  for (auto& p : m.parameters())
    for (auto& v : p.value.values) v += rng.normal(0, 0.1);
  const auto ex = toy_examples(c, 1, 7)[0];
  KeyValues run;
  run.set("latitude", 40.0);
  run.set("horizon_min", 120);
  const std::string dir = testutil::temp_dir("ckpt");

  for (auto bits : {ValueBits::f32, ValueBits::f64}) {
    Checkpoint ck = make_checkpoint(c, TrainConfig{}, run, m.parameters(), bits);
    ck.best_val_loss = 0.125;
    ck.epoch = 17;
    const std::string path = dir + "/m.ckpt";
    save_checkpoint(path, ck);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.model_config == c);
    CHECK(loaded.train_config == TrainConfig{});
    CHECK(loaded.run_settings.get_double("latitude") == 40.0);
    CHECK(loaded.best_val_loss == 0.125);
    CHECK(loaded.epoch == 17);
    CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(ck));
    SmtModel a = ck.to_model(), b = loaded.to_model();
    CHECK(a.predict(ex.input) == b.predict(ex.input));
    if (bits == ValueBits::f64) CHECK(b.predict(ex.input) == m.predict(ex.input));
    // Stored values are little-endian floats of the requested width.
    const auto bytes = serialize_checkpoint(ck);
    CHECK(bytes[8] == static_cast<std::uint8_t>(bits));
  }
}

TEST_CASE("corrupted checkpoints are rejected by kind") {
  const SmtConfig c = tiny_config();
  SmtModel m(c, 4);
  const auto bytes = serialize_checkpoint(make_checkpoint(c, TrainConfig{}, KeyValues{}, m.parameters()));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      deserialize_checkpoint(b);
    } catch (const CheckpointError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  auto bad = bytes;
  bad[0] = 'X';
  CHECK(kind_of(bad) == static_cast<int>(CheckpointErrorKind::bad_magic));
  bad = bytes;
  bad[4] = 2;
  CHECK(kind_of(bad) == static_cast<int>(CheckpointErrorKind::version_skew));
  bad.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  CHECK(kind_of(bad) == static_cast<int>(CheckpointErrorKind::truncated));
  bad = bytes;
  bad.push_back(0);
  CHECK(kind_of(bad) == static_cast<int>(CheckpointErrorKind::malformed));
  CHECK(kind_of({}) == static_cast<int>(CheckpointErrorKind::bad_magic));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}
