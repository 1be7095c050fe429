#include <doctest.h>

#include "smt/attention.hpp"
#include "smt/error.hpp"
#include "test_util.hpp"

using namespace smt;

namespace {

AttentionTrace make_trace(std::size_t layers, std::size_t heads, std::size_t tokens) {
  AttentionTrace t;
  t.layers = layers, t.heads = heads, t.tokens = tokens;
  t.attention.assign(layers * heads * tokens * tokens, 0.0);
  t.gradient.assign(t.attention.size(), 0.0);
  return t;
}

// Random row-stochastic attention and random gradients.
AttentionTrace random_trace(std::size_t layers, std::size_t heads, std::size_t tokens, Rng& rng) {
  auto t = make_trace(layers, heads, tokens);
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t q = 0; q < tokens; ++q) {
        double total = 0;
        for (std::size_t k = 0; k < tokens; ++k) total += t.attention[t.index(l, h, q, k)] = rng.uniform(0.01, 1);
        for (std::size_t k = 0; k < tokens; ++k) t.attention[t.index(l, h, q, k)] /= total;
      }
  for (auto& g : t.gradient) g = rng.normal(0, 1);
  return t;
}

SmtConfig small_cfg() {
  SmtConfig c;
  c.image_height = c.image_width = 8;
  c.patch_size = 4;
  c.ts_len = 6;
  c.embed_dim = 8;
  c.layers = 2;
  c.heads = 2;
  return c;
}

}  // namespace

TEST_CASE("last-layer attention") {
  auto t = make_trace(1, 2, 4);
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t k = 0; k < 4; ++k) t.attention[t.index(0, h, 0, k)] = 0.25;
  const auto u = last_layer_attention(t);
  REQUIRE(u.weights.size() == 3);
  for (auto w : u.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-15));

  // Heads disagree; their mean is renormalized over tokens 1..3.
  auto d = make_trace(1, 2, 4);
  const double h0[4] = {0.4, 0.3, 0.2, 0.1}, h1[4] = {0.0, 0.1, 0.5, 0.4};
  for (std::size_t k = 0; k < 4; ++k) d.attention[d.index(0, 0, 0, k)] = h0[k], d.attention[d.index(0, 1, 0, k)] = h1[k];
  const auto r = last_layer_attention(d);
  const double m1 = 0.2, m2 = 0.35, m3 = 0.25, s = m1 + m2 + m3;
  CHECK(r.weights[0] == doctest::Approx(m1 / s).epsilon(1e-14));
  CHECK(r.weights[1] == doctest::Approx(m2 / s).epsilon(1e-14));
  CHECK(r.weights[2] == doctest::Approx(m3 / s).epsilon(1e-14));

  AttentionTrace empty;
  CHECK_THROWS_AS(last_layer_attention(empty), ContractError);
}

TEST_CASE("rollout with zero gradients is degenerate") {
  auto t = make_trace(1, 1, 3);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t k = 0; k < 3; ++k) t.attention[t.index(0, 0, q, k)] = 1.0 / 3;
  const auto layer = rollout_layer(t, 0);
  for (std::size_t q = 0; q < 3; ++q)
    for (std::size_t k = 0; k < 3; ++k) CHECK(layer[q * 3 + k] == (q == k ? 1.0 : 0.0));
  const auto r = weighted_rollout(t);
  CHECK(r.degenerate);
  CHECK(r.weights == std::vector<double>{0, 0});
}

TEST_CASE("rollout single layer hand example") {
  // One head, T=3: relu(G*A) + I, row-normalized.
  auto t = make_trace(1, 1, 3);
  const double A[9] = {0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4};
  const double G[9] = {1.0, 2.0, -1.0, 0.5, -3.0, 4.0, 0.0, 1.0, 1.0};
  for (std::size_t i = 0; i < 9; ++i) t.attention[i] = A[i], t.gradient[i] = G[i];
  const auto m = rollout_layer(t, 0);
  // row 0: [1+0.5, 0.6, 0] / 2.1
  CHECK(m[0] == doctest::Approx(1.5 / 2.1).epsilon(1e-14));
  CHECK(m[1] == doctest::Approx(0.6 / 2.1).epsilon(1e-14));
  CHECK(m[2] == 0);
  // row 1: [0.05, 1, 0.4] / 1.45
  CHECK(m[3] == doctest::Approx(0.05 / 1.45).epsilon(1e-14));
  CHECK(m[4] == doctest::Approx(1.0 / 1.45).epsilon(1e-14));
  CHECK(m[5] == doctest::Approx(0.4 / 1.45).epsilon(1e-14));
  const auto r = weighted_rollout(t);
  CHECK_FALSE(r.degenerate);
  CHECK(r.weights[0] == 1.0);
  CHECK(r.weights[1] == 0.0);
}

TEST_CASE("two-layer rollout equals the explicit product") {
  Rng rng(71);
  const std::size_t T = 3;
  const auto t = random_trace(2, 3, T, rng);

  // Independent construction of each layer matrix.
  auto layer = [&](std::size_t l) {
    std::vector<double> m(T * T);
    for (std::size_t q = 0; q < T; ++q) {
      double row = 0;
      for (std::size_t k = 0; k < T; ++k) {
        double acc = 0;
        for (std::size_t h = 0; h < 3; ++h) acc += std::max(0.0, t.g(l, h, q, k) * t.a(l, h, q, k));
        m[q * T + k] = acc / 3 + (q == k);
        row += m[q * T + k];
      }
      for (std::size_t k = 0; k < T; ++k) m[q * T + k] /= row;
    }
    return m;
  };
  const auto a1 = layer(0), a2 = layer(1);
  std::vector<double> prod(T * T, 0);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j < T; ++j)
      for (std::size_t k = 0; k < T; ++k) prod[i * T + j] += a2[i * T + k] * a1[k * T + j];

  std::vector<std::vector<double>> stages;
  const auto r = weighted_rollout(t, &stages);
  REQUIRE(stages.size() == 2);
  for (std::size_t i = 0; i < T * T; ++i) {
    CHECK(std::abs(stages[0][i] - a1[i]) < 1e-12);
    CHECK(std::abs(stages[1][i] - prod[i]) < 1e-12);
  }
  const double tail = prod[1] + prod[2];
  CHECK(std::abs(r.weights[0] - prod[1] / tail) < 1e-12);
  CHECK(std::abs(r.weights[1] - prod[2] / tail) < 1e-12);

  // Row sums stay one at every stage for larger traces too.
  const auto big = random_trace(4, 2, 9, rng);
  weighted_rollout(big, &stages);
  for (const auto& s : stages)
    for (std::size_t q = 0; q < 9; ++q) {
      double total = 0;
      for (std::size_t k = 0; k < 9; ++k) total += s[q * 9 + k];
      CHECK(std::abs(total - 1) < 1e-12);
    }
}

TEST_CASE("attribution from a real model trace") {
  const auto cfg = small_cfg();
  SmtModel model(cfg, 5);
  Rng rng(72);
  ModelInput in;
  auto img = std::make_shared<Image>(8, 8, 3);
  for (auto& p : img->pixels) p = rng.uniform(0, 1);
  in.frames.push_back(img);
  in.series = testutil::random_tensor({1, 6}, rng);
  AttentionTrace trace;
  model.predict_with_trace(in, trace);
  CHECK(trace.complete());
  CHECK(trace.tokens == cfg.sequence_length());
  const auto last = last_layer_attention(trace);
  const auto roll = weighted_rollout(trace);
  for (const auto* a : {&last, &roll}) {
    CHECK(a->weights.size() == cfg.image_tokens() + cfg.series_tokens());
    double total = 0;
    for (auto w : a->weights) total += w;
    if (!a->degenerate) CHECK(std::abs(total - 1) < 1e-12);
    const auto s = modality_shares(*a, cfg);
    CHECK(std::abs(s.image + s.series - total) < 1e-12);
  }
}

TEST_CASE("heatmap rendering") {
  auto cfg = small_cfg();
  cfg.image_width = 32;  // strip width 2
  cfg.image_height = 8;
  cfg.frames = 2;
  const std::size_t n = cfg.patches_per_frame();
  REQUIRE(n == 16);
  CHECK(series_strip_width(cfg) == 2);

  Attribution flat{std::vector<double>(2 * n + 1, 1.0 / (2 * n + 1)), false};
  const auto gray = render_heatmap(flat, cfg);
  CHECK(gray.width == 2 * 32 + 2);
  CHECK(gray.height == 8);
  for (auto v : gray.data) CHECK(v == 128);

  // One-hot on patch 5 of frame 1.
  Attribution hot{std::vector<double>(2 * n + 1, 0.0), false};
  hot.weights[n + 5] = 1.0;
  const auto img = render_heatmap(hot, cfg);
  const auto r = patch_rect(cfg, 5);
  std::size_t lit = 0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const bool inside = y >= r.y0 && y < r.y0 + r.height && x >= 32 + r.x0 && x < 32 + r.x0 + r.width;
      CHECK(img.data[y * img.width + x] == (inside ? 255 : 0));
      lit += inside;
    }
  CHECK(lit == r.height * r.width);

  Attribution series_hot{std::vector<double>(2 * n + 1, 0.0), false};
  series_hot.weights.back() = 1.0;
  const auto s = render_heatmap(series_hot, cfg);
  CHECK(s.data[0 * s.width + 64] == 255);
  CHECK(s.data[7 * s.width + 65] == 255);
  CHECK(s.data[7 * s.width + 63] == 0);

  CHECK_THROWS_AS(render_heatmap(Attribution{{1.0}, false}, cfg), DimensionError);

  const std::string dir = testutil::temp_dir("attention");
  Rng rng(73);
  Attribution rnd{std::vector<double>(2 * n + 1), false};
  double total = 0;
  for (auto& w : rnd.weights) total += w = rng.uniform(0, 1);
  for (auto& w : rnd.weights) w /= total;
  export_heatmap(rnd, cfg, dir + "/h.pgm", dir + "/h.csv");
  const auto back = read_pgm(dir + "/h.pgm");
  CHECK(back.width == 66);
  std::ifstream csv(dir + "/h.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "token_index,kind,weight");
  double sum = 0;
  std::size_t rows = 0, series_rows = 0;
  while (std::getline(csv, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    sum += std::stod(line.substr(c2 + 1));
    series_rows += line.substr(c1 + 1, c2 - c1 - 1) == "series";
    ++rows;
  }
  CHECK(rows == 2 * n + 1);
  CHECK(series_rows == 1);
  CHECK(std::abs(sum - 1) < 1e-9);
}
