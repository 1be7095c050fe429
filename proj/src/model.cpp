#include "smt/model.hpp"

#include <cmath>

#include "smt/error.hpp"
#include "smt/ops.hpp"
#include "smt/random.hpp"

namespace smt {
namespace {

constexpr Real kInitStd = 0.02;

bool all_finite(const std::vector<Real>& v) {
  for (auto x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

const char* to_string(PatchKind kind) {
  switch (kind) {
    case PatchKind::square: return "square";
    case PatchKind::row: return "row";
    case PatchKind::column: return "column";
  }
  return "?";
}

const char* to_string(Pillars pillars) {
  switch (pillars) {
    case Pillars::both: return "both";
    case Pillars::image_only: return "image_only";
    case Pillars::ts_only: return "ts_only";
  }
  return "?";
}

PatchKind parse_patch_kind(const std::string& text) {
  if (text == "square") return PatchKind::square;
  if (text == "row") return PatchKind::row;
  if (text == "column") return PatchKind::column;
  throw ConfigError("unknown patch shape '" + text + "' (expected square, row or column)");
}

Pillars parse_pillars(const std::string& text) {
  if (text == "both") return Pillars::both;
  if (text == "image_only") return Pillars::image_only;
  if (text == "ts_only") return Pillars::ts_only;
  throw ConfigError("unknown pillars '" + text + "' (expected both, image_only or ts_only)");
}

// ---------------------------------------------------------------------------
// SmtConfig

std::size_t SmtConfig::patch_height() const {
  switch (patch_kind) {
    case PatchKind::square: return patch_size;
    case PatchKind::row: return 1;
    case PatchKind::column: return image_height;
  }
  return 0;
}

std::size_t SmtConfig::patch_width() const {
  switch (patch_kind) {
    case PatchKind::square: return patch_size;
    case PatchKind::row: return image_width;
    case PatchKind::column: return 1;
  }
  return 0;
}

std::size_t SmtConfig::patches_per_frame() const {
  return (image_height / patch_height()) * (image_width / patch_width());
}

std::size_t SmtConfig::patch_dim() const { return patch_height() * patch_width() * channels; }

void SmtConfig::validate() const {
  if (image_height == 0 || image_width == 0 || channels == 0) {
    throw ConfigError("image dimensions must be positive");
  }
  if (patch_kind == PatchKind::square) {
    if (patch_size == 0) throw ConfigError("patch size must be positive");
    if (image_height % patch_size != 0 || image_width % patch_size != 0) {
      throw ConfigError("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                        " is not divisible into " + std::to_string(patch_size) + "x" +
                        std::to_string(patch_size) + " patches");
    }
  }
  if (embed_dim == 0 || heads == 0) throw ConfigError("embed_dim and heads must be positive");
  if (embed_dim % heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (layers == 0) throw ConfigError("at least one encoder layer is required");
  if (mlp_ratio == 0) throw ConfigError("mlp_ratio must be positive");
  if (uses_image() && (frames < 1 || frames > 3)) {
    throw ConfigError("frames must be 1, 2 or 3, got " + std::to_string(frames));
  }
  if (uses_series()) {
    if (ts_count == 0) throw ConfigError("the time-series pillar needs ts_count >= 1");
    if (ts_len == 0) throw ConfigError("ts_len must be positive");
  }
}

void SmtConfig::write(KeyValues& kv) const {
  kv.set("image_height", image_height);
  kv.set("image_width", image_width);
  kv.set("channels", channels);
  kv.set("patch_shape", to_string(patch_kind));
  kv.set("patch_size", patch_size);
  kv.set("ts_count", ts_count);
  kv.set("window_len", ts_len);
  kv.set("embed_dim", embed_dim);
  kv.set("layers", layers);
  kv.set("heads", heads);
  kv.set("mlp_ratio", mlp_ratio);
  kv.set("frames", frames);
  kv.set("pillars", to_string(pillars));
  kv.set("final_layer_norm", final_layer_norm);
}

SmtConfig SmtConfig::read(const KeyValues& kv) {
  SmtConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(std::string("config key '") + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.image_height = size("image_height", c.image_height);
  c.image_width = size("image_width", c.image_width);
  c.channels = size("channels", c.channels);
  c.patch_kind = parse_patch_kind(kv.get_string("patch_shape", to_string(c.patch_kind)));
  c.patch_size = size("patch_size", c.patch_size);
  c.ts_count = size("ts_count", c.ts_count);
  c.ts_len = size("window_len", c.ts_len);
  c.embed_dim = size("embed_dim", c.embed_dim);
  c.layers = size("layers", c.layers);
  c.heads = size("heads", c.heads);
  c.mlp_ratio = size("mlp_ratio", c.mlp_ratio);
  c.frames = size("frames", c.frames);
  c.pillars = parse_pillars(kv.get_string("pillars", to_string(c.pillars)));
  c.final_layer_norm = kv.get_bool("final_layer_norm", c.final_layer_norm);
  return c;
}

// ---------------------------------------------------------------------------
// Patches

PatchRect patch_rect(const SmtConfig& cfg, std::size_t index) {
  const std::size_t a = cfg.patch_height(), b = cfg.patch_width();
  const std::size_t per_row = cfg.image_width / b;
  return {(index / per_row) * a, (index % per_row) * b, a, b};
}

Tensor patchify(const Image& image, const SmtConfig& cfg) {
  if (image.height != cfg.image_height || image.width != cfg.image_width ||
      image.channels != cfg.channels) {
    throw DimensionError("patchify: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + "x" + std::to_string(image.channels) +
                         " does not match configured " + std::to_string(cfg.image_height) + "x" +
                         std::to_string(cfg.image_width) + "x" + std::to_string(cfg.channels));
  }
  if (image.height % cfg.patch_height() != 0 || image.width % cfg.patch_width() != 0) {
    throw ConfigError("patchify: image is not divisible into patches");
  }
  const std::size_t n = cfg.patches_per_frame(), dim = cfg.patch_dim();
  const std::size_t c = image.channels;
  Tensor out({n, dim});
  for (std::size_t p = 0; p < n; ++p) {
    const PatchRect r = patch_rect(cfg, p);
    Real* dst = out.values.data() + p * dim;
    for (std::size_t y = 0; y < r.height; ++y) {
      const Real* src = image.pixels.data() + ((r.y0 + y) * image.width + r.x0) * c;
      std::copy_n(src, r.width * c, dst + y * r.width * c);
    }
  }
  return out;
}

Image unpatchify(const Tensor& patches, const SmtConfig& cfg) {
  const std::size_t n = cfg.patches_per_frame(), dim = cfg.patch_dim();
  if (patches.shape != Shape{n, dim}) {
    throw DimensionError("unpatchify: expected " + shape_to_string({n, dim}) + ", got " +
                         shape_to_string(patches.shape));
  }
  Image image(cfg.image_height, cfg.image_width, cfg.channels);
  const std::size_t c = cfg.channels;
  for (std::size_t p = 0; p < n; ++p) {
    const PatchRect r = patch_rect(cfg, p);
    const Real* src = patches.values.data() + p * dim;
    for (std::size_t y = 0; y < r.height; ++y) {
      std::copy_n(src + y * r.width * c, r.width * c,
                  image.pixels.data() + ((r.y0 + y) * image.width + r.x0) * c);
    }
  }
  return image;
}

Real image_type_value(const SmtConfig& cfg, std::size_t frame) {
  // Frame 0 uses the zero vector; older frames step away from the series
  // constant in the negative direction so no two modalities coincide.
  return -static_cast<Real>(frame) / std::sqrt(static_cast<Real>(cfg.embed_dim));
}

Real series_type_value(const SmtConfig& cfg) {
  return Real{1} / std::sqrt(static_cast<Real>(cfg.embed_dim));
}

// ---------------------------------------------------------------------------
// Parameters

std::vector<Parameter> SmtModel::layout(const SmtConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim, hidden = cfg.embed_dim * cfg.mlp_ratio;
  std::vector<Parameter> out;
  auto add = [&](std::string name, Shape shape, bool decay) {
    out.push_back(Parameter{std::move(name), Tensor(std::move(shape)), decay});
  };
  if (cfg.uses_image()) {
    add("patch_embed.weight", {cfg.patch_dim(), d}, true);
    add("patch_embed.bias", {d}, false);
    add("pos_embed.image", {cfg.image_tokens(), d}, false);
  }
  if (cfg.uses_series()) {
    add("series_embed.weight", {cfg.ts_len, d}, true);
    add("series_embed.bias", {d}, false);
    add("pos_embed.series", {cfg.series_tokens(), d}, false);
  }
  add("prediction_token", {d}, false);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    add(p + "ln1.gamma", {d}, false);
    add(p + "ln1.beta", {d}, false);
    add(p + "attn.q.weight", {d, d}, true);
    add(p + "attn.q.bias", {d}, false);
    add(p + "attn.k.weight", {d, d}, true);
    add(p + "attn.k.bias", {d}, false);
    add(p + "attn.v.weight", {d, d}, true);
    add(p + "attn.v.bias", {d}, false);
    add(p + "attn.out.weight", {d, d}, true);
    add(p + "attn.out.bias", {d}, false);
    add(p + "ln2.gamma", {d}, false);
    add(p + "ln2.beta", {d}, false);
    add(p + "mlp.fc1.weight", {d, hidden}, true);
    add(p + "mlp.fc1.bias", {hidden}, false);
    add(p + "mlp.fc2.weight", {hidden, d}, true);
    add(p + "mlp.fc2.bias", {d}, false);
  }
  if (cfg.final_layer_norm) {
    add("final_ln.gamma", {d}, false);
    add("final_ln.beta", {d}, false);
  }
  add("head.weight", {d, 1}, true);
  add("head.bias", {1}, false);
  return out;
}

std::size_t count_params(const SmtConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim, hidden = d * cfg.mlp_ratio;
  std::size_t n = 0;
  if (cfg.uses_image()) n += cfg.patch_dim() * d + d + cfg.image_tokens() * d;
  if (cfg.uses_series()) n += cfg.ts_len * d + d + cfg.series_tokens() * d;
  n += d;
  const std::size_t per_block = 2 * d + 4 * (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
  n += cfg.layers * per_block;
  if (cfg.final_layer_norm) n += 2 * d;
  n += d + 1;
  return n;
}

SmtModel::SmtModel(const SmtConfig& cfg, std::uint64_t seed) : cfg_(cfg), params_(layout(cfg)) {
  Rng rng(seed);
  for (auto& p : params_) {
    const bool is_gain = p.name.ends_with(".gamma");
    const bool is_shift = p.name.ends_with(".bias") || p.name.ends_with(".beta");
    for (auto& v : p.value.values) {
      if (is_gain) {
        v = 1;
      } else if (is_shift) {
        v = 0;
      } else {
        v = rng.normal(0.0, kInitStd);
      }
    }
  }
  index_parameters();
}

SmtModel::SmtModel(const SmtConfig& cfg, std::vector<Parameter> params) : cfg_(cfg) {
  auto expected = layout(cfg);
  if (params.size() != expected.size()) {
    throw DimensionError("model expects " + std::to_string(expected.size()) + " parameter arrays, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name || params[i].value.shape != expected[i].value.shape) {
      throw DimensionError("parameter " + std::to_string(i) + ": expected " + expected[i].name + " " +
                           shape_to_string(expected[i].value.shape) + ", got " + params[i].name + " " +
                           shape_to_string(params[i].value.shape));
    }
    params[i].decay = expected[i].decay;
  }
  params_ = std::move(params);
  index_parameters();
}

void SmtModel::index_parameters() {
  auto find = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    throw ContractError("missing parameter " + name);
  };
  if (cfg_.uses_image()) {
    patch_w_ = find("patch_embed.weight");
    patch_b_ = find("patch_embed.bias");
    pos_img_ = find("pos_embed.image");
  }
  if (cfg_.uses_series()) {
    ts_w_ = find("series_embed.weight");
    ts_b_ = find("series_embed.bias");
    pos_ts_ = find("pos_embed.series");
  }
  pred_token_ = find("prediction_token");
  blocks_.clear();
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    blocks_.push_back(BlockIndex{
        find(p + "ln1.gamma"), find(p + "ln1.beta"), find(p + "attn.q.weight"), find(p + "attn.q.bias"),
        find(p + "attn.k.weight"), find(p + "attn.k.bias"), find(p + "attn.v.weight"),
        find(p + "attn.v.bias"), find(p + "attn.out.weight"), find(p + "attn.out.bias"),
        find(p + "ln2.gamma"), find(p + "ln2.beta"), find(p + "mlp.fc1.weight"),
        find(p + "mlp.fc1.bias"), find(p + "mlp.fc2.weight"), find(p + "mlp.fc2.bias")});
  }
  if (cfg_.final_layer_norm) {
    final_g_ = find("final_ln.gamma");
    final_b_ = find("final_ln.beta");
  }
  head_w_ = find("head.weight");
  head_b_ = find("head.bias");
}

Parameter& SmtModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named " + name);
}

const Parameter& SmtModel::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ContractError("no parameter named " + name);
}

std::size_t SmtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void SmtModel::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

// ---------------------------------------------------------------------------
// Forward

void SmtModel::check_input(const ModelInput& input) const {
  if (cfg_.uses_image()) {
    if (input.frames.size() != cfg_.frames) {
      throw DimensionError("model expects " + std::to_string(cfg_.frames) + " frame(s), got " +
                           std::to_string(input.frames.size()));
    }
    for (const auto& f : input.frames) {
      if (!f) throw ContractError("model input frame is missing");
    }
  }
  if (cfg_.uses_series()) {
    const Shape want{cfg_.ts_count, cfg_.ts_len};
    if (input.series.shape != want) {
      throw DimensionError("series input " + shape_to_string(input.series.shape) + " does not match " +
                           shape_to_string(want));
    }
    if (!all_finite(input.series.values)) throw NumericError("series input contains non-finite values");
  }
}

Var SmtModel::forward(Graph& g, const ModelInput& input, AttentionNodes* attention, Var* embedded) {
  check_input(input);
  const std::size_t d = cfg_.embed_dim;
  std::vector<Var> pv(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) pv[i] = g.parameter(params_[i].value);

  std::vector<Var> parts;
  parts.push_back(reshape(g, pv[pred_token_], {1, d}));

  if (cfg_.uses_image()) {
    std::vector<Var> frame_tokens;
    for (const auto& frame : input.frames) {
      Var patches = g.constant(patchify(*frame, cfg_));
      frame_tokens.push_back(add_bias(g, matmul(g, patches, pv[patch_w_]), pv[patch_b_]));
    }
    Var img = frame_tokens.size() == 1 ? frame_tokens[0] : concat(g, frame_tokens);
    img = add(g, img, pv[pos_img_]);
    const std::size_t n = cfg_.patches_per_frame();
    Tensor types({cfg_.image_tokens(), d});
    for (std::size_t f = 0; f < cfg_.frames; ++f) {
      const Real t = image_type_value(cfg_, f);
      std::fill_n(types.values.begin() + static_cast<std::ptrdiff_t>(f * n * d), n * d, t);
    }
    parts.push_back(add(g, img, g.constant(std::move(types))));
  }

  if (cfg_.uses_series()) {
    Var series = g.constant(input.series);
    Var ts = add_bias(g, matmul(g, series, pv[ts_w_]), pv[ts_b_]);
    ts = add(g, ts, pv[pos_ts_]);
    parts.push_back(add(g, ts, g.constant(Tensor::filled({cfg_.ts_count, d}, series_type_value(cfg_)))));
  }

  Var z = concat(g, parts);
  if (embedded) *embedded = z;

  const std::size_t heads = cfg_.heads, hd = cfg_.head_dim();
  const Real inv_sqrt = Real{1} / std::sqrt(static_cast<Real>(hd));
  if (attention) attention->assign(cfg_.layers, {});

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const BlockIndex& b = blocks_[l];
    Var h = layer_norm(g, z, pv[b.ln1_g], pv[b.ln1_b]);
    Var q = add_bias(g, matmul(g, h, pv[b.wq]), pv[b.bq]);
    Var k = add_bias(g, matmul(g, h, pv[b.wk]), pv[b.bk]);
    Var v = add_bias(g, matmul(g, h, pv[b.wv]), pv[b.bv]);
    std::vector<Var> head_out;
    for (std::size_t hh = 0; hh < heads; ++hh) {
      Var qh = slice_cols(g, q, hh * hd, hd);
      Var kh = slice_cols(g, k, hh * hd, hd);
      Var vh = slice_cols(g, v, hh * hd, hd);
      Var scores = scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt);
      Var probs = softmax_lastdim(g, scores);
      if (attention) (*attention)[l].push_back(probs);
      head_out.push_back(matmul(g, probs, vh));
    }
    Var o = heads == 1 ? head_out[0] : concat_cols(g, head_out);
    o = add_bias(g, matmul(g, o, pv[b.wo]), pv[b.bo]);
    Var z_mid = add(g, z, o);

    Var h2 = layer_norm(g, z_mid, pv[b.ln2_g], pv[b.ln2_b]);
    Var m = gelu(g, add_bias(g, matmul(g, h2, pv[b.w1]), pv[b.b1]));
    m = add_bias(g, matmul(g, m, pv[b.w2]), pv[b.b2]);
    z = add(g, z_mid, m);

    if (!all_finite(g.value(z).values)) {
      throw NumericError("non-finite activation in encoder layer " + std::to_string(l + 1));
    }
  }

  if (cfg_.final_layer_norm) z = layer_norm(g, z, pv[final_g_], pv[final_b_]);
  Var cls = slice_rows(g, z, 0, 1);
  Var y = add_bias(g, matmul(g, cls, pv[head_w_]), pv[head_b_]);
  return reshape(g, y, {1});
}

Real SmtModel::predict(const ModelInput& input) {
  Graph g;
  return g.value(forward(g, input)).values[0];
}

Real SmtModel::predict_with_trace(const ModelInput& input, AttentionTrace& trace) {
  Graph g;
  g.set_accumulate_parameters(false);
  AttentionNodes nodes;
  Var y = forward(g, input, &nodes);
  g.backward(y);

  const std::size_t t = cfg_.sequence_length();
  trace.layers = cfg_.layers;
  trace.heads = cfg_.heads;
  trace.tokens = t;
  trace.attention.assign(trace.layers * trace.heads * t * t, Real{0});
  trace.gradient.assign(trace.attention.size(), Real{0});
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      const auto& a = g.value(nodes[l][h]).values;
      const auto grad = g.grad(nodes[l][h]);
      std::copy(a.begin(), a.end(), trace.attention.begin() + static_cast<std::ptrdiff_t>(trace.index(l, h, 0, 0)));
      std::copy(grad.begin(), grad.end(), trace.gradient.begin() + static_cast<std::ptrdiff_t>(trace.index(l, h, 0, 0)));
    }
  }
  return g.value(y).values[0];
}

bool AttentionTrace::complete() const {
  const std::size_t n = layers * heads * tokens * tokens;
  return n > 0 && attention.size() == n && gradient.size() == n;
}

}  // namespace smt
