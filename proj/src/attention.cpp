#include "smt/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "smt/config.hpp"
#include "smt/error.hpp"

namespace smt {
namespace {

void require_trace(const AttentionTrace& trace, bool need_gradient) {
  const std::size_t n = trace.layers * trace.heads * trace.tokens * trace.tokens;
  if (n == 0 || trace.attention.size() != n || (need_gradient && trace.gradient.size() != n)) {
    throw ContractError("attention trace is missing or incomplete");
  }
  if (trace.tokens < 2) throw ContractError("attention trace has no tokens besides the prediction token");
}

Attribution renormalized_tail(const double* row, std::size_t tokens) {
  Attribution out;
  out.weights.assign(row + 1, row + tokens);
  double total = 0;
  for (auto w : out.weights) total += w;
  if (!(total > 0)) {
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    out.degenerate = true;
    return out;
  }
  for (auto& w : out.weights) w /= total;
  return out;
}

}  // namespace

Attribution last_layer_attention(const AttentionTrace& trace) {
  require_trace(trace, false);
  const std::size_t t = trace.tokens, l = trace.layers - 1;
  std::vector<double> row(t, 0.0);
  for (std::size_t h = 0; h < trace.heads; ++h)
    for (std::size_t k = 0; k < t; ++k) row[k] += trace.a(l, h, 0, k);
  for (auto& v : row) v /= static_cast<double>(trace.heads);
  return renormalized_tail(row.data(), t);
}

std::vector<double> rollout_layer(const AttentionTrace& trace, std::size_t layer) {
  require_trace(trace, true);
  if (layer >= trace.layers) throw ContractError("rollout_layer: layer out of range");
  const std::size_t t = trace.tokens;
  std::vector<double> m(t * t, 0.0);
  for (std::size_t h = 0; h < trace.heads; ++h)
    for (std::size_t q = 0; q < t; ++q)
      for (std::size_t k = 0; k < t; ++k)
        m[q * t + k] += std::max(0.0, trace.g(layer, h, q, k) * trace.a(layer, h, q, k));
  const double inv_heads = 1.0 / static_cast<double>(trace.heads);
  for (std::size_t q = 0; q < t; ++q) {
    double total = 0;
    for (std::size_t k = 0; k < t; ++k) {
      double& v = m[q * t + k];
      v = v * inv_heads + (q == k ? 1.0 : 0.0);
      total += v;
    }
    for (std::size_t k = 0; k < t; ++k) m[q * t + k] /= total;
  }
  return m;
}

Attribution weighted_rollout(const AttentionTrace& trace, std::vector<std::vector<double>>* stages) {
  require_trace(trace, true);
  const std::size_t t = trace.tokens;
  std::vector<double> r(t * t, 0.0);
  for (std::size_t i = 0; i < t; ++i) r[i * t + i] = 1.0;
  if (stages) stages->clear();
  std::vector<double> next(t * t);
  for (std::size_t l = 0; l < trace.layers; ++l) {
    const auto a = rollout_layer(trace, l);
    // next = a * r
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < t; ++k) s += a[i * t + k] * r[k * t + j];
        next[i * t + j] = s;
      }
    }
    r.swap(next);
    if (stages) stages->push_back(r);
  }
  return renormalized_tail(r.data(), t);
}

ModalityShares modality_shares(const Attribution& attribution, const SmtConfig& cfg) {
  const std::size_t img = cfg.image_tokens();
  if (attribution.weights.size() != img + cfg.series_tokens()) {
    throw DimensionError("attribution length does not match the model's token count");
  }
  ModalityShares s;
  for (std::size_t i = 0; i < attribution.weights.size(); ++i) {
    (i < img ? s.image : s.series) += attribution.weights[i];
  }
  return s;
}

std::size_t series_strip_width(const SmtConfig& cfg) { return std::max<std::size_t>(1, cfg.image_width / 16); }

RawImage render_heatmap(const Attribution& attribution, const SmtConfig& cfg) {
  const std::size_t n = cfg.patches_per_frame();
  const std::size_t img_tokens = cfg.image_tokens();
  const std::size_t ts_tokens = cfg.series_tokens();
  const auto& w = attribution.weights;
  if (w.size() != img_tokens + ts_tokens) {
    throw DimensionError("heatmap: attribution has " + std::to_string(w.size()) + " entries, expected " +
                         std::to_string(img_tokens + ts_tokens));
  }
  const std::size_t strip = series_strip_width(cfg);
  const std::size_t frame_w = cfg.image_width;
  RawImage out;
  out.height = cfg.image_height;
  out.width = cfg.frames_used() * frame_w + ts_tokens * strip;
  out.channels = 1;
  out.data.assign(out.height * out.width, 0);
  if (w.empty()) return out;

  const auto [lo_it, hi_it] = std::minmax_element(w.begin(), w.end());
  const double lo = *lo_it, hi = *hi_it;
  auto level = [&](double v) -> std::uint8_t {
    if (!(hi > lo)) return 128;
    return static_cast<std::uint8_t>(std::lround(255.0 * (v - lo) / (hi - lo)));
  };

  for (std::size_t i = 0; i < img_tokens; ++i) {
    const std::size_t frame = i / n;
    const PatchRect r = patch_rect(cfg, i % n);
    const std::uint8_t v = level(w[i]);
    for (std::size_t y = r.y0; y < r.y0 + r.height; ++y)
      for (std::size_t x = r.x0; x < r.x0 + r.width; ++x) out.data[y * out.width + frame * frame_w + x] = v;
  }
  for (std::size_t j = 0; j < ts_tokens; ++j) {
    const std::uint8_t v = level(w[img_tokens + j]);
    const std::size_t x0 = cfg.frames_used() * frame_w + j * strip;
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = x0; x < x0 + strip; ++x) out.data[y * out.width + x] = v;
  }
  return out;
}

RawImage export_heatmap(const Attribution& attribution, const SmtConfig& cfg, const std::string& pgm_path,
                        const std::string& csv_path) {
  RawImage img = render_heatmap(attribution, cfg);
  write_pgm(pgm_path, img);
  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write attribution CSV '" + csv_path + "'");
  out << "token_index,kind,weight\n";
  for (std::size_t i = 0; i < attribution.weights.size(); ++i) {
    out << i << ',' << (i < cfg.image_tokens() ? "image" : "series") << ',' << format_real(attribution.weights[i])
        << '\n';
  }
  if (!out) throw IoError("failed writing attribution CSV '" + csv_path + "'");
  return img;
}

}  // namespace smt
