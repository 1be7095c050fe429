#pragma once

#include <string>
#include <vector>

#include "smt/image.hpp"
#include "smt/model.hpp"

namespace smt {

/// Per-token attribution over the non-prediction tokens (image tokens first,
/// then series tokens), summing to one unless `degenerate`.
struct Attribution {
  std::vector<double> weights;
  /// All mass stayed on the prediction token; `weights` is all zeros.
  bool degenerate = false;
};

/// Head-averaged attention of the prediction-token query in the last layer,
/// restricted to the other tokens and renormalized.
Attribution last_layer_attention(const AttentionTrace& trace);

/// Row-stochastic relevance matrix of one layer:
///   normalize_rows(I + mean_heads(relu(G * A)))
/// Returned row-major, tokens x tokens.
std::vector<double> rollout_layer(const AttentionTrace& trace, std::size_t layer);

/// Gradient-weighted attention rollout. With Abar_l = rollout_layer(l),
/// R = Abar_L ... Abar_1 and the result is row 0 of R over the other tokens,
/// renormalized. When `stages` is given it receives the running product
/// after each layer.
Attribution weighted_rollout(const AttentionTrace& trace, std::vector<std::vector<double>>* stages = nullptr);

/// Share of attribution on image tokens vs series tokens.
struct ModalityShares {
  double image = 0;
  double series = 0;
};
ModalityShares modality_shares(const Attribution& attribution, const SmtConfig& cfg);

/// Paints an attribution onto the image geometry: frames side by side, each
/// token filling the pixels of its patch, followed by one vertical strip per
/// series token. Values are min-max scaled to 0..255 (constant input maps to
/// mid-gray).
RawImage render_heatmap(const Attribution& attribution, const SmtConfig& cfg);

/// Width in pixels of one appended series strip.
std::size_t series_strip_width(const SmtConfig& cfg);

/// Writes the heatmap as PGM and the weights as `token_index,kind,weight`.
RawImage export_heatmap(const Attribution& attribution, const SmtConfig& cfg, const std::string& pgm_path,
                        const std::string& csv_path);

}  // namespace smt
