#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "smt/config.hpp"
#include "smt/graph.hpp"
#include "smt/image.hpp"

namespace smt {

enum class PatchKind { square, row, column };
enum class Pillars { both, image_only, ts_only };

const char* to_string(PatchKind kind);
const char* to_string(Pillars pillars);
PatchKind parse_patch_kind(const std::string& text);
Pillars parse_pillars(const std::string& text);

/// Hyperparameters of the multimodal transformer.
struct SmtConfig {
  std::size_t image_height = 224;
  std::size_t image_width = 224;
  std::size_t channels = 3;
  PatchKind patch_kind = PatchKind::square;
  std::size_t patch_size = 16;  // side of a square patch
  std::size_t ts_count = 1;     // M
  std::size_t ts_len = 144;     // S
  std::size_t embed_dim = 192;  // D
  std::size_t layers = 3;
  std::size_t heads = 6;
  std::size_t mlp_ratio = 4;
  std::size_t frames = 1;       // F
  Pillars pillars = Pillars::both;
  bool final_layer_norm = false;

  void validate() const;

  bool uses_image() const { return pillars != Pillars::ts_only; }
  bool uses_series() const { return pillars != Pillars::image_only; }

  /// Patch extent (rows x cols) in pixels.
  std::size_t patch_height() const;
  std::size_t patch_width() const;
  std::size_t patches_per_frame() const;  // N
  std::size_t patch_dim() const;          // a*b*C
  std::size_t image_tokens() const { return uses_image() ? frames * patches_per_frame() : 0; }
  std::size_t series_tokens() const { return uses_series() ? ts_count : 0; }
  std::size_t sequence_length() const { return 1 + image_tokens() + series_tokens(); }
  std::size_t head_dim() const { return embed_dim / heads; }
  /// Number of frames actually consumed.
  std::size_t frames_used() const { return uses_image() ? frames : 0; }

  void write(KeyValues& kv) const;
  static SmtConfig read(const KeyValues& kv);

  bool operator==(const SmtConfig&) const = default;
};

/// One named learnable array.
struct Parameter {
  std::string name;
  Tensor value;
  bool decay = true;  // subject to decoupled weight decay
};

/// Model input for one sample.
struct ModelInput {
  /// Oldest first, each image_height x image_width x channels. Shared so
  /// overlapping samples reuse decoded frames.
  std::vector<std::shared_ptr<const Image>> frames;
  Tensor series;              // [M x S], normalized scale
};

/// Attention probabilities and their gradients w.r.t. the prediction.
struct AttentionTrace {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t tokens = 0;
  std::vector<Real> attention;  // [layers][heads][tokens][tokens]
  std::vector<Real> gradient;   // same layout

  std::size_t index(std::size_t l, std::size_t h, std::size_t q, std::size_t k) const {
    return ((l * heads + h) * tokens + q) * tokens + k;
  }
  Real a(std::size_t l, std::size_t h, std::size_t q, std::size_t k) const { return attention[index(l, h, q, k)]; }
  Real g(std::size_t l, std::size_t h, std::size_t q, std::size_t k) const { return gradient[index(l, h, q, k)]; }
  bool complete() const;
};

/// Splits an image into flattened patches, row-major over the patch grid;
/// each patch is flattened row by row, channel-last. Result is [N x a*b*C].
Tensor patchify(const Image& image, const SmtConfig& cfg);
/// Inverse of patchify.
Image unpatchify(const Tensor& patches, const SmtConfig& cfg);

/// Pixel rectangle covered by patch `index` of one frame.
struct PatchRect {
  std::size_t y0, x0, height, width;
};
PatchRect patch_rect(const SmtConfig& cfg, std::size_t index);

/// Fixed modality-type constant added to every coordinate of a token.
Real image_type_value(const SmtConfig& cfg, std::size_t frame);
Real series_type_value(const SmtConfig& cfg);

/// Closed-form number of learnable scalars.
std::size_t count_params(const SmtConfig& cfg);

/// Multimodal early-fusion transformer regressor.
///
/// Sequence layout: [prediction token; F*N image tokens (frame-major);
/// M series tokens]. Each block is pre-norm:
///   z' = MSA(LN(z)) + z,   z = MLP(LN(z')) + z'
/// and the output is the prediction token of the last block times V plus a
/// bias (no final norm unless `final_layer_norm` is set).
class SmtModel {
 public:
  /// Parameters drawn from N(0, 0.02^2); biases and LN shifts zero, LN gains one.
  SmtModel(const SmtConfig& cfg, std::uint64_t seed);
  /// Adopts existing parameters; names and shapes must match the layout of `cfg`.
  SmtModel(const SmtConfig& cfg, std::vector<Parameter> params);

  const SmtConfig& config() const { return cfg_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Per-layer, per-head attention-probability nodes of one forward pass.
  using AttentionNodes = std::vector<std::vector<Var>>;

  /// Builds the forward pass of one sample in `g`; returns a [1] prediction.
  /// `embedded`, when given, receives the token sequence entering the first
  /// block. Throws NumericError naming the layer when activations go non-finite.
  Var forward(Graph& g, const ModelInput& input, AttentionNodes* attention = nullptr, Var* embedded = nullptr);

  /// Prediction on the normalized scale.
  Real predict(const ModelInput& input);
  /// Prediction plus attention maps and d(prediction)/d(attention).
  Real predict_with_trace(const ModelInput& input, AttentionTrace& trace);

  void zero_grad();

  /// Layout (names, shapes, decay flags) of the parameter list for `cfg`,
  /// in canonical declaration order.
  static std::vector<Parameter> layout(const SmtConfig& cfg);

 private:
  void index_parameters();
  void check_input(const ModelInput& input) const;

  struct BlockIndex {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  SmtConfig cfg_;
  std::vector<Parameter> params_;
  std::size_t patch_w_ = 0, patch_b_ = 0, pos_img_ = 0;
  std::size_t ts_w_ = 0, ts_b_ = 0, pos_ts_ = 0;
  std::size_t pred_token_ = 0, head_w_ = 0, head_b_ = 0;
  std::size_t final_g_ = 0, final_b_ = 0;
  std::vector<BlockIndex> blocks_;
};

}  // namespace smt
