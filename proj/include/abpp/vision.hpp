#pragma once

#include <string>
#include <vector>

#include "abpp/charset.hpp"
#include "abpp/conv_ops.hpp"
#include "abpp/nn.hpp"
#include "abpp/render.hpp"

namespace abpp {

// How the backbone features are sequence-modeled before decoding: a pair of
// extra residual conv blocks, or a small transformer over the flattened map.
enum class SmnKind { conv, transformer };

struct VisionConfig {
  Index d = 32;    // feature width; divisible by 4 and by the head counts
  Index t_max = 8; // symbols per image; the canvas is 16 x (8 * t_max)

  SmnKind smn = SmnKind::conv;
  int smn_layers = 2;  // depth of the transformer variant
  int smn_heads = 4;

  // Key path: a small U-shaped encoder/decoder over the feature map, with an
  // optional transformer over its coarsest (single-row) level.
  bool use_hfa = false;
  int hfa_layers = 1;
  int hfa_heads = 4;

  // Decoder queries: position encodings, optionally content-enriched and
  // refined over several attention iterations (every iteration is scored).
  int attention_iterations = 1;
  bool content_queries = false;

  double dropout = 0.0;

  Index positions() const { return t_max + 1; }  // one slot beyond the last symbol
  Index canvas_h() const { return 16; }
  Index canvas_w() const { return 8 * t_max; }
  Index map_h() const { return 4; }             // canvas_h / 4
  Index map_w() const { return 2 * t_max; }     // canvas_w / 4

  void validate() const;
};

struct VisionOutput {
  Tensor features;                  // positions x d, the final attended map
  Tensor logits;                    // positions x classes, final iteration
  std::vector<Tensor> iter_logits;  // one entry per attention iteration
  MatX<double> attention;           // positions x (map_h * map_w), final weights
};

// Renders class predictions straight from pixels: a residual conv backbone
// (4x spatial reduction), the sequence-model stage, a U-shaped key extractor,
// and parameter-free scaled dot-product decoding from position queries.
class VisionModel {
 public:
  VisionModel() = default;
  VisionModel(VisionConfig cfg, const Charset& cs, Rng& rng);

  // `image` is {16, 8 * t_max, 1} with values in [0, 1].
  VisionOutput forward(const Tensor& image, Rng* drop = nullptr) const;

  // Evaluation mode: no dropout, no gradients, softmaxed rows.
  ProbSequence predict(const MatX<double>& pixels) const;

  void params(Params& out, const std::string& prefix = "vision") const;
  Index param_count() const;

  const VisionConfig& config() const { return cfg_; }
  const Charset& charset() const { return cs_; }

 private:
  struct ResBlock {
    Tensor w1, b1, w2, b2;  // two 3x3 convs
    Tensor wp, bp;          // 1x1 projection for the skip when shape changes
    Index stride = 1;
    bool has_proj = false;

    ResBlock() = default;
    ResBlock(Index cin, Index cout, Index stride, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void params(Params& out, const std::string& prefix) const;
  };

  struct StridedConv {
    Tensor w, b;
    Index sh = 1, sw = 1;

    StridedConv() = default;
    StridedConv(Index cin, Index cout, Index sh, Index sw, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void params(Params& out, const std::string& prefix) const;
  };

  Tensor run_smn(Tensor x, Rng* drop) const;   // {4, map_w, d} -> same shape
  Tensor run_keys(Tensor x, Rng* drop) const;  // {4, map_w, d} -> same shape

  VisionConfig cfg_;
  Charset cs_;
  std::vector<ResBlock> backbone_;
  std::vector<ResBlock> smn_conv_;
  std::vector<TransformerEncoderLayer> smn_tf_;
  std::vector<StridedConv> enc_;
  std::vector<StridedConv> dec_;
  std::vector<TransformerEncoderLayer> hfa_;
  Tensor content_table_;  // positions x d (content-enriched queries only)
  Linear content_proj_;
  Linear cls_;
};

}  // namespace abpp
