#include "abpp/vision.hpp"

namespace abpp {

void VisionConfig::validate() const {
  if (d < 8 || d % 4 != 0)
    throw std::invalid_argument("vision config: d must be >= 8 and divisible by 4, got " +
                                std::to_string(d));
  if (t_max <= 0 || t_max % 8 != 0)
    throw std::invalid_argument(
        "vision config: t_max must be a positive multiple of 8 (the key path halves the map "
        "width four times), got " +
        std::to_string(t_max));
  if (smn_layers <= 0 || hfa_layers <= 0)
    throw std::invalid_argument("vision config: layer counts must be positive");
  if (smn == SmnKind::transformer) {
    if (d % smn_heads != 0)
      throw std::invalid_argument("vision config: d not divisible by smn_heads");
    const Index pos = map_h() * map_w();
    if (pos > 768)
      throw std::invalid_argument(
          "vision config: the transformer stage covers " + std::to_string(pos) +
          " positions; more than 768 is rejected (quadratic attention over the full map)");
  }
  if (use_hfa && d % hfa_heads != 0)
    throw std::invalid_argument("vision config: d not divisible by hfa_heads");
  if (attention_iterations < 1)
    throw std::invalid_argument("vision config: attention_iterations must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("vision config: dropout must be in [0, 1)");
}

namespace {
Tensor conv_weight(Index k, Index cin, Index cout, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(k * k * cin + cout));
  return Tensor::uniform({k * k * cin, cout}, rng, -bound, bound, true);
}
}  // namespace

VisionModel::ResBlock::ResBlock(Index cin, Index cout, Index stride_, Rng& rng)
    : stride(stride_), has_proj(cin != cout || stride_ != 1) {
  w1 = conv_weight(3, cin, cout, rng);
  b1 = Tensor::zeros({cout}, true);
  w2 = conv_weight(3, cout, cout, rng);
  b2 = Tensor::zeros({cout}, true);
  if (has_proj) {
    wp = conv_weight(1, cin, cout, rng);
    bp = Tensor::zeros({cout}, true);
  }
}

Tensor VisionModel::ResBlock::forward(const Tensor& x) const {
  Tensor y = conv2d(x, w1, b1, 3, stride, stride);
  y = conv2d(gelu(y), w2, b2, 3, 1, 1);
  Tensor skip = has_proj ? conv2d(x, wp, bp, 1, stride, stride) : x;
  return gelu(add(y, skip));
}

void VisionModel::ResBlock::params(Params& out, const std::string& prefix) const {
  out.push_back({prefix + "/w1", w1});
  out.push_back({prefix + "/b1", b1});
  out.push_back({prefix + "/w2", w2});
  out.push_back({prefix + "/b2", b2});
  if (has_proj) {
    out.push_back({prefix + "/wp", wp});
    out.push_back({prefix + "/bp", bp});
  }
}

VisionModel::StridedConv::StridedConv(Index cin, Index cout, Index sh_, Index sw_, Rng& rng)
    : sh(sh_), sw(sw_) {
  w = conv_weight(3, cin, cout, rng);
  b = Tensor::zeros({cout}, true);
}

Tensor VisionModel::StridedConv::forward(const Tensor& x) const {
  return gelu(conv2d(x, w, b, 3, sh, sw));
}

void VisionModel::StridedConv::params(Params& out, const std::string& prefix) const {
  out.push_back({prefix + "/w", w});
  out.push_back({prefix + "/b", b});
}

VisionModel::VisionModel(VisionConfig cfg, const Charset& cs, Rng& rng)
    : cfg_(cfg), cs_(cs) {
  cfg_.validate();
  const Index d = cfg_.d;

  // Backbone: five residual blocks, spatial size halved after the first and
  // third, channels ramping up to d.
  const Index ch[6] = {1, d / 4, d / 4, d / 2, d, d};
  const Index strides[5] = {1, 2, 1, 2, 1};
  for (int i = 0; i < 5; ++i) backbone_.emplace_back(ch[i], ch[i + 1], strides[i], rng);

  if (cfg_.smn == SmnKind::conv) {
    smn_conv_.emplace_back(d, d, 1, rng);
    smn_conv_.emplace_back(d, d, 1, rng);
  } else {
    BlockConfig bc;
    bc.d = int(d);
    bc.heads = cfg_.smn_heads;
    bc.ffn_mult = 2;
    bc.dropout = cfg_.dropout;
    for (int l = 0; l < cfg_.smn_layers; ++l) smn_tf_.emplace_back(bc, rng);
  }

  // Key path: four stride-down convs, then four upsample+conv stages with
  // additive skips. Strides (2,2),(2,2),(1,2),(1,2) take {4, w'} to {1, w'/16}.
  enc_.emplace_back(d, d, 2, 2, rng);
  enc_.emplace_back(d, d, 2, 2, rng);
  enc_.emplace_back(d, d, 1, 2, rng);
  enc_.emplace_back(d, d, 1, 2, rng);
  dec_.emplace_back(d, d, 1, 1, rng);
  dec_.emplace_back(d, d, 1, 1, rng);
  dec_.emplace_back(d, d, 1, 1, rng);
  dec_.emplace_back(d, d, 1, 1, rng);

  if (cfg_.use_hfa) {
    BlockConfig bc;
    bc.d = int(d);
    bc.heads = cfg_.hfa_heads;
    bc.ffn_mult = 2;
    bc.dropout = cfg_.dropout;
    for (int l = 0; l < cfg_.hfa_layers; ++l) hfa_.emplace_back(bc, rng);
  }

  if (cfg_.content_queries) {
    content_table_ = Tensor::uniform({cfg_.positions(), d}, rng, -0.1, 0.1, true);
    content_proj_ = Linear(d, d, rng);
  }
  cls_ = Linear(d, cs_.class_count(), rng);
}

Tensor VisionModel::run_smn(Tensor x, Rng* drop) const {
  if (cfg_.smn == SmnKind::conv) {
    for (const auto& blk : smn_conv_) x = blk.forward(x);
    return x;
  }
  const Index h = cfg_.map_h(), w = cfg_.map_w(), d = cfg_.d;
  Tensor seq = add(reshape(x, {h * w, d}), positional_encoding_2d(h, w, d));
  const AttentionMask mask = zero_mask(h * w, h * w);
  for (const auto& layer : smn_tf_) seq = layer.forward(seq, mask, drop);
  return reshape(seq, {h, w, d});
}

Tensor VisionModel::run_keys(Tensor x, Rng* drop) const {
  const Index d = cfg_.d;
  // Encoder, keeping every level for the skips.
  std::vector<Tensor> levels;  // levels[0] = input
  levels.push_back(x);
  for (const auto& e : enc_) levels.push_back(e.forward(levels.back()));

  Tensor y = levels.back();  // {1, w'/16, d}
  if (cfg_.use_hfa) {
    if (y.shape()[0] != 1)
      throw std::logic_error("vision: the row-aggregation stage needs a single-row map");
    const Index fw = y.shape()[1];
    Tensor seq = add(reshape(y, {fw, d}), positional_encoding(fw, d));
    const AttentionMask mask = zero_mask(fw, fw);
    for (const auto& layer : hfa_) seq = layer.forward(seq, mask, drop);
    y = reshape(seq, {1, fw, d});
  }

  // Decoder: mirror the encoder strides, adding each skip on the way up.
  const Index ups[4][2] = {{1, 2}, {1, 2}, {2, 2}, {2, 2}};
  for (size_t i = 0; i < dec_.size(); ++i) {
    y = dec_[i].forward(upsample2d(y, ups[i][0], ups[i][1]));
    y = add(y, levels[levels.size() - 2 - i]);
  }
  return y;  // {4, w', d}
}

VisionOutput VisionModel::forward(const Tensor& image, Rng* drop) const {
  const Shape want = {cfg_.canvas_h(), cfg_.canvas_w(), 1};
  if (image.shape() != want)
    throw std::invalid_argument("vision: expected image " + shape_str(want) + ", got " +
                                shape_str(image.shape()));

  Tensor x = image;
  for (const auto& blk : backbone_) x = blk.forward(x);  // {4, w', d}
  Tensor fm = run_smn(x, drop);
  Tensor keys = run_keys(fm, drop);

  const Index n = cfg_.map_h() * cfg_.map_w(), d = cfg_.d, T = cfg_.positions();
  Tensor values = reshape(fm, {n, d});
  Tensor keys_flat = reshape(keys, {n, d});
  Tensor pe = positional_encoding(T, d);
  const double scale = 1.0 / std::sqrt(double(d));

  // Queries: position encodings, content-enriched when configured; every
  // iteration re-queries with the previous iteration's attended features.
  Tensor content;
  bool has_content = false;
  if (cfg_.content_queries) {
    Tensor summary = reshape(content_proj_(mean_rows(values)), {cfg_.d});
    content = add(content_table_, repeat_rows(summary, T));
    has_content = true;
  }

  VisionOutput out;
  Tensor attended;
  for (int it = 0; it < cfg_.attention_iterations; ++it) {
    Tensor q = has_content ? add(pe, content) : pe;
    Tensor weights = softmax_rows(mul_scalar(matmul_nt(q, keys_flat), scale));
    attended = matmul(weights, values);
    out.iter_logits.push_back(cls_(attended));
    if (it + 1 == cfg_.attention_iterations) out.attention = weights.mat();
    content = attended;  // next iteration's queries carry this round's content
    has_content = true;
  }
  out.features = attended;
  out.logits = out.iter_logits.back();
  return out;
}

ProbSequence VisionModel::predict(const MatX<double>& pixels) const {
  NoGradGuard ng;
  VecX<double> v(pixels.size());
  MatMap<double>(v.data(), pixels.rows(), pixels.cols()) = pixels;
  Tensor image = Tensor::leaf({pixels.rows(), pixels.cols(), 1}, std::move(v));
  VisionOutput out = forward(image);
  ProbSequence seq;
  seq.p = softmax_rows(out.logits).mat();
  seq.valid_len = seq.p.rows();
  return seq;
}

void VisionModel::params(Params& out, const std::string& prefix) const {
  for (size_t i = 0; i < backbone_.size(); ++i)
    backbone_[i].params(out, prefix + "/backbone/b" + std::to_string(i));
  for (size_t i = 0; i < smn_conv_.size(); ++i)
    smn_conv_[i].params(out, prefix + "/smn/conv" + std::to_string(i));
  for (size_t i = 0; i < smn_tf_.size(); ++i)
    smn_tf_[i].params(out, prefix + "/smn/layer" + std::to_string(i));
  for (size_t i = 0; i < enc_.size(); ++i)
    enc_[i].params(out, prefix + "/keys/enc" + std::to_string(i));
  for (size_t i = 0; i < dec_.size(); ++i)
    dec_[i].params(out, prefix + "/keys/dec" + std::to_string(i));
  for (size_t i = 0; i < hfa_.size(); ++i)
    hfa_[i].params(out, prefix + "/keys/row" + std::to_string(i));
  if (cfg_.content_queries) {
    out.push_back({prefix + "/content/table", content_table_});
    content_proj_.params(out, prefix + "/content/proj");
  }
  cls_.params(out, prefix + "/cls");
}

Index VisionModel::param_count() const {
  Params ps;
  params(ps);
  Index n = 0;
  for (const auto& [name, t] : ps) n += t.numel();
  return n;
}

}  // namespace abpp
