// Finite-difference oracle suite: every differentiable operation and the
// composed blocks, checked at miniature configurations over several seeds.

#include "abpp/gradcheck.hpp"

#include "abpp/conv_ops.hpp"
#include "abpp/fusion.hpp"
#include "abpp/nn.hpp"
#include "abpp/ops.hpp"
#include "abpp/render.hpp"

namespace abpp {
namespace {

struct Suite {
  std::uint64_t seed;
  int reps;
  std::vector<GradCheckCase> cases;

  // Runs `build` (which returns a loss-producing closure and the tensor to
  // perturb) `reps` times with distinct seeds and keeps the worst error.
  template <typename MakeCheck>
  void run(const std::string& name, double tol, MakeCheck&& make) {
    GradCheckCase c;
    c.name = name;
    c.tolerance = tol;
    for (int r = 0; r < reps; ++r) {
      Rng rng = Rng(seed).child(name).child(std::uint64_t(r));
      const double err = make(rng);
      c.max_rel_err = std::max(c.max_rel_err, err);
    }
    c.pass = c.max_rel_err < tol;
    cases.push_back(c);
  }
};

Tensor rand_t(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi, true);
}

std::vector<int> rand_ids(Index n, Index c, Rng& rng) {
  std::vector<int> ids(static_cast<size_t>(n));
  for (auto& i : ids) i = int(rng.index(c));
  return ids;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, int reps) {
  Suite s{seed, reps, {}};
  const double op_tol = 1e-6;
  const double ln_tol = 1e-5;
  const double block_tol = 1e-4;

  s.run("add", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 4}, rng), b = rand_t({3, 4}, rng);
    return finite_diff_check([&] { return sum_all(mul(add(a, b), b)); }, a);
  });
  s.run("sub", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 4}, rng), b = rand_t({3, 4}, rng);
    return finite_diff_check([&] { return sum_all(mul(sub(a, b), a)); }, b);
  });
  s.run("mul", op_tol, [](Rng& rng) {
    Tensor a = rand_t({2, 5}, rng), b = rand_t({2, 5}, rng);
    return finite_diff_check([&] { return sum_all(mul(a, b)); }, a);
  });
  s.run("mul_scalar", op_tol, [](Rng& rng) {
    Tensor a = rand_t({7}, rng);
    return finite_diff_check([&] { return sum_all(mul_scalar(a, 2.5)); }, a);
  });
  s.run("matmul", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 4}, rng), b = rand_t({4, 2}, rng);
    return std::max(finite_diff_check([&] { return sum_all(matmul(a, b)); }, a),
                    finite_diff_check([&] { return sum_all(matmul(a, b)); }, b));
  });
  s.run("matmul_nt", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 4}, rng), b = rand_t({5, 4}, rng);
    return std::max(finite_diff_check([&] { return sum_all(matmul_nt(a, b)); }, a),
                    finite_diff_check([&] { return sum_all(matmul_nt(a, b)); }, b));
  });
  s.run("affine", op_tol, [](Rng& rng) {
    Tensor x = rand_t({3, 4}, rng), w = rand_t({4, 2}, rng), b = rand_t({2}, rng);
    auto f = [&] { return sum_all(gelu(affine(x, w, b))); };
    return std::max({finite_diff_check(f, x), finite_diff_check(f, w), finite_diff_check(f, b)});
  });
  s.run("sigmoid", op_tol, [](Rng& rng) {
    Tensor a = rand_t({4, 3}, rng, -3.0, 3.0);
    return finite_diff_check([&] { return sum_all(mul(sigmoid(a), a)); }, a);
  });
  s.run("relu", op_tol, [](Rng& rng) {
    // Keep values away from the kink, where the subgradient is arbitrary.
    Tensor a = rand_t({4, 3}, rng, 0.2, 1.0);
    Tensor sgn = rand_t({4, 3}, rng);
    for (Index i = 0; i < a.numel(); ++i)
      if (sgn.value()[i] < 0) a.value()[i] = -a.value()[i];
    return finite_diff_check([&] { return sum_all(relu(a)); }, a);
  });
  s.run("gelu", op_tol, [](Rng& rng) {
    Tensor a = rand_t({4, 3}, rng, -2.0, 2.0);
    return finite_diff_check([&] { return sum_all(gelu(a)); }, a);
  });
  s.run("reshape", op_tol, [](Rng& rng) {
    Tensor a = rand_t({2, 6}, rng);
    return finite_diff_check([&] { return sum_all(gelu(reshape(a, {3, 4}))); }, a);
  });
  s.run("concat_slice", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 2}, rng), b = rand_t({3, 3}, rng);
    auto f = [&] {
      Tensor c = concat_cols<double>({a, b});
      return sum_all(mul(slice_cols(c, 1, 3), slice_cols(c, 2, 3)));
    };
    return std::max(finite_diff_check(f, a), finite_diff_check(f, b));
  });
  s.run("slice_rows", op_tol, [](Rng& rng) {
    Tensor a = rand_t({5, 3}, rng);
    return finite_diff_check([&] { return sum_all(gelu(slice_rows(a, 1, 3))); }, a);
  });
  s.run("reductions", op_tol, [](Rng& rng) {
    Tensor a = rand_t({4, 3}, rng);
    return std::max({finite_diff_check([&] { return mean_all(mul(a, a)); }, a),
                     finite_diff_check([&] { return sum_all(gelu(mean_rows(a))); }, a)});
  });
  s.run("repeat_rows", op_tol, [](Rng& rng) {
    Tensor a = rand_t({4}, rng);
    return finite_diff_check([&] { return sum_all(gelu(repeat_rows(a, 3))); }, a);
  });
  s.run("softmax", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 5}, rng, -2.0, 2.0);
    Tensor pick = rand_t({3, 5}, rng);
    return finite_diff_check([&] { return sum_all(mul(softmax_rows(a), pick)); }, a);
  });
  s.run("softmax_masked", op_tol, [](Rng& rng) {
    Tensor a = rand_t({4, 4}, rng, -2.0, 2.0);
    Tensor pick = rand_t({4, 4}, rng);
    MatX<double> m = MatX<double>::Zero(4, 4);
    for (Index i = 0; i < 4; ++i) m(i, i) = mask_sentinel<double>();
    return finite_diff_check(
        [&] { return sum_all(mul(softmax_rows(add_constant(a, m)), pick)); }, a);
  });
  s.run("layer_norm", ln_tol, [](Rng& rng) {
    Tensor x = rand_t({3, 6}, rng), g = rand_t({6}, rng, 0.5, 1.5), b = rand_t({6}, rng);
    auto f = [&] { return sum_all(gelu(layer_norm(x, g, b))); };
    return std::max({finite_diff_check(f, x), finite_diff_check(f, g), finite_diff_check(f, b)});
  });
  s.run("cross_entropy", op_tol, [](Rng& rng) {
    Tensor x = rand_t({4, 5}, rng, -2.0, 2.0);
    std::vector<int> tgt = rand_ids(4, 5, rng);
    std::vector<char> ignore = {0, 0, 1, 0};
    return finite_diff_check([&] { return cross_entropy(x, tgt, ignore); }, x);
  });
  s.run("soft_cross_entropy", op_tol, [](Rng& rng) {
    Tensor x = rand_t({3, 4}, rng, -2.0, 2.0);
    MatX<double> q(3, 4);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 4; ++j) q(i, j) = rng.uniform(0.05, 1.0);
      q.row(i) /= q.row(i).sum();
    }
    return finite_diff_check([&] { return soft_cross_entropy(x, q); }, x);
  });
  s.run("stop_gradient", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 3}, rng), b = rand_t({3, 3}, rng);
    // Gradient flows to b only; the check on a must see exact zeros.
    auto f = [&] { return sum_all(mul(stop_gradient(a), b)); };
    return std::max(finite_diff_check(f, b),
                    [&] {
                      Tensor loss = f();
                      backward(loss);
                      return a.grad().cwiseAbs().maxCoeff();
                    }());
  });
  s.run("embedding_rows", op_tol, [](Rng& rng) {
    Tensor w = rand_t({6, 4}, rng);
    std::vector<int> ids = {1, 3, 3, 0};
    return finite_diff_check([&] { return sum_all(gelu(embedding_rows(w, ids))); }, w);
  });
  s.run("conv2d", op_tol, [](Rng& rng) {
    Tensor x = rand_t({4, 5, 2}, rng), w = rand_t({9 * 2, 3}, rng), b = rand_t({3}, rng);
    auto f = [&] { return sum_all(gelu(conv2d(x, w, b, 3, 1, 1))); };
    return std::max({finite_diff_check(f, x), finite_diff_check(f, w), finite_diff_check(f, b)});
  });
  s.run("conv2d_strided", op_tol, [](Rng& rng) {
    Tensor x = rand_t({4, 6, 2}, rng), w = rand_t({9 * 2, 2}, rng), b = rand_t({2}, rng);
    auto f = [&] { return sum_all(gelu(conv2d(x, w, b, 3, 2, 2))); };
    return std::max({finite_diff_check(f, x), finite_diff_check(f, w)});
  });
  s.run("upsample2d", op_tol, [](Rng& rng) {
    Tensor x = rand_t({2, 3, 2}, rng);
    return finite_diff_check([&] { return sum_all(gelu(upsample2d(x, 2, 2))); }, x);
  });
  s.run("dropout_off", op_tol, [](Rng& rng) {
    Tensor a = rand_t({3, 4}, rng);
    Rng dr = rng.child("drop");
    return finite_diff_check([&] { return sum_all(gelu(dropout(a, 0.0, dr))); }, a);
  });

  // Composed blocks.
  s.run("attention_block", block_tol, [](Rng& rng) {
    BlockConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.dropout = 0.0;
    MultiHeadAttention mha(cfg, rng);
    Tensor q = rand_t({3, 8}, rng), kv = rand_t({4, 8}, rng);
    AttentionMask m = zero_mask(3, 4);
    auto f = [&] { return mean_all(mha.forward(q, kv, kv, m).values); };
    return std::max({finite_diff_check(f, q), finite_diff_check(f, kv),
                     finite_diff_check(f, mha.wv.w)});
  });
  s.run("encoder_layer", block_tol, [](Rng& rng) {
    BlockConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.dropout = 0.0;
    TransformerEncoderLayer layer(cfg, rng);
    Tensor x = rand_t({4, 8}, rng);
    AttentionMask m = causal_mask(4);
    auto f = [&] { return mean_all(layer.forward(x, m)); };
    return std::max({finite_diff_check(f, x), finite_diff_check(f, layer.attn.wq.w),
                     finite_diff_check(f, layer.ffn.fc1.w), finite_diff_check(f, layer.ln1.gain)});
  });
  s.run("cloze_layer", block_tol, [](Rng& rng) {
    BlockConfig cfg;
    cfg.d = 8;
    cfg.heads = 2;
    cfg.ffn_mult = 2;
    cfg.dropout = 0.0;
    BcnLayer layer(cfg, rng);
    Tensor q = rand_t({4, 8}, rng), kv = rand_t({4, 8}, rng);
    AttentionMask m = combine(diagonal_mask(4), padding_mask(3, 4));
    auto f = [&] { return mean_all(layer.forward(q, kv, m)); };
    return std::max({finite_diff_check(f, kv), finite_diff_check(f, layer.attn.wk.w),
                     finite_diff_check(f, layer.ln2.bias)});
  });

  // The assembled model end to end: a rendered glyph image through the
  // vision stage, two correction rounds and the gated blend. One
  // representative parameter per stage is perturbed. Each check scores a
  // loss term with no probability-input detachment between it and the
  // parameter — the later rounds read detached distributions by design, so
  // a finite difference across that seam would measure value changes the
  // analytic gradient deliberately excludes (the blocked paths are asserted
  // exactly zero in the fusion tests instead).
  enum class PipeLoss { vision_term, round1_lm_and_fused, round1_fused };
  const auto pipeline_case = [&s](const std::string& name, const char* param, PipeLoss which) {
    const double pipeline_tol = 1e-4;
    s.run(name, pipeline_tol, [param, which](Rng& rng) {
      PipelineConfig pc;
      pc.vision.d = 8;
      pc.vision.t_max = 8;  // the smallest legal canvas, 16 x 64
      pc.vision.use_hfa = true;
      pc.vision.attention_iterations = 2;
      pc.vision.content_queries = true;
      pc.lm.t_max = pc.vision.positions();
      pc.lm.layers = 1;
      pc.lm.block.d = 8;
      pc.lm.block.heads = 2;
      pc.lm.block.ffn_mult = 2;
      pc.lm.block.dropout = 0.0;
      const Charset cs;
      Rng init = rng.child("init");
      Pipeline model(pc, cs, init);

      const GlyphImage img =
          render_text("ab", pc.vision.t_max, cs, NoiseConfig{}, rng.child("img").seed());
      VecX<double> v(img.pix.size());
      MatMap<double>(v.data(), img.pix.rows(), img.pix.cols()) = img.pix;
      const Tensor image = Tensor::leaf({img.h(), img.w(), 1}, std::move(v));

      const auto masked_ce = [&cs](const Tensor& logits) {
        const Index t = logits.shape()[0];
        const std::vector<int> ids = cs.target_ids("ab", t);
        std::vector<char> ignore(static_cast<size_t>(t), 0);
        for (Index i = 0; i < t; ++i)
          if (ids[static_cast<size_t>(i)] == cs.pad_id()) ignore[static_cast<size_t>(i)] = 1;
        return cross_entropy(logits, ids, ignore);
      };

      Params ps;
      model.params(ps);
      return finite_diff_check(
          [&] {
            const Pipeline::Forward fw = model.forward(image, /*iterations=*/2, nullptr);
            if (which == PipeLoss::vision_term) {
              Tensor term = masked_ce(fw.vision.iter_logits[0]);
              for (size_t i = 1; i < fw.vision.iter_logits.size(); ++i)
                term = add(term, masked_ce(fw.vision.iter_logits[i]));
              return term;
            }
            if (which == PipeLoss::round1_lm_and_fused)
              return add(masked_ce(fw.trace.steps[0].lm_logits),
                         masked_ce(fw.trace.steps[0].fused_logits));
            return masked_ce(fw.trace.steps[0].fused_logits);
          },
          find_param(ps, param));
    });
  };
  pipeline_case("pipeline_conv_weight", "vision/backbone/b0/w1", PipeLoss::vision_term);
  pipeline_case("pipeline_query_table", "vision/content/table", PipeLoss::vision_term);
  pipeline_case("pipeline_lm_input_proj", "lm/wl", PipeLoss::round1_lm_and_fused);
  pipeline_case("pipeline_fusion_gate", "fusion/gate", PipeLoss::round1_fused);

  return s.cases;
}

}  // namespace abpp
