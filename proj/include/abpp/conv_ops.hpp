#pragma once

#include <memory>
#include <vector>

#include "abpp/ops.hpp"

namespace abpp {

// 2-D convolution on an {h, w, c_in} feature map (channels contiguous per
// pixel), odd square kernels, zero padding of (k-1)/2, per-axis strides.
// Implemented as im2col + one matrix product; the patch matrix is kept alive
// for the backward pass and released with the graph.
//
// Weights: {k*k*c_in, c_out}, column j of a patch row holds (ky, kx, c).
template <typename S>
TensorT<S> conv2d(TensorT<S> x, TensorT<S> w, TensorT<S> b, Index k, Index sh, Index sw) {
  if (x.rank() != 3)
    throw std::invalid_argument("conv2d: input must be {h, w, c}, got " + shape_str(x.shape()));
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("conv2d: kernel must be odd");
  if (sh <= 0 || sw <= 0) throw std::invalid_argument("conv2d: strides must be positive");
  const Index h = x.dim(0), wd = x.dim(1), ci = x.dim(2);
  if (w.rank() != 2 || w.dim(0) != k * k * ci)
    throw std::invalid_argument("conv2d: weights " + shape_str(w.shape()) + " do not match k=" +
                                std::to_string(k) + ", c_in=" + std::to_string(ci));
  const Index co = w.dim(1);
  if (b.numel() != co)
    throw std::invalid_argument("conv2d: bias " + shape_str(b.shape()) + " vs c_out " +
                                std::to_string(co));
  const Index pad = (k - 1) / 2;
  const Index ho = (h - 1) / sh + 1;
  const Index wo = (wd - 1) / sw + 1;

  // Patch gather map: for each output position and kernel tap, the source
  // pixel index or -1 when the tap falls in the zero padding.
  const Index np = ho * wo;
  auto srcidx = std::make_shared<std::vector<Index>>(size_t(np * k * k));
  auto patches = std::make_shared<MatX<S>>(np, k * k * ci);
  {
    ConstMatMap<S> xm = x.mat();  // (h*w) x ci
    Index row = 0;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox, ++row) {
        const Index cy = oy * sh, cx = ox * sw;
        Index tap = 0;
        for (Index ky = 0; ky < k; ++ky) {
          for (Index kx = 0; kx < k; ++kx, ++tap) {
            const Index iy = cy + ky - pad, ix = cx + kx - pad;
            const bool in = iy >= 0 && iy < h && ix >= 0 && ix < wd;
            (*srcidx)[size_t(row * k * k + tap)] = in ? iy * wd + ix : -1;
            if (in)
              patches->row(row).segment(tap * ci, ci) = xm.row(iy * wd + ix);
            else
              patches->row(row).segment(tap * ci, ci).setZero();
          }
        }
      }
    }
  }

  VecX<S> v(np * co);
  {
    MatMap<S> out(v.data(), np, co);
    out = (*patches) * w.mat();
    out.rowwise() += b.value().transpose();
  }
  return make_op<S>({ho, wo, co}, std::move(v), {x, w, b},
                    [x, w, b, patches, srcidx, np, k, ci, co](const VecX<S>& g) mutable {
                      ConstMatMap<S> gm(g.data(), np, co);
                      if (w.tracked()) w.grad_accum() += patches->transpose() * gm;
                      if (b.tracked()) b.grad_accum_vec() += gm.colwise().sum().transpose();
                      if (x.tracked()) {
                        MatX<S> gp = gm * w.mat().transpose();  // np x (k*k*ci)
                        MatMap<S> gx = x.grad_accum();
                        for (Index row = 0; row < np; ++row) {
                          for (Index tap = 0; tap < k * k; ++tap) {
                            const Index src = (*srcidx)[size_t(row * k * k + tap)];
                            if (src >= 0) gx.row(src) += gp.row(row).segment(tap * ci, ci);
                          }
                        }
                      }
                    });
}

// Nearest-neighbour upsampling by integer factors; backward sum-pools.
template <typename S>
TensorT<S> upsample2d(TensorT<S> x, Index fh, Index fw) {
  if (x.rank() != 3)
    throw std::invalid_argument("upsample2d: input must be {h, w, c}, got " +
                                shape_str(x.shape()));
  if (fh <= 0 || fw <= 0) throw std::invalid_argument("upsample2d: factors must be positive");
  const Index h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const Index ho = h * fh, wo = w * fw;
  VecX<S> v(ho * wo * c);
  {
    MatMap<S> out(v.data(), ho * wo, c);
    ConstMatMap<S> xm = x.mat();
    for (Index oy = 0; oy < ho; ++oy)
      for (Index ox = 0; ox < wo; ++ox)
        out.row(oy * wo + ox) = xm.row((oy / fh) * w + ox / fw);
  }
  return make_op<S>({ho, wo, c}, std::move(v), {x},
                    [x, h, w, c, fh, fw, ho, wo](const VecX<S>& g) mutable {
                      if (!x.tracked()) return;
                      ConstMatMap<S> gm(g.data(), ho * wo, c);
                      MatMap<S> gx = x.grad_accum();
                      for (Index oy = 0; oy < ho; ++oy)
                        for (Index ox = 0; ox < wo; ++ox)
                          gx.row((oy / fh) * w + ox / fw) += gm.row(oy * wo + ox);
                    });
}

}  // namespace abpp
