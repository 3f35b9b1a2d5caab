#pragma once

#include <string>

#include "abpp/charset.hpp"
#include "abpp/font.hpp"
#include "abpp/rng.hpp"

namespace abpp {

// Degradations applied to a rendered word, in the order listed here:
// additive Gaussian noise, salt-and-pepper flips, one occluding bar, and the
// per-glyph horizontal jitter applied at stamping time. The final image is
// clipped to [0, 1]. With sigma = 0 and occlusion = 0 every pixel stays
// exactly 0 or 1.
struct NoiseConfig {
  double gaussian_sigma = 0.0;
  double salt_pepper = 0.0;  // per-pixel flip probability
  double occlusion = 0.0;    // probability of drawing one bar over the text
  int jitter = 0;            // max horizontal glyph offset in pixels (<= 2)

  void validate() const {
    if (gaussian_sigma < 0.0 || salt_pepper < 0.0 || salt_pepper > 1.0 || occlusion < 0.0 ||
        occlusion > 1.0)
      throw std::invalid_argument("noise config: parameters out of range");
    if (jitter < 0 || jitter > 2)
      throw std::invalid_argument("noise config: jitter must be in [0, 2]");
  }
};

struct GlyphImage {
  MatX<double> pix;  // h x w, ink = 1 on background 0
  Index h() const { return pix.rows(); }
  Index w() const { return pix.cols(); }
};

// Draws `text` on a 16 x (8 * t_max) canvas, one 8-pixel cell per symbol,
// then applies `noise`. The same (text, noise, seed) triple always produces
// the same image.
GlyphImage render_text(const std::string& text, Index t_max, const Charset& cs,
                       const NoiseConfig& noise, std::uint64_t seed);

// Binary P5 PGM, 8-bit, values scaled from [0, 1].
void write_pgm(const std::string& path, const MatX<double>& pix);

}  // namespace abpp
