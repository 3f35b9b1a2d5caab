#include "abpp/render.hpp"

#include <algorithm>
#include <fstream>

namespace abpp {

GlyphImage render_text(const std::string& text, Index t_max, const Charset& cs,
                       const NoiseConfig& noise, std::uint64_t seed) {
  noise.validate();
  if (t_max <= 0) throw std::invalid_argument("render_text: t_max must be positive");
  if (Index(text.size()) > t_max)
    throw std::invalid_argument("render_text: '" + text + "' does not fit " +
                                std::to_string(t_max) + " cells");
  const std::string folded = cs.fold_text(text);
  for (char c : folded)
    if (!cs.knows(c))
      throw std::invalid_argument(std::string("render_text: no glyph for '") + c + "'");

  const Index h = 16, w = 8 * t_max;
  // One stream per (text, seed); the noise parameters shape what is drawn
  // from it, so the whole triple pins the image.
  Rng rng = Rng(seed).child("render").child(folded);

  GlyphImage img;
  img.pix = MatX<double>::Zero(h, w);

  // Stamp glyphs: cell i spans columns [8i, 8i+8); the glyph sits one pixel
  // in, vertically centered, shifted by the jitter draw. Pixels pushed off
  // the canvas are dropped.
  const Index y0 = (h - kGlyphH) / 2;
  for (size_t i = 0; i < folded.size(); ++i) {
    const MatX<double> glyph = glyph_bitmap(cs.id_of(folded[i]));
    Index x0 = 8 * Index(i) + 1;
    if (noise.jitter > 0)
      x0 += rng.index(2 * noise.jitter + 1) - noise.jitter;
    for (Index r = 0; r < kGlyphH; ++r)
      for (Index c = 0; c < kGlyphW; ++c) {
        const Index y = y0 + r, x = x0 + c;
        if (x >= 0 && x < w && glyph(r, c) > 0.0) img.pix(y, x) = 1.0;
      }
  }

  if (noise.gaussian_sigma > 0.0)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) img.pix(y, x) += noise.gaussian_sigma * rng.normal();

  if (noise.salt_pepper > 0.0)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        if (rng.bernoulli(noise.salt_pepper)) img.pix(y, x) = rng.bernoulli(0.5) ? 1.0 : 0.0;

  if (noise.occlusion > 0.0 && rng.bernoulli(noise.occlusion)) {
    // A two-pixel-high ink bar across a random horizontal span.
    const Index bar_y = rng.index(h - 1);
    const Index span = w / 4 + rng.index(std::max<Index>(1, w / 4));
    const Index bar_x = rng.index(std::max<Index>(1, w - span + 1));
    for (Index y = bar_y; y < bar_y + 2; ++y)
      for (Index x = bar_x; x < std::min(w, bar_x + span); ++x) img.pix(y, x) = 1.0;
  }

  img.pix = img.pix.cwiseMax(0.0).cwiseMin(1.0);
  return img;
}

void write_pgm(const std::string& path, const MatX<double>& pix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open '" + path + "'");
  out << "P5\n" << pix.cols() << " " << pix.rows() << "\n255\n";
  for (Index y = 0; y < pix.rows(); ++y)
    for (Index x = 0; x < pix.cols(); ++x) {
      const double v = std::clamp(pix(y, x), 0.0, 1.0);
      out.put(char(static_cast<unsigned char>(v * 255.0 + 0.5)));
    }
  if (!out) throw std::runtime_error("write_pgm: short write to '" + path + "'");
}

}  // namespace abpp
