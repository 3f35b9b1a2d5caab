#pragma once

#include "abpp/charset.hpp"

namespace abpp {

// Fixed 5x7 pixel glyphs for the 36 recognition symbols (a-z, 0-9). Shapes
// are hand-drawn so every pair differs in more than 5 pixels, which keeps the
// classes separable even under heavy noise.
inline constexpr Index kGlyphH = 7;
inline constexpr Index kGlyphW = 5;

// Seven rows of five characters; '#' is ink.
const char* const* glyph_art(int symbol_id);

// kGlyphH x kGlyphW matrix of {0, 1}.
MatX<double> glyph_bitmap(int symbol_id);

}  // namespace abpp
