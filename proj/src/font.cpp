#include "abpp/font.hpp"

namespace abpp {
namespace {

// One glyph per recognition symbol, in charset order a..z then 0..9.
const char* const kFont[36][7] = {
    // a
    {"..#..",
     ".#.#.",
     "#...#",
     "#####",
     "#...#",
     "#...#",
     "#...#"},
    // b
    {"####.",
     "#...#",
     "#...#",
     "####.",
     "#...#",
     "#...#",
     "####."},
    // c
    {".####",
     "#....",
     "#....",
     "#....",
     "#....",
     "#....",
     ".####"},
    // d
    {"###..",
     "#..#.",
     "#...#",
     "#...#",
     "#...#",
     "#..#.",
     "###.."},
    // e
    {"#####",
     "#....",
     "#....",
     "#####",
     "#....",
     "#....",
     "#####"},
    // f
    {"#####",
     "#....",
     "#....",
     "###..",
     "#....",
     "#....",
     "#...."},
    // g
    {".###.",
     "#...#",
     "#....",
     "#.###",
     "#...#",
     "#...#",
     ".####"},
    // h
    {"#...#",
     "#...#",
     "#...#",
     "#####",
     "#...#",
     "#...#",
     "#...#"},
    // i
    {"#####",
     ".##..",
     ".##..",
     ".##..",
     ".##..",
     ".##..",
     "#####"},
    // j
    {"..###",
     "...#.",
     "...#.",
     "...#.",
     "...#.",
     "#..#.",
     ".##.."},
    // k
    {"#...#",
     "#..#.",
     "#.#..",
     "##...",
     "#.#..",
     "#..#.",
     "#...#"},
    // l
    {"#....",
     "#....",
     "#....",
     "#....",
     "#....",
     "#....",
     "#####"},
    // m
    {"#...#",
     "##.##",
     "#.#.#",
     "#.#.#",
     "#.#.#",
     "#...#",
     "#...#"},
    // n
    {"#...#",
     "##..#",
     "##..#",
     "#.#.#",
     "#..##",
     "#..##",
     "#...#"},
    // o
    {".....",
     ".###.",
     "#...#",
     "#...#",
     "#...#",
     ".###.",
     "....."},
    // p
    {".####",
     ".#..#",
     ".#..#",
     ".####",
     ".#...",
     ".#...",
     ".#..."},
    // q
    {".###.",
     "#...#",
     "#...#",
     "#.#.#",
     "#.#.#",
     "#..#.",
     ".##.#"},
    // r
    {"####.",
     "#...#",
     "#...#",
     "####.",
     "#.#..",
     "#..#.",
     "#...#"},
    // s
    {".####",
     "#....",
     "#....",
     ".###.",
     "....#",
     "....#",
     "####."},
    // t
    {"#####",
     "..#..",
     "..#..",
     "..#..",
     "..#..",
     "..#..",
     "..#.."},
    // u
    {"#...#",
     "#...#",
     "#...#",
     "#...#",
     "#...#",
     "##.##",
     ".###."},
    // v
    {"#...#",
     "#...#",
     "#...#",
     "#...#",
     ".#.#.",
     ".#.#.",
     "..#.."},
    // w
    {"#...#",
     "#...#",
     "#...#",
     "#...#",
     "#.#.#",
     "##.##",
     "#...#"},
    // x
    {"#...#",
     "#...#",
     ".#.#.",
     "..#..",
     ".#.#.",
     "#...#",
     "#...#"},
    // y
    {"#...#",
     "#...#",
     ".#.#.",
     "..#..",
     "..#..",
     "..#..",
     "..#.."},
    // z
    {"#####",
     "....#",
     "...#.",
     "..#..",
     ".#...",
     "#....",
     "#####"},
    // 0
    {".####",
     "#..##",
     "#.#.#",
     "#.#.#",
     "#.#.#",
     "##..#",
     "####."},
    // 1
    {"..#..",
     ".##..",
     "#.#..",
     "..#..",
     "..#..",
     "..#..",
     ".###."},
    // 2
    {".###.",
     "#...#",
     "....#",
     "...#.",
     "..#..",
     ".#...",
     "#####"},
    // 3
    {"####.",
     "....#",
     "....#",
     "..###",
     "....#",
     "....#",
     "####."},
    // 4
    {"...#.",
     "..##.",
     ".#.#.",
     "#..#.",
     "#####",
     "...#.",
     "...#."},
    // 5
    {"#####",
     "#....",
     "####.",
     "....#",
     "....#",
     "#...#",
     ".###."},
    // 6
    {"..##.",
     ".#...",
     "#....",
     "####.",
     "#...#",
     "#...#",
     ".###."},
    // 7
    {"#####",
     "....#",
     "...#.",
     "..#..",
     ".#...",
     ".#...",
     ".#..."},
    // 8
    {".###.",
     "##.##",
     "##.##",
     ".###.",
     "##.##",
     "##.##",
     ".###."},
    // 9
    {".###.",
     "#...#",
     "#...#",
     ".####",
     "....#",
     "...#.",
     ".##.."},
};

}  // namespace

const char* const* glyph_art(int symbol_id) {
  if (symbol_id < 0 || symbol_id >= 36)
    throw std::invalid_argument("glyph_art: symbol id " + std::to_string(symbol_id) +
                                " outside [0, 36)");
  return kFont[symbol_id];
}

MatX<double> glyph_bitmap(int symbol_id) {
  const char* const* art = glyph_art(symbol_id);
  MatX<double> g(kGlyphH, kGlyphW);
  for (Index r = 0; r < kGlyphH; ++r)
    for (Index c = 0; c < kGlyphW; ++c) g(r, c) = art[r][c] == '#' ? 1.0 : 0.0;
  return g;
}

}  // namespace abpp
