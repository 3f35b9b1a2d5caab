#pragma once

#include <string>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

// Recognition alphabet: case-insensitive symbols plus two reserved classes,
// EOS (end of text) and PAD (ignored filler), appended after the symbols.
class Charset {
 public:
  explicit Charset(std::string symbols = "abcdefghijklmnopqrstuvwxyz0123456789")
      : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw std::invalid_argument("charset: no symbols");
    to_id_.assign(256, -1);
    for (size_t i = 0; i < symbols_.size(); ++i) {
      unsigned char c = fold(symbols_[i]);
      if (to_id_[c] != -1)
        throw std::invalid_argument(std::string("charset: duplicate symbol '") + char(c) + "'");
      to_id_[c] = int(i);
    }
  }

  Index class_count() const { return Index(symbols_.size()) + 2; }
  Index symbol_count() const { return Index(symbols_.size()); }
  int eos_id() const { return int(symbols_.size()); }
  int pad_id() const { return int(symbols_.size()) + 1; }

  bool knows(char c) const { return to_id_[fold(c)] != -1; }

  int id_of(char c) const {
    const int id = to_id_[fold(c)];
    if (id == -1)
      throw std::invalid_argument(std::string("charset: unsupported character '") + c + "'");
    return id;
  }

  char symbol(int id) const {
    if (id < 0 || id >= symbol_count())
      throw std::invalid_argument("charset: id " + std::to_string(id) +
                                  " is not a printable symbol");
    return symbols_[size_t(id)];
  }

  // Symbol ids only; EOS/PAD handling is the caller's business.
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) ids.push_back(id_of(c));
    return ids;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(symbol(id));
    return out;
  }

  // Ids for "text then EOS", padded with PAD up to t rows.
  std::vector<int> target_ids(const std::string& text, Index t) const {
    if (Index(text.size()) + 1 > t)
      throw std::invalid_argument("charset: text of length " + std::to_string(text.size()) +
                                  " plus EOS does not fit in t=" + std::to_string(t));
    std::vector<int> ids;
    ids.reserve(size_t(t));
    for (char c : text) ids.push_back(id_of(c));
    ids.push_back(eos_id());
    while (Index(ids.size()) < t) ids.push_back(pad_id());
    return ids;
  }

  std::string fold_text(const std::string& text) const {
    std::string out = text;
    for (char& c : out) c = char(fold(c));
    return out;
  }

  static unsigned char fold(char c) {
    return (c >= 'A' && c <= 'Z') ? (unsigned char)(c - 'A' + 'a') : (unsigned char)c;
  }

 private:
  std::string symbols_;
  std::vector<int> to_id_;
};

// A row-stochastic t x c matrix of per-position class distributions, the
// interchange format between vision, language and fusion stages.
struct ProbSequence {
  MatX<double> p;
  Index valid_len = 0;  // context length used when this sequence was built

  Index t() const { return p.rows(); }
  Index c() const { return p.cols(); }

  void validate(const char* who = "prob_sequence") const {
    for (Index i = 0; i < p.rows(); ++i) {
      if (p.row(i).minCoeff() < -1e-9 || std::abs(p.row(i).sum() - 1.0) > 1e-6)
        throw std::invalid_argument(std::string(who) + ": row " + std::to_string(i) +
                                    " is not a probability distribution (sum " +
                                    std::to_string(p.row(i).sum()) + ")");
    }
  }
};

// Greedy per-position argmax decode, truncated at the first EOS/PAD.
inline std::string greedy_decode(const MatX<double>& probs, const Charset& cs) {
  std::string out;
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    probs.row(i).maxCoeff(&best);
    if (int(best) >= cs.symbol_count()) break;
    out.push_back(cs.symbol(int(best)));
  }
  return out;
}

// Index of the first row whose argmax is EOS; t when none is found.
inline Index first_eos(const MatX<double>& probs, const Charset& cs) {
  for (Index i = 0; i < probs.rows(); ++i) {
    Index best = 0;
    probs.row(i).maxCoeff(&best);
    if (int(best) == cs.eos_id()) return i;
  }
  return probs.rows();
}

}  // namespace abpp
