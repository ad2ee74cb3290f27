#pragma once

// Pair encoders: (sequence 1, sequence 2) -> a pooled vector u and one vector
// per token. The bundled encoder hashes tokens and their neighbours into d
// buckets; any other encoder can be plugged in behind PairEncoder.

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgd/rng.hpp"
#include "sgd/text.hpp"

namespace sgd::tracker {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Token {
  std::string text;
  std::size_t start = 0;  // byte offsets into the owning sequence
  std::size_t end = 0;
  int segment = 1;  // 1 or 2
};

// Alphanumeric runs (bytes >= 0x80 count as letters) and single punctuation marks.
inline std::vector<Token> tokenize(std::string_view s, int segment) {
  std::vector<Token> out;
  auto word = [](unsigned char c) { return std::isalnum(c) || c >= 0x80; };
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (text::is_space(static_cast<char>(c))) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    if (word(c))
      while (j < s.size() && word(static_cast<unsigned char>(s[j]))) ++j;
    out.push_back({std::string(s.substr(i, j - i)), i, j, segment});
    i = j;
  }
  return out;
}

struct Encoding {
  Vec u;                      // pooled pair vector
  Mat tokens;                 // d x M, one column per token
  std::vector<Token> pieces;  // M tokens, segment 1 first
};

class PairEncoder {
public:
  virtual ~PairEncoder() = default;
  virtual int dim() const = 0;
  virtual Encoding encode(std::string_view seq1, std::string_view seq2) const = 0;
  virtual std::string name() const = 0;
};

// Text covered by tokens p..q of a pair; pieces from different segments are
// joined with a space.
inline std::string span_text(const Encoding& e, std::size_t p, std::size_t q, std::string_view seq1,
                             std::string_view seq2) {
  std::string out;
  std::size_t i = p;
  while (i <= q) {
    int seg = e.pieces[i].segment;
    std::size_t j = i;
    while (j + 1 <= q && e.pieces[j + 1].segment == seg) ++j;
    std::string_view src = seg == 1 ? seq1 : seq2;
    if (!out.empty()) out.push_back(' ');
    out.append(src.substr(e.pieces[i].start, e.pieces[j].end - e.pieces[i].start));
    i = j + 1;
  }
  return out;
}

class HashedPairEncoder : public PairEncoder {
public:
  explicit HashedPairEncoder(int d = 64) : d_(d) {
    if (d < 2) throw std::invalid_argument("encoder dimension must be at least 2");
  }

  int dim() const override { return d_; }
  std::string name() const override { return "hashed"; }

  Encoding encode(std::string_view seq1, std::string_view seq2) const override {
    Encoding e;
    e.pieces = tokenize(seq1, 1);
    auto second = tokenize(seq2, 2);
    e.pieces.insert(e.pieces.end(), second.begin(), second.end());
    const std::size_t m = e.pieces.size();
    std::vector<std::string> low(m);
    for (std::size_t k = 0; k < m; ++k) low[k] = text::lower(e.pieces[k].text);

    e.u = Vec::Zero(d_);
    for (std::size_t k = 0; k < m; ++k) add(e.u, low[k], e.pieces[k].segment == 2 ? 1.0 : 0.5);
    double n = e.u.norm();
    if (n > 0) e.u *= 0.5 * std::sqrt(static_cast<double>(d_)) / n;

    e.tokens = Mat::Zero(d_, static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      Vec t = Vec::Zero(d_);
      add(t, low[k], 1.0);
      add(t, k > 0 && e.pieces[k - 1].segment == e.pieces[k].segment ? "<" + low[k - 1] : "<#", 0.5);
      add(t, k + 1 < m && e.pieces[k + 1].segment == e.pieces[k].segment ? ">" + low[k + 1] : ">#", 0.5);
      add(t, e.pieces[k].segment == 1 ? "#seg1" : "#seg2", 0.5);
      const std::string& raw = e.pieces[k].text;
      if (raw[0] >= 'A' && raw[0] <= 'Z') add(t, "#cap", 0.5);
      if (raw[0] >= '0' && raw[0] <= '9') add(t, "#digit", 0.5);
      e.tokens.col(static_cast<Eigen::Index>(k)) = t;
    }
    return e;
  }

private:
  // Signed feature hashing into two buckets per feature.
  void add(Vec& v, std::string_view feature, double w) const {
    for (std::uint64_t salt : {0x9e3779b97f4a7c15ULL, 0xc2b2ae3d27d4eb4fULL}) {
      std::uint64_t h = mix64(fnv1a(feature) ^ salt);
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(d_))] += sign * w;
    }
  }

  int d_;
};

} // namespace sgd::tracker
