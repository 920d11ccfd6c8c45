#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace notasign {

// HamNoSys symbols are single Unicode codepoints. The vocabulary assigns ids
// 2..n+1 in file order; PAD = 0 and BOS = 1 are reserved, so the embedding
// table has n + 2 rows.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;

  static Vocabulary from_codepoints(std::vector<uint32_t> codepoints);

  int size_n() const { return static_cast<int>(symbols_.size()); }
  int embedding_size() const { return size_n() + 2; }

  bool contains(uint32_t codepoint) const;
  int id_of(uint32_t codepoint) const;         // throws if unknown
  uint32_t codepoint_of(int id) const;         // ids in [2, n+1]
  const std::vector<uint32_t>& symbols() const { return symbols_; }

 private:
  std::vector<uint32_t> symbols_;
  std::vector<std::pair<uint32_t, int>> index_;  // sorted by codepoint
};

// Vocabulary file: UTF-8 text, one uppercase hex codepoint per line,
// '#' comments allowed.
Vocabulary load_vocabulary(const std::string& path);

struct TokenBatch {
  int64_t batch = 0;
  int64_t max_len = 0;
  std::vector<int> ids;        // batch x max_len, row-major
  std::vector<uint8_t> mask;   // true = padding
  std::vector<int64_t> lengths;  // original token counts including BOS

  int id_at(int64_t row, int64_t col) const { return ids[static_cast<size_t>(row * max_len + col)]; }
  bool pad_at(int64_t row, int64_t col) const {
    return mask[static_cast<size_t>(row * max_len + col)] != 0;
  }
  std::vector<int> row_ids(int64_t row) const;
  std::vector<uint8_t> row_mask(int64_t row) const;
};

// [BOS, f(s_1), ..., f(s_k)]; unknown symbols are reported with their
// position in the string.
std::vector<int> tokenize(const std::string& utf8, const Vocabulary& vocab);

TokenBatch pad_batch(const std::vector<std::vector<int>>& sequences);

// Inverse of tokenize; BOS/PAD ids are dropped.
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

// UTF-8 helpers shared by the tokenizer and the synthetic-corpus generator.
std::vector<uint32_t> utf8_decode(const std::string& text);
std::string utf8_encode(const std::vector<uint32_t>& codepoints);

}  // namespace notasign
