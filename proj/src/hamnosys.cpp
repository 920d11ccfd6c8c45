#include "notasign/hamnosys.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "notasign/error.hpp"

namespace notasign {

namespace {

std::string codepoint_str(uint32_t cp) {
  std::ostringstream os;
  os << "U+" << std::hex << std::uppercase << cp;
  return os.str();
}

}  // namespace

Vocabulary Vocabulary::from_codepoints(std::vector<uint32_t> codepoints) {
  Vocabulary v;
  v.symbols_ = std::move(codepoints);
  v.index_.reserve(v.symbols_.size());
  for (size_t i = 0; i < v.symbols_.size(); ++i) {
    v.index_.emplace_back(v.symbols_[i], static_cast<int>(i) + 2);
  }
  std::sort(v.index_.begin(), v.index_.end());
  for (size_t i = 1; i < v.index_.size(); ++i) {
    if (v.index_[i].first == v.index_[i - 1].first) {
      throw DataError("vocabulary: duplicate codepoint " + codepoint_str(v.index_[i].first));
    }
  }
  return v;
}

bool Vocabulary::contains(uint32_t codepoint) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(codepoint, 0));
  return it != index_.end() && it->first == codepoint;
}

int Vocabulary::id_of(uint32_t codepoint) const {
  auto it = std::lower_bound(index_.begin(), index_.end(), std::make_pair(codepoint, 0));
  if (it == index_.end() || it->first != codepoint) {
    throw DataError("vocabulary: unknown symbol " + codepoint_str(codepoint));
  }
  return it->second;
}

uint32_t Vocabulary::codepoint_of(int id) const {
  if (id < 2 || id > size_n() + 1) {
    throw DataError("vocabulary: id " + std::to_string(id) + " outside {0,1} U {2.." +
                    std::to_string(size_n() + 1) + "}");
  }
  return symbols_[static_cast<size_t>(id - 2)];
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("vocabulary: cannot open " + path);
  std::vector<uint32_t> codepoints;
  std::vector<int> first_line_of;  // parallel to codepoints, for duplicate reports
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    size_t end = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(begin, end - begin + 1);
    uint32_t cp = 0;
    for (char c : token) {
      int digit;
      if (c >= '0' && c <= '9') {
        digit = c - '0';
      } else if (c >= 'A' && c <= 'F') {
        digit = c - 'A' + 10;
      } else {
        throw DataError("vocabulary: malformed line " + std::to_string(line_no) + " in " + path +
                        ": '" + token + "' is not an uppercase hex codepoint");
      }
      cp = cp * 16 + static_cast<uint32_t>(digit);
    }
    if (token.empty()) {
      throw DataError("vocabulary: malformed line " + std::to_string(line_no) + " in " + path);
    }
    for (size_t i = 0; i < codepoints.size(); ++i) {
      if (codepoints[i] == cp) {
        throw DataError("vocabulary: duplicate codepoint " + codepoint_str(cp) + " at lines " +
                        std::to_string(first_line_of[i]) + " and " + std::to_string(line_no) +
                        " in " + path);
      }
    }
    codepoints.push_back(cp);
    first_line_of.push_back(line_no);
  }
  return Vocabulary::from_codepoints(std::move(codepoints));
}

std::vector<int> TokenBatch::row_ids(int64_t row) const {
  return std::vector<int>(ids.begin() + row * max_len, ids.begin() + (row + 1) * max_len);
}

std::vector<uint8_t> TokenBatch::row_mask(int64_t row) const {
  return std::vector<uint8_t>(mask.begin() + row * max_len, mask.begin() + (row + 1) * max_len);
}

std::vector<uint32_t> utf8_decode(const std::string& text) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < text.size()) {
    const auto byte = static_cast<unsigned char>(text[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (byte < 0x80) {
      cp = byte;
    } else if ((byte & 0xE0) == 0xC0) {
      cp = byte & 0x1Fu;
      extra = 1;
    } else if ((byte & 0xF0) == 0xE0) {
      cp = byte & 0x0Fu;
      extra = 2;
    } else if ((byte & 0xF8) == 0xF0) {
      cp = byte & 0x07u;
      extra = 3;
    } else {
      throw DataError("utf8: invalid lead byte at offset " + std::to_string(i));
    }
    if (i + static_cast<size_t>(extra) >= text.size()) {
      throw DataError("utf8: truncated sequence at offset " + std::to_string(i));
    }
    for (int k = 1; k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + static_cast<size_t>(k)]);
      if ((cont & 0xC0) != 0x80) {
        throw DataError("utf8: invalid continuation byte at offset " + std::to_string(i + k));
      }
      cp = (cp << 6) | (cont & 0x3Fu);
    }
    out.push_back(cp);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

std::string utf8_encode(const std::vector<uint32_t>& codepoints) {
  std::string out;
  for (uint32_t cp : codepoints) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::vector<int> tokenize(const std::string& utf8, const Vocabulary& vocab) {
  const std::vector<uint32_t> codepoints = utf8_decode(utf8);
  std::vector<int> out;
  out.reserve(codepoints.size() + 1);
  out.push_back(Vocabulary::kBos);
  for (size_t pos = 0; pos < codepoints.size(); ++pos) {
    if (!vocab.contains(codepoints[pos])) {
      throw DataError("tokenize: unknown symbol " + codepoint_str(codepoints[pos]) +
                      " at position " + std::to_string(pos));
    }
    out.push_back(vocab.id_of(codepoints[pos]));
  }
  return out;
}

TokenBatch pad_batch(const std::vector<std::vector<int>>& sequences) {
  if (sequences.empty()) throw DataError("pad_batch: at least one sequence required");
  TokenBatch batch;
  batch.batch = static_cast<int64_t>(sequences.size());
  for (const auto& seq : sequences) {
    batch.max_len = std::max(batch.max_len, static_cast<int64_t>(seq.size()));
    batch.lengths.push_back(static_cast<int64_t>(seq.size()));
  }
  batch.ids.assign(static_cast<size_t>(batch.batch * batch.max_len), Vocabulary::kPad);
  batch.mask.assign(static_cast<size_t>(batch.batch * batch.max_len), 1);
  for (int64_t r = 0; r < batch.batch; ++r) {
    const auto& seq = sequences[static_cast<size_t>(r)];
    for (size_t c = 0; c < seq.size(); ++c) {
      batch.ids[static_cast<size_t>(r * batch.max_len) + c] = seq[c];
      batch.mask[static_cast<size_t>(r * batch.max_len) + c] = 0;
    }
  }
  return batch;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<uint32_t> codepoints;
  for (int id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
    codepoints.push_back(vocab.codepoint_of(id));
  }
  return utf8_encode(codepoints);
}

}  // namespace notasign
