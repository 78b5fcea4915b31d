#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "sparsernn/binary_io.hpp"
#include "sparsernn/data.hpp"
#include "sparsernn/errors.hpp"

namespace sparsernn {

namespace {

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation or invalid byte: keep it as its own unit
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text, Unit unit) {
  std::vector<std::string> out;
  if (unit == Unit::character) {
    for (std::size_t i = 0; i < text.size();) {
      const std::size_t n = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, n));
      i += n;
    }
    return out;
  }
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      std::string w(text.substr(i, j - i));
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      out.push_back(std::move(w));
    }
    i = j;
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens, Unit unit) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (unit == Unit::word && i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (auto s : {kPadToken, kStartToken, kOovToken}) {
    index_.emplace(std::string(s), static_cast<Index>(tokens_.size()));
    tokens_.emplace_back(s);
    freq_.push_back(0);
  }
}

Vocabulary Vocabulary::build(std::span<const std::string> tokens, Unit unit, Index max_size) {
  Vocabulary v;
  v.unit_ = unit;
  std::map<std::string, std::uint64_t> counts;  // ordered: ties resolve lexicographically
  for (const auto& t : tokens) {
    auto special = v.index_.find(t);
    if (special != v.index_.end()) {
      ++v.freq_[static_cast<std::size_t>(special->second)];
      continue;
    }
    ++counts[t];
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const Index room = std::max<Index>(0, max_size - kSpecials);
  std::uint64_t dropped = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (static_cast<Index>(i) < room) {
      v.index_.emplace(ranked[i].first, static_cast<Index>(v.tokens_.size()));
      v.tokens_.push_back(ranked[i].first);
      v.freq_.push_back(ranked[i].second);
    } else {
      dropped += ranked[i].second;
    }
  }
  v.freq_[kOov] += dropped;
  return v;
}

Index Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kOov : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

const std::string& Vocabulary::token(Index id) const {
  if (id < 0 || id >= size()) throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<Index> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<Index> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<Index> Vocabulary::encode_text(std::string_view text) const { return encode(tokenize(text, unit_)); }

std::string Vocabulary::decode(std::span<const Index> ids) const {
  std::vector<std::string> toks;
  toks.reserve(ids.size());
  for (Index i : ids) toks.push_back(token(i));
  return detokenize(toks, unit_);
}

void Vocabulary::write(ByteWriter& out) const {
  out.put<std::uint32_t>(unit_ == Unit::character ? 0 : 1);
  out.put<std::uint64_t>(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out.put_string(tokens_[i]);
    out.put<std::uint64_t>(freq_[i]);
  }
}

Vocabulary Vocabulary::read(ByteReader& in) {
  Vocabulary v;
  const auto unit = in.get<std::uint32_t>();
  if (unit > 1) throw CheckpointError("bad vocabulary unit tag");
  v.unit_ = unit == 0 ? Unit::character : Unit::word;
  const auto n = in.get<std::uint64_t>();
  if (n < static_cast<std::uint64_t>(kSpecials) || n > in.remaining()) throw CheckpointError("bad vocabulary size");
  v.tokens_.clear();
  v.freq_.clear();
  v.index_.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    auto tok = in.get_string();
    const auto f = in.get<std::uint64_t>();
    if (!v.index_.emplace(tok, static_cast<Index>(i)).second) throw CheckpointError("duplicate vocabulary token");
    v.tokens_.push_back(std::move(tok));
    v.freq_.push_back(f);
  }
  if (v.tokens_[kPad] != kPadToken || v.tokens_[kStart] != kStartToken || v.tokens_[kOov] != kOovToken)
    throw CheckpointError("vocabulary specials missing");
  return v;
}

Vocabulary build_vocab(std::string_view corpus, Unit unit, Index max_size) {
  const auto toks = tokenize(corpus, unit);
  if (toks.empty()) throw DataError("build_vocab: empty corpus");
  return Vocabulary::build(toks, unit, max_size);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace sparsernn
