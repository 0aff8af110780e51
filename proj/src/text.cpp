#include "tride/text.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "tride/checkpoint.hpp"
#include "tride/errors.hpp"

namespace tride {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_sentences(const std::string& paragraph) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : paragraph) {
    if (ch == '.' || ch == '!' || ch == '?') {
      const std::string s = trim(cur);
      if (!s.empty()) out.push_back(s);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  const std::string tail = trim(cur);
  if (!tail.empty()) out.push_back(tail);
  return out;
}

std::uint64_t fnv1a64(const std::string& token) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::string render_prompt() {
  return "Describe the frame in five parts, and each part starts with a dash sign (-). "
         "The first part describes the image in general, including the weather conditions. "
         "The second to fifth parts describe the objects and estimate their depth "
         "(maximum 80 meters) in the right part, middle right part, middle left part, "
         "and left part of the image, respectively.";
}

SceneDescription parse_description(const std::string& text, bool regional_rtl) {
  // A dash opens a new paragraph when it is the first meaningful character of
  // a line, or directly follows a sentence end (so single-line transcripts
  // like "-a. -b. ..." work); hyphens inside words or ranges never split.
  std::vector<std::string> paragraphs;
  char prev_meaningful = '\0';
  bool line_start = true;
  bool open = false;
  for (char ch : text) {
    if (ch == '\n') {
      line_start = true;
      if (open) paragraphs.back().push_back(' ');
      continue;
    }
    const bool is_space = std::isspace(static_cast<unsigned char>(ch));
    if (ch == '-' &&
        (line_start || prev_meaningful == '\0' || prev_meaningful == '.' ||
         prev_meaningful == '!' || prev_meaningful == '?')) {
      paragraphs.emplace_back();
      open = true;
      prev_meaningful = '-';
      line_start = false;
      continue;
    }
    if (!is_space) {
      prev_meaningful = ch;
      line_start = false;
    }
    if (open) paragraphs.back().push_back(ch);
  }
  if (paragraphs.size() != 5) {
    throw ParseError("expected 5 paragraphs, got " + std::to_string(paragraphs.size()));
  }
  for (auto& p : paragraphs) p = trim(p);
  SceneDescription desc;
  desc.general = split_sentences(paragraphs[0]);
  if (desc.general.empty()) throw ParseError("general paragraph is empty");
  for (int i = 0; i < 4; ++i) {
    const int slot = regional_rtl ? 3 - i : i;
    desc.regional[slot] = split_sentences(paragraphs[1 + i]);
    if (desc.regional[slot].empty()) {
      throw ParseError("regional paragraph " + std::to_string(i + 2) + " is empty");
    }
  }
  return desc;
}

Tensor<float> embed_sentence(const std::string& sentence, int dim) {
  if (dim <= 0) throw ContractError("embed_sentence needs dim > 0");
  Tensor<float> vec({dim});
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a64(token);
    const int idx = static_cast<int>(h % static_cast<std::uint64_t>(dim));
    vec.data[idx] += (h >> 63) ? -1.f : 1.f;
    any = true;
    token.clear();
  };
  for (char ch : sentence) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  if (!any) return vec;
  double norm = 0.0;
  for (float v : vec.data) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (float& v : vec.data) v = static_cast<float>(v / norm);
  }
  return vec;
}

SentenceFeatures embed_description(const SceneDescription& desc, int dim) {
  SentenceFeatures out;
  out.dim = dim;
  for (const auto& s : desc.general) out.paragraphs[0].push_back(embed_sentence(s, dim));
  for (int r = 0; r < 4; ++r) {
    for (const auto& s : desc.regional[r]) {
      out.paragraphs[1 + r].push_back(embed_sentence(s, dim));
    }
  }
  return out;
}

static constexpr char kTextMagic[8] = {'T', 'R', 'I', 'D', 'E', 'T', 'X', 'T'};

void save_sentence_features(const SentenceFeatures& feats, const std::string& path) {
  std::string bytes(kTextMagic, 8);
  detail::put_u32_le(bytes, 5);
  for (const auto& para : feats.paragraphs) {
    if (para.empty()) throw ContractError("sentence-features paragraph has no sentences");
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(para.size()));
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(feats.dim));
    for (const auto& vec : para) {
      if (vec.shape != Shape{feats.dim}) {
        throw ContractError("sentence vector dim mismatch in save_sentence_features");
      }
      for (float v : vec.data) detail::put_u32_le(bytes, std::bit_cast<std::uint32_t>(v));
    }
  }
  detail::write_file_bytes(path, bytes);
}

SentenceFeatures load_sentence_features(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (off + n > bytes.size()) {
      throw FormatError(std::string("sentence-features file truncated reading ") + what, off);
    }
  };
  need(8, "magic");
  if (bytes.compare(0, 8, kTextMagic, 8) != 0) {
    throw FormatError("bad sentence-features magic", 0);
  }
  off = 8;
  need(4, "paragraph count");
  const std::uint32_t nparas = detail::get_u32_le(raw + off);
  off += 4;
  if (nparas != 5) {
    throw FormatError("sentence-features paragraph count must be 5, got " +
                          std::to_string(nparas),
                      8);
  }
  SentenceFeatures out;
  out.dim = -1;
  for (int p = 0; p < 5; ++p) {
    need(8, "paragraph header");
    const std::uint32_t nsent = detail::get_u32_le(raw + off);
    const std::uint32_t dim = detail::get_u32_le(raw + off + 4);
    off += 8;
    if (nsent == 0) throw FormatError("paragraph with zero sentences", off - 8);
    if (dim == 0) throw FormatError("zero-dimensional sentence vectors", off - 4);
    if (out.dim < 0) {
      out.dim = static_cast<int>(dim);
    } else if (out.dim != static_cast<int>(dim)) {
      throw FormatError("inconsistent sentence vector dims across paragraphs", off - 4);
    }
    for (std::uint32_t s = 0; s < nsent; ++s) {
      need(static_cast<std::size_t>(dim) * 4, "sentence vector");
      Tensor<float> vec({static_cast<int>(dim)});
      for (std::uint32_t j = 0; j < dim; ++j) {
        vec.data[j] = std::bit_cast<float>(detail::get_u32_le(raw + off));
        off += 4;
      }
      out.paragraphs[p].push_back(std::move(vec));
    }
  }
  if (off != bytes.size()) {
    throw FormatError("trailing bytes after sentence-features payload", off);
  }
  return out;
}

}  // namespace tride
