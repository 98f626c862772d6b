#pragma once

// Document ingestion: tokenization, vocabulary construction, bag-of-words
// vectors and rating targets.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vaeabsa/error.hpp"

namespace vaeabsa {

struct PreprocessConfig {
  bool lowercase = true;
  std::size_t min_token_length = 2;
  std::size_t min_doc_frequency = 2;
  std::size_t max_vocab_size = 2000;

  void validate() const {
    if (max_vocab_size < 1) throw ValidationError("max_vocab_size must be >= 1");
    if (min_token_length < 1) throw ValidationError("min_token_length must be >= 1");
  }
};

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], i).second) {
        throw ValidationError("duplicate vocabulary word '" + words_[i] + "'");
      }
    }
  }

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_.at(i); }

  std::optional<std::size_t> find(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& w) const { return index_.count(w) != 0; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Sparse count vector: (vocabulary index, count) pairs sorted by index with
/// strictly positive counts.
struct BowVector {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& e : entries) n += e.second;
    return n;
  }

  std::vector<double> dense(std::size_t vocab_size) const {
    std::vector<double> out(vocab_size, 0.0);
    for (const auto& [v, c] : entries) out.at(v) = static_cast<double>(c);
    return out;
  }

  friend bool operator==(const BowVector&, const BowVector&) = default;
};

struct DocumentRecord {
  std::string id;
  std::string text;
  std::optional<int> rating;
  std::optional<double> y_s;
  BowVector bow;
};

enum class Sentiment { positive, neutral, negative };

inline const char* to_string(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::neutral: return "neutral";
    case Sentiment::negative: return "negative";
  }
  return "neutral";
}

inline std::optional<Sentiment> parse_sentiment(const std::string& s) {
  if (s == "positive") return Sentiment::positive;
  if (s == "neutral") return Sentiment::neutral;
  if (s == "negative") return Sentiment::negative;
  return std::nullopt;
}

using AspectSentiment = std::pair<std::string, Sentiment>;

struct LabeledSentence {
  std::string id;
  std::string text;
  std::set<AspectSentiment> gold;
};

/// Lowercases (optionally) and splits on runs of non-alphanumeric ASCII.
/// Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
inline std::vector<std::string> preprocess_text(const std::string& raw, const PreprocessConfig& cfg) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= cfg.min_token_length) tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    const bool word_char = (u >= 0x80) || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') ||
                           (u >= 'A' && u <= 'Z');
    if (!word_char) {
      flush();
      continue;
    }
    if (cfg.lowercase && u >= 'A' && u <= 'Z') {
      cur.push_back(static_cast<char>(u - 'A' + 'a'));
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return tokens;
}

/// Keeps words with document frequency >= min_doc_frequency, then the
/// max_vocab_size most frequent by corpus count. Order: descending count,
/// ties lexicographic.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& docs, const PreprocessConfig& cfg) {
  cfg.validate();
  if (docs.empty()) throw ValidationError("cannot build a vocabulary from zero documents");
  std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> stats;  // count, df
  for (const auto& doc : docs) {
    std::unordered_set<std::string_view> seen;
    for (const auto& tok : doc) {
      auto& st = stats[tok];
      ++st.first;
      if (seen.insert(tok).second) ++st.second;
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [w, st] : stats) {
    if (st.second >= cfg.min_doc_frequency) kept.emplace_back(w, st.first);
  }
  if (kept.empty()) throw ValidationError("empty vocabulary: every word was filtered out");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (kept.size() > cfg.max_vocab_size) kept.resize(cfg.max_vocab_size);
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, c] : kept) words.push_back(std::move(w));
  return Vocabulary(std::move(words));
}

inline BowVector bow_vector(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::map<std::uint32_t, std::uint32_t> counts;
  for (const auto& t : tokens) {
    if (auto v = vocab.find(t)) ++counts[static_cast<std::uint32_t>(*v)];
  }
  BowVector out;
  out.entries.assign(counts.begin(), counts.end());
  return out;
}

inline double rescale_rating(int r) {
  if (r < 1 || r > 5) throw RangeError("rating " + std::to_string(r) + " outside 1..5");
  return (r - 1) / 4.0;
}

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(std::string("cannot open ") + what + " '" + path + "'");
  return in;
}

inline bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

template <class Fn>
void for_each_json_line(const std::string& path, const char* what, Fn&& fn) {
  auto in = open_input(path, what);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    try {
      fn(j, lineno);
    } catch (const RangeError& e) {
      throw RangeError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline std::string require_string(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
    throw ValidationError(std::string("missing or non-string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace detail

/// Reads the training corpus (JSON lines of {"id","text","rating"}). The BoW
/// is left empty; fill it with featurize() once a vocabulary exists.
inline std::vector<DocumentRecord> load_documents(const std::string& path) {
  std::vector<DocumentRecord> docs;
  std::unordered_set<std::string> ids;
  detail::for_each_json_line(path, "corpus", [&](const nlohmann::json& j, std::size_t) {
    DocumentRecord d;
    d.id = detail::require_string(j, "id");
    d.text = detail::require_string(j, "text");
    if (j.contains("rating") && !j["rating"].is_null()) {
      if (!j["rating"].is_number_integer()) throw ValidationError("rating must be an integer");
      const auto r = j["rating"].get<std::int64_t>();
      if (r < 1 || r > 5) throw RangeError("rating " + std::to_string(r) + " outside 1..5");
      d.rating = static_cast<int>(r);
      d.y_s = rescale_rating(*d.rating);
    }
    if (!ids.insert(d.id).second) throw ValidationError("duplicate document id '" + d.id + "'");
    docs.push_back(std::move(d));
  });
  return docs;
}

inline void write_documents(const std::vector<DocumentRecord>& docs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& d : docs) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.rating) j["rating"] = *d.rating;
    out << j.dump() << '\n';
  }
}

inline void featurize(std::vector<DocumentRecord>& docs, const Vocabulary& vocab, const PreprocessConfig& cfg) {
  for (auto& d : docs) d.bow = bow_vector(preprocess_text(d.text, cfg), vocab);
}

inline std::vector<LabeledSentence> load_labeled_eval(const std::string& path,
                                                      const std::vector<std::string>& aspect_labels) {
  const std::set<std::string> allowed(aspect_labels.begin(), aspect_labels.end());
  std::vector<LabeledSentence> out;
  std::unordered_set<std::string> ids;
  detail::for_each_json_line(path, "labeled eval data", [&](const nlohmann::json& j, std::size_t) {
    LabeledSentence s;
    s.id = detail::require_string(j, "id");
    s.text = detail::require_string(j, "text");
    if (j.contains("labels")) {
      if (!j["labels"].is_array()) throw ValidationError("'labels' must be an array");
      for (const auto& l : j["labels"]) {
        const auto aspect = detail::require_string(l, "aspect");
        const auto senti = detail::require_string(l, "sentiment");
        if (!allowed.count(aspect)) throw ValidationError("unknown aspect label '" + aspect + "'");
        const auto parsed = parse_sentiment(senti);
        if (!parsed) throw ValidationError("unknown sentiment label '" + senti + "'");
        s.gold.emplace(aspect, *parsed);
      }
    }
    if (!ids.insert(s.id).second) throw ValidationError("duplicate sentence id '" + s.id + "'");
    out.push_back(std::move(s));
  });
  return out;
}

inline void write_labeled_eval(const std::vector<LabeledSentence>& sents, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& s : sents) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["text"] = s.text;
    j["labels"] = nlohmann::ordered_json::array();
    for (const auto& [a, p] : s.gold) {
      j["labels"].push_back({{"aspect", a}, {"sentiment", to_string(p)}});
    }
    out << j.dump() << '\n';
  }
}

inline void write_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& w : vocab.words()) out << w << '\n';
}

inline Vocabulary read_vocab(const std::string& path) {
  auto in = detail::open_input(path, "vocabulary");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    words.push_back(line);
  }
  if (words.empty()) throw FormatError("vocabulary file '" + path + "' is empty");
  return Vocabulary(std::move(words));
}

}  // namespace vaeabsa
