#pragma once

// Topic-word matrix initialization: Xavier-normal base, then either direct
// seeding (add c to each seed word's entry) or seed bootstrapping (add c
// times the cosine similarity to the topic's mean seed embedding, for every
// vocabulary word with an embedding).

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "vaeabsa/corpus.hpp"
#include "vaeabsa/error.hpp"
#include "vaeabsa/model.hpp"

namespace vaeabsa {

using SeedList = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct SeedSpec {
  SeedList aspects;                              // in topic order
  SeedList sentiments;                           // usually positive, negative
  std::vector<std::vector<std::string>> background;
  double seed_value = 10.0;

  TopicLayout layout() const {
    TopicLayout l;
    l.aspect_labels.clear();
    l.sentiment_labels.clear();
    for (const auto& [label, words] : aspects) l.aspect_labels.push_back(label);
    for (const auto& [label, words] : sentiments) l.sentiment_labels.push_back(label);
    l.background_count = background.size();
    return l;
  }

  /// (topic index, seed words) for every topic, in topic order.
  std::vector<std::pair<std::size_t, const std::vector<std::string>*>> topics() const {
    std::vector<std::pair<std::size_t, const std::vector<std::string>*>> out;
    std::size_t k = 0;
    for (const auto& a : aspects) out.emplace_back(k++, &a.second);
    for (const auto& s : sentiments) out.emplace_back(k++, &s.second);
    for (const auto& b : background) out.emplace_back(k++, &b);
    return out;
  }

  void validate() const {
    if (!(seed_value > 0.0) || !std::isfinite(seed_value)) throw ValidationError("seed_value must be positive");
    layout().validate();
  }
};

/// Background seed words shipped by default, one list per topic.
inline std::vector<std::vector<std::string>> default_background_seeds() {
  return {
      {"fully", "somehow", "apparently", "since", "already"},
      {"whatever", "another", "neither", "everyone", "someone"},
      {"besides", "despite", "whether", "till"},
      {"quite", "another", "every"},
      {"might", "may", "must", "could"},
      {"near", "among", "along", "across", "without"},
      {"ok", "okay", "oh", "wow"},
      {"yet", "plus", "either"},
      {"five", "six", "ten", "four", "three", "two", "one"},
  };
}

namespace detail {

inline std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::vector<std::string> word_list(const nlohmann::ordered_json& j, const std::string& where) {
  if (j.is_string()) return split_words(j.get<std::string>());
  if (!j.is_array()) throw ValidationError("seed list for " + where + " must be an array of words");
  std::vector<std::string> out;
  for (const auto& w : j) {
    if (!w.is_string()) throw ValidationError("seed list for " + where + " contains a non-string");
    for (auto& piece : split_words(w.get<std::string>())) out.push_back(std::move(piece));
  }
  return out;
}

}  // namespace detail

inline SeedSpec parse_seed_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ValidationError("seed file must be a JSON object");
  SeedSpec spec;
  if (!j.contains("aspects") || !j["aspects"].is_object()) throw ValidationError("seed file needs an \"aspects\" object");
  for (const auto& [label, words] : j["aspects"].items()) {
    spec.aspects.emplace_back(label, detail::word_list(words, "aspect '" + label + "'"));
  }
  if (j.contains("sentiments")) {
    if (!j["sentiments"].is_object()) throw ValidationError("\"sentiments\" must be an object");
    for (const auto& [label, words] : j["sentiments"].items()) {
      spec.sentiments.emplace_back(label, detail::word_list(words, "sentiment '" + label + "'"));
    }
  } else {
    spec.sentiments = {{"positive", {}}, {"negative", {}}};
  }
  if (j.contains("background")) {
    if (!j["background"].is_array()) throw ValidationError("\"background\" must be a list of word lists");
    std::size_t i = 0;
    for (const auto& words : j["background"]) {
      spec.background.push_back(detail::word_list(words, "background topic " + std::to_string(++i)));
    }
  } else {
    spec.background = default_background_seeds();
  }
  if (j.contains("seed_value")) spec.seed_value = j["seed_value"].get<double>();
  spec.validate();
  return spec;
}

inline SeedSpec load_seed_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open seed file '" + path + "'");
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("seed file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_seed_json(j);
}

inline nlohmann::ordered_json seed_json(const SeedSpec& spec) {
  nlohmann::ordered_json j;
  j["aspects"] = nlohmann::ordered_json::object();
  for (const auto& [l, w] : spec.aspects) j["aspects"][l] = w;
  j["sentiments"] = nlohmann::ordered_json::object();
  for (const auto& [l, w] : spec.sentiments) j["sentiments"][l] = w;
  j["background"] = spec.background;
  return j;
}

/// Returns one warning per out-of-vocabulary seed and per topic whose seeds
/// are all out of vocabulary.
inline std::vector<std::string> check_seeds(const SeedSpec& spec, const Vocabulary& vocab) {
  std::vector<std::string> warnings;
  const auto layout = spec.layout();
  for (const auto& [k, words] : spec.topics()) {
    std::size_t found = 0;
    for (const auto& w : *words) {
      if (vocab.contains(w)) {
        ++found;
      } else {
        warnings.push_back("seed word '" + w + "' for " + layout.topic_label(k) + " is not in the vocabulary");
      }
    }
    if (!words->empty() && found == 0) {
      warnings.push_back("every seed word of " + layout.topic_label(k) + " is out of vocabulary; topic is unseeded");
    }
  }
  return warnings;
}

/// Xavier-normal init for a V x K map: N(0, 2 / (V + K)).
template <class Rng>
Eigen::MatrixXd init_beta(std::size_t V, std::size_t K, Rng& rng) {
  if (V < 1 || K < 1) throw ValidationError("init_beta needs V, K >= 1");
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(V + K)));
  Eigen::MatrixXd beta(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(K));
  for (Eigen::Index c = 0; c < beta.cols(); ++c) {
    for (Eigen::Index r = 0; r < beta.rows(); ++r) beta(r, c) = nd(rng);
  }
  return beta;
}

struct SeedResult {
  Eigen::MatrixXd beta;
  std::vector<std::string> warnings;
};

inline SeedResult direct_seed(Eigen::MatrixXd beta, const SeedSpec& spec, const Vocabulary& vocab) {
  if (static_cast<std::size_t>(beta.cols()) != spec.layout().K() ||
      static_cast<std::size_t>(beta.rows()) != vocab.size()) {
    throw ValidationError("beta shape does not match vocabulary and seed layout");
  }
  SeedResult r{std::move(beta), check_seeds(spec, vocab)};
  for (const auto& [k, words] : spec.topics()) {
    for (const auto& w : *words) {
      if (auto v = vocab.find(w)) r.beta(static_cast<Eigen::Index>(*v), static_cast<Eigen::Index>(k)) += spec.seed_value;
    }
  }
  return r;
}

struct StaticEmbeddings {
  std::size_t dim = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors;

  const Eigen::VectorXd* find(const std::string& w) const {
    auto it = vectors.find(w);
    return it == vectors.end() ? nullptr : &it->second;
  }
};

/// Plain-text word vectors, "word v1 ... vd" per line. A leading
/// "count dim" header line (word2vec text format) is skipped.
inline StaticEmbeddings load_static_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open static embeddings '" + path + "'");
  StaticEmbeddings emb;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = detail::split_words(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2 && fields[0].find_first_not_of("0123456789") == std::string::npos &&
        fields[1].find_first_not_of("0123456789") == std::string::npos) {
      continue;
    }
    if (fields.size() < 2) throw FormatError(path + ":" + std::to_string(lineno) + ": no vector values");
    const std::size_t d = fields.size() - 1;
    if (emb.dim == 0) emb.dim = d;
    if (d != emb.dim) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(emb.dim) +
                        " values, found " + std::to_string(d));
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      const auto& f = fields[i + 1];
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f.size() || !std::isfinite(x)) {
        throw FormatError(path + ":" + std::to_string(lineno) + ": non-numeric value '" + f + "'");
      }
      v(static_cast<Eigen::Index>(i)) = x;
    }
    emb.vectors[fields[0]] = std::move(v);
  }
  if (emb.vectors.empty()) throw FormatError("static embeddings file '" + path + "' is empty");
  return emb;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// Signed increments: words pointing away from the seed centroid are
/// lowered. Topics with no embeddable seed fall back to direct seeding.
inline SeedResult bootstrap_seed(Eigen::MatrixXd beta, const SeedSpec& spec, const Vocabulary& vocab,
                                 const StaticEmbeddings& emb) {
  if (static_cast<std::size_t>(beta.cols()) != spec.layout().K() ||
      static_cast<std::size_t>(beta.rows()) != vocab.size()) {
    throw ValidationError("beta shape does not match vocabulary and seed layout");
  }
  SeedResult r{std::move(beta), check_seeds(spec, vocab)};
  const auto layout = spec.layout();
  std::vector<const Eigen::VectorXd*> word_vecs(vocab.size(), nullptr);
  std::size_t covered = 0;
  for (std::size_t v = 0; v < vocab.size(); ++v) {
    word_vecs[v] = emb.find(vocab.word(v));
    covered += word_vecs[v] != nullptr;
  }
  if (covered == 0) throw ValidationError("static embeddings cover no vocabulary word");

  for (const auto& [k, words] : spec.topics()) {
    if (words->empty()) continue;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(emb.dim));
    std::size_t n = 0;
    for (const auto& w : *words) {
      if (const auto* e = emb.find(w)) {
        centroid += *e;
        ++n;
      }
    }
    const auto col = static_cast<Eigen::Index>(k);
    if (n == 0) {
      r.warnings.push_back("no seed word of " + layout.topic_label(k) +
                           " has an embedding; falling back to direct seeding");
      for (const auto& w : *words) {
        if (auto v = vocab.find(w)) r.beta(static_cast<Eigen::Index>(*v), col) += spec.seed_value;
      }
      continue;
    }
    centroid /= static_cast<double>(n);
    for (std::size_t v = 0; v < vocab.size(); ++v) {
      if (word_vecs[v]) r.beta(static_cast<Eigen::Index>(v), col) += spec.seed_value * cosine(centroid, *word_vecs[v]);
    }
  }
  return r;
}

}  // namespace vaeabsa
