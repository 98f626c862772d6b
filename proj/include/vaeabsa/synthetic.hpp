#pragma once

// Generator for a small review corpus with planted structure: each document
// mentions zero, one or two aspects through aspect word families, expresses a
// polarity toward each through sentiment words, and carries a rating that is
// a monotone function of its sentiment words. Used by the test suites and by
// the `synth` CLI command.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "vaeabsa/corpus.hpp"
#include "vaeabsa/seeding.hpp"

namespace vaeabsa {

struct SyntheticConfig {
  std::size_t documents = 2000;
  std::uint64_t seed = 1;
  std::size_t seeds_per_topic = 3;
  std::string id_prefix = "doc";
  double p_no_aspect = 0.2;   // filler-only documents
  double p_one_aspect = 0.65; // the rest mention two aspects
};

struct SyntheticCorpus {
  std::vector<DocumentRecord> documents;   // text + rating, BoW empty
  std::vector<LabeledSentence> labels;     // planted (aspect, sentiment) pairs
  SeedSpec seeds;
};

struct SyntheticVocabulary {
  std::vector<std::pair<std::string, std::vector<std::string>>> aspects{
      {"food", {"pizza", "sushi", "pasta", "steak", "burger", "salad", "noodles", "dessert", "bread", "soup", "curry",
                "tacos"}},
      {"service", {"waiter", "staff", "server", "waitress", "hostess", "manager", "bartender", "cashier",
                   "reservation", "tip", "order", "bill"}},
      {"ambience", {"decor", "music", "lighting", "atmosphere", "ambience", "seating", "patio", "interior", "noise",
                    "vibe", "view", "furniture"}},
  };
  std::vector<std::string> positive{"great", "delicious", "excellent", "amazing", "wonderful",
                                    "friendly", "fantastic", "perfect", "lovely", "superb"};
  std::vector<std::string> negative{"terrible", "awful", "bland", "rude", "horrible",
                                    "disgusting", "mediocre", "slow", "dirty", "overpriced"};
  std::vector<std::string> background{"the", "and", "was", "we", "it", "to", "of", "for", "with", "this",
                                      "that", "they", "there", "had", "very", "just", "really", "our", "at", "on",
                                      "but", "so", "my", "got", "went", "came", "again", "here", "back", "also",
                                      "place", "time", "night", "friend", "table", "menu", "after", "before",
                                      "about", "would"};
};

inline SyntheticCorpus make_synthetic_corpus(const SyntheticConfig& cfg) {
  const SyntheticVocabulary words;
  std::mt19937_64 rng(cfg.seed);
  auto pick = [&](const std::vector<std::string>& from) {
    return from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)];
  };
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  SyntheticCorpus out;
  const std::size_t A = words.aspects.size();
  for (std::size_t d = 0; d < cfg.documents; ++d) {
    const double r = u01(rng);
    const std::size_t n_aspects = r < cfg.p_no_aspect ? 0 : (r < cfg.p_no_aspect + cfg.p_one_aspect ? 1 : 2);
    std::vector<std::size_t> order(A);
    for (std::size_t k = 0; k < A; ++k) order[k] = k;
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::string> tokens;
    LabeledSentence gold;
    int net = 0;
    for (std::size_t j = 0; j < n_aspects; ++j) {
      const auto& [label, family] = words.aspects[order[j]];
      const int mentions = uniform(2, 4);
      for (int m = 0; m < mentions; ++m) tokens.push_back(pick(family));
      const double pr = u01(rng);
      Sentiment pol = pr < 0.45 ? Sentiment::positive : (pr < 0.85 ? Sentiment::negative : Sentiment::neutral);
      if (pol != Sentiment::neutral) {
        const int n = uniform(1, 2);
        for (int m = 0; m < n; ++m) tokens.push_back(pick(pol == Sentiment::positive ? words.positive : words.negative));
        net += pol == Sentiment::positive ? n : -n;
      }
      gold.gold.emplace(label, pol);
    }
    const int filler = uniform(4, 10);
    for (int m = 0; m < filler; ++m) tokens.push_back(pick(words.background));
    std::shuffle(tokens.begin(), tokens.end(), rng);

    DocumentRecord doc;
    doc.id = cfg.id_prefix + std::to_string(d);
    for (std::size_t i = 0; i < tokens.size(); ++i) doc.text += (i ? " " : "") + tokens[i];
    doc.rating = std::clamp(3 + net, 1, 5);
    doc.y_s = rescale_rating(*doc.rating);
    gold.id = doc.id;
    gold.text = doc.text;
    out.labels.push_back(std::move(gold));
    out.documents.push_back(std::move(doc));
  }

  const auto head = [&](const std::vector<std::string>& v) {
    return std::vector<std::string>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.seeds_per_topic, v.size())));
  };
  for (const auto& [label, family] : words.aspects) out.seeds.aspects.emplace_back(label, head(family));
  out.seeds.sentiments = {{"positive", head(words.positive)}, {"negative", head(words.negative)}};
  out.seeds.background = {{"the", "and", "was"}, {"we", "it", "to"}};
  return out;
}

}  // namespace vaeabsa
