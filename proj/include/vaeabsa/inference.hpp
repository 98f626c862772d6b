#pragma once

// Multi-aspect inference, 3-class aspect sentiment, topic-word inspection and
// macro precision/recall/F1 evaluation.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "vaeabsa/corpus.hpp"
#include "vaeabsa/model.hpp"

namespace vaeabsa {

struct InferenceConfig {
  double aspect_threshold = 0.1;      // t
  double sentiment_threshold = 0.2;   // tau, upper band edge offset
  std::optional<double> sentiment_threshold_negative;  // lower band offset; defaults to tau
  double sentiment_center = 0.0;
  bool renormalize_theta_a = false;

  void validate() const {
    if (!(aspect_threshold > 0.0 && aspect_threshold < 1.0)) throw ValidationError("aspect_threshold must be in (0, 1)");
    if (!(sentiment_threshold > 0.0)) throw ValidationError("sentiment_threshold must be > 0");
    if (sentiment_threshold_negative && !(*sentiment_threshold_negative > 0.0)) {
      throw ValidationError("sentiment_threshold_negative must be > 0");
    }
  }
};

struct Prediction {
  std::string id;
  std::vector<std::string> aspects;                // in topic order
  std::map<std::string, double> coefficients;      // every aspect label
  std::map<std::string, Sentiment> sentiments;     // predicted aspects only

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Indices k with theta_a(k) > t (strict).
inline std::vector<std::size_t> predict_aspects(const Eigen::VectorXd& theta_a, double t) {
  std::vector<std::size_t> out;
  for (Eigen::Index k = 0; k < theta_a.size(); ++k) {
    if (theta_a(k) > t) out.push_back(static_cast<std::size_t>(k));
  }
  return out;
}

/// Symmetric band around `center` unless a separate negative offset is given.
inline Sentiment classify_sentiment(double s, double tau, double center = 0.0,
                                    std::optional<double> tau_negative = std::nullopt) {
  if (s > center + tau) return Sentiment::positive;
  if (s < center - tau_negative.value_or(tau)) return Sentiment::negative;
  return Sentiment::neutral;
}

inline Prediction make_prediction(const std::string& id, const Eigen::VectorXd& theta_a, const Eigen::VectorXd& s_asp,
                                  const TopicLayout& layout, const InferenceConfig& icfg) {
  Prediction pr;
  pr.id = id;
  for (std::size_t k = 0; k < layout.A(); ++k) {
    pr.coefficients[layout.aspect_labels[k]] = s_asp(static_cast<Eigen::Index>(k));
  }
  for (std::size_t k : predict_aspects(theta_a, icfg.aspect_threshold)) {
    const auto& label = layout.aspect_labels[k];
    pr.aspects.push_back(label);
    pr.sentiments[label] = classify_sentiment(s_asp(static_cast<Eigen::Index>(k)), icfg.sentiment_threshold,
                                              icfg.sentiment_center, icfg.sentiment_threshold_negative);
  }
  return pr;
}

inline Prediction infer(const std::string& id, const DocStates& states, const ModelParams& p, const TopicLayout& layout,
                        Activation act, const InferenceConfig& icfg) {
  const auto f = forward_infer(states, p, layout, {act, icfg.renormalize_theta_a});
  return make_prediction(id, f.theta_a, f.s_asp, layout, icfg);
}

/// Prediction for a document with no tokens: no aspects, zero coefficients.
inline Prediction empty_prediction(const std::string& id, const TopicLayout& layout) {
  Prediction pr;
  pr.id = id;
  for (const auto& l : layout.aspect_labels) pr.coefficients[l] = 0.0;
  return pr;
}

/// The n words with the largest beta(v, topic), descending, ties lexicographic.
inline std::vector<std::string> top_words(const Eigen::MatrixXd& beta, const Vocabulary& vocab, std::size_t topic,
                                          std::size_t n) {
  if (topic >= static_cast<std::size_t>(beta.cols())) throw ValidationError("topic index out of range");
  if (static_cast<std::size_t>(beta.rows()) != vocab.size()) throw ValidationError("beta rows differ from vocabulary size");
  n = std::min(n, vocab.size());
  std::vector<std::size_t> idx(vocab.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const auto col = static_cast<Eigen::Index>(topic);
  auto cmp = [&](std::size_t a, std::size_t b) {
    const double va = beta(static_cast<Eigen::Index>(a), col);
    const double vb = beta(static_cast<Eigen::Index>(b), col);
    if (va != vb) return va > vb;
    return vocab.word(a) < vocab.word(b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), cmp);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(vocab.word(idx[i]));
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct ClassMetrics {
  std::string label;
  ClassCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct TaskReport {
  std::vector<ClassMetrics> classes;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

struct EvalReport {
  TaskReport aspect;
  TaskReport aspect_sentiment;
  std::size_t sentences = 0;
};

/// P = TP/(TP+FP), R = TP/(TP+FN), F1 harmonic mean; each 0 when undefined.
inline ClassMetrics class_metrics(std::string label, ClassCounts c) {
  ClassMetrics m{std::move(label), c, 0.0, 0.0, 0.0};
  if (c.tp + c.fp) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

inline void finish_macro(TaskReport& r) {
  if (r.classes.empty()) return;
  for (const auto& c : r.classes) {
    r.macro_precision += c.precision;
    r.macro_recall += c.recall;
    r.macro_f1 += c.f1;
  }
  const double n = static_cast<double>(r.classes.size());
  r.macro_precision /= n;
  r.macro_recall /= n;
  r.macro_f1 /= n;
}

inline std::string pair_label(const AspectSentiment& p) { return p.first + ":" + to_string(p.second); }

/// Aspect task: one class per aspect label, macro over all of them.
/// Aspect-sentiment task: one class per (aspect, sentiment) pair that occurs
/// in the gold data, macro over those pairs only.
inline EvalReport evaluate(const std::vector<Prediction>& preds, const std::vector<LabeledSentence>& gold,
                           const TopicLayout& layout) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : preds) {
    if (!by_id.emplace(p.id, &p).second) throw DataError("duplicate prediction id '" + p.id + "'");
  }
  if (preds.size() != gold.size()) {
    throw DataError("alignment error: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(gold.size()) + " gold sentences");
  }
  std::map<std::string, ClassCounts> aspect_counts;
  for (const auto& l : layout.aspect_labels) aspect_counts[l];
  std::map<AspectSentiment, ClassCounts> pair_counts;
  std::set<AspectSentiment> gold_pairs;
  for (const auto& g : gold) gold_pairs.insert(g.gold.begin(), g.gold.end());
  for (const auto& p : gold_pairs) pair_counts[p];

  for (const auto& g : gold) {
    auto it = by_id.find(g.id);
    if (it == by_id.end()) throw DataError("alignment error: no prediction for sentence '" + g.id + "'");
    const Prediction& pr = *it->second;

    std::set<std::string> gold_aspects;
    for (const auto& [a, s] : g.gold) gold_aspects.insert(a);
    const std::set<std::string> pred_aspects(pr.aspects.begin(), pr.aspects.end());
    for (auto& [label, c] : aspect_counts) {
      const bool in_g = gold_aspects.count(label) != 0;
      const bool in_p = pred_aspects.count(label) != 0;
      if (in_g && in_p) ++c.tp;
      if (!in_g && in_p) ++c.fp;
      if (in_g && !in_p) ++c.fn;
    }

    std::set<AspectSentiment> pred_pairs;
    for (const auto& [a, s] : pr.sentiments) pred_pairs.emplace(a, s);
    for (auto& [pair, c] : pair_counts) {
      const bool in_g = g.gold.count(pair) != 0;
      const bool in_p = pred_pairs.count(pair) != 0;
      if (in_g && in_p) ++c.tp;
      if (!in_g && in_p) ++c.fp;
      if (in_g && !in_p) ++c.fn;
    }
  }

  EvalReport rep;
  rep.sentences = gold.size();
  for (const auto& label : layout.aspect_labels) rep.aspect.classes.push_back(class_metrics(label, aspect_counts[label]));
  for (const auto& [pair, c] : pair_counts) rep.aspect_sentiment.classes.push_back(class_metrics(pair_label(pair), c));
  finish_macro(rep.aspect);
  finish_macro(rep.aspect_sentiment);
  return rep;
}

inline nlohmann::ordered_json to_json(const TaskReport& t, const char* averaging) {
  nlohmann::ordered_json j;
  j["macro"] = {{"precision", t.macro_precision}, {"recall", t.macro_recall}, {"f1", t.macro_f1}};
  j["averaging"] = averaging;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : t.classes) {
    j["classes"].push_back({{"label", c.label},
                            {"precision", c.precision},
                            {"recall", c.recall},
                            {"f1", c.f1},
                            {"tp", c.counts.tp},
                            {"fp", c.counts.fp},
                            {"fn", c.counts.fn}});
  }
  return j;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["sentences"] = r.sentences;
  j["aspect"] = to_json(r.aspect, "unweighted mean over all aspect classes");
  j["aspect_sentiment"] =
      to_json(r.aspect_sentiment, "unweighted mean over (aspect, sentiment) pairs present in the gold data");
  return j;
}

/// Picks the aspect threshold with the best aspect macro-F1 on labeled dev
/// data; ties go to the smaller threshold.
inline double select_aspect_threshold(const std::vector<std::pair<std::string, Eigen::VectorXd>>& dev_theta_a,
                                      const std::vector<LabeledSentence>& gold, const TopicLayout& layout,
                                      const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("threshold grid is empty");
  double best_t = grid.front();
  double best_f1 = -1.0;
  for (double t : grid) {
    std::vector<Prediction> preds;
    preds.reserve(dev_theta_a.size());
    for (const auto& [id, th] : dev_theta_a) {
      Prediction pr;
      pr.id = id;
      for (std::size_t k : predict_aspects(th, t)) pr.aspects.push_back(layout.aspect_labels[k]);
      preds.push_back(std::move(pr));
    }
    const double f1 = evaluate(preds, gold, layout).aspect.macro_f1;
    if (f1 > best_f1 || (f1 == best_f1 && t < best_t)) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

inline std::vector<double> default_threshold_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 60; ++i) g.push_back(0.01 * i);
  return g;
}

// ---------------------------------------------------------------------------
// Predictions file: JSON lines {"id", "aspects", "coefficients", "sentiments"}

inline nlohmann::ordered_json to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["aspects"] = p.aspects;
  j["coefficients"] = nlohmann::ordered_json::object();
  for (const auto& [l, v] : p.coefficients) j["coefficients"][l] = v;
  j["sentiments"] = nlohmann::ordered_json::object();
  for (const auto& [l, s] : p.sentiments) j["sentiments"][l] = to_string(s);
  return j;
}

inline void write_predictions(const std::vector<Prediction>& preds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write predictions '" + path + "'");
  for (const auto& p : preds) out << to_json(p).dump() << '\n';
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
  std::vector<Prediction> out;
  detail::for_each_json_line(path, "predictions", [&](const nlohmann::json& j, std::size_t) {
    Prediction p;
    p.id = detail::require_string(j, "id");
    for (const auto& a : j.at("aspects")) p.aspects.push_back(a.get<std::string>());
    if (j.contains("coefficients")) {
      for (const auto& [l, v] : j["coefficients"].items()) p.coefficients[l] = v.get<double>();
    }
    if (j.contains("sentiments")) {
      for (const auto& [l, v] : j["sentiments"].items()) {
        auto s = parse_sentiment(v.get<std::string>());
        if (!s) throw ValidationError("unknown sentiment '" + v.get<std::string>() + "'");
        p.sentiments[l] = *s;
      }
    }
    out.push_back(std::move(p));
  });
  return out;
}

}  // namespace vaeabsa
