#pragma once

// Fixtures shared by the unit suites and the acceptance binary.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vaeabsa.hpp"

namespace vaeabsa::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vaeabsa-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// A random model plus a batch of documents with random states and BoWs.
struct GradProblem {
  ModelShape shape;
  ModelParams params;
  std::vector<DocumentRecord> docs;
  std::vector<DocStates> states;
  std::vector<BatchItem> batch;
};

struct GradProblemConfig {
  std::size_t V = 30;
  std::size_t A = 3;
  std::size_t S = 2;
  std::size_t B = 3;
  std::size_t H = 16;
  std::size_t L = 3;
  std::size_t width = 10;
  std::size_t documents = 4;
  std::size_t max_tokens = 5;
  double param_scale = 0.5;
  bool unrated_last = true;  // last document carries no rating
};

inline GradProblem make_grad_problem(const GradProblemConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradProblem g;
  g.shape.vocab_size = c.V;
  g.shape.layout.aspect_labels.clear();
  for (std::size_t a = 0; a < c.A; ++a) g.shape.layout.aspect_labels.push_back("a" + std::to_string(a));
  g.shape.layout.sentiment_labels.clear();
  for (std::size_t s = 0; s < c.S; ++s) g.shape.layout.sentiment_labels.push_back("s" + std::to_string(s));
  g.shape.layout.background_count = c.B;
  g.shape.hidden_dim = c.H;
  g.shape.num_layers = c.L;
  g.shape.enc_hidden = c.width;
  g.shape.senti_hidden = c.width;
  g.params = ModelParams::zeros(g.shape);
  std::normal_distribution<double> nd(0.0, c.param_scale);
  visit_tensors(g.params, [&](std::string_view, std::span<double> d, Eigen::Index, Eigen::Index) {
    for (double& x : d) x = nd(rng);
  });
  std::uniform_int_distribution<std::size_t> word(0, c.V - 1);
  std::uniform_int_distribution<std::size_t> len(1, c.max_tokens);
  std::uniform_int_distribution<int> rating(1, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  g.docs.resize(c.documents);
  g.states.resize(c.documents);
  for (std::size_t d = 0; d < c.documents; ++d) {
    auto& doc = g.docs[d];
    doc.id = "d" + std::to_string(d);
    if (!(c.unrated_last && d + 1 == c.documents && c.documents > 1)) {
      doc.rating = rating(rng);
      doc.y_s = rescale_rating(*doc.rating);
    }
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(c.L), static_cast<Eigen::Index>(c.H));
      for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = u(rng);
      g.states[d].tokens.push_back(m);
    }
    std::map<std::uint32_t, std::uint32_t> counts;
    for (std::size_t i = 0; i < n + 3; ++i) ++counts[static_cast<std::uint32_t>(word(rng))];
    doc.bow.entries.assign(counts.begin(), counts.end());
  }
  for (std::size_t d = 0; d < c.documents; ++d) g.batch.push_back({&g.docs[d], &g.states[d]});
  return g;
}

/// Three synthetic splits, their vocabulary and a shared token-keyed cache.
struct SyntheticData {
  SyntheticCorpus train;
  SyntheticCorpus dev;
  SyntheticCorpus test;
  Vocabulary vocab;
  EmbeddingCache cache;
  PreprocessConfig preprocess;
};

inline SyntheticData make_synthetic_data(std::size_t train_docs = 2000, std::size_t dev_docs = 300,
                                         std::size_t test_docs = 500, std::uint32_t H = 16, std::uint32_t L = 3,
                                         std::uint64_t corpus_seed = 11, std::uint64_t embed_seed = 5) {
  SyntheticData s;
  s.train = make_synthetic_corpus({train_docs, corpus_seed, 3, "tr"});
  s.dev = make_synthetic_corpus({dev_docs, corpus_seed + 1, 3, "dv"});
  s.test = make_synthetic_corpus({test_docs, corpus_seed + 2, 3, "te"});
  std::vector<std::vector<std::string>> tokens;
  for (const auto& d : s.train.documents) tokens.push_back(preprocess_text(d.text, s.preprocess));
  s.vocab = build_vocab(tokens, s.preprocess);
  featurize(s.train.documents, s.vocab, s.preprocess);
  s.cache = EmbeddingCache(H, L);
  for (const auto* split : {&s.train, &s.dev, &s.test}) {
    for (const auto& d : split->documents) {
      s.cache.add(synthetic_record(d.id, preprocess_text(d.text, s.preprocess), H, L, embed_seed));
    }
  }
  return s;
}

/// Settings under which the planted structure is recoverable at desk scale.
inline TrainConfig synthetic_train_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 5e-3;
  cfg.enc_hidden = 32;
  cfg.senti_hidden = 32;
  cfg.weights = {0.1, 1.0, 10.0, 10.0};
  cfg.seeding = SeedingMode::direct;
  cfg.rng_seed = seed;
  return cfg;
}

struct SyntheticRun {
  TrainReport report;
  double threshold = 0.0;
  std::vector<Prediction> predictions;
  EvalReport eval;
};

inline SyntheticRun run_synthetic(const SyntheticData& s, const TrainConfig& cfg) {
  const ModelShape shape{s.vocab.size(), s.train.seeds.layout(), s.cache.hidden_dim(), s.cache.num_layers(),
                         cfg.enc_hidden, cfg.senti_hidden, cfg.activation};
  auto init = initial_state(cfg, shape, s.train.seeds, s.vocab);
  SyntheticRun run;
  run.report = train(cfg, shape, {&s.train.documents, &s.cache}, std::move(init.first));
  const auto& params = run.report.state.params;
  const ForwardOptions fo{cfg.activation, cfg.renormalize_theta_a};

  std::vector<std::pair<std::string, Eigen::VectorXd>> dev_theta;
  for (const auto& d : s.dev.documents) {
    const auto st = doc_states(*s.cache.find(d.id), s.cache.num_layers(), s.cache.hidden_dim());
    dev_theta.emplace_back(d.id, forward_infer(st, params, shape.layout, fo).theta_a);
  }
  run.threshold = select_aspect_threshold(dev_theta, s.dev.labels, shape.layout, default_threshold_grid());

  InferenceConfig icfg;
  icfg.aspect_threshold = run.threshold;
  icfg.renormalize_theta_a = cfg.renormalize_theta_a;
  for (const auto& d : s.test.documents) {
    const auto st = doc_states(*s.cache.find(d.id), s.cache.num_layers(), s.cache.hidden_dim());
    run.predictions.push_back(infer(d.id, st, params, shape.layout, cfg.activation, icfg));
  }
  run.eval = evaluate(run.predictions, s.test.labels, shape.layout);
  return run;
}

/// Monte Carlo estimate of the expected aspect macro-F1 of random
/// predictions, taking the larger of two schemes: one uniformly drawn aspect
/// per sentence, and a uniformly drawn subset of aspects per sentence.
inline double random_assignment_f1(const std::vector<LabeledSentence>& gold, const TopicLayout& layout,
                                   std::size_t draws = 200, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> one(0, layout.A() - 1);
  std::bernoulli_distribution coin(0.5);
  double single = 0.0;
  double subset = 0.0;
  for (std::size_t t = 0; t < draws; ++t) {
    std::vector<Prediction> a;
    std::vector<Prediction> b;
    for (const auto& g : gold) {
      Prediction pa;
      pa.id = g.id;
      pa.aspects.push_back(layout.aspect_labels[one(rng)]);
      a.push_back(std::move(pa));
      Prediction pb;
      pb.id = g.id;
      for (const auto& l : layout.aspect_labels) {
        if (coin(rng)) pb.aspects.push_back(l);
      }
      b.push_back(std::move(pb));
    }
    single += evaluate(a, gold, layout).aspect.macro_f1;
    subset += evaluate(b, gold, layout).aspect.macro_f1;
  }
  return std::max(single, subset) / static_cast<double>(draws);
}

/// Per-label counting written independently of evaluate(): for every class,
/// scan the sentences and compare membership directly.
struct OracleScores {
  double aspect_macro_f1 = 0.0;
  double pair_macro_f1 = 0.0;
};

inline double oracle_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

inline OracleScores oracle_scores(const std::vector<Prediction>& preds, const std::vector<LabeledSentence>& gold,
                                  const TopicLayout& layout) {
  OracleScores o;
  auto pred_of = [&](const std::string& id) -> const Prediction& {
    for (const auto& p : preds) {
      if (p.id == id) return p;
    }
    throw std::logic_error("oracle: missing prediction " + id);
  };
  for (const auto& label : layout.aspect_labels) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& g : gold) {
      bool in_g = false;
      for (const auto& [a, s] : g.gold) in_g = in_g || a == label;
      const auto& pa = pred_of(g.id).aspects;
      const bool in_p = std::find(pa.begin(), pa.end(), label) != pa.end();
      tp += in_g && in_p;
      fp += !in_g && in_p;
      fn += in_g && !in_p;
    }
    o.aspect_macro_f1 += oracle_f1(tp, fp, fn);
  }
  o.aspect_macro_f1 /= static_cast<double>(layout.A());
  std::vector<AspectSentiment> pairs;
  for (const auto& g : gold) {
    for (const auto& p : g.gold) {
      if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) pairs.push_back(p);
    }
  }
  for (const auto& pair : pairs) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& g : gold) {
      const bool in_g = g.gold.count(pair) != 0;
      const auto& ps = pred_of(g.id).sentiments;
      const auto it = ps.find(pair.first);
      const bool in_p = it != ps.end() && it->second == pair.second;
      tp += in_g && in_p;
      fp += !in_g && in_p;
      fn += in_g && !in_p;
    }
    o.pair_macro_f1 += oracle_f1(tp, fp, fn);
  }
  if (!pairs.empty()) o.pair_macro_f1 /= static_cast<double>(pairs.size());
  return o;
}

/// Random gold labels and predictions over `layout`, `n` sentences.
inline std::pair<std::vector<LabeledSentence>, std::vector<Prediction>> random_labels(const TopicLayout& layout,
                                                                                   std::size_t n,
                                                                                   std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.35);
  std::uniform_int_distribution<int> senti(0, 2);
  const Sentiment kinds[] = {Sentiment::positive, Sentiment::negative, Sentiment::neutral};
  std::vector<LabeledSentence> gold;
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledSentence g;
    g.id = "s" + std::to_string(i);
    Prediction p;
    p.id = g.id;
    for (const auto& l : layout.aspect_labels) {
      if (coin(rng)) g.gold.emplace(l, kinds[senti(rng)]);
      p.coefficients[l] = 0.0;
      if (coin(rng)) {
        p.aspects.push_back(l);
        p.sentiments[l] = kinds[senti(rng)];
      }
    }
    gold.push_back(std::move(g));
    preds.push_back(std::move(p));
  }
  std::shuffle(preds.begin(), preds.end(), rng);
  return {std::move(gold), std::move(preds)};
}

/// Random valid cache: small H and L, 0..5 records, 0..4 tokens each,
/// ids with non-ASCII bytes, values spanning signs, magnitudes and zeros.
inline EmbeddingCache random_cache(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint32_t> dim(1, 6);
  std::uniform_int_distribution<int> records(0, 5);
  std::uniform_int_distribution<std::uint32_t> tokens(0, 4);
  std::uniform_int_distribution<int> kind(0, 3);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  EmbeddingCache cache(dim(rng), dim(rng));
  const int n = records(rng);
  for (int r = 0; r < n; ++r) {
    CacheRecord rec;
    rec.doc_id = "doc-" + std::to_string(r) + (r % 2 ? "-\xC3\xA9" : "");
    rec.num_tokens = tokens(rng);
    rec.states.resize(std::size_t{rec.num_tokens} * cache.num_layers() * cache.hidden_dim());
    for (float& v : rec.states) {
      switch (kind(rng)) {
        case 0: v = 0.0f; break;
        case 1: v = nd(rng) * 1e-30f; break;
        case 2: v = nd(rng) * 1e20f; break;
        default: v = nd(rng); break;
      }
    }
    cache.add(std::move(rec));
  }
  return cache;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace vaeabsa::testing
