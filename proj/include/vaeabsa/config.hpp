#pragma once

// Run configuration: one flat key space, written as an INI-style file with
// sections for readability. Every key can also be set by a command-line flag
// of the same name. Precedence: built-in defaults < --profile < --config
// file < flags.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vaeabsa/corpus.hpp"
#include "vaeabsa/error.hpp"
#include "vaeabsa/inference.hpp"
#include "vaeabsa/seeding.hpp"
#include "vaeabsa/training.hpp"

namespace vaeabsa {

struct RunPaths {
  std::string train_corpus;
  std::string vocab;
  std::string cache;
  std::string seed_file;
  std::string static_embeddings;
  std::string checkpoint;
  std::string train_log;
  std::string infer_input;
  std::string infer_cache;
  std::string predictions;
  std::string eval_data;
  std::string eval_report;
  std::string dev_data;
  std::string dev_cache;
};

struct SyntheticEmbedConfig {
  std::uint32_t hidden_dim = 16;
  std::uint32_t num_layers = 3;
  std::uint64_t seed = 5;
};

struct RunConfig {
  std::string profile;  // empty, "restaurants" or "laptops"
  PreprocessConfig preprocess;
  TrainConfig train;
  InferenceConfig infer;
  bool tune_aspect_threshold = false;  // aspect_threshold = dev
  double seed_value = 10.0;
  std::size_t top_n = 10;
  RunPaths paths;
  SyntheticEmbedConfig synthetic;

  /// Seed spec: the seed file when set, else the profile's built-in lists.
  SeedSpec seeds() const;

  void validate() const {
    preprocess.validate();
    train.validate();
    if (!tune_aspect_threshold) infer.validate();
    else {
      InferenceConfig probe = infer;
      probe.aspect_threshold = 0.5;
      probe.validate();
    }
    if (!(seed_value > 0.0)) throw ValidationError("seed_value must be > 0");
    if (top_n < 1) throw ValidationError("top_n must be >= 1");
    if (synthetic.hidden_dim < 1 || synthetic.num_layers < 1) throw ValidationError("synthetic dimensions must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Built-in profiles

inline SeedSpec restaurants_seeds() {
  SeedSpec s;
  s.aspects = {
      {"food", {"food", "pizza", "sushi"}},
      {"ambience", {"ambience", "atmosphere", "decor"}},
      {"location", {"location", "place", "city"}},
      {"service", {"service", "waiter", "staff"}},
      {"drinks", {"drinks", "wine", "beer"}},
  };
  s.sentiments = {{"positive", {"great", "fresh", "attentive"}}, {"negative", {"rude", "pricey", "soggy"}}};
  s.background = default_background_seeds();
  return s;
}

inline SeedSpec laptops_seeds() {
  SeedSpec s;
  s.aspects = {
      {"support", {"support", "warranty", "service"}},
      {"os", {"os", "windows", "mac"}},
      {"display", {"display", "screen", "led"}},
      {"battery", {"battery", "power", "hours"}},
      {"company", {"company", "apple", "dell"}},
      {"mouse", {"mouse", "touchpad", "trackpad"}},
      {"software", {"software", "programs", "apps"}},
      {"keyboard", {"keyboard", "keys", "typing"}},
  };
  s.sentiments = {{"positive", {"easy", "fast", "lightweight"}}, {"negative", {"hard", "old", "slow"}}};
  s.background = default_background_seeds();
  return s;
}

inline void apply_profile(RunConfig& cfg, const std::string& name) {
  if (name.empty()) return;
  if (name != "restaurants" && name != "laptops") {
    throw ValidationError("unknown profile '" + name + "' (restaurants|laptops)");
  }
  cfg.profile = name;
  cfg.preprocess.max_vocab_size = 2000;
  auto& t = cfg.train;
  t.batch_size = 16;
  t.adam_beta1 = 0.9;
  t.adam_beta2 = 0.99;
  t.zero_lr_epochs = 1;
  t.warmup_epochs = 1;
  t.weights = {0.1, 0.1, 10.0, 10.0};
  t.alpha = 1.0;
  t.activation = Activation::softplus;
  t.normalize_bow = false;
  cfg.seed_value = 10.0;
  cfg.tune_aspect_threshold = true;
  if (name == "restaurants") {
    t.learning_rate = 1e-5;
    t.epochs = 50;
    t.seeding = SeedingMode::bootstrap;
    cfg.infer.sentiment_threshold = 1.0 / 5.0;
  } else {
    t.learning_rate = 5e-4;
    t.epochs = 30;
    t.seeding = SeedingMode::direct;
    cfg.infer.sentiment_threshold = 3.0 / 16.0;
  }
}

inline SeedSpec RunConfig::seeds() const {
  SeedSpec s;
  if (!paths.seed_file.empty()) {
    s = load_seed_file(paths.seed_file);
  } else if (profile == "restaurants") {
    s = restaurants_seeds();
  } else if (profile == "laptops") {
    s = laptops_seeds();
  } else {
    throw ValidationError("no seed_file configured and no --profile selected");
  }
  s.seed_value = seed_value;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Key table

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  // Accept simple fractions such as 3/16.
  if (used != v.size()) {
    const auto slash = v.find('/');
    if (slash != std::string::npos) {
      const double num = parse_real(key, trim(v.substr(0, slash)));
      const double den = parse_real(key, trim(v.substr(slash + 1)));
      if (den == 0.0) throw ValidationError("config key '" + key + "': division by zero");
      return num / den;
    }
    throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  }
  return x;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, x);
  if (r.ec != std::errc() || r.ptr != end) {
    throw ValidationError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return x;
}

inline bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string section;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::parse_count;
  using detail::parse_flag;
  using detail::parse_real;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto path = [&](const char* name, std::string RunPaths::*field, const char* help) {
      k.push_back({name, "paths", help, [field](RunConfig& c, const std::string& v) { c.paths.*field = v; }});
    };
    path("train_corpus", &RunPaths::train_corpus, "training corpus (JSON lines)");
    path("vocab", &RunPaths::vocab, "vocabulary file, one word per line");
    path("cache", &RunPaths::cache, "token-embedding cache for the training corpus");
    path("seed_file", &RunPaths::seed_file, "seed-word JSON file");
    path("static_embeddings", &RunPaths::static_embeddings, "word vectors for bootstrap seeding");
    path("checkpoint", &RunPaths::checkpoint, "model checkpoint");
    path("train_log", &RunPaths::train_log, "per-epoch training log (JSON lines)");
    path("infer_input", &RunPaths::infer_input, "documents to run inference on (JSON lines)");
    path("infer_cache", &RunPaths::infer_cache, "embedding cache for infer_input");
    path("predictions", &RunPaths::predictions, "predictions file (JSON lines)");
    path("eval_data", &RunPaths::eval_data, "labeled evaluation sentences (JSON lines)");
    path("eval_report", &RunPaths::eval_report, "evaluation report (JSON)");
    path("dev_data", &RunPaths::dev_data, "labeled dev sentences for threshold selection");
    path("dev_cache", &RunPaths::dev_cache, "embedding cache for dev_data");

    auto count = [&](const char* name, const char* section, auto setter, const char* help) {
      k.push_back({name, section, help,
                   [setter, name](RunConfig& c, const std::string& v) { setter(c, parse_count(name, v)); }});
    };
    auto real = [&](const char* name, const char* section, auto setter, const char* help) {
      k.push_back({name, section, help,
                   [setter, name](RunConfig& c, const std::string& v) { setter(c, parse_real(name, v)); }});
    };
    auto flag = [&](const char* name, const char* section, auto setter, const char* help) {
      k.push_back({name, section, help,
                   [setter, name](RunConfig& c, const std::string& v) { setter(c, parse_flag(name, v)); }});
    };

    flag("lowercase", "corpus", [](RunConfig& c, bool v) { c.preprocess.lowercase = v; }, "lowercase text");
    count("min_token_length", "corpus", [](RunConfig& c, std::uint64_t v) { c.preprocess.min_token_length = v; },
          "drop shorter tokens");
    count("min_doc_frequency", "corpus", [](RunConfig& c, std::uint64_t v) { c.preprocess.min_doc_frequency = v; },
          "minimum document frequency for vocabulary words");
    count("max_vocab_size", "corpus", [](RunConfig& c, std::uint64_t v) { c.preprocess.max_vocab_size = v; },
          "vocabulary size V");
    count("max_tokens", "corpus", [](RunConfig& c, std::uint64_t v) { c.train.max_tokens = v; },
          "truncate token sequences to this length");

    count("enc_hidden", "model", [](RunConfig& c, std::uint64_t v) { c.train.enc_hidden = v; }, "encoder MLP width");
    count("senti_hidden", "model", [](RunConfig& c, std::uint64_t v) { c.train.senti_hidden = v; },
          "token sentiment MLP width");
    k.push_back({"activation", "model", "softplus|relu",
                 [](RunConfig& c, const std::string& v) { c.train.activation = parse_activation(v); }});
    real("alpha", "model", [](RunConfig& c, double v) { c.train.alpha = v; }, "symmetric Dirichlet concentration");
    flag("renormalize_theta_a", "model",
         [](RunConfig& c, bool v) {
           c.train.renormalize_theta_a = v;
           c.infer.renormalize_theta_a = v;
         },
         "renormalize the aspect slice of theta");
    real("senti_init", "model", [](RunConfig& c, double v) { c.train.senti_init = v; },
         "initial |s_senti| for the positive/negative topics");

    count("epochs", "train", [](RunConfig& c, std::uint64_t v) { c.train.epochs = v; }, "training epochs");
    count("batch_size", "train", [](RunConfig& c, std::uint64_t v) { c.train.batch_size = v; }, "documents per batch");
    real("learning_rate", "train", [](RunConfig& c, double v) { c.train.learning_rate = v; }, "peak learning rate");
    real("adam_beta1", "train", [](RunConfig& c, double v) { c.train.adam_beta1 = v; }, "Adam first-moment decay");
    real("adam_beta2", "train", [](RunConfig& c, double v) { c.train.adam_beta2 = v; }, "Adam second-moment decay");
    real("adam_eps", "train", [](RunConfig& c, double v) { c.train.adam_eps = v; }, "Adam epsilon");
    count("zero_lr_epochs", "train", [](RunConfig& c, std::uint64_t v) { c.train.zero_lr_epochs = v; },
          "epochs at zero learning rate before warmup");
    count("warmup_epochs", "train", [](RunConfig& c, std::uint64_t v) { c.train.warmup_epochs = v; },
          "epochs of linear warmup");
    real("c1", "train", [](RunConfig& c, double v) { c.train.weights.c1 = v; }, "KL weight");
    real("c2", "train", [](RunConfig& c, double v) { c.train.weights.c2 = v; }, "reconstruction weight");
    real("c3", "train", [](RunConfig& c, double v) { c.train.weights.c3 = v; }, "aspect-sentiment MSE weight");
    real("c4", "train", [](RunConfig& c, double v) { c.train.weights.c4 = v; }, "sentiment-topic MSE weight");
    k.push_back({"seeding", "train", "none|direct|bootstrap",
                 [](RunConfig& c, const std::string& v) { c.train.seeding = parse_seeding(v); }});
    real("seed_value", "train", [](RunConfig& c, double v) { c.seed_value = v; }, "seed increment c");
    flag("normalize_bow", "train", [](RunConfig& c, bool v) { c.train.normalize_bow = v; },
         "normalize target BoW to a distribution");
    count("seed", "train", [](RunConfig& c, std::uint64_t v) { c.train.rng_seed = v; }, "random seed");

    k.push_back({"aspect_threshold", "infer", "aspect threshold t in (0,1), or 'dev' to tune on dev_data",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "dev") {
                     c.tune_aspect_threshold = true;
                   } else {
                     c.tune_aspect_threshold = false;
                     c.infer.aspect_threshold = parse_real("aspect_threshold", v);
                   }
                 }});
    real("sentiment_threshold", "infer", [](RunConfig& c, double v) { c.infer.sentiment_threshold = v; },
         "3-class band half-width tau");
    real("sentiment_threshold_negative", "infer",
         [](RunConfig& c, double v) { c.infer.sentiment_threshold_negative = v; },
         "lower band half-width (defaults to tau)");
    real("sentiment_center", "infer", [](RunConfig& c, double v) { c.infer.sentiment_center = v; },
         "3-class band center");
    count("top_n", "infer", [](RunConfig& c, std::uint64_t v) { c.top_n = v; }, "words per topic for `topics`");

    count("synthetic_hidden", "synthetic",
          [](RunConfig& c, std::uint64_t v) { c.synthetic.hidden_dim = static_cast<std::uint32_t>(v); },
          "H for synthetic embeddings");
    count("synthetic_layers", "synthetic",
          [](RunConfig& c, std::uint64_t v) { c.synthetic.num_layers = static_cast<std::uint32_t>(v); },
          "L for synthetic embeddings");
    count("synthetic_seed", "synthetic", [](RunConfig& c, std::uint64_t v) { c.synthetic.seed = v; },
          "hash seed for synthetic embeddings");
    return k;
  }();
  return keys;
}

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, detail::trim(value));
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

/// Parses "[section]" headers, "key = value" lines and '#'/';' comments.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                          const std::string& origin = "config") {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(origin + ":" + std::to_string(lineno) + ": bad section header");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  for (const auto& [k, v] : parse_config_text(ss.str(), path)) {
    try {
      set_config_value(cfg, k, v);
    } catch (const ValidationError& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }
}

}  // namespace vaeabsa
