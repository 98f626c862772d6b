#pragma once

// Subcommand bodies for the command-line tool. Each command checks its whole
// configuration and every input path before it writes anything.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vaeabsa/checkpoint.hpp"
#include "vaeabsa/config.hpp"
#include "vaeabsa/corpus.hpp"
#include "vaeabsa/embed_cache.hpp"
#include "vaeabsa/inference.hpp"
#include "vaeabsa/seeding.hpp"
#include "vaeabsa/synthetic.hpp"
#include "vaeabsa/training.hpp"

namespace vaeabsa {

namespace detail {

inline const std::string& need_input(const std::string& path, const char* artifact) {
  if (path.empty()) throw ValidationError(std::string("missing ") + artifact + ": no path configured");
  if (!std::filesystem::is_regular_file(path)) {
    throw ValidationError(std::string("missing ") + artifact + ": '" + path + "' does not exist");
  }
  return path;
}

inline const std::string& need_output(const std::string& path, const char* artifact) {
  if (path.empty()) throw ValidationError(std::string("missing ") + artifact + " output path");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty() && !std::filesystem::is_directory(parent)) {
    throw ValidationError(std::string("cannot write ") + artifact + ": directory '" + parent.string() +
                          "' does not exist");
  }
  return path;
}

inline nlohmann::ordered_json epoch_json(const EpochStats& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["kl"] = e.kl;
  j["recon"] = e.recon;
  j["s_asp"] = e.s_asp;
  j["s_senti"] = e.s_senti;
  j["total"] = e.total;
  j["lr"] = e.lr;
  return j;
}

inline void check_cache_dims(const EmbeddingCache& cache, const ModelShape& shape, const std::string& path) {
  if (cache.hidden_dim() != shape.hidden_dim || cache.num_layers() != shape.num_layers) {
    throw DataError("embedding cache '" + path + "' has H=" + std::to_string(cache.hidden_dim()) +
                    ", L=" + std::to_string(cache.num_layers()) + " but the model expects H=" +
                    std::to_string(shape.hidden_dim) + ", L=" + std::to_string(shape.num_layers));
  }
}

inline Checkpoint to_checkpoint(const ModelShape& shape, const TrainState& st) {
  return {shape, st.params, st.adam, st.epochs_completed, st.rng_state};
}

/// theta_a under inference-mode forward passes; documents without tokens map
/// to an all-zero vector.
inline std::vector<std::pair<std::string, Eigen::VectorXd>> aspect_proportions(
    const std::vector<DocumentRecord>& docs, const EmbeddingCache& cache, const Checkpoint& ck,
    const InferenceConfig& icfg, std::size_t max_tokens) {
  std::vector<std::pair<std::string, Eigen::VectorXd>> out;
  out.reserve(docs.size());
  const auto& s = ck.shape;
  for (const auto& d : docs) {
    const auto* rec = cache.find(d.id);
    if (!rec) throw DataError("document '" + d.id + "' has no entry in the embedding cache");
    if (rec->num_tokens == 0) {
      out.emplace_back(d.id, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.layout.A())));
      continue;
    }
    const auto states = doc_states(*rec, cache.num_layers(), cache.hidden_dim(), max_tokens);
    out.emplace_back(d.id, forward_infer(states, ck.params, s.layout, {s.activation, icfg.renormalize_theta_a}).theta_a);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// train_corpus -> vocab
inline void cmd_build_vocab(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  detail::need_input(cfg.paths.train_corpus, "training corpus");
  detail::need_output(cfg.paths.vocab, "vocabulary");
  const auto docs = load_documents(cfg.paths.train_corpus);
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  for (const auto& d : docs) tokens.push_back(preprocess_text(d.text, cfg.preprocess));
  const auto vocab = build_vocab(tokens, cfg.preprocess);
  write_vocab(vocab, cfg.paths.vocab);
  log << "vocabulary: " << vocab.size() << " words from " << docs.size() << " documents -> " << cfg.paths.vocab
      << '\n';
}

struct TrainOptions {
  std::string resume;  // checkpoint to continue from
};

/// train_corpus + vocab + cache + seeds -> checkpoint + train_log
inline TrainReport cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& log) {
  cfg.validate();
  const auto& p = cfg.paths;
  detail::need_input(p.train_corpus, "training corpus");
  detail::need_input(p.vocab, "vocabulary");
  detail::need_input(p.cache, "embedding cache");
  if (!p.seed_file.empty()) detail::need_input(p.seed_file, "seed file");
  if (cfg.train.seeding == SeedingMode::bootstrap && opt.resume.empty()) {
    detail::need_input(p.static_embeddings, "static word embeddings (required by bootstrap seeding)");
  }
  if (!opt.resume.empty()) detail::need_input(opt.resume, "checkpoint to resume");
  detail::need_output(p.checkpoint, "checkpoint");
  detail::need_output(p.train_log, "training log");
  const SeedSpec seeds = cfg.seeds();

  auto docs = load_documents(p.train_corpus);
  const auto vocab = read_vocab(p.vocab);
  featurize(docs, vocab, cfg.preprocess);
  const auto cache = read_cache(p.cache);
  const ModelShape shape{vocab.size(), seeds.layout(), cache.hidden_dim(), cache.num_layers(),
                         cfg.train.enc_hidden, cfg.train.senti_hidden, cfg.train.activation};

  TrainState state;
  if (opt.resume.empty()) {
    StaticEmbeddings emb;
    const bool bootstrap = cfg.train.seeding == SeedingMode::bootstrap;
    if (bootstrap) emb = load_static_embeddings(p.static_embeddings);
    auto [st, warnings] = initial_state(cfg.train, shape, seeds, vocab, bootstrap ? &emb : nullptr);
    for (const auto& w : warnings) log << "warning: " << w << '\n';
    state = std::move(st);
  } else {
    auto ck = read_checkpoint(opt.resume);
    if (!(ck.shape == shape)) throw DataError("checkpoint '" + opt.resume + "' does not match the configured model");
    if (!ck.adam) throw DataError("checkpoint '" + opt.resume + "' carries no optimizer state");
    state = {std::move(ck.params), std::move(*ck.adam), ck.epochs_completed, ck.rng_state};
    log << "resuming after epoch " << state.epochs_completed << '\n';
  }

  const auto mode = opt.resume.empty() ? std::ios::trunc : std::ios::app;
  std::ofstream train_log(p.train_log, std::ios::binary | mode);
  if (!train_log) throw Error("cannot write training log '" + p.train_log + "'");
  if (state.epochs_completed >= cfg.train.epochs) {
    write_checkpoint(detail::to_checkpoint(shape, state), p.checkpoint);
    log << "nothing to do: " << state.epochs_completed << " epochs already completed\n";
    return TrainReport{{}, std::move(state), 0, 0.0};
  }
  auto report = train(
      cfg.train, shape, {&docs, &cache}, std::move(state),
      [&](const EpochStats& e) {
        train_log << detail::epoch_json(e).dump() << '\n';
        train_log.flush();
        log << "epoch " << e.epoch << " total " << e.total << " lr " << e.lr << '\n';
      },
      [&](const TrainState& st) { write_checkpoint(detail::to_checkpoint(shape, st), p.checkpoint); });
  if (report.skipped_empty) log << "skipped " << report.skipped_empty << " documents with no tokens\n";
  write_checkpoint(detail::to_checkpoint(shape, report.state), p.checkpoint);
  log << "trained " << report.history.size() << " epochs in " << report.seconds << " s -> " << p.checkpoint << '\n';
  return report;
}

/// checkpoint + infer_input + infer_cache -> predictions. Returns the aspect
/// threshold used.
inline double cmd_infer(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto& p = cfg.paths;
  detail::need_input(p.checkpoint, "checkpoint");
  detail::need_input(p.infer_input, "inference input");
  const std::string& cache_path = p.infer_cache.empty() ? p.cache : p.infer_cache;
  detail::need_input(cache_path, "embedding cache for the inference input");
  std::string dev_cache_path;
  if (cfg.tune_aspect_threshold) {
    detail::need_input(p.dev_data, "dev data (aspect_threshold = dev)");
    dev_cache_path = p.dev_cache.empty() ? cache_path : p.dev_cache;
    detail::need_input(dev_cache_path, "embedding cache for the dev data");
  }
  detail::need_output(p.predictions, "predictions");

  const auto ck = read_checkpoint(p.checkpoint);
  const auto docs = load_documents(p.infer_input);
  const auto cache = read_cache(cache_path);
  detail::check_cache_dims(cache, ck.shape, cache_path);

  InferenceConfig icfg = cfg.infer;
  if (cfg.tune_aspect_threshold) {
    const auto gold = load_labeled_eval(p.dev_data, ck.shape.layout.aspect_labels);
    std::vector<DocumentRecord> dev_docs;
    dev_docs.reserve(gold.size());
    for (const auto& g : gold) dev_docs.push_back({g.id, g.text, std::nullopt, std::nullopt, {}});
    const auto dev_cache = dev_cache_path == cache_path ? EmbeddingCache() : read_cache(dev_cache_path);
    const auto& dc = dev_cache_path == cache_path ? cache : dev_cache;
    detail::check_cache_dims(dc, ck.shape, dev_cache_path);
    const auto theta = detail::aspect_proportions(dev_docs, dc, ck, icfg, cfg.train.max_tokens);
    icfg.aspect_threshold = select_aspect_threshold(theta, gold, ck.shape.layout, default_threshold_grid());
    log << "aspect_threshold " << icfg.aspect_threshold << " (selected on " << gold.size() << " dev sentences)\n";
  }

  std::vector<Prediction> preds;
  preds.reserve(docs.size());
  const auto& s = ck.shape;
  for (const auto& d : docs) {
    const auto* rec = cache.find(d.id);
    if (!rec) throw DataError("document '" + d.id + "' has no entry in the embedding cache '" + cache_path + "'");
    if (rec->num_tokens == 0) {
      preds.push_back(empty_prediction(d.id, s.layout));
      continue;
    }
    const auto states = doc_states(*rec, cache.num_layers(), cache.hidden_dim(), cfg.train.max_tokens);
    preds.push_back(infer(d.id, states, ck.params, s.layout, s.activation, icfg));
  }
  write_predictions(preds, p.predictions);
  log << "predictions for " << preds.size() << " documents -> " << p.predictions << '\n';
  return icfg.aspect_threshold;
}

struct TopicsOptions {
  bool init = false;  // show the seeded initialization instead of a checkpoint
};

/// checkpoint + vocab -> one line per topic: "<label>\t<w1> <w2> ..."
inline void cmd_topics(const RunConfig& cfg, const TopicsOptions& opt, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const auto& p = cfg.paths;
  detail::need_input(p.vocab, "vocabulary");
  Eigen::MatrixXd beta;
  TopicLayout layout;
  Vocabulary vocab;
  if (opt.init) {
    if (!p.seed_file.empty()) detail::need_input(p.seed_file, "seed file");
    if (cfg.train.seeding == SeedingMode::bootstrap) {
      detail::need_input(p.static_embeddings, "static word embeddings (required by bootstrap seeding)");
    }
    const SeedSpec seeds = cfg.seeds();
    vocab = read_vocab(p.vocab);
    std::size_t H = cfg.synthetic.hidden_dim;
    std::size_t L = cfg.synthetic.num_layers;
    if (!p.cache.empty()) {
      const auto cache = read_cache(detail::need_input(p.cache, "embedding cache"));
      H = cache.hidden_dim();
      L = cache.num_layers();
    }
    const ModelShape shape{vocab.size(), seeds.layout(), H, L,
                           cfg.train.enc_hidden, cfg.train.senti_hidden, cfg.train.activation};
    StaticEmbeddings emb;
    const bool bootstrap = cfg.train.seeding == SeedingMode::bootstrap;
    if (bootstrap) emb = load_static_embeddings(p.static_embeddings);
    auto [st, warnings] = initial_state(cfg.train, shape, seeds, vocab, bootstrap ? &emb : nullptr);
    for (const auto& w : warnings) log << "warning: " << w << '\n';
    beta = std::move(st.params.beta);
    layout = shape.layout;
  } else {
    detail::need_input(p.checkpoint, "checkpoint");
    vocab = read_vocab(p.vocab);
    auto ck = read_checkpoint(p.checkpoint);
    if (ck.shape.vocab_size != vocab.size()) {
      throw DataError("checkpoint vocabulary size " + std::to_string(ck.shape.vocab_size) + " differs from '" +
                      p.vocab + "' (" + std::to_string(vocab.size()) + " words)");
    }
    beta = std::move(ck.params.beta);
    layout = ck.shape.layout;
  }
  for (std::size_t k = 0; k < layout.K(); ++k) {
    out << layout.topic_label(k) << '\t';
    const auto words = top_words(beta, vocab, k, cfg.top_n);
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    out << '\n';
  }
}

/// predictions + eval_data -> eval_report (JSON; stdout when no path is set)
inline EvalReport cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
  cfg.validate();
  const auto& p = cfg.paths;
  detail::need_input(p.predictions, "predictions");
  detail::need_input(p.eval_data, "labeled evaluation data");
  if (!p.eval_report.empty()) detail::need_output(p.eval_report, "evaluation report");
  TopicLayout layout;
  if (!p.checkpoint.empty()) {
    layout = read_checkpoint(detail::need_input(p.checkpoint, "checkpoint")).shape.layout;
  } else {
    if (!p.seed_file.empty()) detail::need_input(p.seed_file, "seed file");
    layout = cfg.seeds().layout();
  }
  const auto gold = load_labeled_eval(p.eval_data, layout.aspect_labels);
  const auto preds = load_predictions(p.predictions);
  const auto report = evaluate(preds, gold, layout);
  const std::string text = to_json(report).dump(2) + "\n";
  if (p.eval_report.empty()) {
    out << text;
  } else {
    std::ofstream f(p.eval_report, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write evaluation report '" + p.eval_report + "'");
    f << text;
  }
  log << "aspect macro-F1 " << report.aspect.macro_f1 << ", aspect-sentiment macro-F1 "
      << report.aspect_sentiment.macro_f1 << " over " << report.sentences << " sentences\n";
  return report;
}

struct SynthOptions {
  std::string out_dir;
  std::size_t train_documents = 2000;
  std::size_t dev_documents = 300;
  std::size_t test_documents = 500;
};

/// Writes train.jsonl, dev.jsonl, test.jsonl (labeled) and seeds.json.
/// The three splits use generator seeds rng_seed, rng_seed+1, rng_seed+2.
inline void cmd_synth(const RunConfig& cfg, const SynthOptions& opt, std::ostream& log) {
  cfg.validate();
  if (opt.out_dir.empty()) throw ValidationError("missing output directory (--out-dir)");
  if (!std::filesystem::is_directory(opt.out_dir)) {
    throw ValidationError("output directory '" + opt.out_dir + "' does not exist");
  }
  if (opt.train_documents < 1) throw ValidationError("--documents must be >= 1");
  const std::filesystem::path dir(opt.out_dir);
  const auto seed = cfg.train.rng_seed;
  const auto tr = make_synthetic_corpus({opt.train_documents, seed, 3, "train-"});
  const auto dv = make_synthetic_corpus({opt.dev_documents, seed + 1, 3, "dev-"});
  const auto te = make_synthetic_corpus({opt.test_documents, seed + 2, 3, "test-"});
  write_documents(tr.documents, (dir / "train.jsonl").string());
  write_labeled_eval(dv.labels, (dir / "dev.jsonl").string());
  write_labeled_eval(te.labels, (dir / "test.jsonl").string());
  std::ofstream seeds((dir / "seeds.json").string(), std::ios::binary | std::ios::trunc);
  if (!seeds) throw Error("cannot write '" + (dir / "seeds.json").string() + "'");
  seeds << seed_json(tr.seeds).dump(2) << '\n';
  log << "synthetic corpus: " << tr.documents.size() << " train, " << dv.labels.size() << " dev, "
      << te.labels.size() << " test -> " << opt.out_dir << '\n';
}

struct EmbedSyntheticOptions {
  std::vector<std::string> inputs;
  std::string output;
};

/// Token-keyed stand-in embeddings for every document of every input file.
inline void cmd_embed_synthetic(const RunConfig& cfg, const EmbedSyntheticOptions& opt, std::ostream& log) {
  cfg.validate();
  if (opt.inputs.empty()) throw ValidationError("missing input documents (--input)");
  for (const auto& in : opt.inputs) detail::need_input(in, "input documents");
  detail::need_output(opt.output, "embedding cache");
  EmbeddingCache cache(cfg.synthetic.hidden_dim, cfg.synthetic.num_layers);
  for (const auto& in : opt.inputs) {
    for (const auto& d : load_documents(in)) {
      if (cache.find(d.id)) throw DataError("document id '" + d.id + "' appears in more than one input");
      cache.add(synthetic_record(d.id, preprocess_text(d.text, cfg.preprocess), cfg.synthetic.hidden_dim,
                                 cfg.synthetic.num_layers, cfg.synthetic.seed, cfg.train.max_tokens));
    }
  }
  write_cache(cache, opt.output);
  log << "embedding cache: " << cache.records().size() << " documents, H=" << cache.hidden_dim()
      << ", L=" << cache.num_layers() << " -> " << opt.output << '\n';
}

}  // namespace vaeabsa
