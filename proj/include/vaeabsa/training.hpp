#pragma once

// Parameter initialization, the staggered-warmup learning-rate schedule, Adam,
// the mini-batch training loop and the finite-difference gradient checker.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "vaeabsa/corpus.hpp"
#include "vaeabsa/embed_cache.hpp"
#include "vaeabsa/gradients.hpp"
#include "vaeabsa/model.hpp"
#include "vaeabsa/objective.hpp"
#include "vaeabsa/seeding.hpp"

namespace vaeabsa {

using Rng = std::mt19937_64;

enum class SeedingMode { none, direct, bootstrap };

inline const char* to_string(SeedingMode m) {
  switch (m) {
    case SeedingMode::none: return "none";
    case SeedingMode::direct: return "direct";
    case SeedingMode::bootstrap: return "bootstrap";
  }
  return "none";
}

inline SeedingMode parse_seeding(std::string_view s) {
  if (s == "none") return SeedingMode::none;
  if (s == "direct") return SeedingMode::direct;
  if (s == "bootstrap") return SeedingMode::bootstrap;
  throw ValidationError("unknown seeding mode '" + std::string(s) + "' (none|direct|bootstrap)");
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double learning_rate = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  std::size_t zero_lr_epochs = 1;
  std::size_t warmup_epochs = 1;
  LossWeights weights;
  double alpha = 1.0;
  std::uint64_t rng_seed = 0;
  std::size_t enc_hidden = 100;
  std::size_t senti_hidden = 100;
  Activation activation = Activation::softplus;
  bool renormalize_theta_a = false;
  bool normalize_bow = false;
  double senti_init = 2.0;
  SeedingMode seeding = SeedingMode::direct;
  std::size_t max_tokens = 512;

  void validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ValidationError("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ValidationError("adam_beta2 must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be > 0");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be > 0");
    if (enc_hidden < 1 || senti_hidden < 1) throw ValidationError("MLP widths must be >= 1");
    weights.validate();
  }

  ObjectiveContext objective(const TopicLayout& layout) const {
    ObjectiveContext ctx;
    ctx.layout = layout;
    ctx.prior = dirichlet_prior_params(layout.K(), alpha);
    ctx.weights = weights;
    ctx.forward = {activation, renormalize_theta_a};
    ctx.normalize_bow = normalize_bow;
    return ctx;
  }
};

// ---------------------------------------------------------------------------
// Initialization

template <class R>
void xavier_normal(Eigen::MatrixXd& w, R& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols())));
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = nd(rng);
  }
}

struct InitResult {
  ModelParams params;
  std::vector<std::string> warnings;
};

/// MLP weights Xavier-normal with zero biases, uniform layer pooling,
/// s_senti = +senti_init for "positive" and -senti_init for "negative",
/// beta Xavier-normal followed by the configured seeding.
inline InitResult init_params(const ModelShape& shape, const SeedSpec& seeds, const Vocabulary& vocab,
                              SeedingMode seeding, double senti_init, Rng& rng,
                              const StaticEmbeddings* static_emb = nullptr) {
  seeds.validate();
  if (shape.layout != seeds.layout()) throw ValidationError("model layout differs from the seed file layout");
  if (shape.vocab_size != vocab.size()) throw ValidationError("model vocabulary size differs from the vocabulary");
  if (shape.num_layers < 1 || shape.hidden_dim < 1) throw ValidationError("embedding dimensions must be >= 1");
  InitResult r{ModelParams::zeros(shape), {}};
  auto& p = r.params;
  p.pool.setConstant(1.0 / static_cast<double>(shape.num_layers));
  xavier_normal(p.enc_w1, rng);
  xavier_normal(p.enc_mu_w, rng);
  xavier_normal(p.enc_lv_w, rng);
  xavier_normal(p.senti_w1, rng);
  xavier_normal(p.senti_w2, rng);
  for (std::size_t j = 0; j < shape.layout.S(); ++j) {
    const auto& label = shape.layout.sentiment_labels[j];
    if (label == "positive") p.s_senti(static_cast<Eigen::Index>(j)) = senti_init;
    if (label == "negative") p.s_senti(static_cast<Eigen::Index>(j)) = -senti_init;
  }
  Eigen::MatrixXd beta = init_beta(shape.vocab_size, shape.K(), rng);
  switch (seeding) {
    case SeedingMode::none:
      p.beta = std::move(beta);
      break;
    case SeedingMode::direct: {
      auto s = direct_seed(std::move(beta), seeds, vocab);
      p.beta = std::move(s.beta);
      r.warnings = std::move(s.warnings);
      break;
    }
    case SeedingMode::bootstrap: {
      if (!static_emb) throw ValidationError("bootstrap seeding needs static word embeddings");
      auto s = bootstrap_seed(std::move(beta), seeds, vocab, *static_emb);
      p.beta = std::move(s.beta);
      r.warnings = std::move(s.warnings);
      break;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule and optimizer

/// Zero for the first zero_lr_epochs, then a per-step linear ramp to
/// learning_rate over warmup_epochs, then constant.
inline double lr_schedule(std::size_t epoch, double step_fraction, const TrainConfig& cfg) {
  if (epoch < cfg.zero_lr_epochs) return 0.0;
  const std::size_t into = epoch - cfg.zero_lr_epochs;
  if (into < cfg.warmup_epochs) {
    const double progress = (static_cast<double>(into) + step_fraction) / static_cast<double>(cfg.warmup_epochs);
    return cfg.learning_rate * std::min(1.0, progress);
  }
  return cfg.learning_rate;
}

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t step = 0;

  static AdamState zeros(const ModelShape& s) { return {ModelParams::zeros(s), ModelParams::zeros(s), 0}; }
};

/// One Adam step with bias correction. A zero learning rate still advances
/// the moment estimates and the step counter.
inline void adam_update(ModelParams& p, const ModelParams& g, AdamState& st, double lr, const TrainConfig& cfg) {
  ++st.step;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  std::vector<std::span<double>> ps, ms, vs;
  std::vector<std::span<const double>> gs;
  visit_tensors(p, [&](std::string_view, std::span<double> d, Eigen::Index, Eigen::Index) { ps.push_back(d); });
  visit_tensors(st.m, [&](std::string_view, std::span<double> d, Eigen::Index, Eigen::Index) { ms.push_back(d); });
  visit_tensors(st.v, [&](std::string_view, std::span<double> d, Eigen::Index, Eigen::Index) { vs.push_back(d); });
  visit_tensors(g, [&](std::string_view, std::span<const double> d, Eigen::Index, Eigen::Index) { gs.push_back(d); });
  for (std::size_t t = 0; t < ps.size(); ++t) {
    for (std::size_t i = 0; i < ps[t].size(); ++i) {
      const double gi = gs[t][i];
      ms[t][i] = b1 * ms[t][i] + (1.0 - b1) * gi;
      vs[t][i] = b2 * vs[t][i] + (1.0 - b2) * gi * gi;
      if (lr != 0.0) ps[t][i] -= lr * (ms[t][i] / c1) / (std::sqrt(vs[t][i] / c2) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradients

struct GradientResult {
  ModelParams grad;
  std::vector<LossBreakdown> parts;
  std::vector<Noise> noise;
};

/// Draws one noise sample per document (in batch order) and returns the
/// exact gradient of the batch's weighted total loss.
template <class R>
GradientResult compute_gradients(const ModelParams& p, const ModelShape& shape, const std::vector<BatchItem>& batch,
                                 const ObjectiveContext& ctx, R& rng) {
  if (batch.empty()) throw ValidationError("empty batch");
  GradientResult r{ModelParams::zeros(shape), {}, {}};
  r.noise.reserve(batch.size());
  for (const auto& item : batch) r.noise.push_back(Noise::draw(item.states->size(), ctx.layout.K(), rng));
  r.parts = batch_loss_and_grad(batch, p, r.noise, ctx, &r.grad);
  return r;
}

/// (L(+h) - L(-h)) / 2h, differenced per document and per loss term before
/// summing. Terms a coordinate does not touch cancel exactly instead of
/// losing the signal to rounding in a large batch total.
inline double central_difference(const std::vector<LossBreakdown>& up, const std::vector<LossBreakdown>& down,
                                 const LossWeights& w, double h) {
  long double acc = 0.0L;
  for (std::size_t d = 0; d < up.size(); ++d) {
    acc += static_cast<long double>(w.c1) * (up[d].kl - down[d].kl);
    acc += static_cast<long double>(w.c2) * (up[d].recon - down[d].recon);
    if (up[d].rated) {
      acc += static_cast<long double>(w.c3) * (up[d].s_asp_mse - down[d].s_asp_mse);
      acc += static_cast<long double>(w.c4) * (up[d].s_senti_mse - down[d].s_senti_mse);
    }
  }
  return static_cast<double>(acc / (2.0L * static_cast<long double>(h)));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::vector<std::pair<std::string, double>> per_tensor;  // max error per tensor
};

/// Compares analytic gradients against central differences on up to
/// `per_tensor` random coordinates of every tensor, with the noise drawn once
/// and shared by both paths. `tamper`, if set, edits the analytic gradient
/// before comparison.
template <class R>
GradCheckResult grad_check(const ModelParams& params, const ModelShape& shape, const std::vector<BatchItem>& batch,
                           const ObjectiveContext& ctx, double h, R& rng, std::size_t per_tensor = 40,
                           const std::function<void(ModelParams&)>& tamper = {}) {
  auto analytic = compute_gradients(params, shape, batch, ctx, rng);
  if (tamper) tamper(analytic.grad);
  const auto& noise = analytic.noise;

  std::vector<std::pair<std::string, std::span<const double>>> grads;
  visit_tensors(analytic.grad, [&](std::string_view name, std::span<const double> d, Eigen::Index, Eigen::Index) {
    grads.emplace_back(std::string(name), d);
  });

  ModelParams probe = params;
  std::vector<std::span<double>> slots;
  visit_tensors(probe, [&](std::string_view, std::span<double> d, Eigen::Index, Eigen::Index) { slots.push_back(d); });

  GradCheckResult res;
  for (std::size_t t = 0; t < slots.size(); ++t) {
    std::vector<std::size_t> idx(slots[t].size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > per_tensor) idx.resize(per_tensor);
    double tensor_max = 0.0;
    for (std::size_t i : idx) {
      const double orig = slots[t][i];
      slots[t][i] = orig + h;
      const auto up = batch_loss_and_grad(batch, probe, noise, ctx, nullptr);
      slots[t][i] = orig - h;
      const auto down = batch_loss_and_grad(batch, probe, noise, ctx, nullptr);
      slots[t][i] = orig;
      const double gn = central_difference(up, down, ctx.weights, h);
      const double ga = grads[t].second[i];
      const double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-8});
      ++res.coordinates;
      tensor_max = std::max(tensor_max, rel);
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_tensor = grads[t].first;
        res.worst_index = i;
      }
    }
    res.per_tensor.emplace_back(grads[t].first, tensor_max);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochStats {
  std::size_t epoch = 0;
  double kl = 0.0;       // mean per document
  double recon = 0.0;    // mean per document
  double s_asp = 0.0;    // mean over rated documents
  double s_senti = 0.0;  // mean over rated documents
  double total = 0.0;    // mean weighted total per document
  double lr = 0.0;       // rate at the epoch's last step
};

/// Everything needed to continue an interrupted run exactly.
struct TrainState {
  ModelParams params;
  AdamState adam;
  std::size_t epochs_completed = 0;
  std::string rng_state;  // textual std::mt19937_64 state
};

struct TrainReport {
  std::vector<EpochStats> history;
  TrainState state;
  std::size_t skipped_empty = 0;
  double seconds = 0.0;
};

struct TrainInputs {
  const std::vector<DocumentRecord>* documents = nullptr;
  const EmbeddingCache* cache = nullptr;
};

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream in(s);
  in >> rng;
  if (!in) throw FormatError("invalid saved random-number-generator state");
  return rng;
}

/// Resolves cache entries for every document. Documents whose cache record
/// has zero tokens are dropped and counted.
inline std::vector<DocStates> gather_states(const std::vector<DocumentRecord>& docs, const EmbeddingCache& cache,
                                            std::size_t max_tokens, std::vector<std::size_t>& usable) {
  std::vector<DocStates> states(docs.size());
  usable.clear();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto* rec = cache.find(docs[i].id);
    if (!rec) throw DataError("document '" + docs[i].id + "' has no entry in the embedding cache");
    if (rec->num_tokens == 0) continue;
    states[i] = doc_states(*rec, cache.num_layers(), cache.hidden_dim(), max_tokens);
    usable.push_back(i);
  }
  return states;
}

/// Runs epochs [state.epochs_completed, cfg.epochs). Shuffles per epoch and
/// draws all noise from one generator, so (cfg, data, seed) fix the result.
/// `on_state` sees the complete resumable state after every epoch.
inline TrainReport train(const TrainConfig& cfg, const ModelShape& shape, const TrainInputs& in, TrainState state,
                         const std::function<void(const EpochStats&)>& on_epoch = {},
                         const std::function<void(const TrainState&)>& on_state = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto& docs = *in.documents;
  if (in.cache->hidden_dim() != shape.hidden_dim || in.cache->num_layers() != shape.num_layers) {
    throw DataError("embedding cache dimensions (H=" + std::to_string(in.cache->hidden_dim()) +
                    ", L=" + std::to_string(in.cache->num_layers()) + ") do not match the model");
  }
  check_shape(state.params, shape);
  const ObjectiveContext ctx = cfg.objective(shape.layout);

  std::vector<std::size_t> usable;
  const auto states = gather_states(docs, *in.cache, cfg.max_tokens, usable);
  if (usable.empty()) throw DataError("no trainable documents (all empty or missing)");

  TrainReport report;
  report.skipped_empty = docs.size() - usable.size();
  Rng rng = rng_from_string(state.rng_state);
  const std::size_t steps = (usable.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    // Each epoch permutes the same base order, so the generator alone
    // carries state between epochs.
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats st;
    st.epoch = epoch;
    std::size_t rated = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      std::vector<BatchItem> batch;
      for (std::size_t j = s * cfg.batch_size; j < std::min(order.size(), (s + 1) * cfg.batch_size); ++j) {
        batch.push_back({&docs[order[j]], &states[order[j]]});
      }
      auto g = compute_gradients(state.params, shape, batch, ctx, rng);
      const double lr = lr_schedule(epoch, static_cast<double>(s) / static_cast<double>(steps), cfg);
      adam_update(state.params, g.grad, state.adam, lr, cfg);
      st.lr = lr;
      for (const auto& p : g.parts) {
        st.kl += p.kl;
        st.recon += p.recon;
        st.total += p.total;
        if (p.rated) {
          st.s_asp += p.s_asp_mse;
          st.s_senti += p.s_senti_mse;
          ++rated;
        }
      }
    }
    const double n = static_cast<double>(order.size());
    st.kl /= n;
    st.recon /= n;
    st.total /= n;
    if (rated) {
      st.s_asp /= static_cast<double>(rated);
      st.s_senti /= static_cast<double>(rated);
    }
    if (!state.params.all_finite()) {
      throw NumericError("parameters became non-finite during epoch " + std::to_string(epoch));
    }
    state.epochs_completed = epoch + 1;
    report.history.push_back(st);
    if (on_epoch) on_epoch(st);
    if (on_state) {
      state.rng_state = rng_to_string(rng);
      on_state(state);
    }
  }
  state.rng_state = rng_to_string(rng);
  report.state = std::move(state);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

/// Fresh state: initializes parameters from rng_seed, then hands the same
/// generator on to the training loop.
inline std::pair<TrainState, std::vector<std::string>> initial_state(const TrainConfig& cfg, const ModelShape& shape,
                                                                     const SeedSpec& seeds, const Vocabulary& vocab,
                                                                     const StaticEmbeddings* static_emb = nullptr) {
  Rng rng(cfg.rng_seed);
  auto init = init_params(shape, seeds, vocab, cfg.seeding, cfg.senti_init, rng, static_emb);
  TrainState st{std::move(init.params), AdamState::zeros(shape), 0, rng_to_string(rng)};
  return {std::move(st), std::move(init.warnings)};
}

}  // namespace vaeabsa
