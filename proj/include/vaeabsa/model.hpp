#pragma once

// Forward pass of the VAE topic model: per-token Gaussian posteriors from
// pooled transformer states, a document posterior averaged over tokens, a
// product-of-experts bag-of-words decoder, and token attention that pools
// token sentiment scores into per-aspect coefficients.

#include <cmath>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vaeabsa/embed_cache.hpp"
#include "vaeabsa/error.hpp"

namespace vaeabsa {

/// Topic index ranges: aspects [0, A), sentiments [A, A+S), background [A+S, K).
struct TopicLayout {
  std::vector<std::string> aspect_labels;
  std::vector<std::string> sentiment_labels{"positive", "negative"};
  std::size_t background_count = 0;

  std::size_t A() const { return aspect_labels.size(); }
  std::size_t S() const { return sentiment_labels.size(); }
  std::size_t B() const { return background_count; }
  std::size_t K() const { return A() + S() + B(); }

  std::string topic_label(std::size_t k) const {
    if (k < A()) return "aspect:" + aspect_labels[k];
    if (k < A() + S()) return "sentiment:" + sentiment_labels[k - A()];
    return "background:" + std::to_string(k - A() - S() + 1);
  }

  void validate() const {
    if (A() < 1) throw ValidationError("layout needs at least one aspect topic");
    if (S() < 1) throw ValidationError("layout needs at least one sentiment topic");
    std::set<std::string> seen;
    for (const auto& l : aspect_labels) {
      if (l.empty()) throw ValidationError("empty aspect label");
      if (!seen.insert("a:" + l).second) throw ValidationError("duplicate aspect label '" + l + "'");
    }
    for (const auto& l : sentiment_labels) {
      if (!seen.insert("s:" + l).second) throw ValidationError("duplicate sentiment label '" + l + "'");
    }
  }

  friend bool operator==(const TopicLayout&, const TopicLayout&) = default;
};

enum class Activation { softplus, relu };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "softplus"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "softplus") return Activation::softplus;
  if (s == "relu") return Activation::relu;
  throw ValidationError("unknown activation '" + std::string(s) + "' (softplus|relu)");
}

struct ModelShape {
  std::size_t vocab_size = 0;  // V
  TopicLayout layout;
  std::size_t hidden_dim = 0;  // H
  std::size_t num_layers = 0;  // L
  std::size_t enc_hidden = 100;
  std::size_t senti_hidden = 100;
  Activation activation = Activation::softplus;

  std::size_t K() const { return layout.K(); }
  std::size_t A() const { return layout.A(); }
  std::size_t S() const { return layout.S(); }

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// All trainable parameters. The encoder's mean and log-variance heads share
/// one hidden layer; the token sentiment MLP is separate.
struct ModelParams {
  Eigen::VectorXd pool;        // b, L
  Eigen::MatrixXd enc_w1;      // enc_hidden x H
  Eigen::VectorXd enc_b1;      // enc_hidden
  Eigen::MatrixXd enc_mu_w;    // K x enc_hidden
  Eigen::VectorXd enc_mu_b;    // K
  Eigen::MatrixXd enc_lv_w;    // K x enc_hidden
  Eigen::VectorXd enc_lv_b;    // K
  Eigen::MatrixXd senti_w1;    // senti_hidden x H
  Eigen::VectorXd senti_b1;    // senti_hidden
  Eigen::MatrixXd senti_w2;    // A x senti_hidden
  Eigen::VectorXd senti_b2;    // A
  Eigen::MatrixXd beta;        // V x K
  Eigen::VectorXd s_senti;     // S

  static ModelParams zeros(const ModelShape& s) {
    ModelParams p;
    const auto H = static_cast<Eigen::Index>(s.hidden_dim);
    const auto K = static_cast<Eigen::Index>(s.K());
    const auto A = static_cast<Eigen::Index>(s.A());
    const auto E = static_cast<Eigen::Index>(s.enc_hidden);
    const auto T = static_cast<Eigen::Index>(s.senti_hidden);
    p.pool = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.num_layers));
    p.enc_w1 = Eigen::MatrixXd::Zero(E, H);
    p.enc_b1 = Eigen::VectorXd::Zero(E);
    p.enc_mu_w = Eigen::MatrixXd::Zero(K, E);
    p.enc_mu_b = Eigen::VectorXd::Zero(K);
    p.enc_lv_w = Eigen::MatrixXd::Zero(K, E);
    p.enc_lv_b = Eigen::VectorXd::Zero(K);
    p.senti_w1 = Eigen::MatrixXd::Zero(T, H);
    p.senti_b1 = Eigen::VectorXd::Zero(T);
    p.senti_w2 = Eigen::MatrixXd::Zero(A, T);
    p.senti_b2 = Eigen::VectorXd::Zero(A);
    p.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.vocab_size), K);
    p.s_senti = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.S()));
    return p;
  }

  bool all_finite() const {
    bool ok = true;
    visit_tensors(*this, [&](std::string_view, auto data, Eigen::Index, Eigen::Index) {
      for (double v : data) ok = ok && std::isfinite(v);
    });
    return ok;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit_tensors(*this, [&](std::string_view, auto data, Eigen::Index, Eigen::Index) { n += data.size(); });
    return n;
  }

  /// Calls fn(name, span over the column-major data, rows, cols) for every
  /// tensor in a fixed order. The order is part of the checkpoint format.
  template <class P, class Fn>
  static void visit_tensors(P& p, Fn&& fn) {
    auto visit = [&](std::string_view name, auto& t) {
      using Elem = std::conditional_t<std::is_const_v<P>, const double, double>;
      fn(name, std::span<Elem>(t.data(), static_cast<std::size_t>(t.size())), t.rows(), t.cols());
    };
    visit("pool", p.pool);
    visit("enc_w1", p.enc_w1);
    visit("enc_b1", p.enc_b1);
    visit("enc_mu_w", p.enc_mu_w);
    visit("enc_mu_b", p.enc_mu_b);
    visit("enc_lv_w", p.enc_lv_w);
    visit("enc_lv_b", p.enc_lv_b);
    visit("senti_w1", p.senti_w1);
    visit("senti_b1", p.senti_b1);
    visit("senti_w2", p.senti_w2);
    visit("senti_b2", p.senti_b2);
    visit("beta", p.beta);
    visit("s_senti", p.s_senti);
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.pool == b.pool && a.enc_w1 == b.enc_w1 && a.enc_b1 == b.enc_b1 && a.enc_mu_w == b.enc_mu_w &&
           a.enc_mu_b == b.enc_mu_b && a.enc_lv_w == b.enc_lv_w && a.enc_lv_b == b.enc_lv_b &&
           a.senti_w1 == b.senti_w1 && a.senti_b1 == b.senti_b1 && a.senti_w2 == b.senti_w2 &&
           a.senti_b2 == b.senti_b2 && a.beta == b.beta && a.s_senti == b.s_senti;
  }
};

template <class Fn>
void visit_tensors(ModelParams& p, Fn&& fn) {
  ModelParams::visit_tensors(p, std::forward<Fn>(fn));
}
template <class Fn>
void visit_tensors(const ModelParams& p, Fn&& fn) {
  ModelParams::visit_tensors(p, std::forward<Fn>(fn));
}

inline void check_shape(const ModelParams& p, const ModelShape& s) {
  const auto ref = ModelParams::zeros(s);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> want, got;
  visit_tensors(ref, [&](std::string_view, auto, Eigen::Index r, Eigen::Index c) { want.emplace_back(r, c); });
  visit_tensors(p, [&](std::string_view, auto, Eigen::Index r, Eigen::Index c) { got.emplace_back(r, c); });
  if (want != got) throw ValidationError("model parameters do not match the declared shape");
}

// ---------------------------------------------------------------------------
// Elementwise helpers

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

inline double activate(Activation a, double x) { return a == Activation::relu ? (x > 0 ? x : 0.0) : softplus(x); }
inline double activate_grad(Activation a, double x) { return a == Activation::relu ? (x > 0 ? 1.0 : 0.0) : sigmoid(x); }

// ---------------------------------------------------------------------------
// Operations

struct Posterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;  // diagonal variances, > 0
};

struct TokenEncoding {
  Eigen::VectorXd x;          // pooled embedding x^e_i, H
  Eigen::VectorXd enc_pre;    // enc hidden pre-activation
  Eigen::VectorXd enc_h;      // enc hidden activation
  Eigen::VectorXd logvar;     // K
  Posterior post;             // mu_i, Sigma_i
  Eigen::VectorXd senti_pre;  // senti hidden pre-activation
  Eigen::VectorXd senti_h;
  Eigen::VectorXd s;          // token sentiment scores s_i, A
};

inline TokenEncoding encode_token(const Eigen::MatrixXd& layer_states, const ModelParams& p, Activation act) {
  TokenEncoding t;
  t.x = pool_layers(layer_states, p.pool);
  if (t.x.size() != p.enc_w1.cols()) throw ValidationError("token hidden size does not match the encoder input");
  t.enc_pre = p.enc_w1 * t.x + p.enc_b1;
  t.enc_h = t.enc_pre.unaryExpr([act](double v) { return activate(act, v); });
  t.post.mu = p.enc_mu_w * t.enc_h + p.enc_mu_b;
  t.logvar = p.enc_lv_w * t.enc_h + p.enc_lv_b;
  t.post.sigma = t.logvar.array().exp().matrix();
  t.senti_pre = p.senti_w1 * t.x + p.senti_b1;
  t.senti_h = t.senti_pre.unaryExpr([act](double v) { return activate(act, v); });
  t.s = p.senti_w2 * t.senti_h + p.senti_b2;
  return t;
}

struct Encoding {
  std::vector<TokenEncoding> tokens;
  Posterior all;  // arithmetic means over tokens
};

inline Encoding encode(const DocStates& states, const ModelParams& p, Activation act) {
  if (states.size() == 0) throw ValidationError("empty document: no token states");
  Encoding e;
  e.tokens.reserve(states.size());
  for (const auto& m : states.tokens) e.tokens.push_back(encode_token(m, p, act));
  const auto K = e.tokens.front().post.mu.size();
  e.all.mu = Eigen::VectorXd::Zero(K);
  e.all.sigma = Eigen::VectorXd::Zero(K);
  for (const auto& t : e.tokens) {
    e.all.mu += t.post.mu;
    e.all.sigma += t.post.sigma;
  }
  const double n = static_cast<double>(e.tokens.size());
  e.all.mu /= n;
  e.all.sigma /= n;
  return e;
}

/// softmax(mu + sqrt(sigma) * eps)
inline Eigen::VectorXd sample_theta(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, const Eigen::VectorXd& eps) {
  return softmax(mu + (sigma.array().sqrt() * eps.array()).matrix());
}

/// softmax(beta * theta): product of experts over the vocabulary.
inline Eigen::VectorXd reconstruct(const Eigen::VectorXd& theta, const Eigen::MatrixXd& beta) {
  return softmax(beta * theta);
}

/// a(i, k) = theta(i, k) / sum_j theta(j, k); rows are tokens.
inline Eigen::MatrixXd token_attention(const Eigen::MatrixXd& theta_tokens) {
  const Eigen::RowVectorXd col = theta_tokens.colwise().sum();
  return theta_tokens.array().rowwise() / col.array();
}

/// s_asp(k) = sum_i a(i, k) * s(i, k) over the first A columns of a.
inline Eigen::VectorXd aspect_sentiment_pool(const Eigen::MatrixXd& attention, const Eigen::MatrixXd& s_tokens) {
  const auto A = s_tokens.cols();
  if (attention.rows() != s_tokens.rows() || attention.cols() < A) {
    throw ValidationError("attention and token sentiment shapes disagree");
  }
  return (attention.leftCols(A).array() * s_tokens.array()).colwise().sum().transpose();
}

struct SentimentHeads {
  double y_asp = 0.5;
  double y_senti = 0.5;
};

inline SentimentHeads doc_sentiment_heads(const Eigen::VectorXd& theta_a, const Eigen::VectorXd& s_asp,
                                          const Eigen::VectorXd& theta_s, const Eigen::VectorXd& s_senti) {
  return {sigmoid(s_asp.dot(theta_a)), sigmoid(s_senti.dot(theta_s))};
}

// ---------------------------------------------------------------------------
// Full forward pass

enum class Mode { train, infer };

/// Reparameterization noise for one document: eps for the document
/// posterior and one row per token.
struct Noise {
  Eigen::VectorXd doc;      // K
  Eigen::MatrixXd tokens;   // N x K

  static Noise zeros(std::size_t n, std::size_t k) {
    return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k)),
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k))};
  }

  template <class Rng>
  static Noise draw(std::size_t n, std::size_t k, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Noise z = zeros(n, k);
    for (Eigen::Index j = 0; j < z.doc.size(); ++j) z.doc(j) = nd(rng);
    for (Eigen::Index i = 0; i < z.tokens.rows(); ++i) {
      for (Eigen::Index j = 0; j < z.tokens.cols(); ++j) z.tokens(i, j) = nd(rng);
    }
    return z;
  }
};

struct ForwardOptions {
  Activation activation = Activation::softplus;
  bool renormalize_theta_a = false;
};

struct ForwardState {
  Encoding enc;
  Eigen::VectorXd theta;         // theta^all, K
  Eigen::MatrixXd theta_tokens;  // N x K
  Eigen::MatrixXd attention;     // N x K
  Eigen::MatrixXd s_tokens;      // N x A
  Eigen::VectorXd s_asp;         // A
  Eigen::VectorXd theta_a;       // slice (renormalized if configured)
  Eigen::VectorXd theta_s;
  Eigen::VectorXd x_hat;         // V
  double y_asp = 0.5;
  double y_senti = 0.5;
};

inline ForwardState forward_with_noise(const DocStates& states, const ModelParams& p, const Noise& noise,
                                       const TopicLayout& layout, const ForwardOptions& opt) {
  ForwardState f;
  f.enc = encode(states, p, opt.activation);
  const auto N = static_cast<Eigen::Index>(f.enc.tokens.size());
  const auto K = static_cast<Eigen::Index>(layout.K());
  const auto A = static_cast<Eigen::Index>(layout.A());
  const auto S = static_cast<Eigen::Index>(layout.S());
  if (f.enc.all.mu.size() != K) throw ValidationError("encoder output size does not match the topic layout");
  if (noise.doc.size() != K || noise.tokens.rows() != N || noise.tokens.cols() != K) {
    throw ValidationError("noise shape does not match the document");
  }
  f.theta = sample_theta(f.enc.all.mu, f.enc.all.sigma, noise.doc);
  f.x_hat = reconstruct(f.theta, p.beta);

  f.theta_tokens.resize(N, K);
  f.s_tokens.resize(N, A);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& t = f.enc.tokens[static_cast<std::size_t>(i)];
    f.theta_tokens.row(i) = sample_theta(t.post.mu, t.post.sigma, noise.tokens.row(i).transpose()).transpose();
    f.s_tokens.row(i) = t.s.transpose();
  }
  f.attention = token_attention(f.theta_tokens);
  f.s_asp = aspect_sentiment_pool(f.attention, f.s_tokens);

  f.theta_a = f.theta.head(A);
  if (opt.renormalize_theta_a) f.theta_a /= f.theta_a.sum();
  f.theta_s = f.theta.segment(A, S);
  const auto heads = doc_sentiment_heads(f.theta_a, f.s_asp, f.theta_s, p.s_senti);
  f.y_asp = heads.y_asp;
  f.y_senti = heads.y_senti;
  return f;
}

/// Train mode draws all noise from rng (document first, then tokens in
/// order); infer mode uses eps = 0 throughout.
template <class Rng>
ForwardState forward(const DocStates& states, const ModelParams& p, const TopicLayout& layout,
                     const ForwardOptions& opt, Mode mode, Rng& rng) {
  if (states.size() == 0) throw ValidationError("empty document: no token states");
  const Noise noise =
      mode == Mode::train ? Noise::draw(states.size(), layout.K(), rng) : Noise::zeros(states.size(), layout.K());
  return forward_with_noise(states, p, noise, layout, opt);
}

inline ForwardState forward_infer(const DocStates& states, const ModelParams& p, const TopicLayout& layout,
                                  const ForwardOptions& opt) {
  if (states.size() == 0) throw ValidationError("empty document: no token states");
  return forward_with_noise(states, p, Noise::zeros(states.size(), layout.K()), layout, opt);
}

}  // namespace vaeabsa
