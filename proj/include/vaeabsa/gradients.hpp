#pragma once

// Hand-derived reverse pass for the weighted per-document loss. Gradients
// are taken with the reparameterization noise held fixed; grad_check in
// training.hpp verifies every tensor against central differences.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vaeabsa/corpus.hpp"
#include "vaeabsa/model.hpp"
#include "vaeabsa/objective.hpp"

namespace vaeabsa {

struct ObjectiveContext {
  TopicLayout layout;
  PriorParams prior;
  LossWeights weights;
  ForwardOptions forward;
  bool normalize_bow = false;
};

/// One document of a training batch.
struct BatchItem {
  const DocumentRecord* doc = nullptr;
  const DocStates* states = nullptr;
};

inline LossBreakdown loss_parts(const DocumentRecord& doc, const ForwardState& f, const ObjectiveContext& ctx) {
  LossBreakdown p;
  p.kl = kl_loss(f.enc.all.mu, f.enc.all.sigma, ctx.prior);
  const auto total = doc.bow.total();
  const double scale = (ctx.normalize_bow && total > 0) ? 1.0 / static_cast<double>(total) : 1.0;
  p.recon = recon_loss(doc.bow, f.x_hat, scale);
  p.rated = doc.y_s.has_value();
  if (p.rated) {
    p.s_asp_mse = sentiment_mse(f.y_asp, *doc.y_s);
    p.s_senti_mse = sentiment_mse(f.y_senti, *doc.y_s);
  }
  p.total = weighted_total(p, ctx.weights);
  if (!std::isfinite(p.total)) throw NumericError("non-finite loss for document '" + doc.id + "'");
  return p;
}

/// Loss of one document; when `grad` is non-null its gradient is added to it.
inline LossBreakdown doc_loss_and_grad(const DocumentRecord& doc, const DocStates& states, const ModelParams& p,
                                       const Noise& noise, const ObjectiveContext& ctx, ModelParams* grad) {
  const ForwardState f = forward_with_noise(states, p, noise, ctx.layout, ctx.forward);
  const LossBreakdown parts = loss_parts(doc, f, ctx);
  if (!grad) return parts;

  const auto& w = ctx.weights;
  const auto K = static_cast<Eigen::Index>(ctx.layout.K());
  const auto A = static_cast<Eigen::Index>(ctx.layout.A());
  const auto S = static_cast<Eigen::Index>(ctx.layout.S());
  const auto N = static_cast<Eigen::Index>(f.enc.tokens.size());
  const Activation act = ctx.forward.activation;

  Eigen::VectorXd d_theta = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd d_s_asp = Eigen::VectorXd::Zero(A);

  // Sentiment heads.
  if (parts.rated) {
    const double y = *doc.y_s;
    const double g_asp = w.c3 * 2.0 * (f.y_asp - y) * f.y_asp * (1.0 - f.y_asp);
    d_s_asp = g_asp * f.theta_a;
    const Eigen::VectorXd d_theta_a = g_asp * f.s_asp;
    if (ctx.forward.renormalize_theta_a) {
      const double mass = f.theta.head(A).sum();
      d_theta.head(A) += ((d_theta_a.array() - d_theta_a.dot(f.theta_a)) / mass).matrix();
    } else {
      d_theta.head(A) += d_theta_a;
    }
    const double g_sen = w.c4 * 2.0 * (f.y_senti - y) * f.y_senti * (1.0 - f.y_senti);
    grad->s_senti += g_sen * f.theta_s;
    d_theta.segment(A, S) += g_sen * p.s_senti;
  }

  // Reconstruction: d/dlogits of -sum_v w_v log x_hat_v.
  if (w.c2 != 0.0) {
    const auto total = doc.bow.total();
    const double scale = (ctx.normalize_bow && total > 0) ? 1.0 / static_cast<double>(total) : 1.0;
    double mass = 0.0;
    Eigen::VectorXd d_logits = Eigen::VectorXd::Zero(f.x_hat.size());
    for (const auto& [v, c] : doc.bow.entries) {
      if (f.x_hat(v) > kLogFloor) {
        const double wv = scale * static_cast<double>(c);
        mass += wv;
        d_logits(v) -= wv;
      }
    }
    d_logits += mass * f.x_hat;
    d_logits *= w.c2;
    grad->beta.noalias() += d_logits * f.theta.transpose();
    d_theta.noalias() += p.beta.transpose() * d_logits;
  }

  // theta = softmax(z), z = mu_all + sqrt(sigma_all) * eps.
  const Eigen::VectorXd d_z = (f.theta.array() * (d_theta.array() - f.theta.dot(d_theta))).matrix();
  const Eigen::ArrayXd sqrt_sigma_all = f.enc.all.sigma.array().sqrt();
  Eigen::VectorXd d_mu_all = d_z;
  Eigen::VectorXd d_sigma_all = (d_z.array() * noise.doc.array() / (2.0 * sqrt_sigma_all)).matrix();
  if (w.c1 != 0.0) {
    const Eigen::ArrayXd sp = ctx.prior.sigma_p.array();
    d_mu_all += (w.c1 * (f.enc.all.mu - ctx.prior.mu_p).array() / sp).matrix();
    d_sigma_all += (w.c1 * 0.5 * (1.0 / sp - 1.0 / f.enc.all.sigma.array())).matrix();
  }

  // Attention pooling s_asp(k) = sum_i a(i,k) s(i,k), a = column-normalized theta_i.
  Eigen::MatrixXd d_theta_tok = Eigen::MatrixXd::Zero(N, K);
  Eigen::MatrixXd d_s_tok = Eigen::MatrixXd::Zero(N, A);
  if (parts.rated) {
    for (Eigen::Index k = 0; k < A; ++k) {
      const double col_sum = f.theta_tokens.col(k).sum();
      const Eigen::VectorXd d_a = d_s_asp(k) * f.s_tokens.col(k);
      d_s_tok.col(k) = d_s_asp(k) * f.attention.col(k);
      const double proj = d_a.dot(f.attention.col(k));
      d_theta_tok.col(k) = ((d_a.array() - proj) / col_sum).matrix();
    }
  }

  const double inv_n = 1.0 / static_cast<double>(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& t = f.enc.tokens[static_cast<std::size_t>(i)];
    const Eigen::VectorXd th = f.theta_tokens.row(i).transpose();
    const Eigen::VectorXd dth = d_theta_tok.row(i).transpose();
    const Eigen::VectorXd d_zi = (th.array() * (dth.array() - th.dot(dth))).matrix();
    const Eigen::ArrayXd eps_i = noise.tokens.row(i).transpose().array();

    const Eigen::VectorXd d_mu = d_zi + inv_n * d_mu_all;
    const Eigen::VectorXd d_sigma =
        (d_zi.array() * eps_i / (2.0 * t.post.sigma.array().sqrt())).matrix() + inv_n * d_sigma_all;
    const Eigen::VectorXd d_lv = (d_sigma.array() * t.post.sigma.array()).matrix();

    grad->enc_mu_w.noalias() += d_mu * t.enc_h.transpose();
    grad->enc_mu_b += d_mu;
    grad->enc_lv_w.noalias() += d_lv * t.enc_h.transpose();
    grad->enc_lv_b += d_lv;
    const Eigen::VectorXd d_h = p.enc_mu_w.transpose() * d_mu + p.enc_lv_w.transpose() * d_lv;
    const Eigen::VectorXd d_pre =
        (d_h.array() * t.enc_pre.unaryExpr([act](double v) { return activate_grad(act, v); }).array()).matrix();
    grad->enc_w1.noalias() += d_pre * t.x.transpose();
    grad->enc_b1 += d_pre;
    Eigen::VectorXd d_x = p.enc_w1.transpose() * d_pre;

    if (parts.rated) {
      const Eigen::VectorXd d_s = d_s_tok.row(i).transpose();
      grad->senti_w2.noalias() += d_s * t.senti_h.transpose();
      grad->senti_b2 += d_s;
      const Eigen::VectorXd d_sh = p.senti_w2.transpose() * d_s;
      const Eigen::VectorXd d_spre =
          (d_sh.array() * t.senti_pre.unaryExpr([act](double v) { return activate_grad(act, v); }).array()).matrix();
      grad->senti_w1.noalias() += d_spre * t.x.transpose();
      grad->senti_b1 += d_spre;
      d_x.noalias() += p.senti_w1.transpose() * d_spre;
    }

    grad->pool.noalias() += states.tokens[static_cast<std::size_t>(i)] * d_x;
  }
  return parts;
}

/// Batch loss summed over documents, with optional gradient accumulation.
inline std::vector<LossBreakdown> batch_loss_and_grad(const std::vector<BatchItem>& batch, const ModelParams& p,
                                                      const std::vector<Noise>& noise, const ObjectiveContext& ctx,
                                                      ModelParams* grad) {
  if (noise.size() != batch.size()) throw ValidationError("one noise draw per batch document is required");
  std::vector<LossBreakdown> parts;
  parts.reserve(batch.size());
  for (std::size_t d = 0; d < batch.size(); ++d) {
    parts.push_back(doc_loss_and_grad(*batch[d].doc, *batch[d].states, p, noise[d], ctx, grad));
  }
  return parts;
}

inline double batch_total(const std::vector<BatchItem>& batch, const ModelParams& p, const std::vector<Noise>& noise,
                          const ObjectiveContext& ctx) {
  return total_loss(batch_loss_and_grad(batch, p, noise, ctx, nullptr), ctx.weights);
}

}  // namespace vaeabsa
