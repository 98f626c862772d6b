#pragma once

// Loss terms. KL and reconstruction are stored as non-negative penalties
// (KL divergence, negative log-likelihood) so that minimizing the weighted
// total maximizes the ELBO.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vaeabsa/corpus.hpp"
#include "vaeabsa/error.hpp"

namespace vaeabsa {

inline constexpr double kLogFloor = 1e-10;

/// Logistic-normal (Laplace) approximation of a Dirichlet(alpha) prior.
struct PriorParams {
  Eigen::VectorXd alpha;
  Eigen::VectorXd mu_p;
  Eigen::VectorXd sigma_p;
};

inline PriorParams dirichlet_prior_params(const Eigen::VectorXd& alpha) {
  const auto K = alpha.size();
  if (K < 1) throw DomainError("alpha must have at least one entry");
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(alpha(k) > 0.0) || !std::isfinite(alpha(k))) throw DomainError("alpha entries must be positive and finite");
  }
  const double kd = static_cast<double>(K);
  const Eigen::ArrayXd log_a = alpha.array().log();
  const double mean_log = log_a.sum() / kd;
  const double inv_sum = alpha.array().inverse().sum();
  PriorParams p;
  p.alpha = alpha;
  p.mu_p = (log_a - mean_log).matrix();
  p.sigma_p = ((1.0 / alpha.array()) * (1.0 - 2.0 / kd) + inv_sum / (kd * kd)).matrix();
  return p;
}

inline PriorParams dirichlet_prior_params(std::size_t K, double alpha) {
  return dirichlet_prior_params(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(K), alpha));
}

/// KL( N(mu, diag sigma) || N(mu_p, diag sigma_p) ).
inline double kl_loss(const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, const PriorParams& prior) {
  if (mu.size() != prior.mu_p.size() || sigma.size() != prior.sigma_p.size()) {
    throw ValidationError("posterior and prior sizes differ");
  }
  if ((sigma.array() <= 0.0).any()) throw DomainError("posterior variances must be positive");
  const Eigen::ArrayXd sp = prior.sigma_p.array();
  const Eigen::ArrayXd d = (prior.mu_p - mu).array();
  const double trace = (sigma.array() / sp).sum();
  const double maha = (d * d / sp).sum();
  const double logdet = sp.log().sum() - sigma.array().log().sum();
  return 0.5 * (trace + maha - static_cast<double>(mu.size()) + logdet);
}

/// -sum_v x_v log(max(x_hat_v, 1e-10)); `scale` multiplies every count
/// (1 for raw counts, 1/total for normalized bags of words).
inline double recon_loss(const BowVector& x, const Eigen::VectorXd& x_hat, double scale = 1.0) {
  double acc = 0.0;
  for (const auto& [v, c] : x.entries) {
    if (static_cast<Eigen::Index>(v) >= x_hat.size()) throw ValidationError("BoW index outside the vocabulary");
    acc -= scale * static_cast<double>(c) * std::log(std::max(x_hat(v), kLogFloor));
  }
  return acc;
}

inline double recon_loss(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
  double acc = 0.0;
  for (Eigen::Index v = 0; v < x.size(); ++v) {
    if (x(v) != 0.0) acc -= x(v) * std::log(std::max(x_hat(v), kLogFloor));
  }
  return acc;
}

inline double sentiment_mse(double y_hat, double y) { return (y_hat - y) * (y_hat - y); }

struct LossWeights {
  double c1 = 0.1;
  double c2 = 0.1;
  double c3 = 10.0;
  double c4 = 10.0;

  void validate() const {
    for (double c : {c1, c2, c3, c4}) {
      if (!std::isfinite(c) || c < 0.0) throw ValidationError("loss weights must be finite and non-negative");
    }
  }
};

/// Per-document loss terms. For unrated documents both sentiment terms are
/// zero and `rated` is false.
struct LossBreakdown {
  double kl = 0.0;
  double recon = 0.0;
  double s_asp_mse = 0.0;
  double s_senti_mse = 0.0;
  double total = 0.0;
  bool rated = true;
};

inline double weighted_total(const LossBreakdown& p, const LossWeights& w) {
  double t = w.c1 * p.kl + w.c2 * p.recon;
  if (p.rated) t += w.c3 * p.s_asp_mse + w.c4 * p.s_senti_mse;
  return t;
}

/// Sum over the batch of the weighted per-document terms.
inline double total_loss(const std::vector<LossBreakdown>& parts, const LossWeights& w) {
  double t = 0.0;
  for (const auto& p : parts) t += weighted_total(p, w);
  return t;
}

}  // namespace vaeabsa
