#pragma once

#include <cstdint>

#include "earlock/gmm.hpp"

namespace earlock {

// Closed-form KL(p || q) between Gaussians, in nats:
//   0.5*[ log(|Sq|/|Sp|) + Tr(Sq^-1 Sp) - d + (mp-mq)^T Sq^-1 (mp-mq) ]
double gaussian_kl(const Gaussian& p, const Gaussian& q);

// Matching-based approximation for mixtures:
//   sum_i Pi * min_j [ KL(p_i || q_j) + log(Pi / wj) ]
// clamped at zero from below (the approximation can dip slightly negative).
double gmm_kl_approx(const Gmm& p, const Gmm& q);

// Monte-Carlo estimate E_p[log p(x) - log q(x)], deterministic given seed.
double kl_monte_carlo(const Gmm& p, const Gmm& q, size_t samples, uint64_t seed);

// Symmetrized mixture divergence used as the color-similarity score;
// lower means more similar.
double color_similarity(const Gmm& reference, const Gmm& probe);

// Draws one sample from the mixture (used by the Monte-Carlo estimator and
// by test fixtures).
Eigen::VectorXd sample_gmm(const Gmm& model, Rng& rng);

}  // namespace earlock
