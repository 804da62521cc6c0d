#include "earlock/divergence.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "earlock/random.hpp"

namespace earlock {

namespace {

double log_det_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  double log_det = 0.0;
  const auto& L = llt.matrixLLT();
  for (int i = 0; i < L.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
  return log_det;
}

}  // namespace

double gaussian_kl(const Gaussian& p, const Gaussian& q) {
  const int d = p.dim();
  if (d != q.dim()) throw std::runtime_error("gaussian_kl: dimension mismatch");

  Eigen::LLT<Eigen::MatrixXd> llt_p(p.covariance);
  Eigen::LLT<Eigen::MatrixXd> llt_q(q.covariance);
  if (llt_p.info() != Eigen::Success || llt_q.info() != Eigen::Success)
    throw std::runtime_error("gaussian_kl: covariance is not positive definite");

  const double log_ratio = log_det_llt(llt_q) - log_det_llt(llt_p);
  const double trace = llt_q.solve(p.covariance).trace();
  const Eigen::VectorXd diff = p.mean - q.mean;
  const double maha = diff.dot(llt_q.solve(diff));
  return 0.5 * (log_ratio + trace - d + maha);
}

double gmm_kl_approx(const Gmm& p, const Gmm& q) {
  if (p.components.empty() || q.components.empty())
    throw std::runtime_error("gmm_kl_approx: empty model");
  if (p.dim() != q.dim()) throw std::runtime_error("gmm_kl_approx: dimension mismatch");

  double total = 0.0;
  for (const auto& pc : p.components) {
    if (pc.weight <= 0.0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& qc : q.components) {
      if (qc.weight <= 0.0) continue;
      const double kl = gaussian_kl(pc.gaussian, qc.gaussian) + std::log(pc.weight / qc.weight);
      best = std::min(best, kl);
    }
    total += pc.weight * best;
  }
  return std::max(total, 0.0);
}

namespace {

int pick_component(const Gmm& model, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int pick = model.size() - 1;
  for (int i = 0; i < model.size(); ++i) {
    acc += model.components[i].weight;
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return pick;
}

}  // namespace

Eigen::VectorXd sample_gmm(const Gmm& model, Rng& rng) {
  const GmmEvaluator ev(model);
  return ev.sample_component(pick_component(model, rng), rng);
}

double kl_monte_carlo(const Gmm& p, const Gmm& q, size_t samples, uint64_t seed) {
  if (samples < 1) throw std::runtime_error("kl_monte_carlo: need at least one sample");
  const GmmEvaluator ev_p(p);
  const GmmEvaluator ev_q(q);
  Rng rng(seed);
  double acc = 0.0;
  for (size_t i = 0; i < samples; ++i) {
    const Eigen::VectorXd x = ev_p.sample_component(pick_component(p, rng), rng);
    acc += ev_p.log_pdf(x) - ev_q.log_pdf(x);
  }
  return acc / static_cast<double>(samples);
}

double color_similarity(const Gmm& reference, const Gmm& probe) {
  return 0.5 * (gmm_kl_approx(reference, probe) + gmm_kl_approx(probe, reference));
}

}  // namespace earlock
