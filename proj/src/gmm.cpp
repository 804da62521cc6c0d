#include "earlock/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "earlock/random.hpp"

namespace earlock {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Per-component quantities reused across all samples of an E-step.
struct ComponentEval {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd mean;
  double log_norm = 0.0;  // -0.5*(d*log(2pi) + log|Sigma|)
  double log_weight = 0.0;
};

ComponentEval prepare_component(const GmmComponent& c) {
  ComponentEval ev;
  ev.mean = c.gaussian.mean;
  ev.llt.compute(c.gaussian.covariance);
  if (ev.llt.info() != Eigen::Success)
    throw std::runtime_error("gaussian: covariance is not positive definite");
  double log_det = 0.0;
  const auto& L = ev.llt.matrixLLT();
  for (int i = 0; i < L.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
  ev.log_norm = -0.5 * (c.gaussian.dim() * kLog2Pi + log_det);
  ev.log_weight = c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
  return ev;
}

// log N(x; mean, Sigma) for every row of X, written into out.
void component_log_pdf_rows(const ComponentEval& ev, const SampleMatrix& X,
                            Eigen::VectorXd& out) {
  const Eigen::MatrixXd centered = X.rowwise() - ev.mean.transpose();
  // Solve L y = (x - m) per sample; squared norm of y is the Mahalanobis term.
  const Eigen::MatrixXd y =
      ev.llt.matrixL().solve(centered.transpose());
  out = (-0.5 * y.colwise().squaredNorm().array() + ev.log_norm).transpose();
}

double log_sum_exp_row(const Eigen::MatrixXd& m, int row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < m.cols(); ++k) mx = std::max(mx, m(row, k));
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (int k = 0; k < m.cols(); ++k) s += std::exp(m(row, k) - mx);
  return mx + std::log(s);
}

void check_samples(const SampleMatrix& samples, int k) {
  if (samples.rows() == 0) throw std::runtime_error("gmm: empty sample set");
  if (k < 1) throw std::runtime_error("gmm: component count must be >= 1");
  if (samples.rows() < k) throw std::runtime_error("gmm: fewer samples than components");
}

size_t count_distinct_rows(const SampleMatrix& samples, size_t stop_after) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    std::vector<double> row(samples.cols());
    for (Eigen::Index j = 0; j < samples.cols(); ++j) row[j] = samples(i, j);
    seen.insert(std::move(row));
    if (seen.size() >= stop_after) break;
  }
  return seen.size();
}

}  // namespace

void FitConfig::validate() const {
  if (max_iterations < 1) throw std::runtime_error("FitConfig: max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw std::runtime_error("FitConfig: tolerance must be positive");
  if (!(covariance_floor > 0.0))
    throw std::runtime_error("FitConfig: covariance_floor must be positive");
  if (stride < 1) throw std::runtime_error("FitConfig: stride must be >= 1");
}

SampleMatrix pixels_to_samples(const std::vector<Rgb>& pixels, int stride) {
  if (stride < 1) throw std::runtime_error("stride must be >= 1");
  const size_t n = (pixels.size() + stride - 1) / stride;
  SampleMatrix m(n, 3);
  size_t row = 0;
  for (size_t i = 0; i < pixels.size(); i += stride, ++row) {
    m(row, 0) = pixels[i].r;
    m(row, 1) = pixels[i].g;
    m(row, 2) = pixels[i].b;
  }
  return m;
}

Eigen::MatrixXd floor_covariance(const Eigen::MatrixXd& cov, double floor) {
  Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");
  if (es.eigenvalues().minCoeff() >= floor) return sym;
  Eigen::VectorXd vals = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

double gaussian_log_pdf(const Gaussian& g, const Eigen::VectorXd& x) {
  if (x.size() != g.mean.size()) throw std::runtime_error("gaussian_pdf: dimension mismatch");
  GmmComponent c{1.0, g};
  const ComponentEval ev = prepare_component(c);
  const Eigen::VectorXd y = ev.llt.matrixL().solve(x - g.mean);
  return ev.log_norm - 0.5 * y.squaredNorm();
}

double gaussian_pdf(const Gaussian& g, const Eigen::VectorXd& x) {
  return std::exp(gaussian_log_pdf(g, x));
}

double gmm_log_pdf(const Gmm& model, const Eigen::VectorXd& x) {
  if (model.components.empty()) throw std::runtime_error("gmm_pdf: empty model");
  if (x.size() != model.dim()) throw std::runtime_error("gmm_pdf: dimension mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(model.components.size());
  for (const auto& c : model.components) {
    const double t = (c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity()) +
                     gaussian_log_pdf(c.gaussian, x);
    terms.push_back(t);
    mx = std::max(mx, t);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

double gmm_pdf(const Gmm& model, const Eigen::VectorXd& x) {
  return std::exp(gmm_log_pdf(model, x));
}

GmmEvaluator::GmmEvaluator(const Gmm& model) {
  if (model.components.empty() || model.size() > 16)
    throw std::runtime_error("GmmEvaluator: component count must be in [1,16]");
  entries_.reserve(model.components.size());
  weights_.reserve(model.components.size());
  for (const auto& c : model.components) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.gaussian.covariance);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("GmmEvaluator: covariance is not positive definite");
    Entry e;
    e.mean = c.gaussian.mean;
    e.chol_lower = llt.matrixL();
    e.chol_inverse = e.chol_lower.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd::Identity(c.gaussian.dim(), c.gaussian.dim()));
    double log_det = 0.0;
    for (int i = 0; i < e.chol_lower.rows(); ++i) log_det += 2.0 * std::log(e.chol_lower(i, i));
    e.log_norm = -0.5 * (c.gaussian.dim() * kLog2Pi + log_det);
    e.log_weight =
        c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
    entries_.push_back(std::move(e));
    weights_.push_back(c.weight);
  }
}

double GmmEvaluator::component_log_joint(int i, const Eigen::VectorXd& x) const {
  const Entry& e = entries_[i];
  const Eigen::VectorXd y = e.chol_inverse * (x - e.mean);
  return e.log_weight + e.log_norm - 0.5 * y.squaredNorm();
}

double GmmEvaluator::log_pdf(const Eigen::VectorXd& x) const {
  double mx = -std::numeric_limits<double>::infinity();
  double vals[16];
  const int k = component_count();
  for (int i = 0; i < k; ++i) {
    vals[i] = component_log_joint(i, x);
    mx = std::max(mx, vals[i]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::exp(vals[i] - mx);
  return mx + std::log(s);
}

Eigen::VectorXd GmmEvaluator::sample_component(int i, Rng& rng) const {
  const Entry& e = entries_[i];
  Eigen::VectorXd z(e.mean.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
  return e.mean + e.chol_lower * z;
}

Gmm vq_initialize(const SampleMatrix& samples, int k, uint64_t seed, double covariance_floor) {
  check_samples(samples, k);
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (count_distinct_rows(samples, static_cast<size_t>(k)) < static_cast<size_t>(k))
    throw std::runtime_error("vq_initialize: fewer distinct samples than clusters");

  Rng rng(seed);

  // k-means++ seeding.
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(k);
  centers.push_back(samples.row(static_cast<Eigen::Index>(rng.uniform_index(n))).transpose());
  Eigen::VectorXd d2 = (samples.rowwise() - centers[0].transpose()).rowwise().squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      // all mass on existing centers; take the first sample not equal to one
      for (Eigen::Index i = 0; i < n; ++i)
        if (d2(i) > 0.0) {
          pick = i;
          break;
        }
    } else {
      double target = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(samples.row(pick).transpose());
    d2 = d2.cwiseMin((samples.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
  }

  // Lloyd refinement.
  std::vector<int> assign(n, -1);
  constexpr int kMaxLloyd = 100;
  for (int sweep = 0; sweep < kMaxLloyd; ++sweep) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (samples.row(i).transpose() - centers[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double dist = (samples.row(i).transpose() - centers[c]).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && sweep > 0) break;

    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(d));
    std::vector<Eigen::Index> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums[assign[i]] += samples.row(i).transpose();
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // revive an empty cluster at the sample farthest from its centroid
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dist = (samples.row(i).transpose() - centers[assign[i]]).squaredNorm();
          if (dist > far_d) {
            far_d = dist;
            far = i;
          }
        }
        centers[c] = samples.row(far).transpose();
      } else {
        centers[c] = sums[c] / static_cast<double>(counts[c]);
      }
    }
  }

  // Codebook -> mixture: empirical moments per cluster.
  std::vector<Eigen::Index> counts(k, 0);
  for (Eigen::Index i = 0; i < n; ++i) ++counts[assign[i]];

  Gmm model;
  model.components.resize(k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    if (counts[c] > 0) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (assign[i] == c) mean += samples.row(i).transpose();
      mean /= static_cast<double>(counts[c]);
    } else {
      mean = centers[c];
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    if (counts[c] > 0) {
      for (Eigen::Index i = 0; i < n; ++i)
        if (assign[i] == c) {
          const Eigen::VectorXd diff = samples.row(i).transpose() - mean;
          cov += diff * diff.transpose();
        }
      cov /= static_cast<double>(counts[c]);
    }
    model.components[c].weight =
        counts[c] > 0 ? static_cast<double>(counts[c]) / static_cast<double>(n)
                      : 1.0 / static_cast<double>(n);
    model.components[c].gaussian.mean = mean;
    model.components[c].gaussian.covariance = floor_covariance(cov, covariance_floor);
  }
  double wsum = 0.0;
  for (const auto& c : model.components) wsum += c.weight;
  for (auto& c : model.components) c.weight /= wsum;
  return model;
}

EmResult em_fit(const SampleMatrix& samples, int k, const FitConfig& config) {
  config.validate();
  check_samples(samples, k);

  SampleMatrix X = samples;
  if (config.stride > 1) {
    const Eigen::Index kept = (samples.rows() + config.stride - 1) / config.stride;
    X.resize(kept, samples.cols());
    for (Eigen::Index i = 0, r = 0; i < samples.rows(); i += config.stride, ++r)
      X.row(r) = samples.row(i);
    check_samples(X, k);
  }
  const auto n = X.rows();
  const auto d = X.cols();

  EmResult result;
  result.model = vq_initialize(X, k, config.seed, config.covariance_floor);

  Eigen::MatrixXd log_p(n, k);
  Eigen::VectorXd col(n);
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter <= config.max_iterations; ++iter) {
    // E-step: joint log densities and the data log-likelihood at the
    // current parameters.
    for (int c = 0; c < k; ++c) {
      const ComponentEval ev = prepare_component(result.model.components[c]);
      component_log_pdf_rows(ev, X, col);
      log_p.col(c) = col.array() + ev.log_weight;
    }
    double ll = 0.0;
    Eigen::VectorXd row_lse(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      row_lse(i) = log_sum_exp_row(log_p, static_cast<int>(i));
      ll += row_lse(i);
    }
    result.ll_history.push_back(ll);
    result.log_likelihood = ll;
    result.iterations = iter;

    const bool converged = iter > 0 && std::abs(ll - prev_ll) < config.tolerance * n;
    if (converged || iter == config.max_iterations) break;
    prev_ll = ll;

    // M-step.
    Eigen::MatrixXd resp(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < k; ++c) resp(i, c) = std::exp(log_p(i, c) - row_lse(i));

    const Eigen::VectorXd nk = resp.colwise().sum();
    for (int c = 0; c < k; ++c) {
      if (nk(c) < 1e-12) {
        // collapsed component: re-seed it at the sample the model explains worst
        Eigen::Index worst = 0;
        row_lse.minCoeff(&worst);
        Eigen::RowVectorXd gmean = X.colwise().mean();
        Eigen::MatrixXd gcov =
            (X.rowwise() - gmean).transpose() * (X.rowwise() - gmean) / static_cast<double>(n);
        result.model.components[c].weight = 1.0 / static_cast<double>(n);
        result.model.components[c].gaussian.mean = X.row(worst).transpose();
        result.model.components[c].gaussian.covariance =
            floor_covariance(gcov, config.covariance_floor);
        continue;
      }
      const Eigen::VectorXd mean = (resp.col(c).transpose() * X).transpose() / nk(c);
      const Eigen::MatrixXd centered = X.rowwise() - mean.transpose();
      const Eigen::MatrixXd cov =
          centered.transpose() * resp.col(c).asDiagonal() * centered / nk(c);
      result.model.components[c].weight = nk(c) / static_cast<double>(n);
      result.model.components[c].gaussian.mean = mean;
      result.model.components[c].gaussian.covariance =
          floor_covariance(cov, config.covariance_floor);
    }
    double wsum = 0.0;
    for (const auto& c : result.model.components) wsum += c.weight;
    for (auto& c : result.model.components) c.weight /= wsum;
  }

  (void)d;
  return result;
}

double mdl_score(double log_likelihood, int k, int d, size_t n) {
  const double params = (k - 1) + k * d + k * d * (d + 1) / 2.0;
  return -log_likelihood + 0.5 * params * std::log(static_cast<double>(n));
}

MdlResult mdl_select(const SampleMatrix& samples, int k_min, int k_max, const FitConfig& config) {
  if (k_min < 1 || k_max > 16 || k_min > k_max)
    throw std::runtime_error("mdl_select: component range must satisfy 1 <= k_min <= k_max <= 16");
  check_samples(samples, k_max);

  MdlResult out;
  double best = std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    EmResult fit = em_fit(samples, k, config);
    const double score =
        mdl_score(fit.log_likelihood, k, static_cast<int>(samples.cols()),
                  static_cast<size_t>((samples.rows() + config.stride - 1) / config.stride));
    out.scores.emplace_back(k, score);
    if (score < best) {
      best = score;
      out.model = std::move(fit.model);
      out.selected_k = k;
    }
  }
  return out;
}

std::string serialize_gmm(const Gmm& model) {
  validate_gmm(model);
  const int d = model.dim();
  std::ostringstream out;
  out << "GMM v1 d=" << d << " k=" << model.size() << "\n";
  char buf[64];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& c : model.components) {
    emit(c.weight);
    for (int i = 0; i < d; ++i) {
      out << " ";
      emit(c.gaussian.mean(i));
    }
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        out << " ";
        emit(c.gaussian.covariance(i, j));
      }
    out << "\n";
  }
  return out.str();
}

Gmm parse_gmm(const std::string& text) {
  std::istringstream in(text);
  std::string magic, ver, dtok, ktok;
  in >> magic >> ver >> dtok >> ktok;
  if (magic != "GMM" || ver != "v1" || dtok.rfind("d=", 0) != 0 || ktok.rfind("k=", 0) != 0)
    throw std::runtime_error("parse_gmm: bad header");
  const int d = std::stoi(dtok.substr(2));
  const int k = std::stoi(ktok.substr(2));
  if (d < 1 || k < 1 || k > 16) throw std::runtime_error("parse_gmm: bad dimensions");

  Gmm model;
  model.components.resize(k);
  for (int c = 0; c < k; ++c) {
    auto& comp = model.components[c];
    comp.gaussian.mean.resize(d);
    comp.gaussian.covariance.resize(d, d);
    if (!(in >> comp.weight)) throw std::runtime_error("parse_gmm: truncated component");
    for (int i = 0; i < d; ++i)
      if (!(in >> comp.gaussian.mean(i))) throw std::runtime_error("parse_gmm: truncated mean");
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (!(in >> comp.gaussian.covariance(i, j)))
          throw std::runtime_error("parse_gmm: truncated covariance");
  }
  validate_gmm(model);
  return model;
}

void validate_gmm(const Gmm& model, double floor) {
  if (model.components.empty() || model.size() > 16)
    throw std::runtime_error("gmm: component count must be in [1,16]");
  const int d = model.dim();
  double wsum = 0.0;
  for (const auto& c : model.components) {
    if (!(c.weight > 0.0) || c.weight > 1.0 + 1e-9)
      throw std::runtime_error("gmm: weight outside (0,1]");
    wsum += c.weight;
    if (c.gaussian.dim() != d || c.gaussian.covariance.rows() != d ||
        c.gaussian.covariance.cols() != d)
      throw std::runtime_error("gmm: inconsistent dimensions");
    if ((c.gaussian.covariance - c.gaussian.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9)
      throw std::runtime_error("gmm: covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.gaussian.covariance);
    if (es.eigenvalues().minCoeff() < floor - 1e-9)
      throw std::runtime_error("gmm: covariance below eigenvalue floor");
    if (es.eigenvalues().minCoeff() <= 0.0)
      throw std::runtime_error("gmm: covariance not positive definite");
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::runtime_error("gmm: weights do not sum to 1");
}

}  // namespace earlock
