#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "earlock/image.hpp"
#include "earlock/random.hpp"

namespace earlock {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  int dim() const { return static_cast<int>(mean.size()); }
};

struct GmmComponent {
  double weight = 0.0;
  Gaussian gaussian;
};

// Weighted mixture of Gaussians over color space.
struct Gmm {
  std::vector<GmmComponent> components;

  int size() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : components.front().gaussian.dim(); }
};

struct FitConfig {
  int max_iterations = 200;
  double tolerance = 1e-6;        // per-sample |Δ log-likelihood| stop
  double covariance_floor = 1.0;  // eigenvalue floor, squared 8-bit units
  uint64_t seed = 0;
  int stride = 1;  // optional deterministic subsampling of the input pixels

  void validate() const;
};

// Samples as rows of an n×d matrix.
using SampleMatrix = Eigen::MatrixXd;

SampleMatrix pixels_to_samples(const std::vector<Rgb>& pixels, int stride = 1);

// Symmetrizes and raises eigenvalues below `floor` up to it. Identity on
// matrices that already satisfy the floor.
Eigen::MatrixXd floor_covariance(const Eigen::MatrixXd& cov, double floor);

double gaussian_log_pdf(const Gaussian& g, const Eigen::VectorXd& x);
double gaussian_pdf(const Gaussian& g, const Eigen::VectorXd& x);
double gmm_log_pdf(const Gmm& model, const Eigen::VectorXd& x);
double gmm_pdf(const Gmm& model, const Eigen::VectorXd& x);

// Caches Cholesky factors and log normalizers for repeated density queries
// (pixel classification, Monte-Carlo estimation).
class GmmEvaluator {
 public:
  explicit GmmEvaluator(const Gmm& model);

  int component_count() const { return static_cast<int>(entries_.size()); }
  // log( w_i * f(x|i) )
  double component_log_joint(int i, const Eigen::VectorXd& x) const;
  double log_pdf(const Eigen::VectorXd& x) const;
  // Draws x ~ component i.
  Eigen::VectorXd sample_component(int i, Rng& rng) const;
  double weight(int i) const { return weights_[i]; }

 private:
  struct Entry {
    Eigen::VectorXd mean;
    Eigen::MatrixXd chol_lower;     // L with Sigma = L L^T
    Eigen::MatrixXd chol_inverse;   // L^-1
    double log_norm = 0.0;
    double log_weight = 0.0;
  };
  std::vector<Entry> entries_;
  std::vector<double> weights_;
};

// k-means codebook (k-means++ seeding, Lloyd refinement) turned into a
// mixture: per-cluster mean, floored covariance, fractional weight.
Gmm vq_initialize(const SampleMatrix& samples, int k, uint64_t seed,
                  double covariance_floor = 1.0);

struct EmResult {
  Gmm model;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::vector<double> ll_history;  // one entry per completed iteration
};

EmResult em_fit(const SampleMatrix& samples, int k, const FitConfig& config);

// Two-part MDL score: -logL + 0.5 * P * log(n) with
// P = (k-1) + k*d + k*d*(d+1)/2 free parameters.
double mdl_score(double log_likelihood, int k, int d, size_t n);

struct MdlResult {
  Gmm model;
  int selected_k = 0;
  std::vector<std::pair<int, double>> scores;  // (k, MDL score)
};

MdlResult mdl_select(const SampleMatrix& samples, int k_min, int k_max, const FitConfig& config);

// Versioned line-oriented text form:
//   GMM v1 d={d} k={k}
//   w m1..md c11 c12 .. cdd      (one line per component, covariance row-major)
std::string serialize_gmm(const Gmm& model);
Gmm parse_gmm(const std::string& text);

void validate_gmm(const Gmm& model, double floor = 0.0);

}  // namespace earlock
