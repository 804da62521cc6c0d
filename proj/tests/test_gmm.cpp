#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "earlock/gmm.hpp"
#include "earlock/random.hpp"

using namespace earlock;

namespace {

Gaussian make_gaussian_1d(double mean, double var) {
  Gaussian g;
  g.mean = Eigen::VectorXd::Constant(1, mean);
  g.covariance = Eigen::MatrixXd::Constant(1, 1, var);
  return g;
}

SampleMatrix blob_samples(Rng& rng, const std::vector<Eigen::Vector3d>& means,
                          const std::vector<double>& weights, double sigma, int n) {
  SampleMatrix out(n, 3);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    size_t pick = means.size() - 1;
    for (size_t c = 0; c < means.size(); ++c) {
      acc += weights[c];
      if (u < acc) {
        pick = c;
        break;
      }
    }
    for (int d = 0; d < 3; ++d) out(i, d) = means[pick](d) + sigma * rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian pdf closed-form values") {
  const Gaussian std1d = make_gaussian_1d(0.0, 1.0);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  CHECK(gaussian_pdf(std1d, x0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-9));

  Eigen::VectorXd x3 = Eigen::VectorXd::Constant(1, 3.0);
  CHECK(gaussian_pdf(std1d, x0) > gaussian_pdf(std1d, x3));

  Gaussian std2d;
  std2d.mean = Eigen::VectorXd::Zero(2);
  std2d.covariance = Eigen::MatrixXd::Identity(2, 2);
  CHECK(gaussian_pdf(std2d, Eigen::VectorXd::Zero(2)) ==
        doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-9));
}

TEST_CASE("gaussian pdf error paths") {
  const Gaussian g = make_gaussian_1d(0.0, 1.0);
  CHECK_THROWS(gaussian_pdf(g, Eigen::VectorXd::Zero(2)));  // dimension mismatch

  Gaussian singular;
  singular.mean = Eigen::VectorXd::Zero(2);
  singular.covariance = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS(gaussian_pdf(singular, Eigen::VectorXd::Zero(2)));
}

TEST_CASE("gmm pdf reductions and weighted sum") {
  const Gaussian a = make_gaussian_1d(0.0, 1.0);
  const Gaussian b = make_gaussian_1d(2.0, 4.0);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.7);

  Gmm single;
  single.components = {{1.0, a}};
  CHECK(gmm_pdf(single, x) == doctest::Approx(gaussian_pdf(a, x)).epsilon(1e-12));

  Gmm duplicated;
  duplicated.components = {{0.5, a}, {0.5, a}};
  CHECK(gmm_pdf(duplicated, x) == doctest::Approx(gaussian_pdf(a, x)).epsilon(1e-12));

  Gmm mixed;
  mixed.components = {{0.3, a}, {0.7, b}};
  const double expected = 0.3 * gaussian_pdf(a, x) + 0.7 * gaussian_pdf(b, x);
  CHECK(gmm_pdf(mixed, x) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS(gmm_pdf(mixed, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("floor_covariance clamps eigenvalues and keeps good matrices") {
  Eigen::MatrixXd good = Eigen::MatrixXd::Identity(3, 3) * 25.0;
  CHECK((floor_covariance(good, 1.0) - good).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd degenerate = Eigen::MatrixXd::Zero(3, 3);
  const Eigen::MatrixXd floored = floor_covariance(degenerate, 1.0);
  CHECK((floored - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vq_initialize recovers separated blobs") {
  Rng rng(17);
  const std::vector<Eigen::Vector3d> means = {{200, 20, 20}, {20, 20, 200}};
  const SampleMatrix samples = blob_samples(rng, means, {0.5, 0.5}, 4.0, 1200);
  const Gmm model = vq_initialize(samples, 2, 7);
  REQUIRE(model.size() == 2);
  validate_gmm(model, 1.0);

  for (const auto& target : means) {
    double best = 1e300;
    for (const auto& c : model.components)
      best = std::min(best, (c.gaussian.mean - target).norm());
    CHECK(best < 5.0);
  }
}

TEST_CASE("vq_initialize degenerate and error cases") {
  SampleMatrix same(10, 3);
  for (int i = 0; i < 10; ++i) same.row(i) << 42.0, 17.0, 99.0;

  const Gmm one = vq_initialize(same, 1, 3);
  REQUIRE(one.size() == 1);
  CHECK((one.components[0].gaussian.mean - same.row(0).transpose()).norm() < 1e-12);
  CHECK((one.components[0].gaussian.covariance - Eigen::MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  CHECK_THROWS(vq_initialize(same, 2, 3));  // only one distinct sample
  CHECK_THROWS(vq_initialize(same, 0, 3));
}

TEST_CASE("em_fit with one component is the sample moments in one step") {
  Rng rng(23);
  SampleMatrix samples(400, 3);
  for (int i = 0; i < 400; ++i)
    samples.row(i) << 100 + 9 * rng.normal(), 50 + 5 * rng.normal(), 150 + 7 * rng.normal();

  FitConfig cfg;
  cfg.seed = 11;
  const EmResult fit = em_fit(samples, 1, cfg);

  const Eigen::VectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov =
      floor_covariance(centered.transpose() * centered / 400.0, cfg.covariance_floor);

  CHECK((fit.model.components[0].gaussian.mean - mean).norm() < 1e-9);
  CHECK((fit.model.components[0].gaussian.covariance - cov).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(fit.iterations <= 2);
}

TEST_CASE("em_fit recovers a well-separated three-component mixture") {
  const std::vector<Eigen::Vector3d> means = {{20, 20, 20}, {120, 30, 40}, {60, 180, 90}};
  const double sigma = 5.0;  // separations far beyond 8 sigma
  Rng rng(31);
  const SampleMatrix samples = blob_samples(rng, means, {0.3, 0.4, 0.3}, sigma, 5000);

  FitConfig cfg;
  cfg.seed = 5;
  const EmResult fit = em_fit(samples, 3, cfg);
  validate_gmm(fit.model, cfg.covariance_floor);

  for (const auto& target : means) {
    double best = 1e300;
    for (const auto& c : fit.model.components)
      best = std::min(best, (c.gaussian.mean - target).norm());
    CHECK(best < 0.5 * sigma);
  }

  // log-likelihood is monotone non-decreasing along the run
  for (size_t i = 1; i < fit.ll_history.size(); ++i)
    CHECK(fit.ll_history[i] >= fit.ll_history[i - 1] - 1e-9);
}

TEST_CASE("em_fit validates its configuration and inputs") {
  SampleMatrix samples(5, 3);
  samples.setRandom();
  FitConfig bad;
  bad.max_iterations = 0;
  CHECK_THROWS(em_fit(samples, 1, bad));

  FitConfig cfg;
  CHECK_THROWS(em_fit(SampleMatrix(0, 3), 1, cfg));
  CHECK_THROWS(em_fit(samples, 0, cfg));
}

TEST_CASE("em_fit and vq_initialize are deterministic in the seed") {
  Rng rng(77);
  const SampleMatrix samples =
      blob_samples(rng, {{10, 10, 10}, {90, 90, 90}}, {0.5, 0.5}, 6.0, 800);
  FitConfig cfg;
  cfg.seed = 1234;
  const EmResult a = em_fit(samples, 2, cfg);
  const EmResult b = em_fit(samples, 2, cfg);
  CHECK(serialize_gmm(a.model) == serialize_gmm(b.model));
  CHECK(a.log_likelihood == b.log_likelihood);
  CHECK(serialize_gmm(vq_initialize(samples, 2, 42)) ==
        serialize_gmm(vq_initialize(samples, 2, 42)));
}

TEST_CASE("gmm density integrates to one (importance sampling)") {
  Rng data_rng(3);
  for (int d = 1; d <= 3; ++d) {
    // random two-component mixture
    Gmm model;
    for (int c = 0; c < 2; ++c) {
      GmmComponent comp;
      comp.weight = 0.5;
      comp.gaussian.mean = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < d; ++i) comp.gaussian.mean(i) = data_rng.uniform(-3.0, 3.0);
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = data_rng.uniform(-0.6, 0.6);
      comp.gaussian.covariance = a * a.transpose() + Eigen::MatrixXd::Identity(d, d);
      model.components.push_back(comp);
    }

    // broad Gaussian proposal centered between the components
    Gaussian proposal;
    proposal.mean = 0.5 * (model.components[0].gaussian.mean + model.components[1].gaussian.mean);
    proposal.covariance = Eigen::MatrixXd::Identity(d, d) * 40.0;
    Eigen::LLT<Eigen::MatrixXd> llt(proposal.covariance);

    Rng rng(900 + d);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd z(d);
      for (int j = 0; j < d; ++j) z(j) = rng.normal();
      const Eigen::VectorXd x = proposal.mean + llt.matrixL() * z;
      acc += gmm_pdf(model, x) / gaussian_pdf(proposal, x);
    }
    CHECK(acc / n == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("mdl_select prefers the true order on separated data") {
  const std::vector<Eigen::Vector3d> means = {
      {20, 20, 20}, {80, 20, 20}, {20, 80, 20}, {20, 20, 80}};
  FitConfig cfg;
  int correct = 0;
  const int trials = 12;
  for (int t = 0; t < trials; ++t) {
    Rng rng(5000 + t);
    const SampleMatrix samples =
        blob_samples(rng, means, {0.25, 0.25, 0.25, 0.25}, 5.0, 1600);
    cfg.seed = 100 + t;
    const MdlResult res = mdl_select(samples, 3, 6, cfg);
    REQUIRE(res.scores.size() == 4);  // search restricted to {3,4,5,6}
    CHECK(res.scores.front().first == 3);
    CHECK(res.scores.back().first == 6);
    if (res.selected_k == 4) ++correct;
  }
  CHECK(correct >= (trials * 8 + 9) / 10);  // >= 80%
}

TEST_CASE("mdl_select picks the range minimum on a single blob") {
  Rng rng(55);
  const SampleMatrix samples = blob_samples(rng, {{100, 100, 100}}, {1.0}, 10.0, 1500);
  FitConfig cfg;
  cfg.seed = 9;
  const MdlResult res = mdl_select(samples, 3, 6, cfg);
  CHECK(res.selected_k == 3);
}

TEST_CASE("serialization round trip is exact") {
  Rng rng(123);
  const SampleMatrix samples =
      blob_samples(rng, {{30, 30, 30}, {200, 60, 90}}, {0.4, 0.6}, 7.0, 600);
  FitConfig cfg;
  cfg.seed = 8;
  const Gmm model = em_fit(samples, 2, cfg).model;

  const std::string text = serialize_gmm(model);
  CHECK(text.rfind("GMM v1 d=3 k=2", 0) == 0);
  const Gmm back = parse_gmm(text);
  REQUIRE(back.size() == model.size());
  for (int c = 0; c < model.size(); ++c) {
    CHECK(back.components[c].weight == model.components[c].weight);
    CHECK((back.components[c].gaussian.mean - model.components[c].gaussian.mean).norm() == 0.0);
    CHECK((back.components[c].gaussian.covariance - model.components[c].gaussian.covariance)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  CHECK_THROWS(parse_gmm("GMM v2 d=3 k=2\n"));
  CHECK_THROWS(parse_gmm("GMM v1 d=3 k=1\n0.5 1 2 3"));  // truncated covariance
}
