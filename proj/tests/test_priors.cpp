#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "stmix/priors.hpp"

using namespace stmix;

namespace {

ParamSet random_param_set(Rng& rng, int k, const CarNeighborhood& nb) {
  ParamSet ps;
  for (int j = 0; j < k; ++j) ps.components.push_back(testutil::random_component(rng));
  ps.beta = testutil::random_spd2(rng);
  ps.car.pi.resize(nb.n_blocks, k - 1);
  ps.car.c.resize(k - 1);
  ps.car.rho.resize(k - 1);
  ps.car.nu2.resize(k - 1);
  for (int r = 0; r < k - 1; ++r) {
    ps.car.c[r] = draw_normal(rng);
    ps.car.rho[r] = 0.24 * draw_uniform(rng);
    ps.car.nu2[r] = 0.5 + draw_uniform(rng);
    for (int b = 0; b < nb.n_blocks; ++b) ps.car.pi(b, r) = ps.car.c[r] + draw_normal(rng);
  }
  return ps;
}

}  // namespace

TEST_CASE("hyperparams_from_data reference values") {
  // x-range 2 with median 1, y-range 4 with median 2
  std::vector<Event> events = {{1, {0.0, 0.0}}, {1, {1.0, 2.0}}, {2, {2.0, 4.0}}};
  const Hyperparams hp = hyperparams_from_data(events);
  CHECK(hp.xi[0] == Catch::Approx(1.0));
  CHECK(hp.xi[1] == Catch::Approx(2.0));
  CHECK(hp.kappa[0] == Catch::Approx(0.25));
  CHECK(hp.kappa[1] == Catch::Approx(0.0625));
  CHECK(hp.h[0] == Catch::Approx(2.5));
  CHECK(hp.h[1] == Catch::Approx(0.625));
  CHECK(hp.alpha == 3.0);
  CHECK(hp.g == 1.0);
}

TEST_CASE("hyperparams_from_data uses even-count medians") {
  std::vector<Event> events = {{1, {0.0, 0.0}}, {1, {1.0, 1.0}}, {1, {3.0, 5.0}}, {1, {4.0, 6.0}}};
  const Hyperparams hp = hyperparams_from_data(events);
  CHECK(hp.xi[0] == Catch::Approx(2.0));
  CHECK(hp.xi[1] == Catch::Approx(3.0));
}

TEST_CASE("hyperparams_from_data rejects degenerate data") {
  std::vector<Event> one = {{1, {1.0, 1.0}}};
  CHECK_THROWS_AS(hyperparams_from_data(one), std::invalid_argument);
  std::vector<Event> cluster = {{1, {1.0, 1.0}}, {2, {1.0, 1.0}}, {3, {1.0, 1.0}}};
  CHECK_THROWS_AS(hyperparams_from_data(cluster), std::domain_error);
  // zero range in one dimension only is still degenerate
  std::vector<Event> line = {{1, {1.0, 0.0}}, {2, {1.0, 2.0}}};
  CHECK_THROWS_AS(hyperparams_from_data(line), std::domain_error);
}

TEST_CASE("density building blocks match frozen oracle values") {
  // values precomputed with an independent statistics library
  Eigen::Matrix2d x;
  x << 1.3, 0.4, 0.4, 2.1;
  Eigen::Matrix2d v;
  v << 0.8, -0.1, -0.1, 0.5;
  CHECK(log_wishart2(x, 6.0, v) == Catch::Approx(-4.558137199124797).margin(1e-12));
  Eigen::Matrix2d vd = Eigen::Vector2d(0.25, 2.0).asDiagonal();
  CHECK(log_wishart2(x, 2.0, vd) == Catch::Approx(-5.434830015862909).margin(1e-12));
  CHECK(log_normal2_diag({1.2, 0.3}, {0.5, -1.0}, {0.25, 4.0}) ==
        Catch::Approx(-5.2791270664093455).margin(1e-12));
}

TEST_CASE("log_wishart2 input guards") {
  Eigen::Matrix2d not_pd;
  not_pd << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(log_wishart2(not_pd, 6.0, Eigen::Matrix2d::Identity()), std::domain_error);
  CHECK_THROWS_AS(log_wishart2(Eigen::Matrix2d::Identity(), 0.5, Eigen::Matrix2d::Identity()),
                  std::invalid_argument);
}

TEST_CASE("log_prior support boundaries give -infinity") {
  Rng rng(51);
  CarNeighborhood nb{30, 5};
  const Hyperparams hp;
  ParamSet ps = random_param_set(rng, 3, nb);
  REQUIRE(std::isfinite(log_prior(ps, hp, nb)));

  SECTION("rho outside [0, 0.25)") {
    ps.car.rho[0] = 0.3;
    CHECK(log_prior(ps, hp, nb) == -std::numeric_limits<double>::infinity());
  }
  SECTION("nu2 above its uniform range") {
    ps.car.nu2[1] = 2e4;
    CHECK(log_prior(ps, hp, nb) == -std::numeric_limits<double>::infinity());
  }
  SECTION("non-PD covariance") {
    ps.components[0].sigma << 1.0, 2.0, 2.0, 1.0;
    CHECK(log_prior(ps, hp, nb) == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("log_prior with K=1 has only component and beta terms") {
  Rng rng(53);
  CarNeighborhood nb{30, 5};
  Hyperparams hp;
  hp.xi << 0.5, -0.5;
  hp.kappa << 0.3, 0.7;
  hp.h << 2.0, 1.0;
  ParamSet ps;
  ps.components.push_back(testutil::random_component(rng));
  ps.beta = testutil::random_spd2(rng);
  ps.car.pi.resize(30, 0);
  ps.car.c.resize(0);
  ps.car.rho.resize(0);
  ps.car.nu2.resize(0);

  const Eigen::Matrix2d h_scale = Eigen::Vector2d(0.5 / hp.h[0], 0.5 / hp.h[1]).asDiagonal();
  const double want = log_wishart2(ps.beta, 2.0 * hp.g, h_scale) +
                      log_normal2_diag(ps.components[0].mu, hp.xi, hp.kappa) +
                      log_wishart2(ps.components[0].sigma.inverse(), 2.0 * hp.alpha,
                                   (2.0 * ps.beta).inverse());
  CHECK(log_prior(ps, hp, nb) == Catch::Approx(want).margin(1e-12));
}

TEST_CASE("log_prior matches a term-by-term oracle") {
  Rng rng(59);
  CarNeighborhood nb{30, 5};
  Hyperparams hp;
  hp.xi << 1.0, 2.0;
  hp.kappa << 0.25, 0.0625;
  hp.h << 2.5, 0.625;
  const ParamSet ps = random_param_set(rng, 4, nb);

  double want = log_wishart2(ps.beta, 2.0 * hp.g,
                             Eigen::Vector2d(0.5 / hp.h[0], 0.5 / hp.h[1]).asDiagonal());
  for (const auto& comp : ps.components) {
    want += log_normal2_diag(comp.mu, hp.xi, hp.kappa);
    want += log_wishart2(comp.sigma.inverse(), 2.0 * hp.alpha, (2.0 * ps.beta).inverse());
  }
  for (int r = 0; r < 3; ++r) {
    want += car_joint_logpdf(ps.car.pi.col(r), ps.car.c[r], ps.car.rho[r], ps.car.nu2[r], nb);
    want += -0.5 * std::log(2.0 * M_PI * 1e4) - ps.car.c[r] * ps.car.c[r] / 2e4;
    want += std::log(4.0) + std::log(1e-4);
  }
  CHECK(log_prior(ps, hp, nb) == Catch::Approx(want).margin(1e-10));
}

TEST_CASE("log_prior is equivariant under reference-preserving relabelings") {
  // relabel components 1..K-1 (keeping the reference category K fixed) and
  // permute the per-column hyperparameters along; the weight-space density,
  // which adds a logit Jacobian symmetric in all K weights, is unchanged
  Rng rng(61);
  CarNeighborhood nb{30, 5};
  const Hyperparams hp;
  const ParamSet ps = random_param_set(rng, 4, nb);
  const std::vector<int> order = {2, 0, 1};  // permutation of the 3 non-reference slots

  ParamSet perm = ps;
  for (int r = 0; r < 3; ++r) {
    perm.components[r] = ps.components[order[r]];
    perm.car.pi.col(r) = ps.car.pi.col(order[r]);
    perm.car.c[r] = ps.car.c[order[r]];
    perm.car.rho[r] = ps.car.rho[order[r]];
    perm.car.nu2[r] = ps.car.nu2[order[r]];
  }

  auto weight_space_log_prior = [&](const ParamSet& s) {
    double acc = log_prior(s, hp, nb);
    for (int b = 0; b < nb.n_blocks; ++b) {
      const Eigen::VectorXd lw = log_weights_from_logits(s.car.pi.row(b).transpose());
      acc -= lw.sum();  // log |d pi / d w| = -sum_j log w_j
    }
    return acc;
  };
  CHECK(weight_space_log_prior(perm) ==
        Catch::Approx(weight_space_log_prior(ps)).margin(1e-10));
}

TEST_CASE("sample_prior_component moments") {
  Rng rng(67);
  Hyperparams hp;
  hp.xi << 3.0, -2.0;
  hp.kappa << 0.5, 2.0;
  Eigen::Matrix2d beta;
  beta << 0.6, 0.1, 0.1, 0.4;

  const int n = 100000;
  Eigen::Vector2d mu_sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d prec_sum = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    const Component comp = sample_prior_component(hp, beta, rng);
    mu_sum += comp.mu;
    prec_sum += comp.sigma.inverse();
  }
  const Eigen::Vector2d mu_bar = mu_sum / n;
  const Eigen::Matrix2d prec_bar = prec_sum / n;

  const double se0 = std::sqrt(1.0 / hp.kappa[0] / n);
  const double se1 = std::sqrt(1.0 / hp.kappa[1] / n);
  CHECK(mu_bar[0] == Catch::Approx(hp.xi[0]).margin(3.0 * se0));
  CHECK(mu_bar[1] == Catch::Approx(hp.xi[1]).margin(3.0 * se1));

  // E[sigma^-1] = 2 alpha (2 beta)^-1 = alpha beta^-1; Wishart(n,V) entry
  // variances are n(V_ij^2 + V_ii V_jj), giving the standard errors
  const Eigen::Matrix2d v = (2.0 * beta).inverse();
  const Eigen::Matrix2d want = 2.0 * hp.alpha * v;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double se =
          std::sqrt(2.0 * hp.alpha * (v(i, j) * v(i, j) + v(i, i) * v(j, j)) / n);
      CHECK(prec_bar(i, j) == Catch::Approx(want(i, j)).margin(3.0 * se));
    }
  }
}

TEST_CASE("tiny prior variances pin the sampled mean to xi") {
  Rng rng(71);
  Hyperparams hp;
  hp.xi << 5.0, 7.0;
  hp.kappa << 1e12, 1e12;
  const Component comp = sample_prior_component(hp, Eigen::Matrix2d::Identity(), rng);
  CHECK(comp.mu[0] == Catch::Approx(5.0).margin(1e-4));
  CHECK(comp.mu[1] == Catch::Approx(7.0).margin(1e-4));
}

TEST_CASE("sample_prior_car draws proper states") {
  Rng rng(73);
  CarNeighborhood nb{30, 5};
  const CarState st = sample_prior_car(4, nb, rng);
  CHECK(st.pi.rows() == 30);
  CHECK(st.pi.cols() == 3);
  CHECK_NOTHROW(validate(st));
  for (int r = 0; r < 3; ++r) {
    CHECK(st.nu2[r] < 1e4);
    CHECK(st.rho[r] < 0.25);
  }
  // K=1 edge: no columns at all
  const CarState empty = sample_prior_car(1, nb, rng);
  CHECK(empty.pi.cols() == 0);
}
