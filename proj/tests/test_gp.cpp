#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "thermal/gp.hpp"

using namespace thermal;
using thermal::gp::Design;
using thermal::gp::Hyperparams;

namespace {

oracle::Hp to_oracle(const Hyperparams& hp) {
    return {hp.length_scale, hp.signal_variance, hp.noise_variance, hp.mean};
}

struct Instance {
    Design design;
    Hyperparams hp;
};

Instance random_instance(std::mt19937_64& rng, int max_n) {
    std::uniform_int_distribution<int> n_dist(1, max_n);
    std::uniform_real_distribution<double> t(37.0, 67.0), u(0.0, 1.0);
    Instance in;
    const int n = n_dist(rng);
    for (int i = 0; i < n; ++i) {
        in.design.x.push_back(t(rng));
        in.design.y.push_back(u(rng));
    }
    in.hp.length_scale = std::exp(std::uniform_real_distribution<double>(std::log(1.0), std::log(30.0))(rng));
    in.hp.signal_variance = std::exp(std::uniform_real_distribution<double>(std::log(0.01), std::log(2.0))(rng));
    in.hp.noise_variance = std::exp(std::uniform_real_distribution<double>(std::log(1e-3), std::log(0.5))(rng));
    in.hp.mean = std::uniform_real_distribution<double>(-0.5, 1.0)(rng);
    return in;
}

}  // namespace

TEST_CASE("rbf kernel values") {
    CHECK(gp::rbf_kernel(50.0, 50.0, 3.0) == 1.0);
    CHECK(gp::rbf_kernel(0.0, 1.0, 1.0) == doctest::Approx(0.606531).epsilon(1e-6));
    CHECK(gp::rbf_kernel(37.0, 67.0, 10.0) == doctest::Approx(0.011109).epsilon(1e-5));
    CHECK(gp::rbf_kernel(37.0, 67.0, 10.0) == gp::rbf_kernel(67.0, 37.0, 10.0));
    CHECK_THROWS_AS(gp::rbf_kernel(0.0, 1.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(gp::rbf_kernel(0.0, 1.0, -2.0), std::domain_error);
}

TEST_CASE("build_covariance") {
    Hyperparams hp{5.0, 1.0, 0.25, 0.0};
    const std::vector<double> one{37.0};
    const auto k1 = gp::build_covariance(one, hp, 0.0);
    CHECK(k1.rows() == 1);
    CHECK(k1(0, 0) == doctest::Approx(1.25));

    const std::vector<double> two{0.0, 1.0};
    const auto k2 = gp::build_covariance(two, {1.0, 1.0, 1e-300, 0.0}, 0.0);
    CHECK(k2(0, 1) == doctest::Approx(0.606531).epsilon(1e-6));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(rng, 12);
        const auto k = gp::build_covariance(in.design.x, in.hp, 1e-6);
        CHECK((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("kernel gram matrix is positive semidefinite") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> t(30.0, 75.0), l(0.5, 20.0);
    std::uniform_int_distribution<int> n_dist(1, 12);
    double worst = INFINITY;
    for (int draw = 0; draw < 200; ++draw) {
        std::vector<double> x(static_cast<std::size_t>(n_dist(rng)));
        for (auto& v : x) v = t(rng);
        const Hyperparams hp{l(rng), 1.0, 1e-300, 0.0};
        Eigen::MatrixXd k = gp::cross_covariance(x, x, hp);
        worst = std::min(worst, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff());
    }
    CHECK(worst >= -1e-8);
}

TEST_CASE("marginal log-likelihood closed forms") {
    Design d{{37.0}, {0.5}};
    const double c = -0.5 * std::log(1.25) - 0.5 * std::log(2.0 * std::numbers::pi);
    CHECK(gp::marginal_log_likelihood(d, {5.0, 1.0, 0.25, 0.5}, 0.0) == doctest::Approx(-1.030511).epsilon(1e-6));
    CHECK(gp::marginal_log_likelihood(d, {5.0, 1.0, 0.25, 0.5}, 0.0) == doctest::Approx(c).epsilon(1e-14));
    CHECK(gp::marginal_log_likelihood(d, {5.0, 1.0, 0.25, 0.0}, 0.0) == doctest::Approx(-1.130511).epsilon(1e-6));
    CHECK(gp::marginal_log_likelihood(d, {5.0, 1.0, 0.25, 0.0}, 0.0) == doctest::Approx(c - 0.1).epsilon(1e-14));
}

TEST_CASE("Cholesky mll and posterior match the dense-inverse oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> t(37.0, 67.0);
    for (int trial = 0; trial < 200; ++trial) {
        auto in = random_instance(rng, 6);
        const double jitter = trial % 2 ? 1e-6 : 0.0;
        const double got = gp::marginal_log_likelihood(in.design, in.hp, jitter);
        const double want = oracle::mll(in.design.x, in.design.y, to_oracle(in.hp), jitter);
        CHECK(std::abs(got - want) <= 1e-9);

        std::vector<double> xs{t(rng), t(rng), t(rng)};
        const auto model = gp::Model::condition(in.design, in.hp, {jitter, jitter, 10.0});
        const auto post = gp::posterior_predict(model, xs);
        const auto ref = oracle::posterior(in.design.x, in.design.y, to_oracle(in.hp), jitter, xs);
        CHECK((post.latent_mean - ref.mean).cwiseAbs().maxCoeff() <= 1e-9);
        Eigen::MatrixXd ref_cov = ref.cov;
        for (int i = 0; i < 3; ++i) ref_cov(i, i) = std::max(ref_cov(i, i), 0.0);
        CHECK((post.latent_covariance - ref_cov).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(std::abs(model.mll() - got) <= 1e-10);
    }
}

TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        auto in = random_instance(rng, 8);
        const auto analytic = gp::mll_gradient(in.design, in.hp, 1e-6);
        const auto numeric = oracle::finite_difference(
            [&](const oracle::Hp& h) { return oracle::mll(in.design.x, in.design.y, h, 1e-6); }, to_oracle(in.hp));
        CHECK(analytic.value == doctest::Approx(gp::marginal_log_likelihood(in.design, in.hp, 1e-6)).epsilon(1e-12));
        for (int i = 0; i < 4; ++i) {
            const double scale = std::max(1.0, std::abs(numeric[i]));
            CHECK(std::abs(analytic.gradient[i] - numeric[i]) <= 1e-4 * scale);
        }
    }
}

TEST_CASE("mean gradient vanishes on centered targets") {
    // 1^T K^-1 y vanishes when the design is symmetric and the targets antisymmetric
    Design sym{{40, 43, 46, 49, 52}, {-0.2, -0.1, 0.0, 0.1, 0.2}};
    const auto g = gp::mll_gradient(sym, {3.0, 1.0, 0.1, 0.0}, 0.0);
    CHECK(std::abs(g.gradient[3]) <= 1e-10);
    Design flat{{40, 40, 50, 50}, {0.1, -0.1, 0.2, -0.2}};
    CHECK(std::abs(gp::mll_gradient(flat, {3.0, 1.0, 0.1, 0.0}, 0.0).gradient[3]) <= 1e-10);
}

TEST_CASE("posterior special cases") {
    SUBCASE("noise-free interpolation") {
        Design d{{37, 42, 47, 52, 57}, {0.9, 0.8, 0.5, 0.2, 0.1}};
        const auto m = gp::Model::condition(d, {6.0, 0.3, 1e-300, 0.4}, {0.0, 0.0, 10.0});
        const auto p = gp::posterior_predict(m, d.x);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(p.latent_mean[static_cast<Eigen::Index>(i)] - d.y[i]) <= 1e-8);
    }
    SUBCASE("empty design recovers the prior") {
        const auto m = gp::Model::condition({}, {4.0, 0.7, 0.01, 0.25});
        const std::vector<double> xs{37, 50, 67};
        const auto p = gp::posterior_predict(m, xs);
        for (int i = 0; i < 3; ++i) {
            CHECK(p.latent_mean[i] == 0.25);
            CHECK(p.latent_covariance(i, i) == doctest::Approx(0.7));
        }
    }
    SUBCASE("invariants") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            auto in = random_instance(rng, 10);
            const auto m = gp::Model::condition(in.design, in.hp);
            const auto p = gp::posterior_predict(m, in.design.x);
            CHECK((p.latent_covariance - p.latent_covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
            for (Eigen::Index i = 0; i < p.latent_covariance.rows(); ++i) {
                CHECK(p.latent_covariance(i, i) >= 0.0);
                CHECK(p.latent_covariance(i, i) <= in.hp.signal_variance + 1e-10);
                CHECK(p.predictive_covariance(i, i) >= p.latent_covariance(i, i));
            }
        }
    }
}

TEST_CASE("factorization reproduces K_y") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        auto in = random_instance(rng, 15);
        const auto m = gp::Model::condition(in.design, in.hp);
        const auto k = gp::build_covariance(in.design.x, in.hp, m.jitter());
        const Eigen::MatrixXd rebuilt = m.cholesky() * m.cholesky().transpose();
        CHECK((rebuilt - k).norm() / k.norm() <= 1e-8);
    }
}

TEST_CASE("jitter escalates on near-duplicate inputs") {
    Design d{{50.0, 50.0, 50.0}, {0.1, 0.2, 0.3}};
    const Hyperparams hp{5.0, 1.0, 1e-300, 0.0};
    const auto f = gp::factorize(d.x, hp, {0.0, 1e-2, 10.0});
    CHECK(f.jitter > 0.0);
    CHECK_THROWS_AS(gp::factorize(d.x, hp, {0.0, 0.0, 10.0}), FitError);
}

TEST_CASE("translation invariance") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        auto in = random_instance(rng, 8);
        Design shifted = in.design;
        for (auto& x : shifted.x) x += 13.5;
        CHECK(std::abs(gp::marginal_log_likelihood(in.design, in.hp, 1e-6) -
                       gp::marginal_log_likelihood(shifted, in.hp, 1e-6)) <= 1e-9);
        const std::vector<double> xs{40.0, 55.0};
        const std::vector<double> xs_shift{53.5, 68.5};
        const auto a = gp::posterior_predict(gp::Model::condition(in.design, in.hp), xs);
        const auto b = gp::posterior_predict(gp::Model::condition(shifted, in.hp), xs_shift);
        CHECK((a.latent_mean - b.latent_mean).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((a.latent_covariance - b.latent_covariance).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

namespace {

Design draw_from_gp(std::mt19937_64& rng, const std::vector<double>& x, const Hyperparams& hp) {
    const Eigen::MatrixXd k = gp::build_covariance(x, hp, 1e-10);
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(k.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    const Eigen::VectorXd y = l * z;
    Design d;
    d.x = x;
    for (Eigen::Index i = 0; i < y.size(); ++i) d.y.push_back(y[i] + hp.mean);
    return d;
}

}  // namespace

TEST_CASE("fit_gp dominates the generating hyperparameters") {
    std::mt19937_64 rng(21);
    std::vector<double> x;
    for (int i = 0; i < 10; ++i) x.push_back(37.0 + 30.0 * i / 9.0);
    const Hyperparams truth{8.0, 0.1, 1e-6, 0.5};
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = draw_from_gp(rng, x, truth);
        const auto model = gp::fit_gp(d, {});
        CHECK(model.mll() >= gp::marginal_log_likelihood(d, truth, model.jitter()) - 1e-6);
        CHECK(std::abs(model.mll() - gp::marginal_log_likelihood(model.design(), model.hyperparams(), model.jitter())) <= 1e-10);
    }
}

TEST_CASE("fit_gp reaches a first-order optimum") {
    std::mt19937_64 rng(4);
    std::vector<double> x;
    for (int r = 0; r < 2; ++r)
        for (int i = 0; i < 10; ++i) x.push_back(37.0 + 30.0 * i / 9.0);
    int checked = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto d = draw_from_gp(rng, x, {7.0, 0.08, 0.003, 0.5});
        const auto model = gp::fit_gp(d, {});
        const auto& hp = model.hyperparams();
        // only interior optima have a vanishing gradient
        if (hp.length_scale <= 0.1 * 1.0001 || hp.length_scale >= 300.0 * 0.9999 || hp.noise_variance <= 1e-6 * 1.0001) {
            continue;
        }
        ++checked;
        const auto g = gp::mll_gradient(model.design(), hp, model.jitter());
        CHECK(g.gradient.norm() <= 1e-4);
    }
    CHECK(checked >= 5);
}

TEST_CASE("fit_gp on white noise prefers noise over signal") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> normal(0.5, 0.1);
    std::vector<double> x;
    for (int r = 0; r < 2; ++r)
        for (int i = 0; i < 10; ++i) x.push_back(37.0 + 30.0 * i / 9.0);
    int noise_dominated = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Design d{x, {}};
        for (std::size_t i = 0; i < x.size(); ++i) d.y.push_back(normal(rng));
        const auto model = gp::fit_gp(d, {});
        if (model.hyperparams().signal_variance / model.hyperparams().noise_variance < 1.0) ++noise_dominated;
    }
    CHECK(noise_dominated >= 45);
}

TEST_CASE("fit_gp is deterministic and order independent") {
    Design d{{37, 40, 43, 46, 49, 52, 55, 58, 61, 64, 67}, {1.0, 0.97, 0.93, 0.85, 0.7, 0.5, 0.3, 0.15, 0.08, 0.05, 0.04}};
    gp::FitConfig cfg;
    cfg.seed = 17;
    const auto a = gp::fit_gp(d, cfg);
    const auto b = gp::fit_gp(d, cfg);
    CHECK(a.hyperparams().length_scale == b.hyperparams().length_scale);
    CHECK(a.hyperparams().signal_variance == b.hyperparams().signal_variance);
    CHECK(a.hyperparams().noise_variance == b.hyperparams().noise_variance);
    CHECK(a.hyperparams().mean == b.hyperparams().mean);
    CHECK(a.mll() == b.mll());

    Design reversed{{d.x.rbegin(), d.x.rend()}, {d.y.rbegin(), d.y.rend()}};
    const auto c = gp::fit_gp(reversed, cfg);
    CHECK(c.mll() == a.mll());
    CHECK(c.diagnostics().restarts_used == 5);
}

TEST_CASE("noise overestimation lowers mll on noise-free data") {
    std::mt19937_64 rng(31);
    std::vector<double> x;
    for (int i = 0; i < 10; ++i) x.push_back(37.0 + 30.0 * i / 9.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Hyperparams truth{8.0, 0.1, 1e-6, 0.5};
        const auto d = draw_from_gp(rng, x, truth);
        Hyperparams big = truth;
        big.noise_variance = 1.0;
        Hyperparams small = truth;
        small.noise_variance = 1e-4;
        CHECK(gp::marginal_log_likelihood(d, big, 1e-6) < gp::marginal_log_likelihood(d, small, 1e-6));
    }
}

TEST_CASE("invalid designs") {
    CHECK_THROWS_AS(gp::fit_gp({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(gp::fit_gp({{1.0, 2.0}, {0.5}}, {}), std::invalid_argument);
    CHECK_THROWS_AS(gp::Model::condition({{1.0}, {0.5}}, {0.0, 1.0, 0.1, 0.0}), std::invalid_argument);
}
