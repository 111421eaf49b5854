#include "thermal/gp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "thermal/optimizer.hpp"

namespace thermal::gp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool try_cholesky(const Eigen::MatrixXd& k, Eigen::MatrixXd& lower) {
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) return false;
    lower = llt.matrixL();
    return lower.diagonal().allFinite() && (lower.diagonal().array() > 0.0).all();
}

Eigen::VectorXd residual(const Design& d, double mean) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) r[static_cast<Eigen::Index>(i)] = d.y[i] - mean;
    return r;
}

std::uint64_t hash_design(const Design& d) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](double v) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        h = mix64(h ^ bits);
    };
    for (double v : d.x) feed(v);
    for (double v : d.y) feed(v);
    return h;
}

Design canonical(Design d) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return d.x[a] != d.x[b] ? d.x[a] < d.x[b] : d.y[a] < d.y[b];
    });
    Design out;
    out.x.reserve(d.size());
    out.y.reserve(d.size());
    for (auto i : order) {
        out.x.push_back(d.x[i]);
        out.y.push_back(d.y[i]);
    }
    return out;
}

// Initial jitter first, then x growth up to the maximum. A zero initial jitter continues from 1e-12.
std::vector<double> jitter_schedule(const JitterPolicy& p) {
    std::vector<double> out{p.initial};
    double j = p.initial > 0.0 ? p.initial * p.growth : 1e-12;
    for (; j <= p.maximum * (1.0 + 1e-12); j *= p.growth) out.push_back(j);
    return out;
}

Hyperparams from_theta(const Eigen::Vector4d& t) {
    return {std::exp(t[0]), std::exp(t[1]), std::exp(t[2]), t[3]};
}

}  // namespace

bool Hyperparams::valid() const {
    return std::isfinite(length_scale) && std::isfinite(signal_variance) && std::isfinite(noise_variance) &&
           std::isfinite(mean) && length_scale > 0.0 && signal_variance > 0.0 && noise_variance > 0.0;
}

double rbf_kernel(double x1, double x2, double length_scale) {
    if (!(length_scale > 0.0)) throw std::domain_error("RBF length scale must be positive");
    const double d = (x1 - x2) / length_scale;
    return std::exp(-0.5 * d * d);
}

Eigen::MatrixXd cross_covariance(std::span<const double> a, std::span<const double> b, const Hyperparams& hp) {
    Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                hp.signal_variance * rbf_kernel(a[i], b[j], hp.length_scale);
        }
    }
    return k;
}

Eigen::MatrixXd build_covariance(std::span<const double> x, const Hyperparams& hp, double jitter) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        k(j, j) = hp.signal_variance + hp.noise_variance + jitter;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = hp.signal_variance * rbf_kernel(x[static_cast<std::size_t>(i)],
                                                             x[static_cast<std::size_t>(j)], hp.length_scale);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

Factorization factorize(std::span<const double> x, const Hyperparams& hp, const JitterPolicy& jitter) {
    const Eigen::MatrixXd base = build_covariance(x, hp, 0.0);
    Factorization f;
    for (double j : jitter_schedule(jitter)) {
        Eigen::MatrixXd k = base;
        k.diagonal().array() += j;
        if (try_cholesky(k, f.lower)) {
            f.jitter = j;
            return f;
        }
    }
    throw FitError("covariance matrix is not positive definite even with jitter " + std::to_string(jitter.maximum));
}

double marginal_log_likelihood(const Design& design, const Hyperparams& hp, double jitter) {
    const Eigen::MatrixXd k = build_covariance(design.x, hp, jitter);
    Eigen::MatrixXd lower;
    if (!try_cholesky(k, lower)) throw FitError("covariance matrix is not positive definite");
    const Eigen::VectorXd r = residual(design, hp.mean);
    const Eigen::VectorXd z = lower.triangularView<Eigen::Lower>().solve(r);
    const auto n = static_cast<double>(design.size());
    return -0.5 * z.squaredNorm() - lower.diagonal().array().log().sum() - 0.5 * n * kLog2Pi;
}

MllWithGradient mll_gradient(const Design& design, const Hyperparams& hp, double jitter) {
    const auto n = static_cast<Eigen::Index>(design.size());
    const Eigen::MatrixXd k = build_covariance(design.x, hp, jitter);
    Eigen::MatrixXd lower;
    if (!try_cholesky(k, lower)) throw FitError("covariance matrix is not positive definite");

    const Eigen::VectorXd r = residual(design, hp.mean);
    const auto l = lower.triangularView<Eigen::Lower>();
    const Eigen::VectorXd z = l.solve(r);
    const Eigen::VectorXd alpha = lower.transpose().triangularView<Eigen::Upper>().solve(z);

    Eigen::MatrixXd k_inv = l.solve(Eigen::MatrixXd::Identity(n, n));
    k_inv = lower.transpose().triangularView<Eigen::Upper>().solve(k_inv);

    MllWithGradient out;
    out.value = -0.5 * z.squaredNorm() - lower.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;

    // dmll/dtheta = 0.5 tr((alpha alpha^T - K^{-1}) dK/dtheta)
    const double inv_l2 = 1.0 / (hp.length_scale * hp.length_scale);
    double g_len = 0.0;
    double g_sig = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double w = alpha[i] * alpha[j] - k_inv(i, j);
            const double dx = design.x[static_cast<std::size_t>(i)] - design.x[static_cast<std::size_t>(j)];
            const double kf = hp.signal_variance * std::exp(-0.5 * dx * dx * inv_l2);
            g_sig += w * kf;
            g_len += w * kf * dx * dx * inv_l2;
        }
    }
    out.gradient[0] = 0.5 * g_len;
    out.gradient[1] = 0.5 * g_sig;
    out.gradient[2] = 0.5 * hp.noise_variance * (alpha.squaredNorm() - k_inv.trace());
    out.gradient[3] = alpha.sum();
    return out;
}

Model Model::condition(Design design, const Hyperparams& hp, const JitterPolicy& jitter) {
    if (design.x.size() != design.y.size()) throw std::invalid_argument("design inputs and targets differ in length");
    if (!hp.valid()) throw std::invalid_argument("invalid GP hyperparameters");
    Model m;
    m.hp_ = hp;
    m.design_ = std::move(design);
    const auto n = static_cast<Eigen::Index>(m.design_.size());
    if (n == 0) {
        m.jitter_ = jitter.initial;
        m.lower_.resize(0, 0);
        m.alpha_.resize(0);
        m.mll_ = 0.0;
        return m;
    }
    auto f = factorize(m.design_.x, hp, jitter);
    m.jitter_ = f.jitter;
    m.lower_ = std::move(f.lower);
    const auto l = m.lower_.triangularView<Eigen::Lower>();
    const Eigen::VectorXd z = l.solve(residual(m.design_, hp.mean));
    m.alpha_ = m.lower_.transpose().triangularView<Eigen::Upper>().solve(z);
    m.mll_ = -0.5 * z.squaredNorm() - m.lower_.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;
    return m;
}

Model fit_gp(Design design, const FitConfig& config) {
    if (design.x.size() != design.y.size()) throw std::invalid_argument("design inputs and targets differ in length");
    if (design.x.empty()) throw std::invalid_argument("cannot fit a GP to an empty design");
    design = canonical(std::move(design));

    const auto [xmin, xmax] = std::minmax_element(design.x.begin(), design.x.end());
    double span = *xmax - *xmin;
    if (!(span > 0.0)) span = 1.0;
    const auto ny = static_cast<double>(design.size());
    const double y_mean = std::accumulate(design.y.begin(), design.y.end(), 0.0) / ny;
    double y_var = 0.0;
    for (double v : design.y) y_var += (v - y_mean) * (v - y_mean);
    y_var /= ny;
    const double signal0 = std::clamp(y_var, std::max(config.min_signal_variance, 1e-6), config.max_signal_variance);
    const double noise0 = std::max(0.1 * y_var, std::max(config.min_noise_variance, 1e-6));

    const double max_length = std::max(config.max_length_scale_span_factor * span, config.min_length_scale);
    opt::Bounds bounds;
    bounds.lower = Eigen::Vector4d(std::log(config.min_length_scale), std::log(config.min_signal_variance),
                                   std::log(config.min_noise_variance), -INFINITY);
    bounds.upper =
        Eigen::Vector4d(std::log(max_length), std::log(config.max_signal_variance), std::log(1e4), INFINITY);

    const auto jitters = jitter_schedule(config.jitter);
    auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        const Hyperparams hp = from_theta(theta);
        for (double j : jitters) {
            try {
                const auto r = mll_gradient(design, hp, j);
                grad = r.gradient;
                return r.value;
            } catch (const FitError&) {
            }
        }
        throw FitError("covariance not factorizable during fit");
    };

    opt::Settings settings;
    settings.max_iterations = config.max_iterations;
    settings.value_tolerance = config.value_tolerance;
    settings.gradient_tolerance = config.gradient_tolerance;

    std::mt19937_64 rng(mix64(config.seed ^ hash_design(design)));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double base_lengths[] = {span / 8.0, span / 4.0, span / 2.0};

    FitDiagnostics diag;
    bool have_best = false;
    opt::Result best;
    for (int r = 0; r < config.restarts; ++r) {
        const double length0 = std::clamp(base_lengths[r % 3] * std::exp(0.5 * unit(rng)), config.min_length_scale,
                                          max_length);
        Eigen::VectorXd start = Eigen::Vector4d(std::log(length0), std::log(signal0), std::log(noise0), y_mean);
        ++diag.restarts_used;
        try {
            auto res = opt::maximize(objective, start, bounds, settings);
            if (!have_best || res.value > best.value) {
                best = std::move(res);
                have_best = true;
            }
        } catch (const FitError&) {
            ++diag.restarts_failed;
        }
    }
    if (!have_best) throw FitError("all GP fit restarts failed to factorize");

    diag.iterations = best.iterations;
    diag.converged = best.converged;
    Model m = Model::condition(std::move(design), from_theta(best.x), config.jitter);
    m.diagnostics_ = diag;
    return m;
}

PosteriorPrediction posterior_predict(const Model& model, std::span<const double> x_star) {
    const auto& hp = model.hyperparams();
    const auto m = static_cast<Eigen::Index>(x_star.size());
    PosteriorPrediction p;
    p.x.assign(x_star.begin(), x_star.end());

    p.latent_covariance = cross_covariance(x_star, x_star, hp);
    p.latent_mean = Eigen::VectorXd::Constant(m, hp.mean);
    if (model.design().size() > 0) {
        const Eigen::MatrixXd k_star = cross_covariance(model.design().x, x_star, hp);
        p.latent_mean.noalias() += k_star.transpose() * model.alpha();
        const Eigen::MatrixXd v = model.cholesky().triangularView<Eigen::Lower>().solve(k_star);
        p.latent_covariance.noalias() -= v.transpose() * v;
    }
    p.latent_covariance = 0.5 * (p.latent_covariance + p.latent_covariance.transpose()).eval();
    for (Eigen::Index i = 0; i < m; ++i) p.latent_covariance(i, i) = std::max(p.latent_covariance(i, i), 0.0);

    p.predictive_mean = p.latent_mean;
    p.predictive_covariance = p.latent_covariance;
    p.predictive_covariance.diagonal().array() += hp.noise_variance;
    return p;
}

}  // namespace thermal::gp
