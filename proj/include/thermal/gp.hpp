#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "thermal/common.hpp"

namespace thermal::gp {

/// Hyperparameters of the model y = m + f(x) + eps with f ~ GP(0, signal_variance * RBF(length_scale))
/// and eps ~ N(0, noise_variance). Temperatures in degrees C, targets in scaled-abundance units.
struct Hyperparams {
    double length_scale = 1.0;
    double signal_variance = 1.0;
    double noise_variance = 1e-2;
    double mean = 0.0;

    bool valid() const;
};

struct Design {
    std::vector<double> x;  // temperatures
    std::vector<double> y;  // scaled abundances

    std::size_t size() const { return x.size(); }
};

/// exp(-(x1 - x2)^2 / (2 l^2)). Throws std::domain_error for l <= 0.
double rbf_kernel(double x1, double x2, double length_scale);

/// signal_variance * RBF(a_i, b_j); no noise term.
Eigen::MatrixXd cross_covariance(std::span<const double> a, std::span<const double> b, const Hyperparams& hp);

/// K_y = signal_variance * RBF(X, X) + (noise_variance + jitter) * I.
Eigen::MatrixXd build_covariance(std::span<const double> x, const Hyperparams& hp, double jitter);

struct JitterPolicy {
    double initial = 1e-6;
    double maximum = 1e-2;
    double growth = 10.0;
};

/// Cholesky factor of K_y, escalating jitter on failure. Throws FitError when even the
/// maximum jitter does not yield a positive definite matrix.
struct Factorization {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};
Factorization factorize(std::span<const double> x, const Hyperparams& hp, const JitterPolicy& jitter);

/// Marginal log-likelihood at a fixed jitter (no escalation).
double marginal_log_likelihood(const Design& design, const Hyperparams& hp, double jitter);

/// Gradient of the marginal log-likelihood with respect to
/// (log length_scale, log signal_variance, log noise_variance, mean).
struct MllWithGradient {
    double value = 0.0;
    Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
};
MllWithGradient mll_gradient(const Design& design, const Hyperparams& hp, double jitter);

struct FitConfig {
    int restarts = 5;
    int max_iterations = 200;
    double value_tolerance = 1e-8;
    double gradient_tolerance = 1e-5;
    double min_length_scale = 0.1;
    double max_length_scale_span_factor = 10.0;
    double min_noise_variance = 1e-6;
    double min_signal_variance = 1e-8;
    double max_signal_variance = 1e4;
    JitterPolicy jitter;
    std::uint64_t seed = 0;
};

struct FitDiagnostics {
    int iterations = 0;  // of the winning restart
    bool converged = false;
    int restarts_used = 0;
    int restarts_failed = 0;
};

class Model {
public:
    /// Factorizes the design at the given hyperparameters. Points are kept in the given order.
    static Model condition(Design design, const Hyperparams& hp, const JitterPolicy& jitter = {});

    const Hyperparams& hyperparams() const { return hp_; }
    const Design& design() const { return design_; }
    double mll() const { return mll_; }
    double jitter() const { return jitter_; }
    const Eigen::MatrixXd& cholesky() const { return lower_; }
    const Eigen::VectorXd& alpha() const { return alpha_; }
    const FitDiagnostics& diagnostics() const { return diagnostics_; }

private:
    friend Model fit_gp(Design design, const FitConfig& config);

    Hyperparams hp_;
    Design design_;
    double mll_ = 0.0;
    double jitter_ = 0.0;
    Eigen::MatrixXd lower_;
    Eigen::VectorXd alpha_;  // K_y^{-1} (y - m)
    FitDiagnostics diagnostics_;
};

/// Type-II maximum likelihood: multi-start BFGS on log-hyperparameters.
///
/// The design is sorted canonically (by temperature, then target) before fitting and the
/// restart jitter is seeded from config.seed mixed with the sorted design, so the result
/// depends only on the multiset of points. Throws FitError when every restart fails.
Model fit_gp(Design design, const FitConfig& config);

struct PosteriorPrediction {
    std::vector<double> x;
    Eigen::VectorXd latent_mean;
    Eigen::MatrixXd latent_covariance;
    Eigen::VectorXd predictive_mean;
    Eigen::MatrixXd predictive_covariance;  // latent + noise_variance * I
};

PosteriorPrediction posterior_predict(const Model& model, std::span<const double> x_star);

}  // namespace thermal::gp
