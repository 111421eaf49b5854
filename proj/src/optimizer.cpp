#include "thermal/optimizer.hpp"

#include <cmath>
#include <limits>

#include "thermal/common.hpp"

namespace thermal::opt {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Bounds& b) { return x.cwiseMax(b.lower).cwiseMin(b.upper); }

// Zero the ascent components that would push a coordinate through an active bound.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Bounds& b) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if ((x[i] <= b.lower[i] && g[i] < 0.0) || (x[i] >= b.upper[i] && g[i] > 0.0)) pg[i] = 0.0;
    }
    return pg;
}

constexpr double kMaxStep = 2.0;  // inf-norm cap on a single trial step
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;

}  // namespace

Result maximize(const Objective& objective, Eigen::VectorXd start, const Bounds& bounds, const Settings& settings) {
    const auto n = start.size();
    Result r;
    r.x = project(start, bounds);
    Eigen::VectorXd g(n);
    r.value = objective(r.x, g);
    if (!std::isfinite(r.value)) throw FitError("objective is not finite at the starting point");

    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);  // inverse (negated) Hessian approximation
    Eigen::VectorXd pg = projected_gradient(r.x, g, bounds);

    for (r.iterations = 0; r.iterations < settings.max_iterations; ++r.iterations) {
        if (pg.lpNorm<Eigen::Infinity>() < settings.gradient_tolerance) {
            r.converged = true;
            break;
        }

        bool accepted = false;
        Eigen::VectorXd x_new, g_new(n);
        double f_new = 0.0;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            Eigen::VectorXd d = h * pg;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (pg[i] == 0.0 && g[i] != 0.0) d[i] = 0.0;
            }
            if (d.dot(pg) <= 0.0) {
                h.setIdentity();
                d = pg;
            }
            double t = 1.0;
            if (const double dn = d.lpNorm<Eigen::Infinity>(); dn > kMaxStep) t = kMaxStep / dn;

            for (int k = 0; k < kMaxBacktracks; ++k, t *= 0.5) {
                x_new = project(r.x + t * d, bounds);
                const Eigen::VectorXd step = x_new - r.x;
                if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
                try {
                    f_new = objective(x_new, g_new);
                } catch (const FitError&) {
                    continue;
                }
                if (std::isfinite(f_new) && f_new >= r.value + kArmijo * g.dot(step)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted) h.setIdentity();
        }
        if (!accepted) break;

        const Eigen::VectorXd s = x_new - r.x;
        const Eigen::VectorXd y = g - g_new;  // gradient change of the minimized function -f
        const double sy = s.dot(y);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
            h = v * h * v.transpose() + rho * s * s.transpose();
        }

        const double delta = std::abs(f_new - r.value);
        r.x = x_new;
        r.value = f_new;
        g = g_new;
        pg = projected_gradient(r.x, g, bounds);
        if (delta < settings.value_tolerance) {
            ++r.iterations;
            r.converged = true;
            break;
        }
    }
    r.gradient = pg;
    return r;
}

}  // namespace thermal::opt
