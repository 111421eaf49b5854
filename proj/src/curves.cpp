#include "thermal/curves.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace thermal::report {

std::vector<double> uniform_grid(double lo, double hi, int g) {
    if (g < 2) throw std::invalid_argument("prediction grid needs at least 2 points");
    if (!(lo < hi)) throw std::invalid_argument("prediction grid needs lo < hi");
    std::vector<double> t(static_cast<std::size_t>(g));
    const double step = (hi - lo) / (g - 1);
    for (int i = 0; i < g; ++i) t[static_cast<std::size_t>(i)] = lo + step * i;
    t.back() = hi;
    return t;
}

ConditionCurve curve_on(const gp::Model& model, std::span<const double> temperatures) {
    auto post = gp::posterior_predict(model, temperatures);
    ConditionCurve c;
    c.mean = std::move(post.latent_mean);
    c.sd = post.latent_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    c.covariance = std::move(post.latent_covariance);
    return c;
}

PredictionGrid make_grid(const gp::Model& control, const gp::Model& perturbation, int grid_size) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto* m : {&control, &perturbation}) {
        for (double x : m->design().x) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    PredictionGrid grid;
    grid.temperatures = uniform_grid(lo, hi, grid_size);
    grid.control = curve_on(control, grid.temperatures);
    grid.perturbation = curve_on(perturbation, grid.temperatures);
    return grid;
}

EffectSize effect_size(const PredictionGrid& grid) {
    const auto& t = grid.temperatures;
    const Eigen::VectorXd diff = grid.perturbation.mean - grid.control.mean;
    if (static_cast<std::size_t>(diff.size()) != t.size()) {
        throw std::invalid_argument("condition means do not match the grid");
    }
    EffectSize e;
    e.grid_size = static_cast<int>(t.size());
    for (std::size_t i = 1; i < t.size(); ++i) {
        const auto a = static_cast<Eigen::Index>(i - 1);
        const auto b = static_cast<Eigen::Index>(i);
        const double h = t[i] - t[i - 1];
        e.value += 0.5 * h * (std::abs(diff[a]) + std::abs(diff[b]));
        e.signed_value += 0.5 * h * (diff[a] + diff[b]);
    }
    return e;
}

}  // namespace thermal::report
