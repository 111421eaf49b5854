#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "thermal/gp.hpp"

namespace thermal::report {

/// Latent (noise-free) posterior of one condition on the grid.
struct ConditionCurve {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    Eigen::MatrixXd covariance;
};

struct PredictionGrid {
    std::vector<double> temperatures;  // strictly increasing, endpoints = observed design range
    ConditionCurve control;
    ConditionCurve perturbation;
};

/// g points evenly spaced over [lo, hi], endpoints exact. Requires g >= 2 and lo < hi.
std::vector<double> uniform_grid(double lo, double hi, int g);

ConditionCurve curve_on(const gp::Model& model, std::span<const double> temperatures);

/// Grid over the combined temperature range of both models' designs.
PredictionGrid make_grid(const gp::Model& control, const gp::Model& perturbation, int grid_size = 100);

struct EffectSize {
    double value = 0.0;         // trapezoid integral of |control - perturbation|
    double signed_value = 0.0;  // trapezoid integral of (perturbation - control)
    int grid_size = 0;
};

EffectSize effect_size(const PredictionGrid& grid);

}  // namespace thermal::report
