#pragma once

#include <functional>

#include <Eigen/Dense>

namespace thermal::opt {

/// Objective returning f(x) and writing its gradient. May throw FitError for points where the
/// objective is undefined; the line search treats those as rejected steps.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& gradient)>;

struct Bounds {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

struct Settings {
    int max_iterations = 200;
    double value_tolerance = 1e-8;
    double gradient_tolerance = 1e-5;
};

struct Result {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd gradient;  // projected onto the feasible box
    int iterations = 0;
    bool converged = false;
};

/// Box-constrained BFGS ascent with a projected backtracking line search.
/// Stops when |delta f| < value_tolerance or the projected gradient's inf-norm is below
/// gradient_tolerance.
Result maximize(const Objective& objective, Eigen::VectorXd start, const Bounds& bounds, const Settings& settings);

}  // namespace thermal::opt
