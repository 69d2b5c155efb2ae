#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xbody/types.hpp"

namespace xbody {

struct LbfgsSettings {
    int memory = 10;
    int max_iterations = 200;
    double c1 = 1e-4;  // sufficient decrease
    double c2 = 0.9;   // curvature
    double gradient_tolerance = 1e-8;  // on max |g_i|
    double function_tolerance = 0.0;   // relative decrease that counts as stalled; 0 disables
    int max_line_search = 40;

    void validate() const;
};

/// One accepted step along direction d: values of phi(a) = f(x + a d).
struct LineSearchRecord {
    double f0 = 0.0;
    double slope0 = 0.0;
    double step = 0.0;
    double f = 0.0;
    double slope = 0.0;
};

struct LbfgsResult {
    VecX<double> x;
    double f = 0.0;
    VecX<double> gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    bool line_search_failed = false;
    std::string message;
    std::vector<LineSearchRecord> history;
};

/// f(x) returning the value and writing the gradient. An infinite value marks
/// an infeasible trial point and makes the line search back off.
using ObjectiveFn = std::function<double(const VecX<double>& x, VecX<double>& grad)>;

/// Called after every accepted step. Returning true means the objective itself
/// changed at x (for example a refreshed collision set) and must be re-evaluated.
using StepCallback = std::function<bool(const VecX<double>& x, double f)>;

/// Limited-memory BFGS (two-loop recursion) with a strong Wolfe line search.
/// Throws NumericError when f or its gradient turns NaN. A failed line search
/// returns the best point so far with line_search_failed set, after one retry
/// along steepest descent with the history cleared.
LbfgsResult lbfgs_minimize(const ObjectiveFn& f, const VecX<double>& x0, const LbfgsSettings& settings,
                           const StepCallback& on_step = {});

}  // namespace xbody
