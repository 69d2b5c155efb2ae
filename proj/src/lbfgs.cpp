#include "xbody/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "xbody/errors.hpp"

namespace xbody {

void LbfgsSettings::validate() const {
    if (memory < 1) throw ConfigError("lbfgs: memory must be positive");
    if (max_iterations < 0) throw ConfigError("lbfgs: max_iterations must be non-negative");
    if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) throw ConfigError("lbfgs: need 0 < c1 < c2 < 1");
    if (gradient_tolerance < 0.0 || function_tolerance < 0.0) throw ConfigError("lbfgs: negative tolerance");
    if (max_line_search < 1) throw ConfigError("lbfgs: max_line_search must be positive");
}

namespace {

struct Trial {
    double step = 0.0;
    double f = 0.0;
    double slope = 0.0;
    VecX<double> x;
    VecX<double> g;
};

class LineSearch {
public:
    LineSearch(const ObjectiveFn& fn, const LbfgsSettings& s, int& evaluations)
        : fn_(fn), s_(s), evaluations_(evaluations) {}

    // Strong Wolfe search along d from x; returns false on failure.
    bool run(const VecX<double>& x, double f0, double slope0, const VecX<double>& d, double step0, Trial& out) {
        x_ = &x;
        d_ = &d;
        f0_ = f0;
        slope0_ = slope0;
        Trial prev;
        prev.f = f0;
        prev.slope = slope0;
        double step = step0;
        for (int i = 0; i < s_.max_line_search; ++i) {
            Trial t = eval(step);
            if (!std::isfinite(t.f) || t.f > f0 + s_.c1 * step * slope0 || (i > 0 && t.f >= prev.f))
                return zoom(prev, t, s_.max_line_search - i - 1, out);
            if (std::abs(t.slope) <= -s_.c2 * slope0) {
                out = std::move(t);
                return true;
            }
            if (t.slope >= 0.0) return zoom(t, prev, s_.max_line_search - i - 1, out);
            prev = std::move(t);
            step *= 2.0;
        }
        return false;
    }

private:
    Trial eval(double step) {
        Trial t;
        t.step = step;
        t.x = *x_ + step * *d_;
        t.g.resize(t.x.size());
        t.f = fn_(t.x, t.g);
        ++evaluations_;
        if (std::isnan(t.f)) throw NumericError("lbfgs: objective returned NaN during line search");
        if (std::isfinite(t.f)) {
            if (!t.g.allFinite()) throw NumericError("lbfgs: non-finite gradient during line search");
            t.slope = t.g.dot(*d_);
        } else {
            t.slope = std::numeric_limits<double>::quiet_NaN();
        }
        return t;
    }

    static double cubic_min(const Trial& a, const Trial& b) {
        if (!std::isfinite(a.f) || !std::isfinite(b.f) || !std::isfinite(a.slope) || !std::isfinite(b.slope))
            return 0.5 * (a.step + b.step);
        const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.step - b.step);
        const double disc = d1 * d1 - a.slope * b.slope;
        if (disc < 0.0) return 0.5 * (a.step + b.step);
        const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
        const double denom = b.slope - a.slope + 2.0 * d2;
        if (denom == 0.0) return 0.5 * (a.step + b.step);
        return b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
    }

    bool zoom(Trial lo, Trial hi, int budget, Trial& out) {
        for (int j = 0; j < budget; ++j) {
            const double left = std::min(lo.step, hi.step), right = std::max(lo.step, hi.step);
            const double width = right - left;
            if (width <= 1e-16 * std::max(1.0, right)) return false;
            double step = cubic_min(lo, hi);
            if (!std::isfinite(step) || step < left + 0.1 * width || step > right - 0.1 * width)
                step = 0.5 * (left + right);
            Trial t = eval(step);
            if (!std::isfinite(t.f) || t.f > f0_ + s_.c1 * step * slope0_ || t.f >= lo.f) {
                hi = std::move(t);
            } else {
                if (std::abs(t.slope) <= -s_.c2 * slope0_) {
                    out = std::move(t);
                    return true;
                }
                if (t.slope * (hi.step - lo.step) >= 0.0) hi = lo;
                lo = std::move(t);
            }
        }
        return false;
    }

    const ObjectiveFn& fn_;
    const LbfgsSettings& s_;
    int& evaluations_;
    const VecX<double>* x_ = nullptr;
    const VecX<double>* d_ = nullptr;
    double f0_ = 0.0;
    double slope0_ = 0.0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& fn, const VecX<double>& x0, const LbfgsSettings& s,
                           const StepCallback& on_step) {
    s.validate();
    if (!x0.allFinite()) throw NumericError("lbfgs: non-finite starting point");

    LbfgsResult r;
    r.x = x0;
    r.gradient.resize(x0.size());
    r.f = fn(r.x, r.gradient);
    r.evaluations = 1;
    if (!std::isfinite(r.f) || !r.gradient.allFinite()) {
        std::ostringstream os;
        os << "lbfgs: objective is not finite at the starting point (f = " << r.f << ")";
        throw NumericError(os.str());
    }

    std::deque<VecX<double>> s_hist, y_hist;
    std::deque<double> rho_hist;
    LineSearch search(fn, s, r.evaluations);

    while (true) {
        if (r.gradient.size() == 0 || r.gradient.lpNorm<Eigen::Infinity>() < s.gradient_tolerance) {
            r.converged = true;
            r.message = "gradient tolerance reached";
            break;
        }
        if (r.iterations >= s.max_iterations) {
            r.message = "iteration limit reached";
            break;
        }

        // Two-loop recursion.
        VecX<double> q = r.gradient;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        for (size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        VecX<double> d = -q;
        double slope0 = r.gradient.dot(d);
        if (!(slope0 < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -r.gradient;
            slope0 = -r.gradient.squaredNorm();
        }
        const double step0 = s_hist.empty() ? std::min(1.0, 1.0 / d.norm()) : 1.0;

        Trial t;
        bool found = search.run(r.x, r.f, slope0, d, step0, t);
        if (!found && !s_hist.empty()) {
            // Stale curvature pairs can give a poor direction; retry once along
            // steepest descent with an empty history.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -r.gradient;
            slope0 = -r.gradient.squaredNorm();
            found = search.run(r.x, r.f, slope0, d, std::min(1.0, 1.0 / d.norm()), t);
        }
        if (!found) {
            r.line_search_failed = true;
            r.message = "line search failed to satisfy the strong Wolfe conditions";
            break;
        }

        r.history.push_back({r.f, slope0, t.step, t.f, t.slope});
        VecX<double> sk = t.x - r.x;
        VecX<double> yk = t.g - r.gradient;
        const double sy = sk.dot(yk);
        const double f_prev = r.f;
        r.x = std::move(t.x);
        r.f = t.f;
        r.gradient = std::move(t.g);
        ++r.iterations;
        if (sy > 1e-12 * sk.norm() * yk.norm()) {
            s_hist.push_back(std::move(sk));
            y_hist.push_back(std::move(yk));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > s.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        if (on_step && on_step(r.x, r.f)) {
            r.f = fn(r.x, r.gradient);
            ++r.evaluations;
            if (!std::isfinite(r.f) || !r.gradient.allFinite())
                throw NumericError("lbfgs: objective not finite after the step callback");
            continue;
        }
        if (s.function_tolerance > 0.0 &&
            f_prev - r.f <= s.function_tolerance * std::max({1.0, std::abs(f_prev), std::abs(r.f)})) {
            r.converged = true;
            r.message = "function tolerance reached";
            break;
        }
    }
    return r;
}

}  // namespace xbody
