#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

namespace aeromap {

struct NelderMeadResult {
    Eigen::VectorXd x;
    double fval = 0.0;
    bool converged = false;
    int evals = 0;
};

/// Plain Nelder-Mead simplex minimization. Callers work in a transformed
/// (typically log) space, so no box constraints here.
inline NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                    const Eigen::VectorXd& x0,
                                    double initial_step = 0.5,
                                    int max_evals = 400, double ftol = 1e-9) {
    const int n = static_cast<int>(x0.size());
    struct Vertex {
        Eigen::VectorXd x;
        double fval;
    };
    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    int evals = 0;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++evals;
        double v = f(x);
        return std::isfinite(v) ? v : 1e300;
    };
    simplex.push_back({x0, eval(x0)});
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x = x0;
        x[i] += initial_step;
        simplex.push_back({x, eval(x)});
    }
    auto order = [&] {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.fval < b.fval; });
    };
    order();
    bool converged = false;
    while (evals < max_evals) {
        if (std::abs(simplex.back().fval - simplex.front().fval) <
            ftol * (1.0 + std::abs(simplex.front().fval))) {
            converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += simplex[i].x;
        centroid /= n;
        const Vertex& worst = simplex.back();
        Eigen::VectorXd xr = centroid + (centroid - worst.x);
        double fr = eval(xr);
        if (fr < simplex.front().fval) {
            Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst.x);
            double fe = eval(xe);
            simplex.back() = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
        } else if (fr < simplex[n - 1].fval) {
            simplex.back() = {xr, fr};
        } else {
            Eigen::VectorXd xc = centroid + 0.5 * (worst.x - centroid);
            double fc = eval(xc);
            if (fc < worst.fval) {
                simplex.back() = {xc, fc};
            } else {
                for (int i = 1; i <= n; ++i) {
                    simplex[i].x = simplex[0].x + 0.5 * (simplex[i].x - simplex[0].x);
                    simplex[i].fval = eval(simplex[i].x);
                }
            }
        }
        order();
    }
    return {simplex.front().x, simplex.front().fval, converged, evals};
}

/// Runs Nelder-Mead from several starts, keeps the best minimum.
inline NelderMeadResult nelder_mead_multistart(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::vector<Eigen::VectorXd>& starts, double initial_step = 0.5,
    int max_evals_per_start = 400, double ftol = 1e-9) {
    NelderMeadResult best;
    best.fval = std::numeric_limits<double>::infinity();
    for (const auto& x0 : starts) {
        NelderMeadResult r = nelder_mead(f, x0, initial_step, max_evals_per_start, ftol);
        if (r.fval < best.fval) {
            bool conv = r.converged;
            best = r;
            best.converged = conv;
        }
        best.evals += r.evals;
    }
    return best;
}

} // namespace aeromap
