#pragma once

#include <random>

#include "aeromap/csv.hpp"
#include "aeromap/models/linear.hpp"
#include "aeromap/optim.hpp"

namespace aeromap {

/// Exponential space-time covariance with geometric anisotropy between
/// the spatial and temporal axes, plus a nugget on observations.
struct GpParams {
    TrendCoefficients beta; // may be empty until estimated
    double sigma2 = 1.0;    // partial sill
    double range_s = 1.0;   // meters
    double range_t = 1.0;   // seconds
    double tau2 = 0.0;      // nugget

    void validate() const {
        if (!(sigma2 > 0) || !(range_s > 0) || !(range_t > 0) || !(tau2 >= 0))
            throw ContractViolation("gp params: need sigma2>0, ranges>0, tau2>=0");
    }
};

/// Correlation-scale lag sqrt((ds/range_s)^2 + (dt/range_t)^2).
inline double gp_scaled_lag(double ds, double dt, const GpParams& p) {
    double a = ds / p.range_s;
    double b = dt / p.range_t;
    return std::sqrt(a * a + b * b);
}

/// Covariance of the smooth process between two points. The nugget enters
/// only on the diagonal when forming the noisy-observation covariance.
inline double gp_covariance(const SpatioTemporalPoint& a, const SpatioTemporalPoint& b,
                            const GpParams& p) {
    double ds = spatial_distance(a, b);
    double dt = std::abs(a.t - b.t);
    return p.sigma2 * std::exp(-gp_scaled_lag(ds, dt, p));
}

/// Model semivariogram: tau2 + sigma2 * (1 - exp(-h)) for h > 0.
inline double gp_variogram_model(double hs, double ht, const GpParams& p) {
    return p.tau2 + p.sigma2 * (1.0 - std::exp(-gp_scaled_lag(hs, ht, p)));
}

// ---------------------------------------------------------------------------
// Empirical variogram

struct EmpiricalVariogram {
    std::vector<double> space_edges; // size ns+1
    std::vector<double> time_edges;  // size nt+1
    std::vector<double> gamma;       // ns*nt, NaN where the bin is empty
    std::vector<std::size_t> pair_count;

    std::size_t n_space() const { return space_edges.size() - 1; }
    std::size_t n_time() const { return time_edges.size() - 1; }
    std::size_t cell(std::size_t is, std::size_t it) const { return is * n_time() + it; }

    double space_center(std::size_t is) const {
        return 0.5 * (space_edges[is] + space_edges[is + 1]);
    }
    double time_center(std::size_t it) const {
        return 0.5 * (time_edges[it] + time_edges[it + 1]);
    }

    std::size_t nonempty_bins() const {
        std::size_t n = 0;
        for (auto c : pair_count) n += c > 0 ? 1 : 0;
        return n;
    }

    void write_csv(const std::string& path) const;
};

struct VariogramBins {
    std::vector<double> space_edges;
    std::vector<double> time_edges;

    static VariogramBins regular(double space_max, std::size_t n_space, double time_max,
                                 std::size_t n_time) {
        VariogramBins b;
        for (std::size_t i = 0; i <= n_space; ++i)
            b.space_edges.push_back(space_max * static_cast<double>(i) / n_space);
        for (std::size_t i = 0; i <= n_time; ++i)
            b.time_edges.push_back(time_max * static_cast<double>(i) / n_time);
        return b;
    }

    /// Bins spanning half the data extent, the usual variogram heuristic.
    static VariogramBins from_extent(const std::vector<SpatioTemporalPoint>& pts,
                                     std::size_t n_space = 12, std::size_t n_time = 8) {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        double tmin = 1e300, tmax = -1e300;
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
            tmin = std::min(tmin, p.t);
            tmax = std::max(tmax, p.t);
        }
        double diag = std::hypot(xmax - xmin, ymax - ymin);
        double span = tmax - tmin;
        return regular(std::max(diag, 1.0) * 0.5, n_space, std::max(span, 1.0) * 0.5, n_time);
    }
};

/// Mean of half squared residual differences per space-time lag bin. The
/// pair set is subsampled to `pair_budget` random pairs when the full set
/// is larger.
inline EmpiricalVariogram empirical_variogram(const std::vector<SpatioTemporalPoint>& pts,
                                              const std::vector<double>& residuals,
                                              const VariogramBins& bins,
                                              std::size_t pair_budget = 1000000,
                                              std::uint64_t seed = 0) {
    if (pts.size() != residuals.size() || pts.size() < 2)
        throw ContractViolation("empirical_variogram: need matched points/residuals");
    EmpiricalVariogram emp;
    emp.space_edges = bins.space_edges;
    emp.time_edges = bins.time_edges;
    std::size_t cells = emp.n_space() * emp.n_time();
    std::vector<double> sum(cells, 0.0);
    emp.pair_count.assign(cells, 0);

    auto locate = [](const std::vector<double>& edges, double v) -> std::ptrdiff_t {
        if (v < edges.front() || v >= edges.back()) return -1;
        auto it = std::upper_bound(edges.begin(), edges.end(), v);
        return static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    };
    auto accumulate_pair = [&](std::size_t i, std::size_t j) {
        double hs = spatial_distance(pts[i], pts[j]);
        double ht = std::abs(pts[i].t - pts[j].t);
        auto is = locate(emp.space_edges, hs);
        auto it = locate(emp.time_edges, ht);
        if (is < 0 || it < 0) return;
        double d = residuals[i] - residuals[j];
        std::size_t c = emp.cell(static_cast<std::size_t>(is), static_cast<std::size_t>(it));
        sum[c] += 0.5 * d * d;
        ++emp.pair_count[c];
    };

    const std::size_t n = pts.size();
    const std::size_t total_pairs = n * (n - 1) / 2;
    if (total_pairs <= pair_budget) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) accumulate_pair(i, j);
    } else {
        std::mt19937_64 rng(derive_seed(seed, "variogram_pairs"));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t k = 0; k < pair_budget; ++k) {
            std::size_t i = pick(rng), j = pick(rng);
            if (i == j) continue;
            accumulate_pair(std::min(i, j), std::max(i, j));
        }
    }
    emp.gamma.assign(cells, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < cells; ++c)
        if (emp.pair_count[c] > 0) emp.gamma[c] = sum[c] / static_cast<double>(emp.pair_count[c]);
    return emp;
}

inline void EmpiricalVariogram::write_csv(const std::string& path) const {
    CsvTable t;
    t.header = {"space_lag", "time_lag", "gamma", "pairs"};
    for (std::size_t is = 0; is < n_space(); ++is)
        for (std::size_t it = 0; it < n_time(); ++it) {
            std::size_t c = cell(is, it);
            t.rows.push_back({fmt_double(space_center(is)), fmt_double(time_center(it)),
                              pair_count[c] ? fmt_double(gamma[c]) : "NA",
                              std::to_string(pair_count[c])});
        }
    aeromap::write_csv(path, t);
}

struct VariogramFit {
    GpParams params;
    bool converged = false;
    double objective = 0.0;
};

/// Weighted least squares on the experimental variogram with Cressie
/// weights N_b / gamma_model^2, which emphasize short lags.
inline VariogramFit fit_variogram_wls(const EmpiricalVariogram& emp) {
    struct Bin {
        double hs, ht, gamma;
        double count;
    };
    std::vector<Bin> data;
    for (std::size_t is = 0; is < emp.n_space(); ++is)
        for (std::size_t it = 0; it < emp.n_time(); ++it) {
            std::size_t c = emp.cell(is, it);
            if (emp.pair_count[c] == 0) continue;
            data.push_back({emp.space_center(is), emp.time_center(it), emp.gamma[c],
                            static_cast<double>(emp.pair_count[c])});
        }
    if (data.size() < 4)
        throw ContractViolation("fit_variogram_wls: need at least 4 nonempty bins");

    double sill0 = 0.0;
    double gmax = 0.0;
    for (const auto& b : data) {
        sill0 += b.gamma;
        gmax = std::max(gmax, b.gamma);
    }
    sill0 /= static_cast<double>(data.size());
    sill0 = std::max(sill0, 1e-12);
    double hs_max = emp.space_edges.back();
    double ht_max = emp.time_edges.back();

    auto objective = [&](const Eigen::VectorXd& x) {
        GpParams p;
        p.sigma2 = std::exp(x[0]);
        p.range_s = std::exp(x[1]);
        p.range_t = std::exp(x[2]);
        p.tau2 = std::exp(x[3]);
        if (p.sigma2 > 1e4 * gmax || p.tau2 > 1e2 * gmax) return 1e300;
        if (p.range_s > 1e3 * hs_max || p.range_t > 1e3 * ht_max) return 1e300;
        double obj = 0.0;
        for (const auto& b : data) {
            double gm = gp_variogram_model(b.hs, b.ht, p);
            double w = b.count / std::max(gm * gm, 1e-300);
            double d = b.gamma - gm;
            obj += w * d * d;
        }
        return obj;
    };

    std::vector<Eigen::VectorXd> starts;
    for (double rs_fac : {0.2, 0.6}) {
        for (double nug_frac : {0.05, 0.5}) {
            Eigen::VectorXd x(4);
            x[0] = std::log(std::max(sill0 * (1.0 - nug_frac), 1e-10));
            x[1] = std::log(std::max(hs_max * rs_fac, 1e-6));
            x[2] = std::log(std::max(ht_max * rs_fac, 1e-6));
            x[3] = std::log(std::max(sill0 * nug_frac, 1e-10));
            starts.push_back(x);
        }
    }
    NelderMeadResult r = nelder_mead_multistart(objective, starts, 0.7, 400, 1e-10);
    VariogramFit fit;
    fit.params.sigma2 = std::exp(r.x[0]);
    fit.params.range_s = std::exp(r.x[1]);
    fit.params.range_t = std::exp(r.x[2]);
    fit.params.tau2 = std::exp(r.x[3]);
    fit.converged = r.converged && std::isfinite(r.fval);
    fit.objective = r.fval;
    return fit;
}

// ---------------------------------------------------------------------------
// Vecchia approximation

struct VecchiaConfig {
    enum class Ordering { MaxMin, Random, TimeSorted };
    int m = 30;
    Ordering ordering = Ordering::MaxMin;
    std::uint64_t seed = 0;

    void validate(std::size_t n) const {
        if (m < 1 || static_cast<std::size_t>(m) >= std::max<std::size_t>(n, 2))
            throw ContractViolation("vecchia: need 1 <= m < n");
    }
};

/// Ordering plus per-point conditioning sets (indices into the original
/// data). Depends only on the point geometry, so one plan serves every
/// likelihood evaluation of an optimization.
struct VecchiaPlan {
    std::vector<std::size_t> order;
    std::vector<std::vector<std::size_t>> neighbors; // parallel to order

    /// Count of conditioning solves that needed diagonal jitter.
    mutable std::size_t jitter_events = 0;
};

namespace detail {

/// Geometry-only metric for ordering and neighbor search: space and time
/// scaled by the data extents.
struct ScaledMetric {
    double inv_l = 1.0;
    double inv_t = 1.0;

    static ScaledMetric from(const std::vector<SpatioTemporalPoint>& pts) {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        double tmin = 1e300, tmax = -1e300;
        for (const auto& p : pts) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
            tmin = std::min(tmin, p.t);
            tmax = std::max(tmax, p.t);
        }
        ScaledMetric m;
        double diag = std::hypot(xmax - xmin, ymax - ymin);
        double span = tmax - tmin;
        m.inv_l = diag > 0 ? 1.0 / diag : 1.0;
        m.inv_t = span > 0 ? 1.0 / span : 1.0;
        return m;
    }

    double d2(const SpatioTemporalPoint& a, const SpatioTemporalPoint& b) const {
        double ds = spatial_distance(a, b) * inv_l;
        double dt = (a.t - b.t) * inv_t;
        return ds * ds + dt * dt;
    }
};

} // namespace detail

inline VecchiaPlan build_vecchia_plan(const std::vector<SpatioTemporalPoint>& pts,
                                      const VecchiaConfig& cfg) {
    const std::size_t n = pts.size();
    cfg.validate(n);
    auto metric = detail::ScaledMetric::from(pts);

    VecchiaPlan plan;
    plan.order.resize(n);
    switch (cfg.ordering) {
        case VecchiaConfig::Ordering::MaxMin: {
            // Start nearest the centroid, then grow by maximizing the
            // minimum distance to the points already ordered.
            SpatioTemporalPoint centroid{0, 0, 0};
            for (const auto& p : pts) {
                centroid.x += p.x;
                centroid.y += p.y;
                centroid.t += p.t;
            }
            centroid.x /= static_cast<double>(n);
            centroid.y /= static_cast<double>(n);
            centroid.t /= static_cast<double>(n);
            std::size_t first = 0;
            double best = 1e300;
            for (std::size_t i = 0; i < n; ++i) {
                double d = metric.d2(pts[i], centroid);
                if (d < best) {
                    best = d;
                    first = i;
                }
            }
            std::vector<double> min_d2(n, 1e300);
            std::vector<bool> taken(n, false);
            plan.order[0] = first;
            taken[first] = true;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) min_d2[i] = metric.d2(pts[i], pts[first]);
            for (std::size_t k = 1; k < n; ++k) {
                std::size_t pick = 0;
                double best_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (taken[i]) continue;
                    if (min_d2[i] > best_d) {
                        best_d = min_d2[i];
                        pick = i;
                    }
                }
                plan.order[k] = pick;
                taken[pick] = true;
                for (std::size_t i = 0; i < n; ++i)
                    if (!taken[i]) min_d2[i] = std::min(min_d2[i], metric.d2(pts[i], pts[pick]));
            }
            break;
        }
        case VecchiaConfig::Ordering::Random: {
            std::iota(plan.order.begin(), plan.order.end(), 0);
            std::mt19937_64 rng(derive_seed(cfg.seed, "vecchia_order"));
            std::shuffle(plan.order.begin(), plan.order.end(), rng);
            break;
        }
        case VecchiaConfig::Ordering::TimeSorted: {
            std::iota(plan.order.begin(), plan.order.end(), 0);
            std::sort(plan.order.begin(), plan.order.end(), [&](std::size_t a, std::size_t b) {
                if (pts[a].t != pts[b].t) return pts[a].t < pts[b].t;
                if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
                return pts[a].y < pts[b].y;
            });
            break;
        }
    }

    plan.neighbors.resize(n);
    std::vector<std::pair<double, std::size_t>> scratch;
    for (std::size_t k = 1; k < n; ++k) {
        std::size_t i = plan.order[k];
        scratch.clear();
        for (std::size_t prev = 0; prev < k; ++prev) {
            std::size_t j = plan.order[prev];
            scratch.emplace_back(metric.d2(pts[i], pts[j]), j);
        }
        std::size_t take = std::min<std::size_t>(cfg.m, scratch.size());
        std::partial_sort(scratch.begin(), scratch.begin() + take, scratch.end());
        plan.neighbors[k].reserve(take);
        for (std::size_t q = 0; q < take; ++q) plan.neighbors[k].push_back(scratch[q].second);
    }
    return plan;
}

namespace detail {

/// Whitened representation of one conditioning step: prediction weights
/// and conditional standard deviation for point `order[k]`.
struct VecchiaStep {
    Eigen::VectorXd weights;
    double cond_var = 0.0;
};

inline VecchiaStep vecchia_step(const std::vector<SpatioTemporalPoint>& pts,
                                const std::vector<std::size_t>& nbrs, std::size_t i,
                                const GpParams& p, std::size_t* jitter_events) {
    VecchiaStep step;
    const double marginal = p.sigma2 + p.tau2;
    if (nbrs.empty()) {
        step.cond_var = marginal;
        return step;
    }
    const std::size_t m = nbrs.size();
    Eigen::MatrixXd c_nn(m, m);
    Eigen::VectorXd c_in(m);
    for (std::size_t a = 0; a < m; ++a) {
        c_in[a] = gp_covariance(pts[i], pts[nbrs[a]], p);
        c_nn(a, a) = marginal;
        for (std::size_t b = a + 1; b < m; ++b) {
            double c = gp_covariance(pts[nbrs[a]], pts[nbrs[b]], p);
            c_nn(a, b) = c;
            c_nn(b, a) = c;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c_nn);
    if (llt.info() != Eigen::Success) {
        double jitter = 1e-8 * p.sigma2;
        for (std::size_t a = 0; a < m; ++a) c_nn(a, a) += jitter;
        llt.compute(c_nn);
        if (jitter_events) ++*jitter_events;
        if (llt.info() != Eigen::Success)
            throw ModelError("vecchia: conditioning matrix not positive definite");
    }
    step.weights = llt.solve(c_in);
    step.cond_var = std::max(marginal - c_in.dot(step.weights), 1e-12 * marginal);
    return step;
}

} // namespace detail

/// Vecchia-factorized Gaussian log-likelihood of the data under `params`
/// (including the trend). With m >= n-1 this is the exact dense value.
inline double vecchia_loglik(const GpParams& params,
                             const std::vector<SpatioTemporalPoint>& pts,
                             const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                             const VecchiaConfig& cfg, const VecchiaPlan* plan = nullptr) {
    params.validate();
    const std::size_t n = pts.size();
    VecchiaPlan local;
    if (!plan) {
        local = build_vecchia_plan(pts, cfg);
        plan = &local;
    }
    Eigen::VectorXd resid = z;
    if (params.beta.beta.size() > 0) {
        if (params.beta.beta.size() != x.cols() + 1)
            throw ContractViolation("vecchia_loglik: trend width mismatch");
        resid -= Eigen::VectorXd::Constant(z.size(), params.beta.beta[0]);
        resid -= x * params.beta.beta.tail(x.cols());
    }
    constexpr double kLog2Pi = 1.8378770664093454836;
    double ll = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t i = plan->order[k];
        auto step = detail::vecchia_step(pts, plan->neighbors[k], i, params,
                                         &plan->jitter_events);
        double mean = 0.0;
        for (std::size_t a = 0; a < plan->neighbors[k].size(); ++a)
            mean += step.weights[a] * resid[plan->neighbors[k][a]];
        double d = resid[i] - mean;
        ll += -0.5 * (kLog2Pi + std::log(step.cond_var) + d * d / step.cond_var);
    }
    return ll;
}

inline double vecchia_loglik(const GpParams& params, const Dataset& data,
                             const VecchiaConfig& cfg, const VecchiaPlan* plan = nullptr) {
    std::vector<SpatioTemporalPoint> pts;
    pts.reserve(data.size());
    for (const auto& o : data.observations) pts.push_back(o.point);
    return vecchia_loglik(params, pts, covariate_matrix(data.covariates, data.schema.size()),
                          target_vector(data), cfg, plan);
}

/// Maximizes the Vecchia likelihood over the covariance parameters with
/// the trend profiled out by whitened least squares at each evaluation.
inline GpParams gp_ml_fit(const std::vector<SpatioTemporalPoint>& pts,
                          const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                          const VecchiaConfig& cfg, int max_evals_per_start = 160) {
    const std::size_t n = pts.size();
    if (n < 50) throw ContractViolation("gp_ml_fit: need at least 50 observations");
    VecchiaConfig used = cfg;
    used.m = static_cast<int>(std::min<std::size_t>(cfg.m, n - 1));
    VecchiaPlan plan = build_vecchia_plan(pts, used);

    // Scale heuristics from OLS residuals and the data extents.
    std::vector<std::string> names(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) names[j] = "x" + std::to_string(j);
    TrendCoefficients ols = lr_fit(x, z, names);
    Eigen::VectorXd resid0 =
        z - Eigen::VectorXd::Constant(z.size(), ols.beta[0]) - x * ols.beta.tail(x.cols());
    double var0 = std::max(resid0.squaredNorm() / static_cast<double>(n), 1e-10);
    auto metric_box = detail::ScaledMetric::from(pts);
    double diag = 1.0 / metric_box.inv_l;
    double span = 1.0 / metric_box.inv_t;
    const double var_floor = 1e-8 * var0;

    Eigen::MatrixXd design(n, x.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(x.cols()) = x;
    constexpr double kLog2Pi = 1.8378770664093454836;

    Eigen::MatrixXd xt(n, design.cols());
    Eigen::VectorXd zt(n);
    auto profiled_negloglik = [&](const Eigen::VectorXd& par,
                                  TrendCoefficients* beta_out) -> double {
        GpParams p;
        p.sigma2 = std::exp(par[0]);
        p.range_s = std::exp(par[1]);
        p.range_t = std::exp(par[2]);
        p.tau2 = std::exp(par[3]);
        if (p.sigma2 < var_floor || p.sigma2 > 1e4 * var0) return 1e300;
        if (p.tau2 > 1e4 * var0) return 1e300;
        if (p.range_s < 1e-6 * diag || p.range_s > 1e4 * diag) return 1e300;
        if (p.range_t < 1e-6 * span || p.range_t > 1e4 * span) return 1e300;

        double logdet = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t i = plan.order[k];
            auto step = detail::vecchia_step(pts, plan.neighbors[k], i, p,
                                             &plan.jitter_events);
            double sd = std::sqrt(step.cond_var);
            logdet += std::log(step.cond_var);
            Eigen::RowVectorXd dr = design.row(i);
            double zr = z[i];
            for (std::size_t a = 0; a < plan.neighbors[k].size(); ++a) {
                dr -= step.weights[a] * design.row(plan.neighbors[k][a]);
                zr -= step.weights[a] * z[plan.neighbors[k][a]];
            }
            xt.row(k) = dr / sd;
            zt[k] = zr / sd;
        }
        Eigen::VectorXd beta =
            (xt.transpose() * xt).ldlt().solve(xt.transpose() * zt);
        double rss = (zt - xt * beta).squaredNorm();
        if (beta_out) {
            beta_out->beta = beta;
        }
        return 0.5 * (static_cast<double>(n) * kLog2Pi + logdet + rss);
    };

    std::vector<Eigen::VectorXd> starts;
    for (double range_fac : {0.25, 0.08}) {
        Eigen::VectorXd s(4);
        s[0] = std::log(0.7 * var0);
        s[1] = std::log(diag * range_fac);
        s[2] = std::log(span * range_fac);
        s[3] = std::log(0.3 * var0);
        starts.push_back(s);
    }
    NelderMeadResult best = nelder_mead_multistart(
        [&](const Eigen::VectorXd& par) { return profiled_negloglik(par, nullptr); },
        starts, 0.8, max_evals_per_start, 1e-8);
    if (!std::isfinite(best.fval))
        throw ModelError("gp_ml_fit: optimizer failed to find a finite likelihood (evals=" +
                         std::to_string(best.evals) + ")");

    GpParams out;
    out.sigma2 = std::exp(best.x[0]);
    out.range_s = std::exp(best.x[1]);
    out.range_t = std::exp(best.x[2]);
    out.tau2 = std::exp(best.x[3]);
    profiled_negloglik(best.x, &out.beta);
    return out;
}

inline GpParams gp_ml_fit(const Dataset& data, const VecchiaConfig& cfg,
                          int max_evals_per_start = 160) {
    std::vector<SpatioTemporalPoint> pts;
    pts.reserve(data.size());
    for (const auto& o : data.observations) pts.push_back(o.point);
    return gp_ml_fit(pts, covariate_matrix(data.covariates, data.schema.size()),
                     target_vector(data), cfg, max_evals_per_start);
}

// ---------------------------------------------------------------------------
// Universal kriging prediction

struct KrigePrediction {
    std::vector<double> mean;
    std::vector<double> variance;
    std::size_t jitter_events = 0;
};

struct KrigeConfig {
    std::size_t dense_cap = 1500; // above this, condition on local neighborhoods
    std::size_t local_m = 60;
    unsigned jobs = 1;
};

/// Universal-kriging conditional mean and variance of the smooth process.
/// Small systems solve densely; large ones condition each query on its
/// nearest training points under the parameter-scaled metric.
inline KrigePrediction krige_predict(const GpParams& params,
                                     const std::vector<SpatioTemporalPoint>& train_pts,
                                     const Eigen::MatrixXd& train_x,
                                     const Eigen::VectorXd& train_z,
                                     const std::vector<SpatioTemporalPoint>& query_pts,
                                     const Eigen::MatrixXd& query_x,
                                     const KrigeConfig& cfg = {}) {
    params.validate();
    const std::size_t n = train_pts.size();
    if (n == 0) throw ModelError("krige_predict: empty training set");
    if (params.beta.beta.size() != train_x.cols() + 1)
        throw ContractViolation("krige_predict: trend width mismatch");

    Eigen::VectorXd resid = train_z -
                            Eigen::VectorXd::Constant(train_z.size(), params.beta.beta[0]) -
                            train_x * params.beta.beta.tail(train_x.cols());
    Eigen::VectorXd trend_q = Eigen::VectorXd::Constant(query_pts.size(), params.beta.beta[0]) +
                              query_x * params.beta.beta.tail(query_x.cols());

    KrigePrediction out;
    out.mean.resize(query_pts.size());
    out.variance.resize(query_pts.size());
    const double marginal = params.sigma2 + params.tau2;

    if (n <= cfg.dense_cap) {
        Eigen::MatrixXd c(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            c(i, i) = marginal;
            for (std::size_t j = i + 1; j < n; ++j) {
                double v = gp_covariance(train_pts[i], train_pts[j], params);
                c(i, j) = v;
                c(j, i) = v;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() != Eigen::Success) {
            for (std::size_t i = 0; i < n; ++i) c(i, i) += 1e-8 * params.sigma2;
            llt.compute(c);
            ++out.jitter_events;
            if (llt.info() != Eigen::Success)
                throw ModelError("krige_predict: covariance matrix not positive definite");
        }
        Eigen::VectorXd alpha = llt.solve(resid);
        parallel_for(query_pts.size(), cfg.jobs, [&](std::size_t q) {
            Eigen::VectorXd k(n);
            for (std::size_t i = 0; i < n; ++i)
                k[i] = gp_covariance(query_pts[q], train_pts[i], params);
            out.mean[q] = trend_q[q] + k.dot(alpha);
            double var = params.sigma2 - k.dot(llt.solve(k));
            out.variance[q] = std::clamp(var, 0.0, marginal);
        });
        return out;
    }

    auto metric = detail::ScaledMetric{1.0 / params.range_s, 1.0 / params.range_t};
    std::size_t m = std::min<std::size_t>(cfg.local_m, n);
    std::mutex jitter_mu;
    parallel_for(query_pts.size(), cfg.jobs, [&](std::size_t q) {
        std::vector<std::pair<double, std::size_t>> nearest;
        nearest.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            nearest.emplace_back(metric.d2(query_pts[q], train_pts[i]), i);
        std::partial_sort(nearest.begin(), nearest.begin() + m, nearest.end());
        Eigen::MatrixXd c(m, m);
        Eigen::VectorXd k(m), r(m);
        for (std::size_t a = 0; a < m; ++a) {
            std::size_t ia = nearest[a].second;
            k[a] = gp_covariance(query_pts[q], train_pts[ia], params);
            r[a] = resid[ia];
            c(a, a) = marginal;
            for (std::size_t b = a + 1; b < m; ++b) {
                double v = gp_covariance(train_pts[ia], train_pts[nearest[b].second], params);
                c(a, b) = v;
                c(b, a) = v;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() != Eigen::Success) {
            for (std::size_t a = 0; a < m; ++a) c(a, a) += 1e-8 * params.sigma2;
            llt.compute(c);
            std::lock_guard<std::mutex> lock(jitter_mu);
            ++out.jitter_events;
        }
        Eigen::VectorXd w = llt.solve(k);
        out.mean[q] = trend_q[q] + w.dot(r);
        out.variance[q] = std::clamp(params.sigma2 - w.dot(k), 0.0, marginal);
    });
    return out;
}

// ---------------------------------------------------------------------------
// The two Gaussian-process predictors

/// Shared kriging-backed predictor; estimation strategy supplied by the
/// subclasses.
class GpModelBase : public Model {
public:
    std::vector<double> predict(const QuerySet& query) const override {
        Eigen::MatrixXd qx = covariate_matrix(query.covariates, width_);
        auto pred = krige_predict(params_, points_, x_, z_, query.points, qx, krige_cfg_);
        last_variance_ = std::move(pred.variance);
        return pred.mean;
    }

    /// Per-cell predictive variance from the most recent predict call.
    const std::vector<double>& last_variance() const { return last_variance_; }
    const GpParams& params() const { return params_; }

    nlohmann::json to_json() const override {
        std::vector<double> xflat(x_.data(), x_.data() + x_.size());
        return {{"sigma2", params_.sigma2},
                {"range_s", params_.range_s},
                {"range_t", params_.range_t},
                {"tau2", params_.tau2},
                {"beta", detail::vec_to_json(params_.beta.beta)},
                {"covariance_family", "exponential space-time, geometric anisotropy"},
                {"width", width_},
                {"points", detail::points_to_json(points_)},
                {"z", std::vector<double>(z_.data(), z_.data() + z_.size())},
                {"x", xflat}};
    }

    void from_json(const nlohmann::json& j) override {
        params_.sigma2 = j.at("sigma2").get<double>();
        params_.range_s = j.at("range_s").get<double>();
        params_.range_t = j.at("range_t").get<double>();
        params_.tau2 = j.at("tau2").get<double>();
        params_.beta.beta = detail::vec_from_json(j.at("beta"));
        width_ = j.at("width").get<std::size_t>();
        points_ = detail::points_from_json(j.at("points"));
        auto zv = j.at("z").get<std::vector<double>>();
        z_ = Eigen::Map<Eigen::VectorXd>(zv.data(), static_cast<Eigen::Index>(zv.size()));
        auto xv = j.at("x").get<std::vector<double>>();
        x_ = Eigen::Map<Eigen::MatrixXd>(xv.data(), static_cast<Eigen::Index>(points_.size()),
                                         static_cast<Eigen::Index>(width_));
    }

protected:
    void store_training(const Dataset& train) {
        train.validate();
        if (train.empty()) throw ModelError("gp: empty training set");
        width_ = train.schema.size();
        points_.clear();
        points_.reserve(train.size());
        for (const auto& o : train.observations) points_.push_back(o.point);
        x_ = covariate_matrix(train.covariates, width_);
        z_ = target_vector(train);
    }

    std::size_t width_ = 0;
    std::vector<SpatioTemporalPoint> points_;
    Eigen::MatrixXd x_;
    Eigen::VectorXd z_;
    GpParams params_;
    KrigeConfig krige_cfg_;
    mutable std::vector<double> last_variance_;
};

/// Trend by OLS, covariance parameters by weighted least squares on the
/// experimental variogram.
class GpVariogramModel : public GpModelBase {
public:
    GpVariogramModel() = default;
    explicit GpVariogramModel(const nlohmann::json& config) {
        if (config.contains("pair_budget"))
            pair_budget_ = config["pair_budget"].get<std::size_t>();
        if (config.contains("n_space_bins"))
            n_space_bins_ = config["n_space_bins"].get<std::size_t>();
        if (config.contains("n_time_bins"))
            n_time_bins_ = config["n_time_bins"].get<std::size_t>();
        if (config.contains("seed")) seed_ = config["seed"].get<std::uint64_t>();
        if (config.contains("dense_cap"))
            krige_cfg_.dense_cap = config["dense_cap"].get<std::size_t>();
    }

    std::string type() const override { return "gp_vg"; }

    void fit(const Dataset& train) override {
        store_training(train);
        params_.beta = lr_fit(x_, z_, train.schema.names);
        Eigen::VectorXd resid =
            z_ - Eigen::VectorXd::Constant(z_.size(), params_.beta.beta[0]) -
            x_ * params_.beta.beta.tail(x_.cols());
        VariogramBins bins = VariogramBins::from_extent(points_, n_space_bins_, n_time_bins_);
        last_variogram_ = empirical_variogram(
            points_, std::vector<double>(resid.data(), resid.data() + resid.size()), bins,
            pair_budget_, seed_);
        VariogramFit fit = fit_variogram_wls(last_variogram_);
        converged_ = fit.converged;
        params_.sigma2 = fit.params.sigma2;
        params_.range_s = fit.params.range_s;
        params_.range_t = fit.params.range_t;
        params_.tau2 = fit.params.tau2;
    }

    const EmpiricalVariogram& last_variogram() const { return last_variogram_; }
    bool converged() const { return converged_; }

private:
    std::size_t pair_budget_ = 300000;
    std::size_t n_space_bins_ = 12;
    std::size_t n_time_bins_ = 8;
    std::uint64_t seed_ = 0;
    EmpiricalVariogram last_variogram_;
    bool converged_ = true;
};

/// All parameters by Vecchia-approximated maximum likelihood.
class GpMlModel : public GpModelBase {
public:
    GpMlModel() = default;
    explicit GpMlModel(const nlohmann::json& config) {
        if (config.contains("m")) vecchia_.m = config["m"].get<int>();
        if (config.contains("ordering")) {
            std::string o = config["ordering"].get<std::string>();
            if (o == "maxmin") vecchia_.ordering = VecchiaConfig::Ordering::MaxMin;
            else if (o == "random") vecchia_.ordering = VecchiaConfig::Ordering::Random;
            else if (o == "timesorted") vecchia_.ordering = VecchiaConfig::Ordering::TimeSorted;
            else throw ContractViolation("gp_ml: unknown ordering " + o);
        }
        if (config.contains("seed")) vecchia_.seed = config["seed"].get<std::uint64_t>();
        if (config.contains("max_evals"))
            max_evals_ = config["max_evals"].get<int>();
        if (config.contains("dense_cap"))
            krige_cfg_.dense_cap = config["dense_cap"].get<std::size_t>();
    }

    std::string type() const override { return "gp_ml"; }

    void fit(const Dataset& train) override {
        store_training(train);
        params_ = gp_ml_fit(points_, x_, z_, vecchia_, max_evals_);
    }

private:
    VecchiaConfig vecchia_;
    int max_evals_ = 160;
};

} // namespace aeromap
