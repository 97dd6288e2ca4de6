#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "aeromap/models/gp.hpp"

using namespace aeromap;

namespace {

// Exact multivariate-normal sampler at arbitrary points; test-side tool
// for building Gaussian-field fixtures.
std::vector<double> sample_gp(const std::vector<SpatioTemporalPoint>& pts,
                              const GpParams& p, std::uint64_t seed,
                              bool with_nugget_noise = true) {
    const std::size_t n = pts.size();
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        c(i, i) = p.sigma2 + 1e-10 * p.sigma2;
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = gp_covariance(pts[i], pts[j], p);
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    REQUIRE(llt.info() == Eigen::Success);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, 1);
    Eigen::VectorXd eps(n);
    for (std::size_t i = 0; i < n; ++i) eps[i] = g(rng);
    Eigen::VectorXd field = llt.matrixL() * eps;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = field[i];
        if (with_nugget_noise && p.tau2 > 0) out[i] += std::sqrt(p.tau2) * g(rng);
    }
    return out;
}

std::vector<SpatioTemporalPoint> random_points(std::size_t n, double extent_m,
                                               double span_s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(0, extent_m), ut(0, span_s);
    std::vector<SpatioTemporalPoint> pts(n);
    for (auto& p : pts) p = {ux(rng), ux(rng), ut(rng)};
    return pts;
}

// Dense Gaussian log-density, independent of the Vecchia code path.
double dense_loglik(const GpParams& p, const std::vector<SpatioTemporalPoint>& pts,
                    const Eigen::VectorXd& resid) {
    const std::size_t n = pts.size();
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        c(i, i) = p.sigma2 + p.tau2;
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = gp_covariance(pts[i], pts[j], p);
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    REQUIRE(llt.info() == Eigen::Success);
    double logdet = 0;
    for (std::size_t i = 0; i < n; ++i)
        logdet += 2.0 * std::log(llt.matrixL()(i, i));
    double quad = resid.dot(llt.solve(resid));
    return -0.5 * (n * std::log(2.0 * 3.14159265358979323846) + logdet + quad);
}

Dataset gp_dataset(const std::vector<SpatioTemporalPoint>& pts,
                   const std::vector<double>& vals,
                   const Eigen::MatrixXd& x) {
    Dataset ds;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        ds.schema.names.push_back("c" + std::to_string(j));
        ds.schema.kinds.push_back(CovariateKind::Spatial);
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Observation o;
        o.point = pts[i];
        o.value = vals[i];
        o.sensor_id = "s" + std::to_string(i % 7);
        ds.observations.push_back(o);
        CovariateVector cv;
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            cv.values.push_back(x(static_cast<Eigen::Index>(i), j));
        ds.covariates.push_back(cv);
    }
    return ds;
}

} // namespace

TEST_CASE("gp covariance closed form", "[gp]") {
    GpParams p;
    p.sigma2 = 2.5;
    p.range_s = 400;
    p.range_t = 1800;
    p.tau2 = 0.3;

    SpatioTemporalPoint a{100, 200, 5000};
    CHECK(gp_covariance(a, a, p) == Catch::Approx(2.5));
    SpatioTemporalPoint b{100 + 400, 200, 5000};
    CHECK(gp_covariance(a, b, p) == Catch::Approx(2.5 * std::exp(-1.0)));

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1000, 1000);
    for (int rep = 0; rep < 60; ++rep) {
        SpatioTemporalPoint q{u(rng), u(rng), u(rng) * 10};
        double ds = std::hypot(a.x - q.x, a.y - q.y);
        double dt = std::abs(a.t - q.t);
        double h = std::sqrt(std::pow(ds / p.range_s, 2) + std::pow(dt / p.range_t, 2));
        CHECK(gp_covariance(a, q, p) ==
              Catch::Approx(p.sigma2 * std::exp(-h)).margin(1e-12));
    }
    CHECK_THROWS_AS([&] { GpParams bad; bad.sigma2 = -1; bad.validate(); }(),
                    ContractViolation);
}

TEST_CASE("empirical variogram of simple fields", "[gp]") {
    auto pts = random_points(300, 2000, 7200, 11);

    // Constant residuals: gamma is zero wherever pairs exist.
    std::vector<double> flat(pts.size(), 1.25);
    auto bins = VariogramBins::from_extent(pts, 6, 4);
    auto emp = empirical_variogram(pts, flat, bins);
    for (std::size_t c = 0; c < emp.gamma.size(); ++c)
        if (emp.pair_count[c] > 0) CHECK(emp.gamma[c] == 0.0);

    // Pure iid noise with variance v: gamma is about v in every bin.
    double v = 0.49;
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g(0, std::sqrt(v));
    std::vector<double> noise(pts.size());
    for (auto& r : noise) r = g(rng);
    emp = empirical_variogram(pts, noise, bins);
    for (std::size_t c = 0; c < emp.gamma.size(); ++c)
        if (emp.pair_count[c] >= 500)
            CHECK(emp.gamma[c] == Catch::Approx(v).epsilon(0.15));

    // Correlated field: gamma rises with spatial lag toward the sill.
    GpParams p;
    p.sigma2 = 1.0;
    p.range_s = 300;
    p.range_t = 3600;
    p.tau2 = 0.0;
    auto field = sample_gp(pts, p, 17);
    emp = empirical_variogram(pts, field, bins);
    double first = emp.gamma[emp.cell(0, 0)];
    double last = emp.gamma[emp.cell(emp.n_space() - 1, 0)];
    CHECK(first < last);
}

TEST_CASE("variogram wls recovers parameters", "[gp]") {
    // Self-consistency: bins generated exactly from a model variogram.
    GpParams truth;
    truth.sigma2 = 1.4;
    truth.range_s = 500;
    truth.range_t = 3000;
    truth.tau2 = 0.2;
    EmpiricalVariogram emp;
    emp.space_edges = {0, 200, 400, 600, 800, 1200, 1600};
    emp.time_edges = {0, 1500, 3000, 6000};
    std::size_t cells = emp.n_space() * emp.n_time();
    emp.gamma.resize(cells);
    emp.pair_count.assign(cells, 1000);
    for (std::size_t is = 0; is < emp.n_space(); ++is)
        for (std::size_t it = 0; it < emp.n_time(); ++it)
            emp.gamma[emp.cell(is, it)] =
                gp_variogram_model(emp.space_center(is), emp.time_center(it), truth);
    VariogramFit fit = fit_variogram_wls(emp);
    CHECK(fit.params.sigma2 == Catch::Approx(truth.sigma2).epsilon(0.01));
    CHECK(fit.params.range_s == Catch::Approx(truth.range_s).epsilon(0.01));
    CHECK(fit.params.range_t == Catch::Approx(truth.range_t).epsilon(0.01));
    CHECK(fit.params.tau2 == Catch::Approx(truth.tau2).epsilon(0.01));

    // Pure nugget: tau2 takes the sill, sigma2 collapses.
    auto pts = random_points(400, 2000, 7200, 29);
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0, 1);
    std::vector<double> noise(pts.size());
    for (auto& r : noise) r = g(rng);
    auto bins = VariogramBins::from_extent(pts, 8, 4);
    auto emp2 = empirical_variogram(pts, noise, bins);
    VariogramFit nug = fit_variogram_wls(emp2);
    CHECK(nug.params.tau2 + nug.params.sigma2 == Catch::Approx(1.0).epsilon(0.25));
    CHECK(nug.params.tau2 > nug.params.sigma2);

    EmpiricalVariogram tooFew;
    tooFew.space_edges = {0, 1};
    tooFew.time_edges = {0, 1};
    tooFew.gamma = {1.0};
    tooFew.pair_count = {10};
    CHECK_THROWS_AS(fit_variogram_wls(tooFew), ContractViolation);
}

TEST_CASE("variogram wls on a simulated field", "[gp]") {
    GpParams truth;
    truth.sigma2 = 1.0;
    truth.range_s = 500;
    truth.range_t = 3600;
    truth.tau2 = 0.1;
    auto pts = random_points(2000, 3000, 43200, 37);
    auto field = sample_gp(pts, truth, 41);
    auto bins = VariogramBins::from_extent(pts, 10, 6);
    auto emp = empirical_variogram(pts, field, bins, 400000, 43);
    VariogramFit fit = fit_variogram_wls(emp);
    CHECK(fit.params.sigma2 == Catch::Approx(truth.sigma2).epsilon(0.30));
    CHECK(fit.params.range_s == Catch::Approx(truth.range_s).epsilon(0.30));
    CHECK(fit.params.range_t == Catch::Approx(truth.range_t).epsilon(0.30));
    CHECK(fit.params.tau2 == Catch::Approx(truth.tau2).margin(0.30 * truth.tau2));
}

TEST_CASE("vecchia log-likelihood equals the dense value with full conditioning",
          "[gp]") {
    GpParams p;
    p.sigma2 = 1.2;
    p.range_s = 350;
    p.range_t = 2400;
    p.tau2 = 0.15;
    auto pts = random_points(5, 800, 3600, 47);
    auto vals = sample_gp(pts, p, 53);
    Eigen::VectorXd z(5);
    for (int i = 0; i < 5; ++i) z[i] = vals[i];

    Eigen::MatrixXd x(5, 0);
    VecchiaConfig cfg;
    cfg.m = 4;
    double got = vecchia_loglik(p, pts, x, z, cfg);
    CHECK(got == Catch::Approx(dense_loglik(p, pts, z)).margin(1e-8));

    // Nearly independent model: sum of univariate normal densities.
    GpParams indep = p;
    indep.range_s = 1e-6;
    indep.range_t = 1e-6;
    double want = 0;
    for (int i = 0; i < 5; ++i) {
        double var = indep.sigma2 + indep.tau2;
        want += -0.5 * (std::log(2 * 3.141592653589793 * var) + z[i] * z[i] / var);
    }
    CHECK(vecchia_loglik(indep, pts, x, z, cfg) == Catch::Approx(want).margin(1e-6));
}

TEST_CASE("vecchia approximation error shrinks with m", "[gp]") {
    GpParams p;
    p.sigma2 = 1.0;
    p.range_s = 600;
    p.range_t = 5400;
    p.tau2 = 0.1;
    const std::size_t n = 40;
    auto pts = random_points(n, 1500, 14400, 59);
    auto vals = sample_gp(pts, p, 61);
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = vals[i];
    Eigen::MatrixXd x(n, 0);

    double exact = dense_loglik(p, pts, z);
    std::vector<int> ms{1, 5, 10, 39};
    std::vector<double> errs;
    for (int m : ms) {
        VecchiaConfig cfg;
        cfg.m = m;
        errs.push_back(std::abs(vecchia_loglik(p, pts, x, z, cfg) - exact));
    }
    for (std::size_t k = 1; k < errs.size(); ++k) CHECK(errs[k] <= errs[k - 1] + 1e-10);
    CHECK(errs.back() < 1e-8);
}

TEST_CASE("gp_ml_fit degenerate and optimality properties", "[gp]") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> u(-2, 2);
    const std::size_t n = 120;
    auto pts = random_points(n, 2500, 36000, 71);
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd z(n);
    // Noise-free linear trend, no field at all.
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = u(rng);
        z[i] = 2.0 + 0.5 * x(i, 0);
    }
    VecchiaConfig cfg;
    cfg.m = 10;
    GpParams fit = gp_ml_fit(pts, x, z, cfg);
    std::vector<std::string> names{"c0"};
    TrendCoefficients ols = lr_fit(x, z, names);
    CHECK(fit.beta.beta[0] == Catch::Approx(ols.beta[0]).margin(1e-4));
    CHECK(fit.beta.beta[1] == Catch::Approx(ols.beta[1]).margin(1e-4));
    double data_var = (z - Eigen::VectorXd::Constant(n, z.mean())).squaredNorm() / n;
    CHECK(fit.sigma2 + fit.tau2 < 1e-4 * data_var);

    // On simulated data, the optimum cannot be worse than the truth.
    GpParams truth;
    truth.sigma2 = 0.8;
    truth.range_s = 700;
    truth.range_t = 7200;
    truth.tau2 = 0.1;
    auto vals = sample_gp(pts, truth, 73);
    Eigen::VectorXd zf(n);
    for (std::size_t i = 0; i < n; ++i) zf[i] = vals[i] + 1.5;
    Eigen::MatrixXd x0(n, 0);
    GpParams fitted = gp_ml_fit(pts, x0, zf, cfg);
    VecchiaConfig full;
    full.m = static_cast<int>(n - 1);
    GpParams truth_with_mean = truth;
    truth_with_mean.beta.beta = Eigen::VectorXd::Constant(1, 1.5);
    double ll_fit = vecchia_loglik(fitted, pts, x0, zf, full);
    double ll_truth = vecchia_loglik(truth_with_mean, pts, x0, zf, full);
    CHECK(ll_fit >= ll_truth - 1e-6);
}

TEST_CASE("kriging exactness, decorrelation limit, and dense oracle", "[gp]") {
    GpParams p;
    p.sigma2 = 1.1;
    p.range_s = 500;
    p.range_t = 3600;
    p.tau2 = 0.0;
    const std::size_t n = 40;
    auto pts = random_points(n, 1200, 7200, 79);
    auto vals = sample_gp(pts, p, 83);
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = vals[i] + 0.7;
    Eigen::MatrixXd x(n, 0);
    p.beta.beta = Eigen::VectorXd::Constant(1, 0.7);

    // Exactness at training points with zero nugget.
    auto pred = krige_predict(p, pts, x, z, pts, Eigen::MatrixXd(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(pred.mean[i] == Catch::Approx(z[i]).margin(1e-8));
        CHECK(pred.variance[i] == Catch::Approx(0.0).margin(1e-8));
    }

    // Far query: trend and sill.
    std::vector<SpatioTemporalPoint> far{{1e7, 1e7, 1e9}};
    auto pf = krige_predict(p, pts, x, z, far, Eigen::MatrixXd(1, 0));
    CHECK(pf.mean[0] == Catch::Approx(0.7).margin(1e-6));
    CHECK(pf.variance[0] == Catch::Approx(p.sigma2).margin(1e-6));

    // Dense-algebra oracle at fresh query points, with a nugget.
    GpParams pn = p;
    pn.tau2 = 0.2;
    auto queries = random_points(15, 1200, 7200, 89);
    auto got = krige_predict(pn, pts, x, z, queries, Eigen::MatrixXd(15, 0));
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        c(i, i) = pn.sigma2 + pn.tau2;
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = gp_covariance(pts[i], pts[j], pn);
            c(i, j) = v;
            c(j, i) = v;
        }
    }
    Eigen::VectorXd resid = z - Eigen::VectorXd::Constant(n, 0.7);
    Eigen::LDLT<Eigen::MatrixXd> solver(c);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        Eigen::VectorXd k(n);
        for (std::size_t i = 0; i < n; ++i) k[i] = gp_covariance(queries[q], pts[i], pn);
        double mean = 0.7 + k.dot(solver.solve(resid));
        double var = pn.sigma2 - k.dot(solver.solve(k));
        CHECK(got.mean[q] == Catch::Approx(mean).margin(1e-6));
        CHECK(got.variance[q] == Catch::Approx(var).margin(1e-6));
    }

    // Variance bounds hold everywhere.
    for (double v : got.variance) {
        CHECK(v >= 0.0);
        CHECK(v <= pn.sigma2 + pn.tau2 + 1e-12);
    }
}

TEST_CASE("local kriging still honors zero-nugget exactness", "[gp]") {
    GpParams p;
    p.sigma2 = 0.9;
    p.range_s = 400;
    p.range_t = 3600;
    p.tau2 = 0.0;
    const std::size_t n = 300;
    auto pts = random_points(n, 2500, 36000, 97);
    auto vals = sample_gp(pts, p, 101);
    Eigen::VectorXd z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = vals[i];
    p.beta.beta = Eigen::VectorXd::Constant(1, 0.0);

    KrigeConfig cfg;
    cfg.dense_cap = 50; // force the local path
    cfg.local_m = 40;
    std::vector<SpatioTemporalPoint> sub(pts.begin(), pts.begin() + 25);
    auto pred = krige_predict(p, pts, Eigen::MatrixXd(n, 0), z, sub,
                              Eigen::MatrixXd(25, 0), cfg);
    for (std::size_t i = 0; i < sub.size(); ++i)
        CHECK(pred.mean[i] == Catch::Approx(z[i]).margin(1e-6));
}

TEST_CASE("gp_vg and gp_ml agree on a simulated scene", "[gp]") {
    GpParams truth;
    truth.sigma2 = 0.7;
    truth.range_s = 600;
    truth.range_t = 10800;
    truth.tau2 = 0.05;
    const std::size_t n = 700;
    auto pts = random_points(n, 3000, 43200, 103);
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        x(i, 0) = u(rng);
        x(i, 1) = u(rng);
    }
    auto field = sample_gp(pts, truth, 109);
    std::vector<double> vals(n);
    for (std::size_t i = 0; i < n; ++i)
        vals[i] = 2.0 + 0.8 * x(i, 0) - 0.5 * x(i, 1) + field[i];
    Dataset ds = gp_dataset(pts, vals, x);

    GpVariogramModel vg;
    vg.fit(ds);
    GpMlModel ml(nlohmann::json{{"m", 15}});
    ml.fit(ds);

    auto qpts = random_points(200, 3000, 43200, 113);
    QuerySet q;
    q.points = qpts;
    std::mt19937_64 rng2(127);
    for (std::size_t i = 0; i < qpts.size(); ++i) {
        std::uniform_real_distribution<double> uq(-1, 1);
        q.covariates.push_back({{uq(rng2), uq(rng2)}});
    }
    auto pv = vg.predict(q);
    auto pm = ml.predict(q);
    auto c = corr(pv, pm);
    REQUIRE(c.has_value());
    CHECK(*c > 0.9);

    // Predictive variance bound from the fitted parameters.
    for (double v : vg.last_variance())
        CHECK(v <= vg.params().sigma2 + vg.params().tau2 + 1e-9);

    // Serialization round trip preserves predictions.
    GpMlModel restored;
    restored.from_json(ml.to_json());
    auto pr = restored.predict(q);
    for (std::size_t i = 0; i < pm.size(); ++i) CHECK(pr[i] == pm[i]);
}
