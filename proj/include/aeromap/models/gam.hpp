#pragma once

#include "aeromap/models/linear.hpp"

namespace aeromap {

/// Clamped cubic B-spline basis on [xmin, xmax].
struct BSplineBasis {
    std::vector<double> knots; // size n_basis + 4
    int n_basis = 0;

    static BSplineBasis from_quantiles(std::vector<double> sorted_values, int n_basis) {
        BSplineBasis b;
        double lo = sorted_values.front();
        double hi = sorted_values.back();
        if (lo == hi) hi = lo + 1.0; // degenerate spread; basis still valid
        int interior = std::max(0, n_basis - 4);
        std::vector<double> knots;
        for (int i = 0; i < 4; ++i) knots.push_back(lo);
        std::size_t n = sorted_values.size();
        double prev = lo;
        for (int j = 1; j <= interior; ++j) {
            double q = static_cast<double>(j) / (interior + 1);
            double v = sorted_values[static_cast<std::size_t>(q * (n - 1))];
            if (v <= prev || v >= hi) continue; // skip duplicate quantiles
            knots.push_back(v);
            prev = v;
        }
        for (int i = 0; i < 4; ++i) knots.push_back(hi);
        b.knots = std::move(knots);
        b.n_basis = static_cast<int>(b.knots.size()) - 4;
        return b;
    }

    double xmin() const { return knots.front(); }
    double xmax() const { return knots.back(); }

    /// All basis functions at x; x is clamped to the support so queries
    /// extrapolate as constants.
    Eigen::VectorXd eval(double x) const {
        x = std::clamp(x, xmin(), xmax());
        const int nb = n_basis;
        const auto& t = knots;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(nb + 3);
        // Degree-0 indicators; the last interval is closed at the top.
        for (int i = 0; i < nb + 3; ++i) {
            bool in = (x >= t[i] && x < t[i + 1]) ||
                      (x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back());
            b[i] = in ? 1.0 : 0.0;
        }
        for (int d = 1; d <= 3; ++d) {
            for (int i = 0; i + d < nb + 3; ++i) {
                double left = 0.0, right = 0.0;
                double den1 = t[i + d] - t[i];
                if (den1 > 0) left = (x - t[i]) / den1 * b[i];
                double den2 = t[i + d + 1] - t[i + 1];
                if (den2 > 0) right = (t[i + d + 1] - x) / den2 * b[i + 1];
                b[i] = left + right;
            }
        }
        return b.head(nb);
    }
};

struct GamConfig {
    int df_max = 9; // basis functions per smooth, upper bound
    int gcv_grid = 25;
    double lambda_min = 1e-6;
    double lambda_max = 1e6;
};

/// Additive model with per-covariate cubic regression splines, penalized
/// least squares, smoothing strength by generalized cross-validation.
class GamModel : public Model {
public:
    GamModel() = default;
    explicit GamModel(const nlohmann::json& config) {
        if (config.contains("df_max")) cfg_.df_max = config["df_max"].get<int>();
        if (cfg_.df_max < 4 || cfg_.df_max > 9)
            throw ContractViolation("gam: df_max must be in [4, 9]");
    }

    std::string type() const override { return "gam"; }

    void fit(const Dataset& train) override {
        train.validate();
        const std::size_t n = train.size();
        width_ = train.schema.size();
        Eigen::MatrixXd x = covariate_matrix(train.covariates, width_);
        Eigen::VectorXd z = target_vector(train);

        smooths_.clear();
        for (std::size_t j = 0; j < width_; ++j) {
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = x(i, j);
            std::sort(col.begin(), col.end());
            if (col.front() == col.back()) continue; // constant covariate, no smooth
            Smooth s;
            s.covariate = j;
            s.basis = BSplineBasis::from_quantiles(col, cfg_.df_max);
            smooths_.push_back(std::move(s));
        }

        // One column block per smooth, centered, last column dropped for
        // identifiability (the constant direction folds into the intercept).
        std::size_t total = 1;
        for (auto& s : smooths_) total += static_cast<std::size_t>(s.basis.n_basis) - 1;
        if (total >= n)
            throw ModelError("gam: basis dimension " + std::to_string(total) +
                             " exceeds sample size " + std::to_string(n));

        Eigen::MatrixXd g(n, total);
        g.col(0).setOnes();
        std::size_t offset = 1;
        for (auto& s : smooths_) {
            int nb = s.basis.n_basis;
            Eigen::MatrixXd b(n, nb);
            for (std::size_t i = 0; i < n; ++i) b.row(i) = s.basis.eval(x(i, s.covariate));
            s.col_means = b.colwise().mean();
            b.rowwise() -= s.col_means.transpose();
            s.offset = offset;
            g.block(0, offset, n, nb - 1) = b.leftCols(nb - 1);
            offset += nb - 1;
        }

        Eigen::MatrixXd gtg = g.transpose() * g;
        Eigen::VectorXd gty = g.transpose() * z;

        // Scaled second-difference penalties, block diagonal.
        Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(total, total);
        for (const auto& s : smooths_) {
            int nb = s.basis.n_basis;
            Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(nb - 2, nb);
            for (int r = 0; r < nb - 2; ++r) {
                d2(r, r) = 1;
                d2(r, r + 1) = -2;
                d2(r, r + 2) = 1;
            }
            Eigen::MatrixXd p = (d2.transpose() * d2).topLeftCorner(nb - 1, nb - 1);
            double scale = gtg.block(s.offset, s.offset, nb - 1, nb - 1).trace() /
                           std::max(p.trace(), 1e-12);
            pen.block(s.offset, s.offset, nb - 1, nb - 1) = scale * p;
        }
        double jitter = 1e-9 * gtg.trace() / static_cast<double>(total);
        for (std::size_t k = 1; k < total; ++k) gtg(k, k) += jitter;

        double best_gcv = std::numeric_limits<double>::infinity();
        for (int gi = 0; gi < cfg_.gcv_grid; ++gi) {
            double lambda = cfg_.lambda_min *
                            std::pow(cfg_.lambda_max / cfg_.lambda_min,
                                     static_cast<double>(gi) / (cfg_.gcv_grid - 1));
            Eigen::MatrixXd a = gtg + lambda * pen;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            if (ldlt.info() != Eigen::Success) continue;
            Eigen::VectorXd beta = ldlt.solve(gty);
            double rss = (z - g * beta).squaredNorm();
            double edf = ldlt.solve(gtg).trace();
            double denom = static_cast<double>(n) - edf;
            if (denom <= 0) continue;
            double gcv = static_cast<double>(n) * rss / (denom * denom);
            if (gcv < best_gcv) {
                best_gcv = gcv;
                beta_ = beta;
                lambda_ = lambda;
                edf_ = edf;
            }
        }
        if (!std::isfinite(best_gcv)) throw ModelError("gam: GCV search failed");
    }

    std::vector<double> predict(const QuerySet& query) const override {
        std::vector<double> out(query.size());
        for (std::size_t i = 0; i < query.size(); ++i) {
            if (query.covariates[i].values.size() != width_)
                throw ContractViolation("gam: covariate width mismatch");
            double v = beta_[0];
            for (const auto& s : smooths_) {
                Eigen::VectorXd b = s.basis.eval(query.covariates[i].values[s.covariate]);
                b -= s.col_means;
                int nb = s.basis.n_basis;
                v += b.head(nb - 1).dot(beta_.segment(s.offset, nb - 1));
            }
            out[i] = v;
        }
        return out;
    }

    double selected_lambda() const { return lambda_; }
    double effective_df() const { return edf_; }

    nlohmann::json to_json() const override {
        nlohmann::json smooths = nlohmann::json::array();
        for (const auto& s : smooths_)
            smooths.push_back({{"covariate", s.covariate},
                               {"knots", s.basis.knots},
                               {"col_means", detail::vec_to_json(s.col_means)},
                               {"offset", s.offset}});
        return {{"beta", detail::vec_to_json(beta_)},
                {"width", width_},
                {"lambda", lambda_},
                {"edf", edf_},
                {"smooths", smooths}};
    }

    void from_json(const nlohmann::json& j) override {
        beta_ = detail::vec_from_json(j.at("beta"));
        width_ = j.at("width").get<std::size_t>();
        lambda_ = j.at("lambda").get<double>();
        edf_ = j.at("edf").get<double>();
        smooths_.clear();
        for (const auto& e : j.at("smooths")) {
            Smooth s;
            s.covariate = e.at("covariate").get<std::size_t>();
            s.basis.knots = e.at("knots").get<std::vector<double>>();
            s.basis.n_basis = static_cast<int>(s.basis.knots.size()) - 4;
            s.col_means = detail::vec_from_json(e.at("col_means"));
            s.offset = e.at("offset").get<std::size_t>();
            smooths_.push_back(std::move(s));
        }
    }

private:
    struct Smooth {
        std::size_t covariate = 0;
        BSplineBasis basis;
        Eigen::VectorXd col_means;
        std::size_t offset = 0;
    };

    GamConfig cfg_;
    std::size_t width_ = 0;
    std::vector<Smooth> smooths_;
    Eigen::VectorXd beta_;
    double lambda_ = 0.0;
    double edf_ = 0.0;
};

} // namespace aeromap
