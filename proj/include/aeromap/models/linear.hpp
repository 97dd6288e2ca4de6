#pragma once

#include "aeromap/model.hpp"

namespace aeromap {

/// Intercept plus one coefficient per covariate, in schema order.
struct TrendCoefficients {
    Eigen::VectorXd beta; // size P+1, beta[0] is the intercept
};

namespace detail {

/// Column indices of X (without intercept) whose values are all equal.
inline std::vector<std::size_t> constant_columns(const Eigen::MatrixXd& x) {
    std::vector<std::size_t> out;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double first = x(0, j);
        bool constant = true;
        for (Eigen::Index i = 1; i < x.rows(); ++i)
            if (x(i, j) != first) {
                constant = false;
                break;
            }
        if (constant) out.push_back(static_cast<std::size_t>(j));
    }
    return out;
}

} // namespace detail

/// Ordinary least squares of Z on [1, X]. Constant covariate columns are
/// absorbed by the intercept (their coefficient is zero); genuine rank
/// deficiency is an error naming the offending columns.
inline TrendCoefficients lr_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                                const std::vector<std::string>& names) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    auto constant = detail::constant_columns(x);
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j)
        if (std::find(constant.begin(), constant.end(), static_cast<std::size_t>(j)) ==
            constant.end())
            active.push_back(j);

    if (n <= static_cast<Eigen::Index>(active.size()) + 1)
        throw ModelError("lr_fit: need more than P+1 observations");

    Eigen::MatrixXd design(n, active.size() + 1);
    design.col(0).setOnes();
    for (std::size_t k = 0; k < active.size(); ++k)
        design.col(static_cast<Eigen::Index>(k) + 1) = x.col(active[k]);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < design.cols()) {
        auto perm = qr.colsPermutation().indices();
        std::string offending;
        for (Eigen::Index k = qr.rank(); k < design.cols(); ++k) {
            Eigen::Index col = perm[k];
            if (!offending.empty()) offending += ", ";
            if (col == 0)
                offending += "intercept";
            else {
                std::size_t orig = static_cast<std::size_t>(active[col - 1]);
                offending += orig < names.size() ? names[orig]
                                                 : "column " + std::to_string(orig);
            }
        }
        throw ModelError("lr_fit: design matrix rank deficient; offending columns: " +
                         offending);
    }
    Eigen::VectorXd sol = qr.solve(z);
    TrendCoefficients out;
    out.beta = Eigen::VectorXd::Zero(p + 1);
    out.beta[0] = sol[0];
    for (std::size_t k = 0; k < active.size(); ++k) out.beta[active[k] + 1] = sol[k + 1];
    return out;
}

inline TrendCoefficients lr_fit(const Dataset& train) {
    Eigen::MatrixXd x = covariate_matrix(train.covariates, train.schema.size());
    return lr_fit(x, target_vector(train), train.schema.names);
}

inline Eigen::VectorXd lr_predict(const TrendCoefficients& coeffs, const Eigen::MatrixXd& x) {
    if (x.cols() + 1 != coeffs.beta.size())
        throw ContractViolation("lr_predict: covariate width does not match coefficients");
    return Eigen::VectorXd::Constant(x.rows(), coeffs.beta[0]) + x * coeffs.beta.tail(x.cols());
}

class LinearModel : public Model {
public:
    LinearModel() = default;
    explicit LinearModel(const nlohmann::json&) {}

    std::string type() const override { return "lr"; }

    void fit(const Dataset& train) override {
        train.validate();
        width_ = train.schema.size();
        coeffs_ = lr_fit(train);
    }

    std::vector<double> predict(const QuerySet& query) const override {
        Eigen::MatrixXd x = covariate_matrix(query.covariates, width_);
        Eigen::VectorXd z = lr_predict(coeffs_, x);
        return {z.data(), z.data() + z.size()};
    }

    const TrendCoefficients& coefficients() const { return coeffs_; }

    nlohmann::json to_json() const override {
        return {{"beta", detail::vec_to_json(coeffs_.beta)}, {"width", width_}};
    }

    void from_json(const nlohmann::json& j) override {
        coeffs_.beta = detail::vec_from_json(j.at("beta"));
        width_ = j.at("width").get<std::size_t>();
    }

private:
    TrendCoefficients coeffs_;
    std::size_t width_ = 0;
};

} // namespace aeromap
