#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "aeromap/core.hpp"
#include "aeromap/geometry.hpp"

namespace aeromap {

/// Prediction targets: spatio-temporal locations plus the covariate rows
/// aligned to them.
struct QuerySet {
    std::vector<SpatioTemporalPoint> points;
    std::vector<CovariateVector> covariates;

    std::size_t size() const { return points.size(); }

    static QuerySet from(const Dataset& ds) {
        QuerySet q;
        q.points.reserve(ds.size());
        for (const auto& o : ds.observations) q.points.push_back(o.point);
        q.covariates = ds.covariates;
        return q;
    }
};

inline Eigen::MatrixXd covariate_matrix(const std::vector<CovariateVector>& rows,
                                        std::size_t width) {
    Eigen::MatrixXd m(rows.size(), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].values.size() != width)
            throw ContractViolation("covariate row width mismatch");
        for (std::size_t j = 0; j < width; ++j) m(i, j) = rows[i].values[j];
    }
    return m;
}

inline Eigen::VectorXd target_vector(const Dataset& ds) {
    Eigen::VectorXd z(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) z[i] = ds.observations[i].value;
    return z;
}

/// The uniform fit/predict contract shared by all ten predictors.
class Model {
public:
    virtual ~Model() = default;

    virtual std::string type() const = 0;
    virtual void fit(const Dataset& train) = 0;
    virtual std::vector<double> predict(const QuerySet& query) const = 0;

    /// Fitted state as JSON, restorable with from_json.
    virtual nlohmann::json to_json() const = 0;
    virtual void from_json(const nlohmann::json& j) = 0;

    /// Per-round or per-epoch training loss where the model tracks one.
    virtual std::vector<double> training_curve() const { return {}; }
};

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
}

inline nlohmann::json points_to_json(const std::vector<SpatioTemporalPoint>& pts) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : pts) a.push_back({p.x, p.y, p.t});
    return a;
}

inline std::vector<SpatioTemporalPoint> points_from_json(const nlohmann::json& a) {
    std::vector<SpatioTemporalPoint> pts;
    for (const auto& e : a) pts.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
    return pts;
}

} // namespace detail

inline void save_model(const std::string& path, const Model& model) {
    nlohmann::json doc;
    doc["model"] = model.type();
    doc["format_version"] = 1;
    doc["state"] = model.to_json();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractViolation("cannot write model file: " + path);
    out << doc.dump(1) << '\n';
}

} // namespace aeromap
