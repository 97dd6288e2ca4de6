#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeromap/common.hpp"

namespace aeromap {

enum class Mobility { Fixed, Mobile };
enum class StationClass { LowCost, Reference };
enum class CovariateKind { Temporal, Spatial, SpatioTemporal };

inline const char* to_string(Mobility m) {
    return m == Mobility::Fixed ? "fixed" : "mobile";
}
inline const char* to_string(StationClass c) {
    return c == StationClass::LowCost ? "lowcost" : "reference";
}
inline const char* to_string(CovariateKind k) {
    switch (k) {
        case CovariateKind::Temporal: return "temporal";
        case CovariateKind::Spatial: return "spatial";
        default: return "spatiotemporal";
    }
}

inline Mobility mobility_from_string(std::string_view s) {
    if (s == "fixed") return Mobility::Fixed;
    if (s == "mobile") return Mobility::Mobile;
    throw ContractViolation("unknown mobility: " + std::string(s));
}
inline StationClass station_class_from_string(std::string_view s) {
    if (s == "lowcost") return StationClass::LowCost;
    if (s == "reference") return StationClass::Reference;
    throw ContractViolation("unknown station class: " + std::string(s));
}
inline CovariateKind covariate_kind_from_string(std::string_view s) {
    if (s == "temporal") return CovariateKind::Temporal;
    if (s == "spatial") return CovariateKind::Spatial;
    if (s == "spatiotemporal") return CovariateKind::SpatioTemporal;
    throw ContractViolation("unknown covariate kind: " + std::string(s));
}

/// Projected planar location (meters) plus time (seconds since epoch).
struct SpatioTemporalPoint {
    double x = 0.0;
    double y = 0.0;
    double t = 0.0;
};

/// One log-transformed pollutant measurement.
struct Observation {
    SpatioTemporalPoint point;
    double value = 0.0; // log(ug/m3)
    std::string sensor_id;
    Mobility mobility = Mobility::Fixed;
    StationClass station_class = StationClass::LowCost;
};

struct CovariateSchema {
    std::vector<std::string> names;
    std::vector<CovariateKind> kinds;

    std::size_t size() const { return names.size(); }

    void validate() const {
        if (names.size() != kinds.size())
            throw ContractViolation("covariate schema: names/kinds length mismatch");
        for (std::size_t i = 0; i < names.size(); ++i)
            for (std::size_t j = i + 1; j < names.size(); ++j)
                if (names[i] == names[j])
                    throw ContractViolation("covariate schema: duplicate name " + names[i]);
    }

    std::optional<std::size_t> index_of(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        return std::nullopt;
    }
};

/// The P predictor values attached to one observation or grid cell,
/// ordered per the owning schema.
struct CovariateVector {
    std::vector<double> values;
};

/// Aligned observations and covariates.
struct Dataset {
    std::vector<Observation> observations;
    std::vector<CovariateVector> covariates;
    CovariateSchema schema;

    std::size_t size() const { return observations.size(); }
    bool empty() const { return observations.empty(); }

    void validate() const {
        schema.validate();
        if (observations.size() != covariates.size())
            throw ContractViolation("dataset: observation/covariate length mismatch");
        for (const auto& c : covariates) {
            if (c.values.size() != schema.size())
                throw ContractViolation("dataset: covariate width does not match schema");
            for (double v : c.values)
                if (!std::isfinite(v))
                    throw ContractViolation("dataset: non-finite covariate value");
        }
    }

    Dataset subset(std::span<const std::size_t> idx) const {
        Dataset out;
        out.schema = schema;
        out.observations.reserve(idx.size());
        out.covariates.reserve(idx.size());
        for (std::size_t i : idx) {
            out.observations.push_back(observations[i]);
            out.covariates.push_back(covariates[i]);
        }
        return out;
    }
};

/// The four performance indicators, in log space. corr is empty when
/// either series is constant.
struct MetricSet {
    double rmse = 0.0;
    double bias = 0.0;
    std::optional<double> corr;
    double mae = 0.0; // maximum absolute error
};

namespace detail {

inline void check_pair(std::span<const double> predicted,
                       std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw ContractViolation("metric input length mismatch");
    if (predicted.empty())
        throw ContractViolation("metric input is empty");
    for (std::size_t i = 0; i < predicted.size(); ++i)
        if (!std::isfinite(predicted[i]) || !std::isfinite(actual[i]))
            throw ContractViolation("metric input has non-finite value");
}

} // namespace detail

/// Root mean squared error of predicted vs actual.
inline double rmse(std::span<const double> predicted,
                   std::span<const double> actual) {
    detail::check_pair(predicted, actual);
    double ss = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        double d = predicted[i] - actual[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(predicted.size()));
}

/// Mean of predicted - actual, positive when over-predicting.
inline double bias(std::span<const double> predicted,
                   std::span<const double> actual) {
    detail::check_pair(predicted, actual);
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        s += predicted[i] - actual[i];
    return s / static_cast<double>(predicted.size());
}

/// Pearson correlation; empty when either series is constant.
inline std::optional<double> corr(std::span<const double> predicted,
                                  std::span<const double> actual) {
    detail::check_pair(predicted, actual);
    if (predicted.size() < 2)
        throw ContractViolation("corr needs at least two samples");
    std::size_t n = predicted.size();
    double mp = 0.0, ma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += predicted[i];
        ma += actual[i];
    }
    mp /= static_cast<double>(n);
    ma /= static_cast<double>(n);
    double spa = 0.0, spp = 0.0, saa = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dp = predicted[i] - mp;
        double da = actual[i] - ma;
        spa += dp * da;
        spp += dp * dp;
        saa += da * da;
    }
    if (spp == 0.0 || saa == 0.0) return std::nullopt;
    return spa / std::sqrt(spp * saa);
}

/// Maximum absolute error (the paper's "MAE" is a maximum, not a mean).
inline double mae_max(std::span<const double> predicted,
                      std::span<const double> actual) {
    detail::check_pair(predicted, actual);
    double m = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        m = std::max(m, std::abs(predicted[i] - actual[i]));
    return m;
}

inline MetricSet compute_metrics(std::span<const double> predicted,
                                 std::span<const double> actual) {
    MetricSet m;
    m.rmse = rmse(predicted, actual);
    m.bias = bias(predicted, actual);
    m.mae = mae_max(predicted, actual);
    m.corr = predicted.size() >= 2 ? corr(predicted, actual) : std::nullopt;
    return m;
}

/// Space-time distance sqrt(dx^2 + dy^2 + c*dt^2) with c in m^2/s^2.
inline double st_distance(const SpatioTemporalPoint& a,
                          const SpatioTemporalPoint& b, double c) {
    if (!(c >= 0.0) || !std::isfinite(c))
        throw ContractViolation("st_distance: c must be finite and nonnegative");
    double dx = a.x - b.x;
    double dy = a.y - b.y;
    double dt = a.t - b.t;
    return std::sqrt(dx * dx + dy * dy + c * dt * dt);
}

inline double spatial_distance(const SpatioTemporalPoint& a,
                               const SpatioTemporalPoint& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

} // namespace aeromap
