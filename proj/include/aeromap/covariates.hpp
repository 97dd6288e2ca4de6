#pragma once

#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "aeromap/core.hpp"
#include "aeromap/csv.hpp"
#include "aeromap/geometry.hpp"
#include "aeromap/grid.hpp"

namespace aeromap {

/// A named predictor field that can be evaluated anywhere in the study
/// extent. Throws OutOfCoverage outside it.
class CovariateSource {
public:
    CovariateSource(std::string name, CovariateKind kind)
        : name_(std::move(name)), kind_(kind) {}
    virtual ~CovariateSource() = default;

    const std::string& name() const { return name_; }
    CovariateKind kind() const { return kind_; }

    virtual double value_at(const SpatioTemporalPoint& p) const = 0;

protected:
    [[noreturn]] void out_of_coverage(const SpatioTemporalPoint& p) const {
        throw OutOfCoverage("covariate source '" + name_ + "' does not cover point (" +
                            fmt_double(p.x) + ", " + fmt_double(p.y) + ", t=" +
                            fmt_double(p.t) + ")");
    }

private:
    std::string name_;
    CovariateKind kind_;
};

/// Varies only with time; linearly interpolated between samples.
class TemporalSeriesSource : public CovariateSource {
public:
    TemporalSeriesSource(std::string name, std::vector<double> times,
                         std::vector<double> values)
        : CovariateSource(std::move(name), CovariateKind::Temporal),
          times_(std::move(times)), values_(std::move(values)) {
        if (times_.size() != values_.size() || times_.empty())
            throw ContractViolation("temporal source '" + this->name() + "': bad series");
        if (!std::is_sorted(times_.begin(), times_.end()))
            throw ContractViolation("temporal source '" + this->name() + "': times not sorted");
    }

    static TemporalSeriesSource from_csv(std::string name, const std::string& path) {
        CsvTable t = read_csv(path);
        std::size_t tc = t.column("time_iso8601"), vc = t.column("value");
        std::vector<double> times, values;
        for (const auto& row : t.rows) {
            times.push_back(parse_iso8601(row[tc]).utc_s);
            values.push_back(parse_double(row[vc]));
        }
        return TemporalSeriesSource(std::move(name), std::move(times), std::move(values));
    }

    double value_at(const SpatioTemporalPoint& p) const override {
        bool covered = false;
        double v = interp_series(times_, values_, p.t, &covered);
        if (!covered) out_of_coverage(p);
        return v;
    }

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

/// Varies only in space; sampled at the enclosing raster cell.
class RasterSource : public CovariateSource {
public:
    RasterSource(std::string name, EsriGrid grid)
        : CovariateSource(std::move(name), CovariateKind::Spatial), grid_(std::move(grid)) {}

    double value_at(const SpatioTemporalPoint& p) const override {
        if (!grid_.contains(p.x, p.y)) out_of_coverage(p);
        double v = grid_.sample_nearest(p.x, p.y);
        if (v == grid_.nodata) out_of_coverage(p);
        return v;
    }

private:
    EsriGrid grid_;
};

namespace detail {

struct XYKey {
    double x, y;
    bool operator==(const XYKey&) const = default;
};
struct XYKeyHash {
    std::size_t operator()(const XYKey& k) const {
        std::uint64_t hx, hy;
        std::memcpy(&hx, &k.x, 8);
        std::memcpy(&hy, &k.y, 8);
        return static_cast<std::size_t>(splitmix64(hx ^ splitmix64(hy)));
    }
};

/// Thread-safe memo table for purely spatial lookups. Mobile tracks visit
/// distinct positions, but fixed sensors and map grids repeat locations
/// constantly.
class LocationCache {
public:
    template <typename F>
    double get(double x, double y, F&& compute) const {
        XYKey key{x, y};
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        double v = compute();
        std::lock_guard<std::mutex> lock(mu_);
        cache_.emplace(key, v);
        return v;
    }

private:
    mutable std::mutex mu_;
    mutable std::unordered_map<XYKey, double, XYKeyHash> cache_;
};

} // namespace detail

/// Euclidean distance in meters to the nearest feature of one class.
class ProximitySource : public CovariateSource {
public:
    ProximitySource(std::string name, FeatureSet features)
        : CovariateSource(std::move(name), CovariateKind::Spatial),
          features_(std::move(features)) {
        if (features_.features.empty())
            throw ContractViolation("proximity source '" + this->name() +
                                    "': no features of class " + features_.klass);
    }

    double value_at(const SpatioTemporalPoint& p) const override {
        return cache_.get(p.x, p.y, [&] { return features_.distance_to({p.x, p.y}); });
    }

private:
    FeatureSet features_;
    detail::LocationCache cache_;
};

/// Number of features of a class within a circular buffer.
class BufferCountSource : public CovariateSource {
public:
    BufferCountSource(std::string name, FeatureSet features, double radius_m)
        : CovariateSource(std::move(name), CovariateKind::Spatial),
          features_(std::move(features)), radius_(radius_m) {}

    double value_at(const SpatioTemporalPoint& p) const override {
        return cache_.get(p.x, p.y, [&] {
            return static_cast<double>(features_.count_within({p.x, p.y}, radius_));
        });
    }

private:
    FeatureSet features_;
    double radius_;
    detail::LocationCache cache_;
};

/// Varies in space and time: time series attached to coarse grid cells,
/// linearly interpolated in time at the enclosing cell.
class GridSeriesSource : public CovariateSource {
public:
    GridSeriesSource(std::string name, GridSeries series)
        : CovariateSource(std::move(name), CovariateKind::SpatioTemporal),
          series_(std::move(series)) {}

    double value_at(const SpatioTemporalPoint& p) const override {
        if (!series_.contains(p.x, p.y)) out_of_coverage(p);
        std::size_t cell = series_.cell_index(p.x, p.y);
        std::vector<double> cell_values(series_.times.size());
        for (std::size_t i = 0; i < series_.times.size(); ++i)
            cell_values[i] = series_.slices[i][cell];
        bool covered = false;
        double v = interp_series(series_.times, cell_values, p.t, &covered);
        if (!covered) out_of_coverage(p);
        return v;
    }

private:
    GridSeries series_;
};

/// Builds the aligned Dataset: one covariate row per observation, columns
/// ordered per schema. Source names must cover every schema entry.
inline Dataset align_covariates(
    const std::vector<Observation>& observations,
    const std::vector<std::unique_ptr<CovariateSource>>& sources,
    const CovariateSchema& schema, unsigned jobs = 1) {
    schema.validate();
    std::vector<const CovariateSource*> ordered(schema.size(), nullptr);
    for (std::size_t i = 0; i < schema.size(); ++i) {
        for (const auto& src : sources) {
            if (src->name() == schema.names[i]) {
                if (src->kind() != schema.kinds[i])
                    throw ContractViolation("covariate '" + schema.names[i] +
                                            "': source kind disagrees with schema");
                ordered[i] = src.get();
                break;
            }
        }
        if (!ordered[i])
            throw ContractViolation("no covariate source named '" + schema.names[i] + "'");
    }
    Dataset ds;
    ds.schema = schema;
    ds.observations = observations;
    ds.covariates.resize(observations.size());
    parallel_for(observations.size(), jobs, [&](std::size_t i) {
        CovariateVector row;
        row.values.resize(schema.size());
        for (std::size_t k = 0; k < schema.size(); ++k)
            row.values[k] = ordered[k]->value_at(observations[i].point);
        ds.covariates[i] = std::move(row);
    });
    return ds;
}

} // namespace aeromap
