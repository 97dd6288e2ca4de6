#pragma once

#include <map>
#include <set>

#include "aeromap/model.hpp"

namespace aeromap {

struct IdwParams {
    double power = 2.0;      // p, fixed at 2 by default
    double c = 1.0;          // space-time conversion factor, m^2/s^2
    std::size_t k = 0;       // optional neighbor cap, 0 means all points
    bool tune_c = true;      // pick c by leave-one-sensor-out CV at fit time
    std::vector<double> candidate_cs = {0.0, 0.01, 0.1, 1.0, 10.0, 100.0};

    void validate() const {
        if (!(power > 0)) throw ContractViolation("idw: power must be positive");
        if (!(c >= 0)) throw ContractViolation("idw: c must be nonnegative");
    }
};

/// Inverse-distance weighting with the space-time metric. A query at zero
/// distance from training points returns their (usually single) value
/// exactly.
inline std::vector<double> idw_predict(const std::vector<SpatioTemporalPoint>& train_pts,
                                       const std::vector<double>& train_vals,
                                       const std::vector<SpatioTemporalPoint>& query,
                                       const IdwParams& params) {
    params.validate();
    if (train_pts.empty()) throw ModelError("idw: empty training set");
    std::vector<double> out(query.size());
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t q = 0; q < query.size(); ++q) {
        dist.clear();
        dist.reserve(train_pts.size());
        for (std::size_t i = 0; i < train_pts.size(); ++i)
            dist.emplace_back(st_distance(query[q], train_pts[i], params.c), i);
        std::size_t use = dist.size();
        if (params.k > 0 && params.k < use) {
            std::nth_element(dist.begin(), dist.begin() + params.k, dist.end());
            use = params.k;
        }
        double exact_sum = 0.0;
        std::size_t exact_n = 0;
        for (std::size_t j = 0; j < use; ++j)
            if (dist[j].first == 0.0) {
                exact_sum += train_vals[dist[j].second];
                ++exact_n;
            }
        if (exact_n > 0) {
            out[q] = exact_sum / static_cast<double>(exact_n);
            continue;
        }
        double wsum = 0.0, vsum = 0.0;
        for (std::size_t j = 0; j < use; ++j) {
            double w = 1.0 / std::pow(dist[j].first, params.power);
            wsum += w;
            vsum += w * train_vals[dist[j].second];
        }
        out[q] = vsum / wsum;
    }
    return out;
}

/// Picks the space-time conversion factor minimizing pooled
/// leave-one-sensor-out RMSE; ties go to the smaller candidate.
inline double idw_tune_c(const Dataset& train, std::vector<double> candidates,
                         double power = 2.0, std::size_t k = 0) {
    if (candidates.empty()) throw ContractViolation("idw_tune_c: no candidates");
    std::map<std::string, std::vector<std::size_t>> by_sensor;
    for (std::size_t i = 0; i < train.size(); ++i)
        by_sensor[train.observations[i].sensor_id].push_back(i);
    if (by_sensor.size() < 2)
        throw ContractViolation("idw_tune_c: need at least two sensors");

    std::sort(candidates.begin(), candidates.end());
    double best_c = candidates.front();
    double best_sse = std::numeric_limits<double>::infinity();
    for (double c : candidates) {
        IdwParams params;
        params.power = power;
        params.c = c;
        params.k = k;
        params.tune_c = false;
        double sse = 0.0;
        for (const auto& [sensor, test_idx] : by_sensor) {
            std::vector<SpatioTemporalPoint> tp, qp;
            std::vector<double> tv, actual;
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (train.observations[i].sensor_id == sensor) {
                    qp.push_back(train.observations[i].point);
                    actual.push_back(train.observations[i].value);
                } else {
                    tp.push_back(train.observations[i].point);
                    tv.push_back(train.observations[i].value);
                }
            }
            auto pred = idw_predict(tp, tv, qp, params);
            for (std::size_t j = 0; j < pred.size(); ++j) {
                double d = pred[j] - actual[j];
                sse += d * d;
            }
        }
        if (sse < best_sse) {
            best_sse = sse;
            best_c = c;
        }
    }
    return best_c;
}

class IdwModel : public Model {
public:
    IdwModel() = default;
    explicit IdwModel(const nlohmann::json& config) {
        if (config.contains("power")) params_.power = config["power"].get<double>();
        if (config.contains("c")) {
            params_.c = config["c"].get<double>();
            params_.tune_c = false;
        }
        if (config.contains("k")) params_.k = config["k"].get<std::size_t>();
        if (config.contains("tune_c")) params_.tune_c = config["tune_c"].get<bool>();
        if (config.contains("candidate_cs"))
            params_.candidate_cs = config["candidate_cs"].get<std::vector<double>>();
        params_.validate();
    }

    std::string type() const override { return "idw"; }

    void fit(const Dataset& train) override {
        if (train.empty()) throw ModelError("idw: empty training set");
        points_.clear();
        values_.clear();
        for (const auto& o : train.observations) {
            points_.push_back(o.point);
            values_.push_back(o.value);
        }
        if (params_.tune_c) {
            std::set<std::string> sensors;
            for (const auto& o : train.observations) sensors.insert(o.sensor_id);
            if (sensors.size() >= 2)
                params_.c = idw_tune_c(train, params_.candidate_cs, params_.power, params_.k);
        }
    }

    std::vector<double> predict(const QuerySet& query) const override {
        return idw_predict(points_, values_, query.points, params_);
    }

    const IdwParams& params() const { return params_; }

    nlohmann::json to_json() const override {
        return {{"power", params_.power},
                {"c", params_.c},
                {"k", params_.k},
                {"points", detail::points_to_json(points_)},
                {"values", values_}};
    }

    void from_json(const nlohmann::json& j) override {
        params_.power = j.at("power").get<double>();
        params_.c = j.at("c").get<double>();
        params_.k = j.at("k").get<std::size_t>();
        params_.tune_c = false;
        points_ = detail::points_from_json(j.at("points"));
        values_ = j.at("values").get<std::vector<double>>();
    }

private:
    IdwParams params_;
    std::vector<SpatioTemporalPoint> points_;
    std::vector<double> values_;
};

} // namespace aeromap
