#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "aeromap/civil_time.hpp"
#include "aeromap/core.hpp"
#include "aeromap/covariates.hpp"
#include "aeromap/csv.hpp"
#include "aeromap/geometry.hpp"

namespace aeromap {

/// One raw sensor reading as it arrives from the feed, pre-log,
/// coordinates already projected to planar meters.
struct RawRecord {
    std::string sensor_id;
    Timestamp time;
    double x = 0.0;
    double y = 0.0;
    double concentration = 0.0; // ug/m3
    Mobility mobility = Mobility::Fixed;
    std::string run_id;
    StationClass station_class = StationClass::LowCost;
};

inline const char* kRawCsvHeader = "sensor_id,time_iso8601,lat,lon,pm10_ugm3,mobility,run_id";

inline std::vector<RawRecord> read_raw_csv(const std::string& path,
                                           const LocalProjection& proj,
                                           StationClass station_class = StationClass::LowCost) {
    CsvTable t = read_csv(path);
    std::size_t sid = t.column("sensor_id"), tc = t.column("time_iso8601");
    std::size_t lat = t.column("lat"), lon = t.column("lon");
    std::size_t pm = t.column("pm10_ugm3"), mob = t.column("mobility");
    std::size_t run = t.column("run_id");
    std::vector<RawRecord> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        RawRecord r;
        r.sensor_id = row[sid];
        r.time = parse_iso8601(row[tc]);
        XY xy = proj.to_xy(parse_double(row[lat]), parse_double(row[lon]));
        r.x = xy.x;
        r.y = xy.y;
        r.concentration = parse_double(row[pm]);
        if (r.concentration < 0)
            throw ContractViolation(path + ": negative concentration for sensor " + r.sensor_id);
        r.mobility = mobility_from_string(row[mob]);
        r.run_id = row[run];
        r.station_class = station_class;
        out.push_back(std::move(r));
    }
    return out;
}

/// Drops the first `warmup_s` seconds of every mobile run; a record at
/// exactly the warm-up boundary is kept. Fixed-sensor records pass
/// through untouched.
inline std::vector<RawRecord> trim_warmup(const std::vector<RawRecord>& records,
                                          double warmup_s = 300.0) {
    std::map<std::pair<std::string, std::string>, double> run_start;
    for (const auto& r : records) {
        if (r.mobility != Mobility::Mobile) continue;
        auto key = std::make_pair(r.sensor_id, r.run_id);
        auto it = run_start.find(key);
        if (it == run_start.end() || r.time.utc_s < it->second)
            run_start[key] = r.time.utc_s;
    }
    std::vector<RawRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.mobility == Mobility::Mobile) {
            double start = run_start.at({r.sensor_id, r.run_id});
            if (r.time.utc_s - start < warmup_s) continue;
        }
        out.push_back(r);
    }
    return out;
}

/// Replaces each concentration with the median of a centered window over
/// the sensor's time-ordered stream. At the edges the window shrinks
/// symmetrically to whatever span is available.
inline std::vector<RawRecord> running_median(const std::vector<RawRecord>& records,
                                             int window = 15) {
    if (window < 1 || window % 2 == 0)
        throw ContractViolation("running_median: window must be odd and positive");
    std::map<std::string, std::vector<std::size_t>> per_sensor;
    for (std::size_t i = 0; i < records.size(); ++i)
        per_sensor[records[i].sensor_id].push_back(i);

    std::vector<RawRecord> out = records;
    int half = window / 2;
    for (auto& [sensor, idx] : per_sensor) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return records[a].time.utc_s < records[b].time.utc_s;
        });
        std::size_t n = idx.size();
        std::vector<double> buf;
        for (std::size_t k = 0; k < n; ++k) {
            int h = std::min<int>({half, static_cast<int>(k), static_cast<int>(n - 1 - k)});
            buf.clear();
            for (int j = -h; j <= h; ++j)
                buf.push_back(records[idx[k + j]].concentration);
            std::nth_element(buf.begin(), buf.begin() + h, buf.end());
            out[idx[k]].concentration = buf[h];
        }
    }
    return out;
}

/// Keeps records with local time in [04:00, 19:00) on Monday to Saturday.
inline std::vector<RawRecord> filter_schedule(const std::vector<RawRecord>& records) {
    std::vector<RawRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        int wd = r.time.local_weekday();
        double sod = r.time.local_seconds_of_day();
        if (wd >= 1 && wd <= 6 && sod >= 4 * 3600.0 && sod < 19 * 3600.0)
            out.push_back(r);
    }
    return out;
}

/// Among fixed sensors closer than `radius_m` to each other, keeps only
/// the one with the most records (ties go to the lowest sensor_id).
inline std::vector<RawRecord> dedup_colocated(const std::vector<RawRecord>& records,
                                              double radius_m = 50.0) {
    struct SensorInfo {
        double sx = 0, sy = 0;
        std::size_t count = 0;
    };
    std::map<std::string, SensorInfo> fixed;
    for (const auto& r : records) {
        if (r.mobility != Mobility::Fixed) continue;
        auto& info = fixed[r.sensor_id];
        info.sx += r.x;
        info.sy += r.y;
        ++info.count;
    }
    std::vector<std::string> ids;
    for (auto& [id, info] : fixed) {
        info.sx /= static_cast<double>(info.count);
        info.sy /= static_cast<double>(info.count);
        ids.push_back(id);
    }
    // Union-find over proximity clusters.
    std::vector<std::size_t> parent(ids.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            const auto& a = fixed[ids[i]];
            const auto& b = fixed[ids[j]];
            if (std::hypot(a.sx - b.sx, a.sy - b.sy) < radius_m)
                parent[find(i)] = find(j);
        }
    std::map<std::size_t, std::string> survivor;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::size_t root = find(i);
        auto it = survivor.find(root);
        if (it == survivor.end()) {
            survivor[root] = ids[i];
            continue;
        }
        std::size_t cur = fixed[it->second].count;
        std::size_t cand = fixed[ids[i]].count;
        if (cand > cur || (cand == cur && ids[i] < it->second)) it->second = ids[i];
    }
    std::set<std::string> keep;
    for (const auto& [root, id] : survivor) keep.insert(id);
    std::vector<RawRecord> out;
    out.reserve(records.size());
    for (const auto& r : records)
        if (r.mobility != Mobility::Fixed || keep.count(r.sensor_id)) out.push_back(r);
    return out;
}

/// value = ln(max(concentration, floor)); the floor guards zero readings.
inline std::vector<Observation> log_transform(const std::vector<RawRecord>& records,
                                              double floor_ugm3 = 0.1) {
    std::vector<Observation> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        Observation o;
        o.point = {r.x, r.y, r.time.utc_s};
        o.value = std::log(std::max(r.concentration, floor_ugm3));
        o.sensor_id = r.sensor_id;
        o.mobility = r.mobility;
        o.station_class = r.station_class;
        out.push_back(std::move(o));
    }
    return out;
}

struct PipelineParams {
    double warmup_s = 300.0;
    int median_window = 15;
    double dedup_radius_m = 50.0;
    double log_floor_ugm3 = 0.1;
    // The source material does not pin whether the median runs before or
    // after the schedule filter; the default is median first.
    bool median_before_schedule = true;
    bool apply_median = true;
};

struct StageCount {
    std::string stage;
    std::size_t count = 0;
};

/// The full cleaning pipeline for a low-cost feed.
inline std::vector<Observation> run_pipeline(const std::vector<RawRecord>& records,
                                             const PipelineParams& params,
                                             std::vector<StageCount>* counts = nullptr) {
    auto note = [&](const char* stage, std::size_t n) {
        if (counts) counts->push_back({stage, n});
    };
    note("input", records.size());
    auto cur = trim_warmup(records, params.warmup_s);
    note("trim_warmup", cur.size());
    if (params.median_before_schedule) {
        if (params.apply_median) cur = running_median(cur, params.median_window);
        note("running_median", cur.size());
        cur = filter_schedule(cur);
        note("filter_schedule", cur.size());
    } else {
        cur = filter_schedule(cur);
        note("filter_schedule", cur.size());
        if (params.apply_median) cur = running_median(cur, params.median_window);
        note("running_median", cur.size());
    }
    cur = dedup_colocated(cur, params.dedup_radius_m);
    note("dedup_colocated", cur.size());
    auto obs = log_transform(cur, params.log_floor_ugm3);
    note("log_transform", obs.size());
    return obs;
}

/// Carries per-observation UTC offsets alongside the dataset so that the
/// file round trip preserves local wall time.
struct DatasetFile {
    Dataset data;
    std::vector<int> utc_offsets;

    int dominant_offset() const {
        std::map<int, std::size_t> counts;
        for (int o : utc_offsets) ++counts[o];
        int best = 0;
        std::size_t best_n = 0;
        for (const auto& [o, n] : counts)
            if (n > best_n) {
                best = o;
                best_n = n;
            }
        return best;
    }
};

inline void write_dataset_csv(const std::string& path, const DatasetFile& file) {
    const Dataset& ds = file.data;
    ds.validate();
    if (file.utc_offsets.size() != ds.size())
        throw ContractViolation("dataset file: offset column length mismatch");
    CsvTable t;
    t.header = {"sensor_id", "time_iso8601", "x", "y", "value", "mobility", "station_class"};
    for (const auto& n : ds.schema.names) t.header.push_back(n);
    t.rows.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Observation& o = ds.observations[i];
        std::vector<std::string> row{
            o.sensor_id,
            format_iso8601({o.point.t, file.utc_offsets[i]}),
            fmt_double(o.point.x),
            fmt_double(o.point.y),
            fmt_double(o.value),
            to_string(o.mobility),
            to_string(o.station_class)};
        for (double v : ds.covariates[i].values) row.push_back(fmt_double(v));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

/// Reads a dataset CSV; the covariate schema kinds come from the sidecar
/// when available, otherwise everything is marked spatio-temporal.
inline DatasetFile read_dataset_csv(const std::string& path,
                                    const CovariateSchema* schema_hint = nullptr) {
    CsvTable t = read_csv(path);
    constexpr std::size_t kFixedCols = 7;
    if (t.header.size() < kFixedCols)
        throw ContractViolation(path + ": malformed dataset header");
    DatasetFile file;
    Dataset& ds = file.data;
    for (std::size_t k = kFixedCols; k < t.header.size(); ++k) {
        ds.schema.names.push_back(t.header[k]);
        CovariateKind kind = CovariateKind::SpatioTemporal;
        if (schema_hint) {
            auto idx = schema_hint->index_of(t.header[k]);
            if (idx) kind = schema_hint->kinds[*idx];
        }
        ds.schema.kinds.push_back(kind);
    }
    std::size_t sid = t.column("sensor_id"), tc = t.column("time_iso8601");
    std::size_t xc = t.column("x"), yc = t.column("y"), vc = t.column("value");
    std::size_t mc = t.column("mobility"), cc = t.column("station_class");
    for (const auto& row : t.rows) {
        Observation o;
        o.sensor_id = row[sid];
        Timestamp ts = parse_iso8601(row[tc]);
        o.point = {parse_double(row[xc]), parse_double(row[yc]), ts.utc_s};
        o.value = parse_double(row[vc]);
        o.mobility = mobility_from_string(row[mc]);
        o.station_class = station_class_from_string(row[cc]);
        CovariateVector cov;
        for (std::size_t k = kFixedCols; k < row.size(); ++k)
            cov.values.push_back(parse_double(row[k]));
        ds.observations.push_back(std::move(o));
        ds.covariates.push_back(std::move(cov));
        file.utc_offsets.push_back(ts.offset_s);
    }
    ds.validate();
    return file;
}

} // namespace aeromap
