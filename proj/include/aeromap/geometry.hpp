#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeromap/common.hpp"

namespace aeromap {

struct XY {
    double x = 0.0;
    double y = 0.0;
};

inline double point_distance(const XY& a, const XY& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double point_segment_distance(const XY& p, const XY& a, const XY& b) {
    double vx = b.x - a.x, vy = b.y - a.y;
    double len2 = vx * vx + vy * vy;
    if (len2 == 0.0) return point_distance(p, a);
    double u = ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2;
    u = std::clamp(u, 0.0, 1.0);
    return std::hypot(p.x - (a.x + u * vx), p.y - (a.y + u * vy));
}

/// Local tangent-plane (equirectangular) projection about a reference
/// lat/lon. Adequate at city scale, which is all this toolkit targets.
struct LocalProjection {
    double lat0_deg = 0.0;
    double lon0_deg = 0.0;

    static constexpr double kEarthRadius = 6371000.0;
    static constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

    XY to_xy(double lat_deg, double lon_deg) const {
        double x = kEarthRadius * std::cos(lat0_deg * kDegToRad) *
                   (lon_deg - lon0_deg) * kDegToRad;
        double y = kEarthRadius * (lat_deg - lat0_deg) * kDegToRad;
        return {x, y};
    }

    std::pair<double, double> to_latlon(double x, double y) const {
        double lat = lat0_deg + y / (kEarthRadius * kDegToRad);
        double lon = lon0_deg + x / (kEarthRadius * std::cos(lat0_deg * kDegToRad) * kDegToRad);
        return {lat, lon};
    }
};

/// One GeoJSON feature reduced to what the covariate machinery needs:
/// a class label and projected geometry.
struct GeoFeature {
    enum class Type { Point, LineString, Polygon };
    Type type = Type::Point;
    std::string klass;
    std::vector<XY> pts; // polygon: outer ring, closed implicitly

    double distance_to(const XY& p) const {
        switch (type) {
            case Type::Point:
                return point_distance(p, pts.front());
            case Type::LineString: {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i + 1 < pts.size(); ++i)
                    best = std::min(best, point_segment_distance(p, pts[i], pts[i + 1]));
                return best;
            }
            case Type::Polygon: {
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    const XY& a = pts[i];
                    const XY& b = pts[(i + 1) % pts.size()];
                    best = std::min(best, point_segment_distance(p, a, b));
                }
                return best;
            }
        }
        return std::numeric_limits<double>::infinity();
    }

    XY representative_point() const {
        if (type == Type::Point) return pts.front();
        XY c{0, 0};
        for (const auto& p : pts) {
            c.x += p.x;
            c.y += p.y;
        }
        c.x /= static_cast<double>(pts.size());
        c.y /= static_cast<double>(pts.size());
        return c;
    }
};

/// Features of one class pulled out of a collection.
struct FeatureSet {
    std::string klass;
    std::vector<GeoFeature> features;

    double distance_to(const XY& p) const {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& f : features) best = std::min(best, f.distance_to(p));
        return best;
    }

    std::size_t count_within(const XY& p, double radius) const {
        std::size_t n = 0;
        for (const auto& f : features)
            if (point_distance(p, f.representative_point()) <= radius) ++n;
        return n;
    }
};

/// Loads a GeoJSON FeatureCollection, projecting lon/lat coordinates to
/// planar meters. The class label is read from properties["class"].
inline std::vector<GeoFeature> load_geojson(const std::string& path,
                                            const LocalProjection& proj) {
    std::ifstream in(path);
    if (!in) throw ContractViolation("cannot open geojson file: " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.value("type", "") != "FeatureCollection")
        throw ContractViolation(path + ": not a GeoJSON FeatureCollection");
    std::vector<GeoFeature> out;
    for (const auto& f : doc.at("features")) {
        GeoFeature gf;
        if (f.contains("properties") && f["properties"].contains("class"))
            gf.klass = f["properties"]["class"].get<std::string>();
        const auto& geom = f.at("geometry");
        std::string type = geom.at("type").get<std::string>();
        auto read_pt = [&](const nlohmann::json& c) {
            return proj.to_xy(c.at(1).get<double>(), c.at(0).get<double>());
        };
        if (type == "Point") {
            gf.type = GeoFeature::Type::Point;
            gf.pts.push_back(read_pt(geom.at("coordinates")));
        } else if (type == "LineString") {
            gf.type = GeoFeature::Type::LineString;
            for (const auto& c : geom.at("coordinates")) gf.pts.push_back(read_pt(c));
        } else if (type == "Polygon") {
            gf.type = GeoFeature::Type::Polygon;
            const auto& ring = geom.at("coordinates").at(0);
            for (const auto& c : ring) gf.pts.push_back(read_pt(c));
            // Drop an explicit closing vertex; the ring closes implicitly.
            if (gf.pts.size() > 1 && gf.pts.front().x == gf.pts.back().x &&
                gf.pts.front().y == gf.pts.back().y)
                gf.pts.pop_back();
        } else {
            throw ContractViolation(path + ": unsupported geometry type " + type);
        }
        if (gf.pts.empty())
            throw ContractViolation(path + ": feature with empty geometry");
        out.push_back(std::move(gf));
    }
    return out;
}

inline FeatureSet select_class(const std::vector<GeoFeature>& features,
                               std::string_view klass) {
    FeatureSet set;
    set.klass = std::string(klass);
    for (const auto& f : features)
        if (f.klass == klass) set.features.push_back(f);
    return set;
}

/// Undirected road network: nodes at shared linestring vertices, one edge
/// per consecutive vertex pair.
struct RoadGraph {
    struct Edge {
        std::size_t a = 0;
        std::size_t b = 0;
        std::string klass;
        double length = 0.0;
    };

    std::vector<XY> nodes;
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> adjacency; // node -> edge indices

    static RoadGraph from_features(const std::vector<GeoFeature>& features) {
        RoadGraph g;
        std::map<std::pair<long long, long long>, std::size_t> index;
        auto node_of = [&](const XY& p) {
            auto key = std::make_pair(static_cast<long long>(std::llround(p.x * 1000.0)),
                                      static_cast<long long>(std::llround(p.y * 1000.0)));
            auto it = index.find(key);
            if (it != index.end()) return it->second;
            g.nodes.push_back(p);
            index.emplace(key, g.nodes.size() - 1);
            return g.nodes.size() - 1;
        };
        for (const auto& f : features) {
            if (f.type != GeoFeature::Type::LineString) continue;
            for (std::size_t i = 0; i + 1 < f.pts.size(); ++i) {
                std::size_t a = node_of(f.pts[i]);
                std::size_t b = node_of(f.pts[i + 1]);
                if (a == b) continue;
                g.edges.push_back({a, b, f.klass, point_distance(f.pts[i], f.pts[i + 1])});
            }
        }
        g.adjacency.assign(g.nodes.size(), {});
        for (std::size_t e = 0; e < g.edges.size(); ++e) {
            g.adjacency[g.edges[e].a].push_back(e);
            g.adjacency[g.edges[e].b].push_back(e);
        }
        return g;
    }

    XY point_on_edge(std::size_t e, double frac) const {
        const Edge& ed = edges[e];
        const XY& a = nodes[ed.a];
        const XY& b = nodes[ed.b];
        return {a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)};
    }
};

} // namespace aeromap
