#pragma once

#include <map>
#include <set>
#include <numeric>

#include "aeromap/models/linear.hpp"

namespace aeromap {

/// Street segments linked by covariate similarity, plus the per-node mean
/// of connected nodes' observed values (the network regression term).
struct SegmentGraph {
    std::vector<std::string> node_ids;
    std::vector<XY> centers;
    Eigen::MatrixXd node_covariates; // S x P
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::vector<std::size_t>> neighbors;

    std::size_t size() const { return node_ids.size(); }

    bool connected() const {
        if (node_ids.empty()) return true;
        std::vector<bool> seen(node_ids.size(), false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        std::size_t visited = 1;
        while (!stack.empty()) {
            std::size_t v = stack.back();
            stack.pop_back();
            for (std::size_t u : neighbors[v])
                if (!seen[u]) {
                    seen[u] = true;
                    ++visited;
                    stack.push_back(u);
                }
        }
        return visited == node_ids.size();
    }
};

/// Links every segment to its covariate-space nearest neighbor, then
/// repeatedly adds the globally smallest-distance edge between distinct
/// components until the graph is connected. Distance ties break on
/// lexicographic node-id order.
inline SegmentGraph nr_build_graph(const Eigen::MatrixXd& node_covariates,
                                   std::vector<std::string> node_ids,
                                   std::vector<XY> centers = {}) {
    const std::size_t s = static_cast<std::size_t>(node_covariates.rows());
    if (s < 2) throw ContractViolation("nr_build_graph: need at least two segments");
    if (node_ids.size() != s)
        throw ContractViolation("nr_build_graph: id list does not match covariates");

    SegmentGraph g;
    g.node_ids = std::move(node_ids);
    g.centers = centers.empty() ? std::vector<XY>(s) : std::move(centers);
    g.node_covariates = node_covariates;

    Eigen::MatrixXd dist(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        dist(i, i) = 0.0;
        for (std::size_t j = i + 1; j < s; ++j) {
            double d = (node_covariates.row(i) - node_covariates.row(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    auto add_edge = [&](std::size_t a, std::size_t b) {
        edge_set.emplace(std::min(a, b), std::max(a, b));
    };

    // Nearest neighbor per node; ties resolved toward the smaller id.
    for (std::size_t i = 0; i < s; ++i) {
        std::size_t best = s;
        for (std::size_t j = 0; j < s; ++j) {
            if (j == i) continue;
            if (best == s || dist(i, j) < dist(i, best) ||
                (dist(i, j) == dist(i, best) && g.node_ids[j] < g.node_ids[best]))
                best = j;
        }
        add_edge(i, best);
    }

    // Merge components with the globally shortest remaining links.
    std::vector<std::size_t> parent(s);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (const auto& [a, b] : edge_set) parent[find(a)] = find(b);
    auto component_count = [&] {
        std::set<std::size_t> roots;
        for (std::size_t i = 0; i < s; ++i) roots.insert(find(i));
        return roots.size();
    };
    while (component_count() > 1) {
        double best_d = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        bool have = false;
        for (std::size_t i = 0; i < s; ++i)
            for (std::size_t j = i + 1; j < s; ++j) {
                if (find(i) == find(j)) continue;
                auto lex = std::make_pair(std::min(g.node_ids[i], g.node_ids[j]),
                                          std::max(g.node_ids[i], g.node_ids[j]));
                auto best_lex = have ? std::make_pair(std::min(g.node_ids[ba], g.node_ids[bb]),
                                                      std::max(g.node_ids[ba], g.node_ids[bb]))
                                     : lex;
                if (!have || dist(i, j) < best_d ||
                    (dist(i, j) == best_d && lex < best_lex)) {
                    best_d = dist(i, j);
                    ba = i;
                    bb = j;
                    have = true;
                }
            }
        add_edge(ba, bb);
        parent[find(ba)] = find(bb);
    }

    g.edges.assign(edge_set.begin(), edge_set.end());
    g.neighbors.assign(s, {});
    for (const auto& [a, b] : g.edges) {
        g.neighbors[a].push_back(b);
        g.neighbors[b].push_back(a);
    }
    return g;
}

/// Linear regression augmented with the mean observed value of
/// covariate-similar street segments. Observations snap to 50 m segments
/// of a supplied road network, or to 50 m spatial bins of the observation
/// locations when no roads are given.
class NetworkRegressionModel : public Model {
public:
    NetworkRegressionModel() = default;
    explicit NetworkRegressionModel(const nlohmann::json& config,
                                    std::shared_ptr<const std::vector<GeoFeature>> roads = nullptr)
        : roads_(std::move(roads)) {
        if (config.contains("segment_length_m"))
            segment_length_ = config["segment_length_m"].get<double>();
    }

    std::string type() const override { return "nr"; }

    void fit(const Dataset& train) override {
        train.validate();
        if (train.empty()) throw ModelError("nr: empty training set");
        width_ = train.schema.size();

        std::vector<XY> anchors = segment_anchors(train);
        // Assign observations to their nearest segment anchor.
        std::vector<std::size_t> assignment(train.size());
        std::map<std::size_t, std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < train.size(); ++i) {
            const auto& p = train.observations[i].point;
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < anchors.size(); ++a) {
                double d = std::hypot(p.x - anchors[a].x, p.y - anchors[a].y);
                if (d < best_d) {
                    best_d = d;
                    best = a;
                }
            }
            assignment[i] = best;
            members[best].push_back(i);
        }

        // Occupied segments become graph nodes carrying mean covariates
        // and the mean observed value.
        std::vector<std::size_t> occupied;
        for (const auto& [a, idx] : members) occupied.push_back(a);
        if (occupied.size() < 2)
            throw ModelError("nr: all observations fall on a single segment");
        Eigen::MatrixXd node_cov = Eigen::MatrixXd::Zero(occupied.size(), width_);
        std::vector<double> node_value(occupied.size(), 0.0);
        std::vector<std::string> ids;
        std::vector<XY> centers;
        std::map<std::size_t, std::size_t> anchor_to_node;
        for (std::size_t k = 0; k < occupied.size(); ++k) {
            const auto& idx = members[occupied[k]];
            for (std::size_t i : idx) {
                for (std::size_t j = 0; j < width_; ++j)
                    node_cov(k, j) += train.covariates[i].values[j];
                node_value[k] += train.observations[i].value;
            }
            node_cov.row(k) /= static_cast<double>(idx.size());
            node_value[k] /= static_cast<double>(idx.size());
            char buf[32];
            std::snprintf(buf, sizeof(buf), "seg%06zu", occupied[k]);
            ids.push_back(buf);
            centers.push_back(anchors[occupied[k]]);
            anchor_to_node[occupied[k]] = k;
        }
        graph_ = nr_build_graph(node_cov, ids, centers);

        double global_mean = std::accumulate(node_value.begin(), node_value.end(), 0.0) /
                             static_cast<double>(node_value.size());
        neighbor_means_.assign(graph_.size(), global_mean);
        used_global_mean_ = 0;
        for (std::size_t k = 0; k < graph_.size(); ++k) {
            const auto& nb = graph_.neighbors[k];
            if (nb.empty()) {
                ++used_global_mean_;
                continue;
            }
            double s = 0.0;
            for (std::size_t u : nb) s += node_value[u];
            neighbor_means_[k] = s / static_cast<double>(nb.size());
        }

        // Augment the design with the network term and fit by OLS.
        Eigen::MatrixXd x(train.size(), width_ + 1);
        for (std::size_t i = 0; i < train.size(); ++i) {
            for (std::size_t j = 0; j < width_; ++j)
                x(i, j) = train.covariates[i].values[j];
            x(i, width_) = neighbor_means_[anchor_to_node[assignment[i]]];
        }
        std::vector<std::string> names = train.schema.names;
        names.push_back("network_term");
        coeffs_ = lr_fit(x, target_vector(train), names);
    }

    std::vector<double> predict(const QuerySet& query) const override {
        Eigen::MatrixXd x(query.size(), width_ + 1);
        for (std::size_t i = 0; i < query.size(); ++i) {
            if (query.covariates[i].values.size() != width_)
                throw ContractViolation("nr: covariate width mismatch");
            for (std::size_t j = 0; j < width_; ++j)
                x(i, j) = query.covariates[i].values[j];
            x(i, width_) = neighbor_means_[nearest_node(query.points[i])];
        }
        Eigen::VectorXd z = lr_predict(coeffs_, x);
        return {z.data(), z.data() + z.size()};
    }

    const SegmentGraph& graph() const { return graph_; }
    const TrendCoefficients& coefficients() const { return coeffs_; }
    std::size_t nodes_flagged_global_mean() const { return used_global_mean_; }

    nlohmann::json to_json() const override {
        nlohmann::json centers = nlohmann::json::array();
        for (const auto& c : graph_.centers) centers.push_back({c.x, c.y});
        return {{"beta", detail::vec_to_json(coeffs_.beta)},
                {"width", width_},
                {"neighbor_means", neighbor_means_},
                {"centers", centers},
                {"flagged_global_mean", used_global_mean_}};
    }

    void from_json(const nlohmann::json& j) override {
        coeffs_.beta = detail::vec_from_json(j.at("beta"));
        width_ = j.at("width").get<std::size_t>();
        neighbor_means_ = j.at("neighbor_means").get<std::vector<double>>();
        used_global_mean_ = j.at("flagged_global_mean").get<std::size_t>();
        graph_ = SegmentGraph{};
        for (const auto& c : j.at("centers"))
            graph_.centers.push_back({c[0].get<double>(), c[1].get<double>()});
    }

private:
    std::vector<XY> segment_anchors(const Dataset& train) const {
        std::vector<XY> anchors;
        if (roads_ && !roads_->empty()) {
            // Discretize each road polyline into fixed-length segments.
            for (const auto& f : *roads_) {
                if (f.type != GeoFeature::Type::LineString) continue;
                for (std::size_t i = 0; i + 1 < f.pts.size(); ++i) {
                    const XY& a = f.pts[i];
                    const XY& b = f.pts[i + 1];
                    double len = point_distance(a, b);
                    std::size_t pieces = std::max<std::size_t>(
                        1, static_cast<std::size_t>(std::ceil(len / segment_length_)));
                    for (std::size_t k = 0; k < pieces; ++k) {
                        double frac = (static_cast<double>(k) + 0.5) / static_cast<double>(pieces);
                        anchors.push_back({a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)});
                    }
                }
            }
            if (!anchors.empty()) return anchors;
        }
        // Fallback: bin observation locations on a segment-length grid.
        std::set<std::pair<long long, long long>> cells;
        for (const auto& o : train.observations)
            cells.emplace(static_cast<long long>(std::floor(o.point.x / segment_length_)),
                          static_cast<long long>(std::floor(o.point.y / segment_length_)));
        for (const auto& [cx, cy] : cells)
            anchors.push_back({(static_cast<double>(cx) + 0.5) * segment_length_,
                               (static_cast<double>(cy) + 0.5) * segment_length_});
        return anchors;
    }

    std::size_t nearest_node(const SpatioTemporalPoint& p) const {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < graph_.centers.size(); ++k) {
            double d = std::hypot(p.x - graph_.centers[k].x, p.y - graph_.centers[k].y);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    }

    std::shared_ptr<const std::vector<GeoFeature>> roads_;
    double segment_length_ = 50.0;
    std::size_t width_ = 0;
    SegmentGraph graph_;
    std::vector<double> neighbor_means_;
    std::size_t used_global_mean_ = 0;
    TrendCoefficients coeffs_;
};

} // namespace aeromap
