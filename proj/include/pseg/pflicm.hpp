#ifndef PSEG_PFLICM_HPP
#define PSEG_PFLICM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/matrix.hpp"
#include "pseg/superpixels.hpp"
#include "pseg/types.hpp"

namespace pseg {

// ---------------------------------------------------------------------------
// Neighborhoods

struct Neighbor {
    int index;
    double distance;  ///< spatial distance d_nk between sample centroids
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Symmetric spatial neighbor lists without self edges.
class NeighborGraph {
public:
    NeighborGraph() = default;
    explicit NeighborGraph(std::size_t n) : adj_(n) {}

    /// Builds from undirected edges (i, j, distance); duplicates collapse.
    static NeighborGraph from_edges(std::size_t n, const std::vector<std::tuple<int, int, double>>& edges) {
        NeighborGraph g(n);
        for (const auto& [i, j, d] : edges) {
            detail::require(i >= 0 && j >= 0 && static_cast<std::size_t>(i) < n && static_cast<std::size_t>(j) < n,
                            "neighbor graph: edge endpoint out of range");
            detail::require(i != j, "neighbor graph: self edge");
            detail::require(std::isfinite(d) && d >= 0.0, "neighbor graph: distance must be finite and >= 0");
            g.adj_[static_cast<std::size_t>(i)].push_back({j, d});
            g.adj_[static_cast<std::size_t>(j)].push_back({i, d});
        }
        for (auto& list : g.adj_) {
            std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
            list.erase(std::unique(list.begin(), list.end(),
                                   [](const Neighbor& a, const Neighbor& b) { return a.index == b.index; }),
                       list.end());
        }
        return g;
    }

    /// Block-diagonal union; sample indices of graph i are offset by the
    /// sizes of graphs 0..i-1.
    static NeighborGraph disjoint_union(const std::vector<const NeighborGraph*>& parts) {
        NeighborGraph g;
        int offset = 0;
        for (const auto* part : parts) {
            for (const auto& list : part->adj_) {
                auto& out = g.adj_.emplace_back();
                for (const auto& nb : list) out.push_back({nb.index + offset, nb.distance});
            }
            offset += static_cast<int>(part->size());
        }
        return g;
    }

    std::size_t size() const noexcept { return adj_.size(); }
    const std::vector<Neighbor>& neighbors(std::size_t n) const noexcept { return adj_[n]; }

    std::size_t edge_count() const noexcept {
        std::size_t s = 0;
        for (const auto& l : adj_) s += l.size();
        return s / 2;
    }

private:
    std::vector<std::vector<Neighbor>> adj_;
};

/// Superpixels sharing a 4-connected boundary are neighbors; with
/// `radius` > 1 the neighborhood extends to superpixels within that many
/// adjacency hops. d_nk is the Euclidean centroid distance in pixels.
inline NeighborGraph build_neighbor_graph(const SuperpixelMap& sp, int radius = 1) {
    detail::require(radius >= 1, "neighbor graph: radius must be >= 1");
    const std::size_t n = static_cast<std::size_t>(sp.n_superpixels);
    std::vector<std::vector<int>> adj(n);
    const auto& lab = sp.labels;
    for (int r = 0; r < lab.height(); ++r)
        for (int c = 0; c < lab.width(); ++c) {
            const int a = lab(r, c);
            if (c + 1 < lab.width() && lab(r, c + 1) != a) {
                adj[static_cast<std::size_t>(a)].push_back(lab(r, c + 1));
                adj[static_cast<std::size_t>(lab(r, c + 1))].push_back(a);
            }
            if (r + 1 < lab.height() && lab(r + 1, c) != a) {
                adj[static_cast<std::size_t>(a)].push_back(lab(r + 1, c));
                adj[static_cast<std::size_t>(lab(r + 1, c))].push_back(a);
            }
        }
    for (auto& l : adj) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
    }
    auto dist = [&](int i, int j) {
        const auto& a = sp.centroids[static_cast<std::size_t>(i)];
        const auto& b = sp.centroids[static_cast<std::size_t>(j)];
        return std::hypot(a[0] - b[0], a[1] - b[1]);
    };
    std::vector<std::tuple<int, int, double>> edges;
    std::vector<int> hop(n, -1);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<int> frontier{static_cast<int>(s)}, visited{static_cast<int>(s)};
        hop[s] = 0;
        for (int h = 1; h <= radius && !frontier.empty(); ++h) {
            std::vector<int> next;
            for (int u : frontier)
                for (int v : adj[static_cast<std::size_t>(u)])
                    if (hop[static_cast<std::size_t>(v)] < 0) {
                        hop[static_cast<std::size_t>(v)] = h;
                        next.push_back(v);
                        visited.push_back(v);
                        if (static_cast<int>(s) < v) edges.emplace_back(static_cast<int>(s), v, dist(static_cast<int>(s), v));
                    }
            frontier = std::move(next);
        }
        for (int v : visited) hop[static_cast<std::size_t>(v)] = -1;
    }
    return NeighborGraph::from_edges(n, edges);
}

// ---------------------------------------------------------------------------
// Model

struct PflicmModel {
    Matrix centers;               ///< C x d
    std::vector<double> gammas;   ///< C, strictly positive
    PflicmParams params;
    std::optional<std::vector<int>> cluster_labels;  ///< class id per cluster
    std::vector<std::string> class_names;            ///< class table for cluster_labels

    std::size_t n_clusters() const noexcept { return centers.rows(); }
    std::size_t n_dims() const noexcept { return centers.cols(); }
    bool labeled() const noexcept { return cluster_labels.has_value(); }

    void validate() const {
        params.validate();
        detail::require(centers.rows() >= 1 && centers.cols() >= 1, "pflicm model: empty centers");
        if (!centers.all_finite()) throw ValidationError("pflicm model: invariant centers finite violated");
        detail::require(gammas.size() == centers.rows(), "pflicm model: gamma count differs from cluster count");
        for (double g : gammas)
            if (!(std::isfinite(g) && g > 0.0))
                throw ValidationError("pflicm model: invariant gammas strictly positive and finite violated");
        if (cluster_labels) {
            detail::require(cluster_labels->size() == centers.rows(), "pflicm model: one label per cluster required");
            detail::require(!class_names.empty(), "pflicm model: labeled model without class names");
            for (int l : *cluster_labels)
                detail::require(l >= 0 && static_cast<std::size_t>(l) < class_names.size(),
                                "pflicm model: cluster label outside class table");
        }
    }
};

inline constexpr double kGammaFloor = 1e-12;

/// C x N squared distances between cluster centers and samples.
inline Matrix center_distances(const FeatureMatrix& x, const Matrix& centers) {
    Matrix d2(centers.rows(), x.n_samples());
    for (std::size_t c = 0; c < centers.rows(); ++c)
        for (std::size_t n = 0; n < x.n_samples(); ++n) d2(c, n) = squared_distance(x.row(n), centers.row(c));
    return d2;
}

/// G_cn = sum over k in N_n of (1 / (d_nk + 1)) (1 - u_ck)^m ||x_k - c_c||^2.
inline double fuzzy_factor(std::size_t n, std::size_t c, const Matrix& memberships, const Matrix& centers,
                           const NeighborGraph& graph, const FeatureMatrix& x, double m) {
    double g = 0.0;
    for (const auto& nb : graph.neighbors(n)) {
        const auto k = static_cast<std::size_t>(nb.index);
        const double one_minus = 1.0 - memberships(c, k);
        g += std::pow(std::max(0.0, one_minus), m) * squared_distance(x.row(k), centers.row(c)) / (nb.distance + 1.0);
    }
    return g;
}

/// All G_cn at once, reusing the precomputed distance matrix.
inline Matrix fuzzy_factors(const Matrix& memberships, const Matrix& dist2, const NeighborGraph& graph, double m) {
    const std::size_t C = dist2.rows();
    const std::size_t N = dist2.cols();
    Matrix g(C, N, 0.0);
    for (std::size_t n = 0; n < N; ++n)
        for (const auto& nb : graph.neighbors(n)) {
            const auto k = static_cast<std::size_t>(nb.index);
            const double w = 1.0 / (nb.distance + 1.0);
            for (std::size_t c = 0; c < C; ++c)
                g(c, n) += w * std::pow(std::max(0.0, 1.0 - memberships(c, k)), m) * dist2(c, k);
        }
    return g;
}

namespace detail {

/// u_cn = 1 / sum_k (D_cn / D_kn)^(1/(m-1)); a zero D gives the lowest such
/// cluster full membership.
inline Matrix memberships_from_dissimilarity(const Matrix& dis, double m) {
    const std::size_t C = dis.rows();
    const std::size_t N = dis.cols();
    const double p = 1.0 / (m - 1.0);
    Matrix u(C, N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t zero = C;
        for (std::size_t c = 0; c < C; ++c)
            if (dis(c, n) == 0.0) {
                zero = c;
                break;
            }
        if (zero < C) {
            u(zero, n) = 1.0;
            continue;
        }
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < C; ++k) s += std::pow(dis(c, n) / dis(k, n), p);
            u(c, n) = 1.0 / s;
        }
    }
    return u;
}

}  // namespace detail

/// Membership update with G evaluated from `prev_memberships` and held
/// fixed. An empty `prev_memberships` means G = 0.
inline Matrix update_memberships(const FeatureMatrix& x, const Matrix& centers, const NeighborGraph& graph,
                                 const PflicmParams& params, const Matrix& prev_memberships) {
    Matrix dis = center_distances(x, centers);
    if (!prev_memberships.empty()) {
        detail::require(prev_memberships.rows() == centers.rows() && prev_memberships.cols() == x.n_samples(),
                        "update_memberships: previous U has the wrong shape");
        detail::require(graph.size() == x.n_samples(), "update_memberships: graph size differs from sample count");
        const Matrix g = fuzzy_factors(prev_memberships, dis, graph, params.m);
        for (std::size_t i = 0; i < dis.data().size(); ++i) dis.data()[i] += g.data()[i];
    }
    return detail::memberships_from_dissimilarity(dis, params.m);
}

/// t_cn = 1 / (1 + (b ||x_n - c_c||^2 / gamma_c)^(1/(q-1))).
inline Matrix update_typicalities(const FeatureMatrix& x, const Matrix& centers, const std::vector<double>& gammas,
                                  const PflicmParams& params) {
    const double p = 1.0 / (params.q - 1.0);
    Matrix t(centers.rows(), x.n_samples());
    for (std::size_t c = 0; c < centers.rows(); ++c)
        for (std::size_t n = 0; n < x.n_samples(); ++n) {
            const double r = params.b * squared_distance(x.row(n), centers.row(c)) / gammas[c];
            t(c, n) = 1.0 / (1.0 + std::pow(r, p));
        }
    return t;
}

struct CenterUpdate {
    Matrix centers;
    std::vector<bool> stalled;  ///< cluster kept its previous center (zero weight)
};

/// c_c = sum_n w_cn x_n / sum_n w_cn with w_cn = a u_cn^m + b t_cn^q.
inline CenterUpdate update_centers(const FeatureMatrix& x, const Matrix& memberships, const Matrix& typicalities,
                                   const PflicmParams& params, const Matrix& prev_centers) {
    const std::size_t C = memberships.rows();
    const std::size_t d = x.n_dims();
    CenterUpdate out{Matrix(C, d, 0.0), std::vector<bool>(C, false)};
    for (std::size_t c = 0; c < C; ++c) {
        double wsum = 0.0;
        auto row = out.centers.row(c);
        for (std::size_t n = 0; n < x.n_samples(); ++n) {
            const double w = params.a * std::pow(memberships(c, n), params.m) +
                             params.b * std::pow(typicalities(c, n), params.q);
            wsum += w;
            const auto xn = x.row(n);
            for (std::size_t k = 0; k < d; ++k) row[k] += w * xn[k];
        }
        if (wsum > 0.0) {
            for (double& v : row) v /= wsum;
        } else {
            detail::require(prev_centers.rows() == C && prev_centers.cols() == d,
                            "update_centers: zero weight and no previous center");
            std::copy(prev_centers.row(c).begin(), prev_centers.row(c).end(), row.begin());
            out.stalled[c] = true;
        }
    }
    return out;
}

/// gamma_c = sum_n u_cn^m ||x_n - c_c||^2 / sum_n u_cn^m, floored at 1e-12.
inline std::vector<double> update_gammas(const FeatureMatrix& x, const Matrix& centers, const Matrix& memberships,
                                         const PflicmParams& params) {
    std::vector<double> g(centers.rows(), kGammaFloor);
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        double num = 0.0, den = 0.0;
        for (std::size_t n = 0; n < x.n_samples(); ++n) {
            const double w = std::pow(memberships(c, n), params.m);
            num += w * squared_distance(x.row(n), centers.row(c));
            den += w;
        }
        if (den > 0.0) g[c] = std::max(kGammaFloor, num / den);
    }
    return g;
}

/// J = sum_c sum_n [a u^m (||x-c||^2 + G) + b t^q ||x-c||^2] + sum_c gamma_c sum_n (1-t)^q,
/// with G computed from `memberships`.
inline double objective(const FeatureMatrix& x, const NeighborGraph& graph, const Matrix& memberships,
                        const Matrix& typicalities, const Matrix& centers, const std::vector<double>& gammas,
                        const PflicmParams& params) {
    const Matrix d2 = center_distances(x, centers);
    const Matrix g = fuzzy_factors(memberships, d2, graph, params.m);
    double j = 0.0;
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        double penalty = 0.0;
        for (std::size_t n = 0; n < x.n_samples(); ++n) {
            const double u = memberships(c, n);
            const double t = typicalities(c, n);
            j += params.a * std::pow(u, params.m) * (d2(c, n) + g(c, n)) + params.b * std::pow(t, params.q) * d2(c, n);
            penalty += std::pow(1.0 - t, params.q);
        }
        j += gammas[c] * penalty;
    }
    return j;
}

struct TraceRow {
    int iter;
    double objective;
    double max_delta_u;
};

struct PflicmFit {
    PflicmModel model;
    AssignmentMaps assignments;
    std::vector<TraceRow> trace;
    bool converged = false;
    int stalled_updates = 0;
};

namespace detail {

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

inline std::vector<std::string> cluster_row_names(const PflicmModel& model) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < model.n_clusters(); ++c)
        names.push_back(model.cluster_labels ? model.class_names[static_cast<std::size_t>((*model.cluster_labels)[c])]
                                             : "cluster" + std::to_string(c));
    return names;
}

/// C distinct sample indices, uniformly at random.
inline std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

}  // namespace detail

/// Alternating optimization: memberships, typicalities, centers, gammas,
/// until the largest membership change drops below `params.tol` or
/// `params.max_iters` is reached.
inline PflicmFit fit_pflicm(const FeatureMatrix& x, const NeighborGraph& graph, const PflicmParams& params,
                            std::uint64_t seed) {
    params.validate();
    const auto C = static_cast<std::size_t>(params.n_clusters);
    if (x.n_samples() < C) throw ValidationError("pflicm fit: fewer samples than clusters (N < C)");
    detail::require(graph.size() == x.n_samples(), "pflicm fit: graph size differs from sample count");

    PflicmFit out;
    Matrix centers(C, x.n_dims());
    const auto picks = detail::sample_distinct(x.n_samples(), C, seed);
    for (std::size_t c = 0; c < C; ++c) std::copy(x.row(picks[c]).begin(), x.row(picks[c]).end(), centers.row(c).begin());

    Matrix u = update_memberships(x, centers, graph, params, Matrix{});
    std::vector<double> gammas = update_gammas(x, centers, u, params);
    Matrix t;
    for (int it = 1; it <= params.max_iters; ++it) {
        Matrix u_next = update_memberships(x, centers, graph, params, u);
        t = update_typicalities(x, centers, gammas, params);
        auto cu = update_centers(x, u_next, t, params, centers);
        for (bool s : cu.stalled) out.stalled_updates += s ? 1 : 0;
        centers = std::move(cu.centers);
        gammas = update_gammas(x, centers, u_next, params);
        const double delta = detail::max_abs_diff(u_next, u);
        u = std::move(u_next);
        const double j = objective(x, graph, u, t, centers, gammas, params);
        if (!std::isfinite(j)) throw NumericError("pflicm fit: objective became non-finite");
        out.trace.push_back({it, j, delta});
        // the first pass starts from the seed U, so its delta reflects G only
        if (it > 1 && delta < params.tol) {
            out.converged = true;
            break;
        }
    }
    out.model.centers = std::move(centers);
    out.model.gammas = std::move(gammas);
    out.model.params = params;
    out.assignments.memberships = std::move(u);
    out.assignments.typicalities = std::move(t);
    out.assignments.class_names = detail::cluster_row_names(out.model);
    out.model.validate();
    return out;
}

struct ClusterLabeling {
    PflicmModel model;
    std::vector<int> fallback_clusters;  ///< clusters with zero weight, given the majority class
};

/// Each cluster takes the class with the largest summed u_cn * t_cn over
/// that class's training samples; ties go to the lowest class id.
inline ClusterLabeling label_clusters(const PflicmModel& model, const LabeledDataset& labeled,
                                      const AssignmentMaps& assignments) {
    labeled.validate();
    const std::size_t C = model.n_clusters();
    const std::size_t L = labeled.n_classes();
    detail::require(assignments.n_rows() == C && assignments.n_samples() == labeled.features.n_samples(),
                    "label_clusters: assignments do not match model and training set");
    std::vector<int> class_count(L, 0);
    for (int l : labeled.labels) ++class_count[static_cast<std::size_t>(l)];
    const int majority = static_cast<int>(std::max_element(class_count.begin(), class_count.end()) - class_count.begin());

    ClusterLabeling out{model, {}};
    std::vector<int> labels(C, 0);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> w(L, 0.0);
        for (std::size_t n = 0; n < labeled.labels.size(); ++n)
            w[static_cast<std::size_t>(labeled.labels[n])] += assignments.memberships(c, n) * assignments.typicalities(c, n);
        double total = 0.0;
        for (double v : w) total += v;
        if (total <= 0.0) {
            labels[c] = majority;
            out.fallback_clusters.push_back(static_cast<int>(c));
            continue;
        }
        labels[c] = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
    }
    out.model.cluster_labels = std::move(labels);
    out.model.class_names = labeled.class_names;
    out.model.validate();
    return out;
}

/// Memberships and typicalities for new samples with centers and gammas
/// frozen. Memberships iterate (G depends on U) until the largest change is
/// below `params.tol` or `params.max_iters` passes.
inline AssignmentMaps predict_pflicm(const PflicmModel& model, const FeatureMatrix& x, const NeighborGraph& graph,
                                     bool require_labels = false) {
    model.validate();
    if (require_labels && !model.labeled()) throw ValidationError("pflicm predict: model has no cluster labels");
    detail::require(x.n_dims() == model.n_dims(), "pflicm predict: feature dimension differs from model");
    detail::require(graph.size() == x.n_samples(), "pflicm predict: graph size differs from sample count");
    const auto& p = model.params;
    Matrix u = update_memberships(x, model.centers, graph, p, Matrix{});
    for (int it = 0; it < p.max_iters; ++it) {
        Matrix next = update_memberships(x, model.centers, graph, p, u);
        const double delta = detail::max_abs_diff(next, u);
        u = std::move(next);
        if (delta < p.tol) break;
    }
    AssignmentMaps out;
    out.memberships = std::move(u);
    out.typicalities = update_typicalities(x, model.centers, model.gammas, p);
    out.class_names = detail::cluster_row_names(model);
    return out;
}

/// l x N per-class scores: the largest u * t over the clusters carrying
/// each class (0 for classes no cluster carries).
inline Matrix class_product_maps(const AssignmentMaps& assign, const PflicmModel& model) {
    if (!model.labeled()) throw ValidationError("pflicm: model has no cluster labels");
    Matrix out(model.class_names.size(), assign.n_samples(), 0.0);
    for (std::size_t c = 0; c < assign.n_rows(); ++c) {
        const auto cls = static_cast<std::size_t>((*model.cluster_labels)[c]);
        for (std::size_t n = 0; n < assign.n_samples(); ++n)
            out(cls, n) = std::max(out(cls, n), assign.memberships(c, n) * assign.typicalities(c, n));
    }
    return out;
}

}  // namespace pseg

#endif  // PSEG_PFLICM_HPP
