#ifndef PSEG_PKNN_HPP
#define PSEG_PKNN_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/kdtree.hpp"
#include "pseg/matrix.hpp"
#include "pseg/types.hpp"

namespace pseg {

inline constexpr double kOwnClassBase = 0.51;
inline constexpr double kNeighborShare = 0.49;

/// Training set with its fuzzy label matrix and neighbor index. Immutable
/// once fitted; `classify` is safe to call concurrently.
struct PknnModel {
    LabeledDataset train;
    Matrix train_fuzzy;  ///< N x l
    PknnParams params;
    std::shared_ptr<const KdTree> index;

    std::size_t n_classes() const noexcept { return train.n_classes(); }
    const std::vector<std::string>& class_names() const noexcept { return train.class_names; }

    /// Checks every fuzzy row against the 0.51 / 0.49 construction.
    void validate() const {
        params.validate();
        train.validate();
        const std::size_t n = train.features.n_samples();
        const std::size_t l = train.n_classes();
        detail::require(train_fuzzy.rows() == n && train_fuzzy.cols() == l, "pknn model: fuzzy matrix shape mismatch");
        detail::require(n >= static_cast<std::size_t>(params.k) + 1, "pknn model: needs at least k + 1 training samples");
        const double K = params.k;
        for (std::size_t i = 0; i < n; ++i) {
            const auto own = static_cast<std::size_t>(train.labels[i]);
            double count_sum = 0.0;
            for (std::size_t c = 0; c < l; ++c) {
                const double v = train_fuzzy(i, c);
                if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("pknn model: fuzzy entry outside [0,1]");
                const double share = c == own ? v - kOwnClassBase : v;
                if (c == own && share < -1e-12)
                    throw ValidationError("pknn model: invariant own-class membership >= 0.51 violated");
                const double count = share * K / kNeighborShare;
                if (std::abs(count - std::round(count)) > 1e-9)
                    throw ValidationError("pknn model: fuzzy entry is not a multiple of 0.49/K");
                count_sum += std::round(count);
            }
            if (count_sum > K + 0.5) throw ValidationError("pknn model: neighbor counts exceed K");
        }
        if (!index || index->size() != n) throw ValidationError("pknn model: missing neighbor index");
    }
};

/// The k nearest indexed points, ascending by (distance, index).
inline std::vector<NeighborHit> knn_search(const KdTree& index, std::span<const double> query, std::size_t k) {
    return index.knn(query, k);
}

/// Row i: 0.51 + (n_j/K) 0.49 for the sample's own class j and (n_c/K) 0.49
/// for every other class c, where n_c counts class c among the K nearest
/// other training samples.
inline Matrix init_fuzzy_labels(const LabeledDataset& train, const KdTree& index, int k) {
    train.validate();
    const std::size_t n = train.features.n_samples();
    if (n < 2) throw ValidationError("pknn: at least two training samples are required");
    detail::require(k >= 1 && static_cast<std::size_t>(k) <= n - 1, "pknn: k must be in [1, N-1]");
    detail::require(index.size() == n, "pknn: index does not match training set");
    const std::size_t K = static_cast<std::size_t>(k);
    Matrix fuzzy(n, train.n_classes(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto hits = index.knn(train.features.row(i), K + 1);
        auto self = std::find_if(hits.begin(), hits.end(), [&](const NeighborHit& h) { return h.index == i; });
        if (self != hits.end()) hits.erase(self);
        hits.resize(K);
        std::vector<int> counts(train.n_classes(), 0);
        for (const auto& h : hits) ++counts[static_cast<std::size_t>(train.labels[h.index])];
        for (std::size_t c = 0; c < train.n_classes(); ++c) {
            const double share = static_cast<double>(counts[c]) / static_cast<double>(K) * kNeighborShare;
            fuzzy(i, c) = static_cast<int>(c) == train.labels[i] ? kOwnClassBase + share : share;
        }
    }
    return fuzzy;
}

inline Matrix init_fuzzy_labels(const LabeledDataset& train, int k) {
    return init_fuzzy_labels(train, KdTree(train.features.matrix()), k);
}

/// w = 1 / (1 + max(0, distance - eta)^(2/(m-1))).
inline double possibilistic_weight(double distance, const PknnParams& params) {
    const double excess = std::max(0.0, distance - params.eta);
    return 1.0 / (1.0 + std::pow(excess, 2.0 / (params.m - 1.0)));
}

inline PknnModel fit_pknn(LabeledDataset train, const PknnParams& params) {
    params.validate();
    train.validate();
    if (train.features.n_samples() < static_cast<std::size_t>(params.k) + 1)
        throw ValidationError("pknn fit: needs at least k + 1 training samples");
    PknnModel model;
    model.index = std::make_shared<const KdTree>(train.features.matrix());
    model.train_fuzzy = init_fuzzy_labels(train, *model.index, params.k);
    model.train = std::move(train);
    model.params = params;
    return model;
}

/// Conf^i(x) = (1/K) sum over the K nearest training samples y_k of
/// mu^i(y_k) w(||x - y_k||). Entries lie in [0,1] and need not sum to 1.
inline std::vector<double> classify(const PknnModel& model, std::span<const double> query) {
    detail::require(model.index != nullptr, "pknn classify: model has no index");
    detail::require(query.size() == model.train.features.n_dims(), "pknn classify: query dimension differs from model");
    const auto K = static_cast<std::size_t>(model.params.k);
    const auto hits = model.index->knn(query, K);
    std::vector<double> conf(model.n_classes(), 0.0);
    for (const auto& h : hits) {
        const double w = possibilistic_weight(h.distance, model.params);
        for (std::size_t c = 0; c < conf.size(); ++c) conf[c] += model.train_fuzzy(h.index, c) * w;
    }
    for (double& v : conf) v /= static_cast<double>(K);
    return conf;
}

/// N x l confidences for every row of `x`.
inline Matrix classify_batch(const PknnModel& model, const FeatureMatrix& x) {
    Matrix out(x.n_samples(), model.n_classes());
    for (std::size_t n = 0; n < x.n_samples(); ++n) {
        const auto conf = classify(model, x.row(n));
        std::copy(conf.begin(), conf.end(), out.row(n).begin());
    }
    return out;
}

}  // namespace pseg

#endif  // PSEG_PKNN_HPP
