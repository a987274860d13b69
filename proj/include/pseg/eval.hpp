#ifndef PSEG_EVAL_HPP
#define PSEG_EVAL_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pseg/csv.hpp"
#include "pseg/error.hpp"
#include "pseg/image.hpp"
#include "pseg/normalize.hpp"
#include "pseg/pflicm.hpp"
#include "pseg/pknn.hpp"
#include "pseg/types.hpp"

namespace pseg {

// ---------------------------------------------------------------------------
// Crisp labels

/// Per sample, the class of the cluster maximizing u * t (lowest cluster
/// index on ties).
inline std::vector<int> crisp_labels_pflicm(const AssignmentMaps& assign, const PflicmModel& model) {
    if (!model.labeled()) throw ValidationError("crisp labels: pflicm model has no cluster labels");
    detail::require(assign.n_rows() == model.n_clusters(), "crisp labels: assignment rows differ from cluster count");
    std::vector<int> out(assign.n_samples());
    for (std::size_t n = 0; n < assign.n_samples(); ++n) {
        std::size_t best = 0;
        double best_v = assign.memberships(0, n) * assign.typicalities(0, n);
        for (std::size_t c = 1; c < assign.n_rows(); ++c) {
            const double v = assign.memberships(c, n) * assign.typicalities(c, n);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out[n] = (*model.cluster_labels)[best];
    }
    return out;
}

/// Per row of an N x l confidence matrix, the argmax class (lowest id on
/// ties).
inline std::vector<int> crisp_labels_pknn(const Matrix& conf) {
    detail::require(conf.cols() >= 1, "crisp labels: confidence matrix has no classes");
    std::vector<int> out(conf.rows());
    for (std::size_t n = 0; n < conf.rows(); ++n) {
        const auto row = conf.row(n);
        out[n] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Confusion matrices

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::int64_t> counts;  ///< l x l, row-major

    explicit ConfusionMatrix(std::vector<std::string> names = {})
        : class_names(std::move(names)), counts(class_names.size() * class_names.size(), 0) {}

    std::size_t n_classes() const noexcept { return class_names.size(); }
    std::int64_t operator()(std::size_t t, std::size_t p) const noexcept { return counts[t * n_classes() + p]; }
    std::int64_t& operator()(std::size_t t, std::size_t p) noexcept { return counts[t * n_classes() + p]; }

    std::int64_t total() const noexcept {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
    std::int64_t row_total(std::size_t t) const noexcept {
        std::int64_t s = 0;
        for (std::size_t p = 0; p < n_classes(); ++p) s += (*this)(t, p);
        return s;
    }

    /// Row-normalized rates; empty rows stay zero.
    Matrix rates() const {
        Matrix r(n_classes(), n_classes(), 0.0);
        for (std::size_t t = 0; t < n_classes(); ++t) {
            const auto rt = row_total(t);
            if (rt == 0) continue;
            for (std::size_t p = 0; p < n_classes(); ++p) r(t, p) = static_cast<double>((*this)(t, p)) / static_cast<double>(rt);
        }
        return r;
    }

    double accuracy() const noexcept {
        std::int64_t diag = 0;
        for (std::size_t i = 0; i < n_classes(); ++i) diag += (*this)(i, i);
        const auto tot = total();
        return tot ? static_cast<double>(diag) / static_cast<double>(tot) : 0.0;
    }

    /// Recall of class i (row-normalized diagonal).
    double recall(std::size_t i) const noexcept {
        const auto rt = row_total(i);
        return rt ? static_cast<double>((*this)(i, i)) / static_cast<double>(rt) : 0.0;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        detail::require(o.class_names == class_names, "confusion matrices over different classes");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred,
                                 const std::vector<std::string>& class_names) {
    if (truth.size() != pred.size()) throw ValidationError("confusion: true and predicted label counts differ");
    const int l = static_cast<int>(class_names.size());
    ConfusionMatrix cm(class_names);
    for (std::size_t n = 0; n < truth.size(); ++n) {
        if (truth[n] < 0 || truth[n] >= l || pred[n] < 0 || pred[n] >= l)
            throw ValidationError("confusion: label outside [0, l)");
        ++cm(static_cast<std::size_t>(truth[n]), static_cast<std::size_t>(pred[n]));
    }
    return cm;
}

inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm, bool rates = false) {
    const Matrix r = cm.rates();
    detail::atomic_write(path, [&](std::ostream& os) {
        os << "true\\pred";
        for (const auto& n : cm.class_names) os << ',' << n;
        os << '\n';
        for (std::size_t t = 0; t < cm.n_classes(); ++t) {
            os << cm.class_names[t];
            for (std::size_t p = 0; p < cm.n_classes(); ++p) {
                os << ',';
                if (rates) os << detail::format_double(r(t, p));
                else os << cm(t, p);
            }
            os << '\n';
        }
    });
}

/// Heatmap of row-normalized rates, white (0) to dark blue (1), one square
/// cell per entry.
inline void write_confusion_png(const std::filesystem::path& path, const ConfusionMatrix& cm, int cell = 48) {
    const int l = static_cast<int>(cm.n_classes());
    const int size = std::max(1, l * cell);
    const Matrix r = cm.rates();
    std::vector<unsigned char> rgb(static_cast<std::size_t>(size) * static_cast<std::size_t>(size) * 3, 255);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int t = y / cell;
            const int p = x / cell;
            const bool border = y % cell == 0 || x % cell == 0;
            const double v = l ? r(static_cast<std::size_t>(t), static_cast<std::size_t>(p)) : 0.0;
            auto* px = &rgb[(static_cast<std::size_t>(y) * static_cast<std::size_t>(size) + static_cast<std::size_t>(x)) * 3];
            if (border) {
                px[0] = px[1] = px[2] = 128;
                continue;
            }
            px[0] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - 0.9 * v)));
            px[1] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - 0.7 * v)));
            px[2] = static_cast<unsigned char>(std::lround(255.0 * (1.0 - 0.3 * v)));
        }
    write_rgb_png(path, size, size, rgb);
}

// ---------------------------------------------------------------------------
// Fold plans

struct FoldPlan {
    std::vector<std::vector<int>> folds;  ///< image ids per fold

    std::size_t n_folds() const noexcept { return folds.size(); }

    void validate(std::size_t n_images) const {
        std::vector<int> seen(n_images, 0);
        for (const auto& f : folds)
            for (int id : f) {
                detail::require(id >= 0 && static_cast<std::size_t>(id) < n_images, "fold plan: image id out of range");
                detail::require(seen[static_cast<std::size_t>(id)]++ == 0, "fold plan: folds overlap");
            }
        for (int s : seen) detail::require(s == 1, "fold plan: folds do not cover every image");
    }
};

/// Consecutive ids split as evenly as possible; the extra images go to the
/// last folds (98 images, 3 folds: 32 / 33 / 33).
inline FoldPlan make_fold_plan(int n_images, int n_folds) {
    detail::require(n_folds >= 1, "fold plan: n_folds must be >= 1");
    detail::require(n_images >= n_folds, "fold plan: fewer images than folds");
    FoldPlan plan;
    const int base = n_images / n_folds;
    const int extra = n_images % n_folds;
    int next = 0;
    for (int f = 0; f < n_folds; ++f) {
        const int size = base + (f >= n_folds - extra ? 1 : 0);
        auto& fold = plan.folds.emplace_back();
        for (int i = 0; i < size; ++i) fold.push_back(next++);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Cross validation

/// One image reduced to superpixel samples: features, spatial neighbor
/// graph and per-superpixel ground-truth class.
struct EvalImage {
    FeatureMatrix features;
    NeighborGraph graph;
    std::vector<int> truth;
};

enum class Algorithm { Pflicm, Pknn };

inline const char* algorithm_name(Algorithm a) { return a == Algorithm::Pflicm ? "pflicm" : "pknn"; }

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "pflicm") return Algorithm::Pflicm;
    if (s == "pknn") return Algorithm::Pknn;
    throw ValidationError("unknown algorithm '" + s + "' (expected pflicm or pknn)");
}

struct CvOptions {
    PflicmParams pflicm;
    PknnParams pknn;
    bool normalize = true;
    std::uint64_t seed = 0;
};

struct FoldResult {
    ConfusionMatrix confusion;
    double train_seconds = 0.0;
    double test_seconds = 0.0;
    std::vector<std::string> warnings;
};

struct CvResult {
    std::vector<FoldResult> folds;

    ConfusionMatrix pooled() const {
        ConfusionMatrix total(folds.front().confusion.class_names);
        for (const auto& f : folds) total += f.confusion;
        return total;
    }
};

namespace detail {

inline FeatureMatrix stack_rows(const std::vector<const FeatureMatrix*>& parts) {
    std::size_t n = 0;
    const std::size_t d = parts.front()->n_dims();
    for (const auto* p : parts) {
        require(p->n_dims() == d, "feature dimension differs between images");
        n += p->n_samples();
    }
    std::vector<double> values;
    values.reserve(n * d);
    for (const auto* p : parts) values.insert(values.end(), p->matrix().data().begin(), p->matrix().data().end());
    return FeatureMatrix(n, d, std::move(values));
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Trained state for one algorithm plus the normalization it was fitted
/// with.
struct TrainedSegmenter {
    Algorithm algorithm;
    std::optional<Normalizer> normalization;
    std::optional<PflicmModel> pflicm;
    std::optional<PknnModel> pknn;
};

/// Trains on the given images. PFLICM clusters the pooled superpixels
/// (block-diagonal neighbor graph) and then labels clusters from the
/// ground truth; PKNN fits on the pooled labeled superpixels.
inline TrainedSegmenter train_segmenter(const std::vector<const EvalImage*>& train,
                                        const std::vector<std::string>& class_names, Algorithm algo,
                                        const CvOptions& opt) {
    detail::require(!train.empty(), "training set is empty");
    std::vector<const FeatureMatrix*> feats;
    std::vector<int> labels;
    for (const auto* im : train) {
        feats.push_back(&im->features);
        labels.insert(labels.end(), im->truth.begin(), im->truth.end());
    }
    FeatureMatrix x = detail::stack_rows(feats);
    TrainedSegmenter out{algo, std::nullopt, std::nullopt, std::nullopt};
    if (opt.normalize) {
        out.normalization = Normalizer::fit(x);
        x = out.normalization->apply(x);
    }
    LabeledDataset data(std::move(x), std::move(labels), class_names);
    if (algo == Algorithm::Pflicm) {
        std::vector<const NeighborGraph*> graphs;
        for (const auto* im : train) graphs.push_back(&im->graph);
        const auto graph = NeighborGraph::disjoint_union(graphs);
        auto fitted = fit_pflicm(data.features, graph, opt.pflicm, opt.seed);
        out.pflicm = label_clusters(fitted.model, data, fitted.assignments).model;
    } else {
        out.pknn = fit_pknn(std::move(data), opt.pknn);
    }
    return out;
}

/// Per-class score matrix (l x N) and crisp labels for one image.
struct Segmentation {
    Matrix class_scores;
    std::vector<int> labels;
};

inline Segmentation segment_samples(const TrainedSegmenter& model, const FeatureMatrix& raw,
                                    const NeighborGraph& graph) {
    const FeatureMatrix x = model.normalization ? model.normalization->apply(raw) : raw;
    Segmentation out;
    if (model.algorithm == Algorithm::Pflicm) {
        const auto assign = predict_pflicm(*model.pflicm, x, graph, true);
        out.class_scores = class_product_maps(assign, *model.pflicm);
        out.labels = crisp_labels_pflicm(assign, *model.pflicm);
    } else {
        const Matrix conf = classify_batch(*model.pknn, x);
        out.labels = crisp_labels_pknn(conf);
        out.class_scores = Matrix(conf.cols(), conf.rows());
        for (std::size_t n = 0; n < conf.rows(); ++n)
            for (std::size_t c = 0; c < conf.cols(); ++c) out.class_scores(c, n) = conf(n, c);
    }
    return out;
}

/// Trains on all folds but one, predicts the held-out fold and tallies a
/// confusion matrix, for every fold. A single-fold plan trains and tests on
/// the same images.
inline CvResult run_cross_validation(const std::vector<EvalImage>& images, const std::vector<std::string>& class_names,
                                     const FoldPlan& plan, Algorithm algo, const CvOptions& opt) {
    plan.validate(images.size());
    CvResult result;
    for (std::size_t f = 0; f < plan.n_folds(); ++f) {
        std::vector<const EvalImage*> train, test;
        for (std::size_t g = 0; g < plan.n_folds(); ++g)
            for (int id : plan.folds[g]) {
                if (g != f || plan.n_folds() == 1) train.push_back(&images[static_cast<std::size_t>(id)]);
                if (g == f) test.push_back(&images[static_cast<std::size_t>(id)]);
            }
        FoldResult fr{ConfusionMatrix(class_names), 0.0, 0.0, {}};
        std::vector<int> present(class_names.size(), 0);
        for (const auto* im : train)
            for (int l : im->truth) present[static_cast<std::size_t>(l)] = 1;
        for (std::size_t c = 0; c < class_names.size(); ++c)
            if (!present[c])
                fr.warnings.push_back("fold " + std::to_string(f) + ": no training samples of class '" + class_names[c] + "'");

        auto t0 = std::chrono::steady_clock::now();
        const auto model = train_segmenter(train, class_names, algo, opt);
        fr.train_seconds = detail::seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        std::vector<int> truth, pred;
        for (const auto* im : test) {
            const auto seg = segment_samples(model, im->features, im->graph);
            truth.insert(truth.end(), im->truth.begin(), im->truth.end());
            pred.insert(pred.end(), seg.labels.begin(), seg.labels.end());
        }
        fr.test_seconds = detail::seconds_since(t0);
        fr.confusion = confusion(truth, pred, class_names);
        result.folds.push_back(std::move(fr));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Timing

struct TimingRow {
    std::size_t n;
    double train_seconds;
    double test_seconds;
};

enum class ScalingMode {
    VaryTest,   ///< training set fixed, test set has N samples
    VaryTrain,  ///< training set has N samples, test set fixed
};

struct BenchmarkOptions {
    ScalingMode mode = ScalingMode::VaryTest;
    std::size_t fixed_size = 2000;  ///< size of the set that is held fixed
    std::size_t dims = 34;
    int n_classes = 4;
    int repetitions = 3;
    int pflicm_test_sweeps = 10;  ///< membership sweeps per prediction
    std::uint64_t seed = 7;
};

namespace detail {

/// Gaussian blobs laid out on a square grid of sample positions, with
/// 4-neighbor spatial edges of unit distance.
inline EvalImage benchmark_samples(std::size_t n, std::size_t dims, int n_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<double> values(n * dims);
    std::vector<int> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(n_classes));
        truth[i] = cls;
        for (std::size_t k = 0; k < dims; ++k)
            values[i * dims + k] = (k % static_cast<std::size_t>(n_classes) == static_cast<std::size_t>(cls) ? 2.0 : 0.0) + noise(rng);
    }
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
    std::vector<std::tuple<int, int, double>> edges;
    for (std::size_t i = 0; i < n; ++i) {
        if ((i + 1) % side != 0 && i + 1 < n) edges.emplace_back(static_cast<int>(i), static_cast<int>(i + 1), 1.0);
        if (i + side < n) edges.emplace_back(static_cast<int>(i), static_cast<int>(i + side), 1.0);
    }
    return {FeatureMatrix(n, dims, std::move(values)), NeighborGraph::from_edges(n, edges), std::move(truth)};
}

template <typename Fn>
double median_seconds(int reps, Fn&& fn) {
    std::vector<double> t;
    for (int r = 0; r < std::max(1, reps); ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        t.push_back(seconds_since(t0));
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

}  // namespace detail

/// Median-of-repetitions wall-clock train and test times for each size.
/// PFLICM predictions run a fixed number of membership sweeps so the test
/// cost is comparable across trained models.
inline std::vector<TimingRow> timing_benchmark(const std::vector<std::size_t>& sizes, Algorithm algo,
                                               const CvOptions& params, const BenchmarkOptions& bench = {}) {
    std::vector<TimingRow> rows;
    std::vector<std::string> names;
    for (int c = 0; c < bench.n_classes; ++c) names.push_back("class" + std::to_string(c));
    for (std::size_t n : sizes) {
        const std::size_t n_train = bench.mode == ScalingMode::VaryTrain ? n : bench.fixed_size;
        const std::size_t n_test = bench.mode == ScalingMode::VaryTest ? n : bench.fixed_size;
        const auto train = detail::benchmark_samples(n_train, bench.dims, bench.n_classes, bench.seed);
        const auto test = detail::benchmark_samples(n_test, bench.dims, bench.n_classes, bench.seed + 1);
        CvOptions opt = params;
        opt.normalize = false;
        TrainedSegmenter model{algo, std::nullopt, std::nullopt, std::nullopt};
        TimingRow row{n, 0.0, 0.0};
        row.train_seconds = detail::median_seconds(bench.repetitions, [&] { model = train_segmenter({&train}, names, algo, opt); });
        if (algo == Algorithm::Pflicm) {
            PflicmModel frozen = *model.pflicm;
            row.test_seconds = detail::median_seconds(bench.repetitions, [&] {
                Matrix u = update_memberships(test.features, frozen.centers, test.graph, frozen.params, Matrix{});
                for (int s = 0; s < bench.pflicm_test_sweeps; ++s)
                    u = update_memberships(test.features, frozen.centers, test.graph, frozen.params, u);
                const Matrix t = update_typicalities(test.features, frozen.centers, frozen.gammas, frozen.params);
                AssignmentMaps a{std::move(u), t, {}};
                volatile auto sink = crisp_labels_pflicm(a, frozen).size();
                (void)sink;
            });
        } else {
            row.test_seconds = detail::median_seconds(bench.repetitions, [&] {
                volatile auto sink = crisp_labels_pknn(classify_batch(*model.pknn, test.features)).size();
                (void)sink;
            });
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_timing_csv(const std::filesystem::path& path, const std::vector<TimingRow>& rows) {
    detail::atomic_write(path, [&](std::ostream& os) {
        os << "n,train_seconds,test_seconds\n";
        for (const auto& r : rows)
            os << r.n << ',' << detail::format_double(r.train_seconds) << ',' << detail::format_double(r.test_seconds) << '\n';
    });
}

}  // namespace pseg

#endif  // PSEG_EVAL_HPP
