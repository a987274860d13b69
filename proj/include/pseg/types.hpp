#ifndef PSEG_TYPES_HPP
#define PSEG_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/matrix.hpp"

namespace pseg {

/// N samples by d feature dimensions. Entries are always finite.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(Matrix data) : data_(std::move(data)) {
        detail::require(data_.rows() >= 1 && data_.cols() >= 1,
                        "feature matrix needs n_samples >= 1 and n_dims >= 1");
        if (!data_.all_finite()) throw ValidationError("feature matrix contains non-finite values");
    }
    FeatureMatrix(std::size_t n, std::size_t d, std::vector<double> values)
        : FeatureMatrix(Matrix(n, d, std::move(values))) {}

    std::size_t n_samples() const noexcept { return data_.rows(); }
    std::size_t n_dims() const noexcept { return data_.cols(); }
    std::span<const double> row(std::size_t n) const noexcept { return data_.row(n); }
    double operator()(std::size_t n, std::size_t k) const noexcept { return data_(n, k); }
    const Matrix& matrix() const noexcept { return data_; }

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    Matrix data_;
};

struct PflicmParams {
    double a = 14.0;  ///< membership weight
    double b = 1.4;   ///< typicality weight
    double m = 1.8;   ///< membership fuzzifier
    double q = 2.8;   ///< typicality fuzzifier
    int n_clusters = 4;
    int window_radius = 1;  ///< neighborhood hops on the superpixel adjacency graph
    int max_iters = 100;
    double tol = 1e-5;

    void validate() const {
        using detail::require;
        require(std::isfinite(a) && a >= 0.0, "pflicm: invariant a >= 0 violated");
        require(std::isfinite(b) && b >= 0.0, "pflicm: invariant b >= 0 violated");
        require(a + b > 0.0, "pflicm: invariant a + b > 0 violated");
        require(std::isfinite(m) && m > 1.0, "pflicm: invariant m > 1 violated");
        require(std::isfinite(q) && q > 1.0, "pflicm: invariant q > 1 violated");
        require(n_clusters >= 1, "pflicm: invariant n_clusters >= 1 violated");
        require(window_radius >= 1, "pflicm: invariant window_radius >= 1 violated");
        require(max_iters >= 1, "pflicm: invariant max_iters >= 1 violated");
        require(std::isfinite(tol) && tol > 0.0, "pflicm: invariant tol > 0 violated");
    }
    friend bool operator==(const PflicmParams&, const PflicmParams&) = default;
};

struct PknnParams {
    int k = 6;
    double m = 2.0;
    double eta = 0.01;

    void validate() const {
        using detail::require;
        require(k >= 1, "pknn: invariant k >= 1 violated");
        require(std::isfinite(m) && m > 1.0, "pknn: invariant m > 1 violated");
        require(std::isfinite(eta) && eta >= 0.0, "pknn: invariant eta >= 0 violated");
    }
    friend bool operator==(const PknnParams&, const PknnParams&) = default;
};

/// Column n of `memberships` / `typicalities` describes sample n; row c
/// is cluster (or class) c, named by `class_names[c]`.
struct AssignmentMaps {
    Matrix memberships;
    Matrix typicalities;
    std::vector<std::string> class_names;

    std::size_t n_rows() const noexcept { return memberships.rows(); }
    std::size_t n_samples() const noexcept { return memberships.cols(); }

    /// Throws NumericError when a membership column does not sum to one
    /// (within 1e-9) or any entry leaves [0,1].
    void check() const {
        if (memberships.rows() != typicalities.rows() || memberships.cols() != typicalities.cols())
            throw ValidationError("assignment maps: U and T shapes differ");
        for (std::size_t n = 0; n < memberships.cols(); ++n) {
            double s = 0.0;
            for (std::size_t c = 0; c < memberships.rows(); ++c) {
                const double u = memberships(c, n);
                if (!(u >= 0.0 && u <= 1.0)) throw NumericError("membership outside [0,1]");
                s += u;
            }
            if (std::abs(s - 1.0) > 1e-9) throw NumericError("membership column does not sum to 1");
        }
        for (double t : typicalities.data())
            if (!(t >= 0.0 && t <= 1.0)) throw NumericError("typicality outside [0,1]");
    }
};

struct LabeledDataset {
    FeatureMatrix features;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    LabeledDataset() = default;
    LabeledDataset(FeatureMatrix f, std::vector<int> l, std::vector<std::string> names)
        : features(std::move(f)), labels(std::move(l)), class_names(std::move(names)) {
        validate();
    }

    std::size_t n_classes() const noexcept { return class_names.size(); }

    void validate() const {
        detail::require(!class_names.empty(), "labeled dataset: class_names is empty");
        std::set<std::string> uniq(class_names.begin(), class_names.end());
        detail::require(uniq.size() == class_names.size(), "labeled dataset: class_names not unique");
        detail::require(labels.size() == features.n_samples(),
                        "labeled dataset: label count differs from sample count");
        for (int l : labels)
            detail::require(l >= 0 && static_cast<std::size_t>(l) < class_names.size(),
                            "labeled dataset: label outside [0, l)");
    }
};

}  // namespace pseg

#endif  // PSEG_TYPES_HPP
