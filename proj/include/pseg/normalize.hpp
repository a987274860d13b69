#ifndef PSEG_NORMALIZE_HPP
#define PSEG_NORMALIZE_HPP

#include <cmath>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/types.hpp"

namespace pseg {

/// Per-feature z-score: (x - mean) / stddev. Constant features keep unit
/// scale.
struct Normalizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Normalizer fit(const FeatureMatrix& x) {
        const std::size_t n = x.n_samples();
        const std::size_t d = x.n_dims();
        Normalizer z{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) z.mean[k] += x(i, k);
        for (double& m : z.mean) m /= static_cast<double>(n);
        for (std::size_t k = 0; k < d; ++k) {
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = x(i, k) - z.mean[k];
                ss += e * e;
            }
            const double sd = std::sqrt(ss / static_cast<double>(n));
            z.scale[k] = sd > 0.0 ? sd : 1.0;
        }
        return z;
    }

    FeatureMatrix apply(const FeatureMatrix& x) const {
        detail::require(x.n_dims() == mean.size(), "normalizer: feature dimension mismatch");
        Matrix out = x.matrix();
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t k = 0; k < out.cols(); ++k) out(i, k) = (out(i, k) - mean[k]) / scale[k];
        return FeatureMatrix(std::move(out));
    }

    friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

}  // namespace pseg

#endif  // PSEG_NORMALIZE_HPP
