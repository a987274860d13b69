#ifndef PSEG_SUPERPIXELS_HPP
#define PSEG_SUPERPIXELS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pseg/csv.hpp"
#include "pseg/error.hpp"
#include "pseg/features.hpp"
#include "pseg/image.hpp"
#include "pseg/types.hpp"

namespace pseg {

/// Dense superpixel id per pixel, with per-id pixel counts and centroids
/// (row, col). Every id is a single 4-connected region.
struct SuperpixelMap {
    LabelImage labels;
    int n_superpixels = 0;
    std::vector<int> pixel_counts;
    std::vector<std::array<double, 2>> centroids;
    /// Extra components produced when an input label had to be split.
    int split_components = 0;

    int height() const noexcept { return labels.height(); }
    int width() const noexcept { return labels.width(); }
};

namespace detail {

/// Flood fills the 4-connected component of `seed` over pixels whose label
/// equals `value`, writing `id` into `comp`. Returns the pixel indices.
inline std::vector<int> flood_component(const LabelImage& labels, LabelImage& comp, int seed, int value, int id) {
    const int w = labels.width();
    const int h = labels.height();
    std::vector<int> pixels{seed};
    comp.data()[static_cast<std::size_t>(seed)] = id;
    for (std::size_t head = 0; head < pixels.size(); ++head) {
        const int p = pixels[head];
        const int r = p / w;
        const int c = p % w;
        const int nbrs[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& nb : nbrs) {
            if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
            const int q = nb[0] * w + nb[1];
            if (comp.data()[static_cast<std::size_t>(q)] != -1 || labels.data()[static_cast<std::size_t>(q)] != value) continue;
            comp.data()[static_cast<std::size_t>(q)] = id;
            pixels.push_back(q);
        }
    }
    return pixels;
}

}  // namespace detail

/// Fills counts and centroids from an already dense, connected label image.
inline SuperpixelMap make_superpixel_map(LabelImage labels, int n_superpixels) {
    SuperpixelMap sp;
    sp.n_superpixels = n_superpixels;
    sp.pixel_counts.assign(static_cast<std::size_t>(n_superpixels), 0);
    std::vector<std::array<double, 2>> sums(static_cast<std::size_t>(n_superpixels), {0.0, 0.0});
    for (int r = 0; r < labels.height(); ++r)
        for (int c = 0; c < labels.width(); ++c) {
            const int id = labels(r, c);
            detail::require(id >= 0 && id < n_superpixels, "superpixel id outside [0, n_superpixels)");
            ++sp.pixel_counts[static_cast<std::size_t>(id)];
            sums[static_cast<std::size_t>(id)][0] += r;
            sums[static_cast<std::size_t>(id)][1] += c;
        }
    sp.centroids.resize(static_cast<std::size_t>(n_superpixels));
    for (std::size_t i = 0; i < sums.size(); ++i) {
        detail::require(sp.pixel_counts[i] >= 1, "superpixel id without pixels");
        sp.centroids[i] = {sums[i][0] / sp.pixel_counts[i], sums[i][1] / sp.pixel_counts[i]};
    }
    sp.labels = std::move(labels);
    return sp;
}

/// Relabels arbitrary nonnegative labels into dense ids, one per 4-connected
/// component. Ids are ordered by (input label, first pixel in raster order).
inline SuperpixelMap relabel_superpixels(const LabelImage& raw) {
    detail::require(raw.size() > 0, "superpixel label image is empty");
    for (int v : raw.data()) detail::require(v >= 0, "superpixel labels must be nonnegative");
    LabelImage comp(raw.height(), raw.width(), -1);
    std::vector<std::tuple<int, int, int>> order;  // (label, first pixel, component)
    int n_comp = 0;
    for (int p = 0; p < static_cast<int>(raw.size()); ++p) {
        if (comp.data()[static_cast<std::size_t>(p)] != -1) continue;
        detail::flood_component(raw, comp, p, raw.data()[static_cast<std::size_t>(p)], n_comp);
        order.emplace_back(raw.data()[static_cast<std::size_t>(p)], p, n_comp);
        ++n_comp;
    }
    std::sort(order.begin(), order.end());
    std::vector<int> remap(static_cast<std::size_t>(n_comp));
    int distinct = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        remap[static_cast<std::size_t>(std::get<2>(order[i]))] = static_cast<int>(i);
        if (i == 0 || std::get<0>(order[i]) != std::get<0>(order[i - 1])) ++distinct;
    }
    for (int& v : comp.data()) v = remap[static_cast<std::size_t>(v)];
    auto sp = make_superpixel_map(std::move(comp), n_comp);
    sp.split_components = n_comp - distinct;
    return sp;
}

namespace detail {

/// Grid of nx * ny seeds closest to `target` with near-square cells.
inline std::pair<int, int> superpixel_grid(int height, int width, int target) {
    int best_nx = 1, best_ny = 1;
    double best = std::numeric_limits<double>::infinity();
    for (int nx = std::min(width, target); nx >= 1; --nx) {
        const int ny = std::clamp(static_cast<int>(std::lround(static_cast<double>(target) / nx)), 1, height);
        const double count_err = std::abs(std::log(static_cast<double>(nx) * ny / target));
        const double aspect_err = std::abs(std::log((static_cast<double>(width) / nx) / (static_cast<double>(height) / ny)));
        const double score = 4.0 * count_err + aspect_err;
        if (score < best - 1e-12) {
            best = score;
            best_nx = nx;
            best_ny = ny;
        }
    }
    return {best_nx, best_ny};
}

}  // namespace detail

/// Grid-seeded local k-means in (intensity, row, col) followed by a
/// connectivity pass. The distance is dI^2 + (compactness / S)^2 * ds^2 with
/// S the grid step, so small `compactness` follows intensity edges and large
/// `compactness` gives regular cells.
inline SuperpixelMap segment_superpixels(const Image& image, int target_count, double compactness,
                                         int iterations = 10) {
    const int h = image.height();
    const int w = image.width();
    detail::require(h >= 1 && w >= 1, "superpixels: empty image");
    detail::require(target_count >= 1, "superpixels: target_count must be >= 1");
    detail::require(static_cast<std::size_t>(target_count) <= image.size(),
                    "superpixels: target_count exceeds pixel count");
    detail::require(std::isfinite(compactness) && compactness > 0.0, "superpixels: compactness must be > 0");

    const auto [nx, ny] = detail::superpixel_grid(h, w, target_count);
    const double step_r = static_cast<double>(h) / ny;
    const double step_c = static_cast<double>(w) / nx;
    const double spatial = compactness * compactness / (step_r * step_c);
    const int n_seeds = nx * ny;

    struct Center {
        double intensity, row, col;
    };
    std::vector<Center> centers;
    centers.reserve(static_cast<std::size_t>(n_seeds));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int r0 = static_cast<int>(std::lround(j * step_r));
            const int r1 = static_cast<int>(std::lround((j + 1) * step_r));
            const int c0 = static_cast<int>(std::lround(i * step_c));
            const int c1 = static_cast<int>(std::lround((i + 1) * step_c));
            double s = 0.0;
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) s += image(r, c);
            const double area = std::max(1, (r1 - r0) * (c1 - c0));
            centers.push_back({s / area, (j + 0.5) * step_r - 0.5, (i + 0.5) * step_c - 0.5});
        }

    LabelImage assign(h, w, -1);
    std::vector<double> best(image.size());
    const int win_r = static_cast<int>(std::ceil(step_r));
    const int win_c = static_cast<int>(std::ceil(step_c));
    for (int it = 0; it < iterations; ++it) {
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        for (int k = 0; k < n_seeds; ++k) {
            const auto& ck = centers[static_cast<std::size_t>(k)];
            const int rc = static_cast<int>(std::lround(ck.row));
            const int cc = static_cast<int>(std::lround(ck.col));
            for (int r = std::max(0, rc - win_r); r <= std::min(h - 1, rc + win_r); ++r)
                for (int c = std::max(0, cc - win_c); c <= std::min(w - 1, cc + win_c); ++c) {
                    const double di = image(r, c) - ck.intensity;
                    const double dr = r - ck.row;
                    const double dc = c - ck.col;
                    const double d = di * di + spatial * (dr * dr + dc * dc);
                    auto& b = best[static_cast<std::size_t>(r) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c)];
                    if (d < b) {
                        b = d;
                        assign(r, c) = k;
                    }
                }
        }
        std::vector<Center> sums(static_cast<std::size_t>(n_seeds), {0.0, 0.0, 0.0});
        std::vector<int> counts(static_cast<std::size_t>(n_seeds), 0);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const int k = assign(r, c);
                if (k < 0) continue;
                auto& s = sums[static_cast<std::size_t>(k)];
                s.intensity += image(r, c);
                s.row += r;
                s.col += c;
                ++counts[static_cast<std::size_t>(k)];
            }
        for (int k = 0; k < n_seeds; ++k) {
            const int n = counts[static_cast<std::size_t>(k)];
            if (n == 0) continue;
            const auto& s = sums[static_cast<std::size_t>(k)];
            centers[static_cast<std::size_t>(k)] = {s.intensity / n, s.row / n, s.col / n};
        }
    }
    // the windows overlap every pixel, but keep unassigned pixels defined
    for (int& v : assign.data())
        if (v < 0) v = 0;

    // connectivity: each component gets its own id unless it is small, in
    // which case it joins the component left of / above its first pixel
    const int min_size = std::max(1, static_cast<int>(step_r * step_c / 4.0));
    LabelImage comp(h, w, -1);
    LabelImage out(h, w, -1);
    int next = 0;
    for (int p = 0; p < static_cast<int>(image.size()); ++p) {
        if (comp.data()[static_cast<std::size_t>(p)] != -1) continue;
        const auto pixels = detail::flood_component(assign, comp, p, assign.data()[static_cast<std::size_t>(p)], p);
        int id = -1;
        if (static_cast<int>(pixels.size()) < min_size) {
            const int r = p / w;
            const int c = p % w;
            if (c > 0) id = out(r, c - 1);
            else if (r > 0) id = out(r - 1, c);
        }
        if (id < 0) id = next++;
        for (int q : pixels) out.data()[static_cast<std::size_t>(q)] = id;
    }
    return make_superpixel_map(std::move(out), next);
}

/// Reads a superpixel label file (PNG, or CSV of integers) and enforces
/// dense, 4-connected ids.
inline SuperpixelMap load_superpixels(const std::filesystem::path& path, int height, int width) {
    LabelImage raw;
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".csv") {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open '" + path.string() + "'");
        std::vector<int> vals;
        std::string line;
        int rows = 0, cols = -1;
        while (std::getline(is, line)) {
            if (line.empty() || line == "\r") continue;
            auto cells = detail::split_csv_line(line);
            if (cols < 0) cols = static_cast<int>(cells.size());
            if (static_cast<int>(cells.size()) != cols) throw IoError("ragged superpixel CSV '" + path.string() + "'");
            for (const auto& cell : cells) {
                const double v = detail::parse_double(cell, path.string());
                if (v != std::floor(v)) throw IoError("non-integer superpixel label in '" + path.string() + "'");
                vals.push_back(static_cast<int>(v));
            }
            ++rows;
        }
        if (rows == 0) throw IoError("empty superpixel CSV '" + path.string() + "'");
        raw = LabelImage(rows, cols);
        raw.data() = std::move(vals);
    } else {
        raw = read_label_png(path);
    }
    if (raw.height() != height || raw.width() != width)
        throw ValidationError("superpixel map shape " + std::to_string(raw.height()) + "x" +
                              std::to_string(raw.width()) + " does not match image " + std::to_string(height) +
                              "x" + std::to_string(width));
    return relabel_superpixels(raw);
}

enum class SuperpixelFormat { Auto, Png, Csv };

/// PNG (16-bit) when ids fit, else CSV, unless a format is forced.
inline void save_superpixels(const std::filesystem::path& path, const SuperpixelMap& sp,
                             SuperpixelFormat fmt = SuperpixelFormat::Auto) {
    if (fmt == SuperpixelFormat::Auto) fmt = sp.n_superpixels < 65536 ? SuperpixelFormat::Png : SuperpixelFormat::Csv;
    if (fmt == SuperpixelFormat::Png) {
        if (sp.n_superpixels >= 65536) throw ValidationError("too many superpixels for a 16-bit PNG");
        write_label_png(path, sp.labels, true);
        return;
    }
    detail::atomic_write(path, [&](std::ostream& os) {
        for (int r = 0; r < sp.height(); ++r) {
            for (int c = 0; c < sp.width(); ++c) os << (c ? "," : "") << sp.labels(r, c);
            os << '\n';
        }
    });
}

/// Row i is the mean pixel feature vector over superpixel i.
inline FeatureMatrix aggregate_features(const FeatureStack& stack, const SuperpixelMap& sp) {
    if (stack.height != sp.height() || stack.width != sp.width())
        throw ValidationError("aggregate_features: feature stack and superpixel map dimensions differ");
    detail::require(stack.depth() >= 1, "aggregate_features: empty feature stack");
    const std::size_t d = stack.depth();
    Matrix sums(static_cast<std::size_t>(sp.n_superpixels), d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        const auto& plane = stack.planes[k].data();
        for (std::size_t p = 0; p < plane.size(); ++p)
            sums(static_cast<std::size_t>(sp.labels.data()[p]), k) += plane[p];
    }
    for (std::size_t i = 0; i < sums.rows(); ++i)
        for (std::size_t k = 0; k < d; ++k) sums(i, k) /= sp.pixel_counts[i];
    return FeatureMatrix(std::move(sums));
}

/// Majority class of `mask` inside each superpixel; ties go to the lowest
/// class id.
inline std::vector<int> superpixel_majority_labels(const LabelImage& mask, const SuperpixelMap& sp, int n_classes) {
    if (!mask.same_shape(sp.labels)) throw ValidationError("class mask and superpixel map dimensions differ");
    std::vector<int> votes(static_cast<std::size_t>(sp.n_superpixels) * static_cast<std::size_t>(n_classes), 0);
    for (std::size_t p = 0; p < mask.size(); ++p) {
        const int cls = mask.data()[p];
        if (cls < 0 || cls >= n_classes) throw ValidationError("class mask value outside [0, n_classes)");
        ++votes[static_cast<std::size_t>(sp.labels.data()[p]) * static_cast<std::size_t>(n_classes) + static_cast<std::size_t>(cls)];
    }
    std::vector<int> out(static_cast<std::size_t>(sp.n_superpixels), 0);
    for (int i = 0; i < sp.n_superpixels; ++i) {
        const auto* v = votes.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n_classes);
        out[static_cast<std::size_t>(i)] = static_cast<int>(std::max_element(v, v + n_classes) - v);
    }
    return out;
}

}  // namespace pseg

#endif  // PSEG_SUPERPIXELS_HPP
