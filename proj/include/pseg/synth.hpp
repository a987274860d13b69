#ifndef PSEG_SYNTH_HPP
#define PSEG_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pseg/error.hpp"
#include "pseg/eval.hpp"
#include "pseg/image.hpp"

namespace pseg {

enum class TextureKind { Flat, Ripple, Rocky, Crater };

inline const char* texture_name(TextureKind k) {
    switch (k) {
        case TextureKind::Flat: return "flat";
        case TextureKind::Ripple: return "ripple";
        case TextureKind::Rocky: return "rocky";
        case TextureKind::Crater: return "crater";
    }
    return "?";
}

inline TextureKind parse_texture(const std::string& s) {
    for (auto k : {TextureKind::Flat, TextureKind::Ripple, TextureKind::Rocky, TextureKind::Crater})
        if (s == texture_name(k)) return k;
    throw ValidationError("unknown texture kind '" + s + "' (expected flat, ripple, rocky or crater)");
}

/// Parameters for one texture region. Only the fields of `kind` are used.
struct TextureSpec {
    TextureKind kind = TextureKind::Flat;
    int class_id = 0;
    double mean = 0.45;        ///< background intensity
    double noise = 0.04;       ///< per-pixel Gaussian noise sigma
    double wavelength = 12.0;  ///< ripple period, px
    double angle = 30.0;       ///< ripple crest normal, degrees
    double amplitude = 0.22;   ///< ripple amplitude
    double blob_scale = 1.5;   ///< rocky smoothing sigma, px
    double density = 0.45;     ///< rocky fraction of area covered by rocks
    double contrast = 0.35;    ///< rocky rock/gap contrast
    double radius = 12.0;      ///< crater radius, px
    double depth = 0.3;        ///< crater darkening
    double spacing = 3.5;      ///< crater spacing in radii

    void validate() const {
        using detail::require;
        require(class_id >= 0, "texture: class id must be >= 0");
        require(noise >= 0.0, "texture: noise must be >= 0");
        require(wavelength > 0.0 && blob_scale > 0.0 && radius > 0.0 && spacing > 0.0,
                "texture: dimensional parameters must be positive");
        require(density > 0.0 && density < 1.0, "texture: density must be in (0,1)");
        require(contrast > 0.0 && depth > 0.0 && amplitude > 0.0, "texture: contrast, depth and amplitude must be positive");
    }
};

inline TextureSpec default_texture(TextureKind kind, int class_id) {
    TextureSpec s;
    s.kind = kind;
    s.class_id = class_id;
    return s;
}

/// Region id per pixel and one texture per region.
struct Layout {
    LabelImage regions;
    std::vector<TextureSpec> specs;

    void validate() const {
        detail::require(regions.size() > 0, "layout: empty region map");
        detail::require(!specs.empty(), "layout: no texture specs");
        for (const auto& s : specs) s.validate();
        for (int id : regions.data())
            detail::require(id >= 0 && static_cast<std::size_t>(id) < specs.size(), "layout: region id without a texture spec");
    }
};

struct RectRegion {
    int row0, col0, row1, col1;  ///< half-open [row0, row1) x [col0, col1)
    TextureSpec spec;
};

/// Layout from axis-aligned rectangles that must tile the image exactly.
inline Layout layout_from_rects(int height, int width, const std::vector<RectRegion>& rects) {
    Layout out{LabelImage(height, width, -1), {}};
    for (std::size_t i = 0; i < rects.size(); ++i) {
        const auto& r = rects[i];
        detail::require(r.row0 >= 0 && r.col0 >= 0 && r.row1 <= height && r.col1 <= width && r.row0 < r.row1 &&
                            r.col0 < r.col1,
                        "layout: rectangle outside image or empty");
        for (int y = r.row0; y < r.row1; ++y)
            for (int x = r.col0; x < r.col1; ++x) {
                if (out.regions(y, x) != -1) throw ValidationError("layout: overlapping regions");
                out.regions(y, x) = static_cast<int>(i);
            }
        out.specs.push_back(r.spec);
    }
    for (int id : out.regions.data())
        if (id < 0) throw ValidationError("layout: regions do not tile the image");
    return out;
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                      static_cast<std::uint32_t>(b >> 32)};
    std::uint64_t out[1];
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return out[0];
}

inline Image gaussian_blur(const Image& img, double sigma) {
    const int h = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * h + 1));
    double s = 0.0;
    for (int i = -h; i <= h; ++i) s += k[static_cast<std::size_t>(i + h)] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& v : k) v /= s;
    Image tmp(img.height(), img.width()), out(img.height(), img.width());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            double acc = 0.0;
            for (int i = -h; i <= h; ++i) acc += k[static_cast<std::size_t>(i + h)] * img(r, reflect_index(c + i, img.width()));
            tmp(r, c) = acc;
        }
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            double acc = 0.0;
            for (int i = -h; i <= h; ++i) acc += k[static_cast<std::size_t>(i + h)] * tmp(reflect_index(r + i, img.height()), c);
            out(r, c) = acc;
        }
    return out;
}

/// Full-frame texture field for one spec.
inline Image texture_field(const TextureSpec& spec, int height, int width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Image img(height, width, spec.mean);
    switch (spec.kind) {
        case TextureKind::Flat: break;
        case TextureKind::Ripple: {
            const double th = spec.angle * std::numbers::pi / 180.0;
            const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
            for (int r = 0; r < height; ++r)
                for (int c = 0; c < width; ++c) {
                    const double t = (c * std::cos(th) - r * std::sin(th)) / spec.wavelength;
                    img(r, c) += spec.amplitude * std::sin(2.0 * std::numbers::pi * t + phase);
                }
            break;
        }
        case TextureKind::Rocky: {
            Image field(height, width);
            for (double& v : field.data()) v = gauss(rng);
            field = gaussian_blur(field, spec.blob_scale);
            std::vector<double> sorted = field.data();
            const auto q = static_cast<std::size_t>((1.0 - spec.density) * static_cast<double>(sorted.size() - 1));
            std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(q), sorted.end());
            const double level = sorted[q];
            for (std::size_t i = 0; i < img.size(); ++i)
                img.data()[i] += field.data()[i] > level ? spec.contrast / 2 : -spec.contrast / 2;
            break;
        }
        case TextureKind::Crater: {
            const double step = spec.radius * spec.spacing;
            std::uniform_real_distribution<double> jitter(-0.25 * step, 0.25 * step);
            for (double cy = step / 2; cy < height + step / 2; cy += step)
                for (double cx = step / 2; cx < width + step / 2; cx += step) {
                    const double y0 = cy + jitter(rng);
                    const double x0 = cx + jitter(rng);
                    const int reach = static_cast<int>(std::ceil(1.6 * spec.radius));
                    for (int r = std::max(0, static_cast<int>(y0) - reach); r <= std::min(height - 1, static_cast<int>(y0) + reach); ++r)
                        for (int c = std::max(0, static_cast<int>(x0) - reach); c <= std::min(width - 1, static_cast<int>(x0) + reach); ++c) {
                            const double d = std::hypot(r - y0, c - x0) / spec.radius;
                            // dark bowl with a bright rim just outside it
                            double v = 0.0;
                            if (d < 1.0) v = -spec.depth * (1.0 - d * d);
                            else if (d < 1.5) v = 0.5 * spec.depth * std::sin(std::numbers::pi * (d - 1.0) / 0.5);
                            img(r, c) += v;
                        }
                }
            break;
        }
    }
    for (double& v : img.data()) v = std::clamp(v + spec.noise * gauss(rng), 0.0, 1.0);
    return img;
}

}  // namespace detail

struct SynthImage {
    Image image;
    LabelImage mask;  ///< class id per pixel
};

/// Renders every region's texture and composites them by the region map.
/// A pure function of (layout, seed).
inline SynthImage generate_image(const Layout& layout, std::uint64_t seed) {
    layout.validate();
    const int h = layout.regions.height();
    const int w = layout.regions.width();
    SynthImage out{Image(h, w), LabelImage(h, w)};
    std::vector<int> used(layout.specs.size(), 0);
    for (int id : layout.regions.data()) used[static_cast<std::size_t>(id)] = 1;
    for (std::size_t i = 0; i < layout.specs.size(); ++i) {
        if (!used[i]) continue;
        const Image field = detail::texture_field(layout.specs[i], h, w, detail::mix_seed(seed, i));
        for (std::size_t p = 0; p < out.image.size(); ++p)
            if (layout.regions.data()[p] == static_cast<int>(i)) {
                out.image.data()[p] = field.data()[p];
                out.mask.data()[p] = layout.specs[i].class_id;
            }
    }
    return out;
}

struct SynthDataset {
    std::vector<SynthImage> images;
    std::vector<std::string> class_names;
    FoldPlan plan;
};

/// Random Voronoi layout with 1..max_regions cells, each a randomly chosen
/// class from `classes` with jittered parameters.
inline Layout random_layout(int size, const std::vector<TextureKind>& classes, std::mt19937_64& rng, int max_regions = 4) {
    std::uniform_int_distribution<int> n_regions(1, max_regions);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(classes.size()) - 1);
    std::uniform_real_distribution<double> pos(0.0, size);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int k = n_regions(rng);
    std::vector<std::array<double, 2>> seeds;
    Layout out{LabelImage(size, size), {}};
    for (int i = 0; i < k; ++i) {
        seeds.push_back({pos(rng), pos(rng)});
        const int cls = pick(rng);
        TextureSpec s = default_texture(classes[static_cast<std::size_t>(cls)], cls);
        s.mean += 0.03 * unit(rng);
        s.angle += 3.0 * unit(rng);
        s.wavelength *= 1.0 + 0.1 * unit(rng);
        s.radius *= 1.0 + 0.1 * unit(rng);
        out.specs.push_back(s);
    }
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int i = 0; i < k; ++i) {
                const double d = std::hypot(r - seeds[static_cast<std::size_t>(i)][0], c - seeds[static_cast<std::size_t>(i)][1]);
                if (d < bd) {
                    bd = d;
                    best = i;
                }
            }
            out.regions(r, c) = best;
        }
    return out;
}

/// Image `index` of a dataset; independent of how many images are drawn.
inline SynthImage dataset_image(std::uint64_t index, int size, const std::vector<TextureKind>& classes,
                                std::uint64_t seed, int max_regions = 4) {
    std::mt19937_64 rng(detail::mix_seed(seed, index));
    const auto layout = random_layout(size, classes, rng, max_regions);
    return generate_image(layout, detail::mix_seed(seed ^ 0x9e3779b97f4a7c15ull, index));
}

/// `n_images` random layouts over `classes` (class ids follow the order of
/// `classes`) plus an even fold plan.
inline SynthDataset generate_dataset(int n_images, int size, const std::vector<TextureKind>& classes, int n_folds,
                                     std::uint64_t seed, int max_regions = 4) {
    detail::require(!classes.empty(), "synth: class mix is empty");
    detail::require(size >= 1, "synth: image size must be >= 1");
    SynthDataset out;
    for (auto k : classes) out.class_names.emplace_back(texture_name(k));
    out.plan = make_fold_plan(n_images, n_folds);
    for (int i = 0; i < n_images; ++i)
        out.images.push_back(dataset_image(static_cast<std::uint64_t>(i), size, classes, seed, max_regions));
    return out;
}

}  // namespace pseg

#endif  // PSEG_SYNTH_HPP
