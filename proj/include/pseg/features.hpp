#ifndef PSEG_FEATURES_HPP
#define PSEG_FEATURES_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "pseg/csv.hpp"
#include "pseg/error.hpp"
#include "pseg/image.hpp"
#include "pseg/matrix.hpp"

namespace pseg {

/// How a signed oriented response becomes a nonnegative plane.
enum class SobelResponse {
    Absolute,  ///< |r|; opposed orientations give equal planes
    HalfWave,  ///< max(0, r); opposed orientations split the sign
};

struct SobelBankConfig {
    int orientations = 8;
    std::vector<int> mask_sizes{5, 9, 11, 15};
    SobelResponse response = SobelResponse::Absolute;

    void validate() const {
        detail::require(orientations >= 2, "sobel: invariant orientations >= 2 violated");
        detail::require(!mask_sizes.empty(), "sobel: mask_sizes is empty");
        for (int s : mask_sizes)
            detail::require(s >= 3 && s % 2 == 1, "sobel: invariant mask size odd and >= 3 violated");
    }
    int largest_mask() const { return *std::max_element(mask_sizes.begin(), mask_sizes.end()); }
    friend bool operator==(const SobelBankConfig&, const SobelBankConfig&) = default;
};

/// Gliding-box lacunarity: `inner_box` boxes slide inside an `outer_window`
/// centered on each pixel.
struct LacunarityConfig {
    int outer_window = 31;
    int inner_box = 21;

    void validate() const {
        detail::require(outer_window % 2 == 1 && inner_box % 2 == 1 && inner_box >= 1,
                        "lacunarity: invariant window sizes odd violated");
        detail::require(inner_box < outer_window, "lacunarity: invariant inner_box < outer_window violated");
    }
    friend bool operator==(const LacunarityConfig&, const LacunarityConfig&) = default;
};

inline std::vector<LacunarityConfig> default_lacunarity_configs() { return {{31, 21}, {21, 11}}; }

/// Per-pixel feature planes, plane-major. `plane_names[i]` describes plane i.
struct FeatureStack {
    int height = 0;
    int width = 0;
    std::vector<Image> planes;
    std::vector<std::string> plane_names;

    std::size_t depth() const noexcept { return planes.size(); }
};

// ---------------------------------------------------------------------------
// Oriented Sobel kernels

namespace detail {

inline std::vector<double> binomial_row(int len) {
    std::vector<double> row{1.0};
    for (int i = 1; i < len; ++i) {
        std::vector<double> next(row.size() + 1, 0.0);
        for (std::size_t j = 0; j < row.size(); ++j) {
            next[j] += row[j];
            next[j + 1] += row[j];
        }
        row = std::move(next);
    }
    return row;
}

/// Snaps cos/sin values that are within rounding of 0 or ±1.
inline double snap_unit(double v) {
    for (double t : {-1.0, 0.0, 1.0})
        if (std::abs(v - t) < 1e-12) return t;
    return v;
}

}  // namespace detail

/// Horizontal-gradient kernel of odd `size`: binomial smoothing down the
/// rows, derivative-of-binomial across the columns. Scaled so a unit ramp
/// I(row, col) = col responds with exactly 1.
inline Matrix sobel_base_kernel(int size) {
    detail::require(size >= 3 && size % 2 == 1, "sobel: mask size must be odd and >= 3");
    const auto smooth = detail::binomial_row(size);
    const auto b = detail::binomial_row(size - 1);
    std::vector<double> deriv(static_cast<std::size_t>(size), 0.0);
    // conv(b, [-1, 1]): positive on the +col side
    for (std::size_t j = 0; j < b.size(); ++j) {
        deriv[j] -= b[j];
        deriv[j + 1] += b[j];
    }
    const int h = size / 2;
    Matrix k(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    double ramp = 0.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            k(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                smooth[static_cast<std::size_t>(r)] * deriv[static_cast<std::size_t>(c)];
            ramp += k(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) * (c - h);
        }
    for (double& v : k.data()) v /= ramp;
    return k;
}

/// Base kernel rotated counter-clockwise (as displayed, rows pointing down)
/// by `angle_deg`, resampled bilinearly; samples outside the base support
/// are zero. The result responds to intensity increasing along
/// (cos θ, sin θ) in (col, up) coordinates.
inline Matrix oriented_sobel_kernel(int size, double angle_deg) {
    const Matrix base = sobel_base_kernel(size);
    const int h = size / 2;
    const double th = angle_deg * std::numbers::pi / 180.0;
    const double cs = detail::snap_unit(std::cos(th));
    const double sn = detail::snap_unit(std::sin(th));
    auto base_at = [&](int up, int x) -> double {
        if (up < -h || up > h || x < -h || x > h) return 0.0;
        return base(static_cast<std::size_t>(h - up), static_cast<std::size_t>(x + h));
    };
    Matrix k(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    for (int r = 0; r < size; ++r) {
        for (int c = 0; c < size; ++c) {
            const double x = c - h;
            const double up = h - r;
            // rotate by -θ to find the base-kernel sample
            const double sx = cs * x + sn * up;
            const double su = -sn * x + cs * up;
            const double fx = std::floor(sx);
            const double fu = std::floor(su);
            const double ax = sx - fx;
            const double au = su - fu;
            const int ix = static_cast<int>(fx);
            const int iu = static_cast<int>(fu);
            double v = 0.0;
            if (ax == 0.0 && au == 0.0) {
                v = base_at(iu, ix);
            } else {
                v = (1 - ax) * (1 - au) * base_at(iu, ix) + ax * (1 - au) * base_at(iu, ix + 1) +
                    (1 - ax) * au * base_at(iu + 1, ix) + ax * au * base_at(iu + 1, ix + 1);
            }
            k(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = v;
        }
    }
    // resampling loses gain off the axes; restore unit ramp response
    double ramp = 0.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            ramp += k(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) * (cs * (c - h) + sn * (h - r));
    for (double& v : k.data()) v /= ramp;
    return k;
}

namespace detail {

inline Image reflect_pad(const Image& img, int pad) {
    Image out(img.height() + 2 * pad, img.width() + 2 * pad);
    for (int r = 0; r < out.height(); ++r) {
        const int sr = reflect_index(r - pad, img.height());
        for (int c = 0; c < out.width(); ++c) out(r, c) = img(sr, reflect_index(c - pad, img.width()));
    }
    return out;
}

}  // namespace detail

/// Correlation with an odd square kernel, reflect-padded, same-size output.
inline Image correlate(const Image& img, const Matrix& kernel) {
    const int size = static_cast<int>(kernel.rows());
    const int h = size / 2;
    const Image padded = detail::reflect_pad(img, h);
    Image out(img.height(), img.width());
    const int pw = padded.width();
    const double* src = padded.data().data();
    for (int r = 0; r < img.height(); ++r) {
        for (int c = 0; c < img.width(); ++c) {
            double acc = 0.0;
            for (int kr = 0; kr < size; ++kr) {
                const double* prow = src + static_cast<std::size_t>(r + kr) * static_cast<std::size_t>(pw) + c;
                const auto krow = kernel.row(static_cast<std::size_t>(kr));
                for (int kc = 0; kc < size; ++kc) acc += krow[static_cast<std::size_t>(kc)] * prow[kc];
            }
            out(r, c) = acc;
        }
    }
    return out;
}

inline double orientation_angle(int index, int orientations) {
    return 360.0 * index / orientations;
}

/// One plane per (mask size, orientation), mask-size major. Opposed
/// orientations share a kernel up to sign, so each signed response is
/// computed once and serves both planes.
inline FeatureStack sobel_bank(const Image& image, const SobelBankConfig& cfg) {
    cfg.validate();
    const int largest = cfg.largest_mask();
    if (image.height() < largest || image.width() < largest)
        throw ValidationError("sobel: image smaller than largest mask (" + std::to_string(largest) + ")");
    FeatureStack out;
    out.height = image.height();
    out.width = image.width();
    const int n = cfg.orientations;
    const bool abs_mode = cfg.response == SobelResponse::Absolute;
    for (int size : cfg.mask_sizes) {
        std::vector<Image> planes(static_cast<std::size_t>(n));
        std::vector<bool> done(static_cast<std::size_t>(n), false);
        for (int o = 0; o < n; ++o) {
            if (done[static_cast<std::size_t>(o)]) continue;
            const Image resp = correlate(image, oriented_sobel_kernel(size, orientation_angle(o, n)));
            Image pos(image.height(), image.width());
            for (std::size_t i = 0; i < resp.size(); ++i)
                pos.data()[i] = abs_mode ? std::abs(resp.data()[i]) : std::max(0.0, resp.data()[i]);
            planes[static_cast<std::size_t>(o)] = std::move(pos);
            done[static_cast<std::size_t>(o)] = true;
            if (n % 2 == 0) {
                const int opp = (o + n / 2) % n;
                Image neg(image.height(), image.width());
                for (std::size_t i = 0; i < resp.size(); ++i)
                    neg.data()[i] = abs_mode ? std::abs(resp.data()[i]) : std::max(0.0, -resp.data()[i]);
                planes[static_cast<std::size_t>(opp)] = std::move(neg);
                done[static_cast<std::size_t>(opp)] = true;
            }
        }
        for (int o = 0; o < n; ++o) {
            out.planes.push_back(std::move(planes[static_cast<std::size_t>(o)]));
            char name[64];
            std::snprintf(name, sizeof name, "sobel_s%d_a%g", size, orientation_angle(o, n));
            out.plane_names.emplace_back(name);
        }
    }
    return out;
}

/// Per-pixel gliding-box lacunarity var(S)/mean(S)^2 + 1 over the inner
/// box sums S inside the outer window; 1 where the window mean is zero.
inline Image lacunarity_map(const Image& image, const LacunarityConfig& cfg) {
    cfg.validate();
    if (image.height() < cfg.outer_window || image.width() < cfg.outer_window)
        throw ValidationError("lacunarity: image smaller than outer window (" +
                              std::to_string(cfg.outer_window) + ")");
    for (double v : image.data())
        if (!(v >= 0.0)) throw ValidationError("lacunarity: negative or non-finite pixel value");

    const int outer_half = cfg.outer_window / 2;
    const int box_half = cfg.inner_box / 2;
    const int glide = outer_half - box_half;  // box-center offsets in [-glide, glide]
    const Image padded = detail::reflect_pad(image, outer_half);
    const int ph = padded.height();
    const int pw = padded.width();

    // column sums of inner_box rows, then row sums: box sum centered at each
    // padded position whose box lies fully inside the padding
    Image colsum(ph, pw, 0.0);
    for (int r = box_half; r < ph - box_half; ++r)
        for (int c = 0; c < pw; ++c) {
            double s = 0.0;
            for (int k = -box_half; k <= box_half; ++k) s += padded(r + k, c);
            colsum(r, c) = s;
        }
    Image box(ph, pw, 0.0);
    for (int r = box_half; r < ph - box_half; ++r)
        for (int c = box_half; c < pw - box_half; ++c) {
            double s = 0.0;
            for (int k = -box_half; k <= box_half; ++k) s += colsum(r, c + k);
            box(r, c) = s;
        }

    Image out(image.height(), image.width());
    const double count = static_cast<double>((2 * glide + 1) * (2 * glide + 1));
    for (int r = 0; r < image.height(); ++r) {
        for (int c = 0; c < image.width(); ++c) {
            const int pr = r + outer_half;
            const int pc = c + outer_half;
            double sum = 0.0;
            for (int dr = -glide; dr <= glide; ++dr)
                for (int dc = -glide; dc <= glide; ++dc) sum += box(pr + dr, pc + dc);
            const double mean = sum / count;
            if (mean == 0.0) {
                out(r, c) = 1.0;
                continue;
            }
            double ss = 0.0;
            for (int dr = -glide; dr <= glide; ++dr)
                for (int dc = -glide; dc <= glide; ++dc) {
                    const double d = box(pr + dr, pc + dc) - mean;
                    ss += d * d;
                }
            out(r, c) = (ss / count) / (mean * mean) + 1.0;
        }
    }
    return out;
}

/// Sobel planes followed by one lacunarity plane per config, in order.
inline FeatureStack extract_features(const Image& image, const SobelBankConfig& sobel_cfg,
                                     const std::vector<LacunarityConfig>& lac_cfgs) {
    sobel_cfg.validate();
    for (const auto& lc : lac_cfgs) {
        lc.validate();
        if (image.height() < lc.outer_window || image.width() < lc.outer_window)
            throw ValidationError("lacunarity: image smaller than outer window (" +
                                  std::to_string(lc.outer_window) + ")");
    }
    FeatureStack out = sobel_bank(image, sobel_cfg);
    for (const auto& lc : lac_cfgs) {
        out.planes.push_back(lacunarity_map(image, lc));
        out.plane_names.push_back("lacunarity_" + std::to_string(lc.outer_window) + "_" +
                                  std::to_string(lc.inner_box));
    }
    return out;
}

inline FeatureStack extract_features(const Image& image) {
    return extract_features(image, SobelBankConfig{}, default_lacunarity_configs());
}

// ---------------------------------------------------------------------------
// FSTK cache: "FSTK", u32 version, u32 h, u32 w, u32 d, then d*h*w float64,
// plane-major, all little-endian.

inline constexpr std::uint32_t kFeatureStackVersion = 1;

inline void write_feature_stack(const std::filesystem::path& path, const FeatureStack& stack) {
    auto put_u32 = [](std::ostream& os, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    detail::atomic_write(
        path,
        [&](std::ostream& os) {
            os.write("FSTK", 4);
            put_u32(os, kFeatureStackVersion);
            put_u32(os, static_cast<std::uint32_t>(stack.height));
            put_u32(os, static_cast<std::uint32_t>(stack.width));
            put_u32(os, static_cast<std::uint32_t>(stack.depth()));
            for (const auto& plane : stack.planes)
                for (double v : plane.data()) {
                    const auto bits = std::bit_cast<std::uint64_t>(v);
                    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xff));
                }
        },
        true);
}

inline FeatureStack read_feature_stack(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    auto get_bytes = [&](unsigned char* dst, std::size_t n) {
        if (!is.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n)))
            throw IoError("truncated feature stack '" + path.string() + "'");
    };
    auto get_u32 = [&]() {
        unsigned char b[4];
        get_bytes(b, 4);
        return static_cast<std::uint32_t>(b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24));
    };
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "FSTK")
        throw IoError("'" + path.string() + "' is not a feature stack (bad magic)");
    if (get_u32() != kFeatureStackVersion) throw IoError("unsupported feature stack version");
    FeatureStack st;
    st.height = static_cast<int>(get_u32());
    st.width = static_cast<int>(get_u32());
    const auto d = get_u32();
    std::vector<unsigned char> buf(static_cast<std::size_t>(st.height) * static_cast<std::size_t>(st.width) * 8);
    for (std::uint32_t p = 0; p < d; ++p) {
        get_bytes(buf.data(), buf.size());
        Image plane(st.height, st.width);
        for (std::size_t i = 0; i < plane.size(); ++i) {
            std::uint64_t bits = 0;
            for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(buf[8 * i + static_cast<std::size_t>(k)]) << (8 * k);
            plane.data()[i] = std::bit_cast<double>(bits);
        }
        st.planes.push_back(std::move(plane));
        st.plane_names.push_back("f" + std::to_string(p));
    }
    return st;
}

}  // namespace pseg

#endif  // PSEG_FEATURES_HPP
