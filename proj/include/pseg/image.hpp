#ifndef PSEG_IMAGE_HPP
#define PSEG_IMAGE_HPP

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "pseg/error.hpp"

namespace pseg {

/// Row-major 2-D raster.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int height, int width, T fill = T{})
        : height_(height), width_(width),
          data_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill) {
        detail::require(height >= 0 && width >= 0, "grid dimensions must be nonnegative");
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
    const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(const Grid& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    std::size_t index(int r, int c) const noexcept {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c);
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

using Image = Grid<double>;
using LabelImage = Grid<int>;

/// Mirror index into [0, n) without repeating the edge sample
/// (… 2 1 | 0 1 2 … n-1 | n-2 …).
inline int reflect_index(int i, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline Image rotate90_ccw(const Image& img) {
    Image out(img.width(), img.height());
    for (int r = 0; r < out.height(); ++r)
        for (int c = 0; c < out.width(); ++c) out(r, c) = img(c, img.width() - 1 - r);
    return out;
}

// ---------------------------------------------------------------------------
// PNG / PGM

namespace detail {

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

/// Raw gray samples plus their bit depth (8 or 16).
struct RawGray {
    int height = 0;
    int width = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

inline RawGray read_png_gray(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open '" + path.string() + "'");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw IoError("'" + path.string() + "' is not a PNG file");
    PngReadGuard g;
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!g.png) throw IoError("png_create_read_struct failed");
    g.info = png_create_info_struct(g.png);
    if (!g.info) throw IoError("png_create_info_struct failed");
    RawGray out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buf;
    if (setjmp(png_jmpbuf(g.png))) throw IoError("corrupt PNG '" + path.string() + "'");
    png_init_io(g.png, fp.get());
    png_set_sig_bytes(g.png, 8);
    png_read_info(g.png, g.info);
    const int color = png_get_color_type(g.png, g.info);
    int depth = png_get_bit_depth(g.png, g.info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(g.png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(g.png, 1, -1, -1);
    if (depth == 16) png_set_swap(g.png);  // host little-endian samples
    png_read_update_info(g.png, g.info);
    out.width = static_cast<int>(png_get_image_width(g.png, g.info));
    out.height = static_cast<int>(png_get_image_height(g.png, g.info));
    depth = png_get_bit_depth(g.png, g.info);
    out.bit_depth = depth == 16 ? 16 : 8;
    const std::size_t rowbytes = png_get_rowbytes(g.png, g.info);
    buf.resize(rowbytes * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r) rows[static_cast<std::size_t>(r)] = buf.data() + rowbytes * static_cast<std::size_t>(r);
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);
    const int channels = png_get_channels(g.png, g.info);
    out.samples.resize(static_cast<std::size_t>(out.height) * static_cast<std::size_t>(out.width));
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * static_cast<std::size_t>(out.width) + static_cast<std::size_t>(c);
            if (out.bit_depth == 16) {
                const auto* p = reinterpret_cast<const std::uint16_t*>(rows[static_cast<std::size_t>(r)]);
                out.samples[i] = p[static_cast<std::size_t>(c * channels)];
            } else {
                out.samples[i] = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c * channels)];
            }
        }
    }
    return out;
}

inline void write_png_raw(const std::filesystem::path& path, int height, int width, int bit_depth,
                          int color_type, const std::vector<unsigned char>& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        FilePtr fp(std::fopen(tmp.c_str(), "wb"));
        if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
        PngWriteGuard g;
        g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!g.png) throw IoError("png_create_write_struct failed");
        g.info = png_create_info_struct(g.png);
        if (!g.info) throw IoError("png_create_info_struct failed");
        const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
        const std::size_t rowbytes = static_cast<std::size_t>(width * channels * (bit_depth / 8));
        std::vector<png_bytep> rows(static_cast<std::size_t>(height));
        for (int r = 0; r < height; ++r)
            rows[static_cast<std::size_t>(r)] = const_cast<unsigned char*>(bytes.data()) + rowbytes * static_cast<std::size_t>(r);
        if (setjmp(png_jmpbuf(g.png))) throw IoError("PNG encode failed for '" + path.string() + "'");
        png_init_io(g.png, fp.get());
        png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(g.png, g.info);
        png_write_image(g.png, rows.data());
        png_write_end(g.png, nullptr);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename into '" + path.string() + "'");
}

inline RawGray read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path.string() + "'");
    auto next_token = [&]() {
        std::string tok;
        char ch;
        while (is.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(is, skip);
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) break;
            } else {
                tok.push_back(ch);
            }
        }
        return tok;
    };
    if (next_token() != "P5") throw IoError("'" + path.string() + "' is not a binary PGM (P5)");
    RawGray out;
    try {
        out.width = std::stoi(next_token());
        out.height = std::stoi(next_token());
        const int maxval = std::stoi(next_token());
        if (maxval <= 0 || maxval > 65535) throw IoError("bad PGM maxval");
        out.bit_depth = maxval > 255 ? 16 : 8;
    } catch (const std::logic_error&) {
        throw IoError("malformed PGM header in '" + path.string() + "'");
    }
    const std::size_t n = static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height);
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (out.bit_depth == 16) {
            unsigned char b[2];
            if (!is.read(reinterpret_cast<char*>(b), 2)) throw IoError("truncated PGM '" + path.string() + "'");
            out.samples[i] = static_cast<std::uint16_t>((b[0] << 8) | b[1]);
        } else {
            char b;
            if (!is.get(b)) throw IoError("truncated PGM '" + path.string() + "'");
            out.samples[i] = static_cast<unsigned char>(b);
        }
    }
    return out;
}

inline RawGray read_gray(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".pgm") return read_pgm(path);
    return read_png_gray(path);
}

}  // namespace detail

/// Loads an 8- or 16-bit grayscale PNG or binary PGM, scaled to [0,1].
inline Image read_image(const std::filesystem::path& path) {
    auto raw = detail::read_gray(path);
    Image img(raw.height, raw.width);
    const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
    for (std::size_t i = 0; i < raw.samples.size(); ++i) img.data()[i] = raw.samples[i] / scale;
    return img;
}

/// Writes [0,1] intensities as 8-bit grayscale PNG (values clamped).
inline void write_image_png(const std::filesystem::path& path, const Image& img) {
    std::vector<unsigned char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = std::clamp(img.data()[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    detail::write_png_raw(path, img.height(), img.width(), 8, PNG_COLOR_TYPE_GRAY, bytes);
}

inline void write_image_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    for (double v : img.data())
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

/// Label raster as 8-bit (max < 256) or 16-bit grayscale PNG.
inline void write_label_png(const std::filesystem::path& path, const LabelImage& labels, bool force16 = false) {
    int maxv = 0;
    for (int v : labels.data()) {
        if (v < 0 || v > 65535) throw ValidationError("label value outside [0, 65535] cannot be stored as PNG");
        maxv = std::max(maxv, v);
    }
    const bool wide = force16 || maxv > 255;
    std::vector<unsigned char> bytes(labels.size() * (wide ? 2 : 1));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int v = labels.data()[i];
        if (wide) {
            bytes[2 * i] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
            bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
        } else {
            bytes[i] = static_cast<unsigned char>(v);
        }
    }
    detail::write_png_raw(path, labels.height(), labels.width(), wide ? 16 : 8, PNG_COLOR_TYPE_GRAY, bytes);
}

inline LabelImage read_label_png(const std::filesystem::path& path) {
    auto raw = detail::read_gray(path);
    LabelImage out(raw.height, raw.width);
    for (std::size_t i = 0; i < raw.samples.size(); ++i) out.data()[i] = raw.samples[i];
    return out;
}

/// 8-bit RGB PNG from interleaved bytes.
inline void write_rgb_png(const std::filesystem::path& path, int height, int width,
                          const std::vector<unsigned char>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3)
        throw ValidationError("RGB buffer size does not match image shape");
    detail::write_png_raw(path, height, width, 8, PNG_COLOR_TYPE_RGB, rgb);
}

}  // namespace pseg

#endif  // PSEG_IMAGE_HPP
