#ifndef BRRF_PNG_IO_HPP
#define BRRF_PNG_IO_HPP

// PNG converters. Requires linking libpng; the rest of the library does not.

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <vector>

#include "brrf/tensor_io.hpp"

namespace brrf::png {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) {
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    }
    return f;
}

struct Decoded {
    std::size_t height = 0, width = 0, channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;
};

inline Decoded decode(const std::filesystem::path& path) {
    auto file = open(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw Error(Errc::MagicMismatch, path.string() + ": not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(Errc::IoFailure, "libpng initialisation failed");
    }
    Decoded out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(Errc::TruncatedPayload, path.string() + ": corrupt PNG stream");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);
    out.height = png_get_image_height(png, info);
    out.width = png_get_image_width(png, info);
    out.channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);
    out.bit_depth = depth;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * out.height);
    rows.resize(out.height);
    for (std::size_t y = 0; y < out.height; ++y) {
        rows[y] = buffer.data() + y * rowbytes;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = out.height * out.width * out.channels;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (depth == 16) {
            std::uint16_t v;
            std::memcpy(&v, buffer.data() + 2 * i, 2);
            out.samples[i] = v;
        } else {
            out.samples[i] = buffer[i];
        }
    }
    return out;
}

inline void encode(const std::filesystem::path& path, std::size_t height, std::size_t width, int color_type,
                   int depth, const std::vector<unsigned char>& buffer, std::size_t rowbytes) {
    auto file = open(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error(Errc::IoFailure, "libpng initialisation failed");
    }
    std::vector<png_bytep> rows(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(Errc::IoFailure, "write failed for " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);
    for (std::size_t y = 0; y < height; ++y) {
        rows[y] = const_cast<unsigned char*>(buffer.data() + y * rowbytes);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}

/// 8-bit (or 16-bit) gray/RGB(A) PNG to a float raster in [0,1]. Alpha is
/// dropped, gray is kept as one channel.
inline RasterF32 read_image(const std::filesystem::path& path) {
    const auto d = detail::decode(path);
    const std::size_t keep = d.channels >= 3 ? 3 : 1;
    const double scale = d.bit_depth == 16 ? 65535.0 : 255.0;
    RasterF32 out(d.height, d.width, keep);
    for (std::size_t i = 0; i < out.pixels(); ++i) {
        for (std::size_t c = 0; c < keep; ++c) {
            out.data[i * keep + c] = static_cast<float>(d.samples[i * d.channels + c] / scale);
        }
    }
    return out;
}

/// Writes a 1- or 3-channel raster as 8-bit PNG; values are clamped to [0,1].
inline void write_image(const RasterF32& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw Error(Errc::ChannelCountMismatch, "PNG export supports 1 or 3 channels");
    }
    std::vector<unsigned char> buffer(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        buffer[i] = static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f));
    }
    detail::encode(path, img.height, img.width, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
                   buffer, img.width * img.channels);
}

/// Label maps travel as 16-bit gray PNGs.
inline void write_labels(const LabelMap& lm, const std::filesystem::path& path) {
    std::vector<unsigned char> buffer(lm.data.size() * 2);
    for (std::size_t i = 0; i < lm.data.size(); ++i) {
        if (lm.data[i] > 0xffffu) {
            throw Error(Errc::InvalidArgument, "label id exceeds 16-bit PNG range");
        }
        const auto v = static_cast<std::uint16_t>(lm.data[i]);
        std::memcpy(buffer.data() + 2 * i, &v, 2);
    }
    detail::encode(path, lm.height, lm.width, PNG_COLOR_TYPE_GRAY, 16, buffer, lm.width * 2);
}

inline Relabeled read_labels(const std::filesystem::path& path) {
    const auto d = detail::decode(path);
    if (d.channels != 1) {
        throw Error(Errc::ChannelCountMismatch, path.string() + ": label PNGs must be single-channel gray");
    }
    LabelMap lm(d.height, d.width);
    for (std::size_t i = 0; i < lm.data.size(); ++i) {
        lm.data[i] = d.samples[i];
    }
    return relabel_contiguous(std::move(lm));
}

}

#endif
