#ifndef BRRF_TENSOR_IO_HPP
#define BRRF_TENSOR_IO_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "brrf/error.hpp"

namespace brrf {

/**
 * Dense row-major, channel-interleaved grid. The tag parameter only exists to
 * keep rasters, representation tensors, edge maps and label maps apart at the
 * type level; they share storage and accessors.
 */
template <typename T, typename Tag>
struct Field {
    using value_type = T;

    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<T> data;

    Field() = default;
    Field(std::size_t h, std::size_t w, std::size_t c = 1, T fill = T{})
        : height(h), width(w), channels(c), data(h * w * c, fill) {}

    std::size_t pixels() const { return height * width; }
    bool empty() const { return pixels() == 0 || channels == 0; }

    T& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
    const T& at(std::size_t y, std::size_t x, std::size_t c = 0) const {
        return data[(y * width + x) * channels + c];
    }

    std::span<T> pixel(std::size_t index) { return {data.data() + index * channels, channels}; }
    std::span<const T> pixel(std::size_t index) const { return {data.data() + index * channels, channels}; }

    template <typename U, typename OtherTag>
    bool same_shape(const Field<U, OtherTag>& other) const {
        return height == other.height && width == other.width;
    }

    bool operator==(const Field&) const = default;
};

struct RasterTag;
struct RepTag;
struct EdgeTag;
struct LabTag;
struct LabelTag;

using RasterF32 = Field<float, RasterTag>;
/// H x W x N per-pixel representation; channels is the representation dim.
using RepTensor = Field<float, RepTag>;
/// H x W boundary probabilities in [0,1].
using EdgeMap = Field<float, EdgeTag>;
/// L*, a*, b* per pixel.
using LabImage = Field<float, LabTag>;
/// Segment id per pixel.
using LabelMap = Field<std::uint32_t, LabelTag>;

/// Reinterpret a field under another tag (same element type).
template <typename To, typename T, typename Tag>
To retag(Field<T, Tag> from) {
    static_assert(std::is_same_v<typename To::value_type, T>);
    To out;
    out.height = from.height;
    out.width = from.width;
    out.channels = from.channels;
    out.data = std::move(from.data);
    return out;
}

inline std::size_t label_count(const LabelMap& labels) {
    if (labels.data.empty()) {
        return 0;
    }
    return static_cast<std::size_t>(*std::max_element(labels.data.begin(), labels.data.end())) + 1;
}

struct Relabeled {
    LabelMap map;
    /// original id of each new label; original_ids[new] = old
    std::vector<std::uint32_t> original_ids;
};

/// Compacts ids to {0..K-1} preserving their relative order.
inline Relabeled relabel_contiguous(LabelMap labels) {
    std::vector<std::uint32_t> ids = labels.data;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    bool identity = true;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        identity = identity && ids[i] == i;
    }
    if (!identity) {
        std::map<std::uint32_t, std::uint32_t> lookup;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            lookup.emplace(ids[i], static_cast<std::uint32_t>(i));
        }
        for (auto& v : labels.data) {
            v = lookup.at(v);
        }
    }
    return {std::move(labels), std::move(ids)};
}

/// Relabels by order of first appearance in a raster scan.
inline LabelMap relabel_by_first_occurrence(const LabelMap& labels) {
    LabelMap out = labels;
    std::map<std::uint32_t, std::uint32_t> lookup;
    for (auto& v : out.data) {
        auto [it, inserted] = lookup.emplace(v, static_cast<std::uint32_t>(lookup.size()));
        v = it->second;
    }
    return out;
}

/// Splits every label into its 4-connected components, numbered by first
/// occurrence in raster order.
inline LabelMap connected_components(const LabelMap& labels) {
    constexpr std::uint32_t unset = UINT32_MAX;
    LabelMap out(labels.height, labels.width, 1, unset);
    std::uint32_t next = 0;
    std::vector<std::size_t> stack;
    const std::size_t h = labels.height, w = labels.width;
    for (std::size_t start = 0; start < labels.pixels(); ++start) {
        if (out.data[start] != unset) {
            continue;
        }
        const std::uint32_t lab = labels.data[start];
        out.data[start] = next;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / w, x = p % w;
            auto visit = [&](std::size_t q) {
                if (out.data[q] == unset && labels.data[q] == lab) {
                    out.data[q] = next;
                    stack.push_back(q);
                }
            };
            if (x > 0) visit(p - 1);
            if (x + 1 < w) visit(p + 1);
            if (y > 0) visit(p - w);
            if (y + 1 < h) visit(p + w);
        }
        ++next;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Container format: "BRRF" | u8 kind | u32 height | u32 width | u32 channels |
// payload, everything little-endian. kind 0 = f32, kind 1 = u32 labels.

namespace container {

inline constexpr std::array<char, 4> magic = {'B', 'R', 'R', 'F'};
inline constexpr std::size_t header_size = 17;

enum class Kind : std::uint8_t { Float32 = 0, Label32 = 1 };

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
    }
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct Header {
    Kind kind;
    std::uint32_t height, width, channels;
};

inline std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void dump(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(Errc::IoFailure, "write failed for " + path.string());
    }
}

inline Header parse_header(const std::vector<unsigned char>& bytes, Kind expected, const std::string& name) {
    for (std::size_t i = 0; i < magic.size(); ++i) {
        if (i >= bytes.size() || bytes[i] != static_cast<unsigned char>(magic[i])) {
            throw Error(Errc::MagicMismatch, name + ": bad magic at byte offset " + std::to_string(i));
        }
    }
    if (bytes.size() < header_size) {
        throw Error(Errc::TruncatedPayload,
                    name + ": header truncated at byte offset " + std::to_string(bytes.size()));
    }
    Header h{static_cast<Kind>(bytes[4]), get_u32(&bytes[5]), get_u32(&bytes[9]), get_u32(&bytes[13])};
    if (h.kind != expected) {
        throw Error(Errc::KindMismatch, name + ": unexpected kind " + std::to_string(bytes[4]) +
                                            " at byte offset 4");
    }
    if (h.height == 0 || h.width == 0 || h.channels == 0) {
        throw Error(Errc::InvalidShape, name + ": zero dimension in header at byte offset 5");
    }
    const std::uint64_t need = header_size + std::uint64_t{h.height} * h.width * h.channels * 4;
    if (bytes.size() < need) {
        throw Error(Errc::TruncatedPayload, name + ": payload ends at byte offset " +
                                                std::to_string(bytes.size()) + ", expected " +
                                                std::to_string(need));
    }
    return h;
}

inline std::vector<unsigned char> header_bytes(Kind kind, std::size_t h, std::size_t w, std::size_t c) {
    std::vector<unsigned char> out(magic.begin(), magic.end());
    out.push_back(static_cast<unsigned char>(kind));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    put_u32(out, static_cast<std::uint32_t>(c));
    return out;
}

inline void check_shape(std::size_t h, std::size_t w, std::size_t c, std::size_t n, const std::string& name) {
    if (h == 0 || w == 0 || c == 0) {
        throw Error(Errc::InvalidShape, name + ": zero-sized raster");
    }
    if (h > UINT32_MAX || w > UINT32_MAX || c > UINT32_MAX || n != h * w * c) {
        throw Error(Errc::InvalidShape, name + ": data length does not match dims");
    }
}

}

inline std::vector<unsigned char> encode_raster(const RasterF32& r) {
    container::check_shape(r.height, r.width, r.channels, r.data.size(), "raster");
    auto bytes = container::header_bytes(container::Kind::Float32, r.height, r.width, r.channels);
    bytes.reserve(bytes.size() + r.data.size() * 4);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        if (!std::isfinite(r.data[i])) {
            throw Error(Errc::NonFiniteValue, "raster value " + std::to_string(i) + " would land at byte offset " +
                                                  std::to_string(container::header_size + 4 * i));
        }
        container::put_u32(bytes, std::bit_cast<std::uint32_t>(r.data[i]));
    }
    return bytes;
}

inline RasterF32 decode_raster(const std::vector<unsigned char>& bytes, const std::string& name = "raster") {
    const auto h = container::parse_header(bytes, container::Kind::Float32, name);
    RasterF32 r(h.height, h.width, h.channels);
    for (std::size_t i = 0; i < r.data.size(); ++i) {
        const std::size_t offset = container::header_size + 4 * i;
        const float v = std::bit_cast<float>(container::get_u32(&bytes[offset]));
        if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteValue, name + ": non-finite value at byte offset " + std::to_string(offset));
        }
        r.data[i] = v;
    }
    return r;
}

inline void write_raster(const RasterF32& r, const std::filesystem::path& path) {
    container::dump(path, encode_raster(r));
}

inline RasterF32 read_raster(const std::filesystem::path& path) {
    return decode_raster(container::slurp(path), path.string());
}

/// Convenience wrappers for the tagged float fields.
template <typename F>
void write_field(const F& f, const std::filesystem::path& path) {
    write_raster(retag<RasterF32>(f), path);
}

template <typename F>
F read_field(const std::filesystem::path& path) {
    return retag<F>(read_raster(path));
}

inline std::vector<unsigned char> encode_label_map(const LabelMap& lm) {
    container::check_shape(lm.height, lm.width, 1, lm.data.size(), "label map");
    auto bytes = container::header_bytes(container::Kind::Label32, lm.height, lm.width, 1);
    bytes.reserve(bytes.size() + lm.data.size() * 4);
    for (auto v : lm.data) {
        container::put_u32(bytes, v);
    }
    return bytes;
}

inline Relabeled decode_label_map(const std::vector<unsigned char>& bytes, const std::string& name = "labels") {
    const auto h = container::parse_header(bytes, container::Kind::Label32, name);
    if (h.channels != 1) {
        throw Error(Errc::ChannelCountMismatch, name + ": label maps have one channel (byte offset 13)");
    }
    LabelMap lm(h.height, h.width);
    for (std::size_t i = 0; i < lm.data.size(); ++i) {
        lm.data[i] = container::get_u32(&bytes[container::header_size + 4 * i]);
    }
    return relabel_contiguous(std::move(lm));
}

inline void write_label_map(const LabelMap& lm, const std::filesystem::path& path) {
    container::dump(path, encode_label_map(lm));
}

/// Reads a label map; ids are compacted to {0..K-1} and the original id of
/// every new label is reported.
inline Relabeled read_label_map(const std::filesystem::path& path) {
    return decode_label_map(container::slurp(path), path.string());
}

// ---------------------------------------------------------------------------
// Color

namespace detail {

inline double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}

/// sRGB in [0,1] to CIE L*a*b* (D65 white point).
inline std::array<double, 3> rgb_to_lab(double r, double g, double b) {
    const double rl = detail::srgb_to_linear(r);
    const double gl = detail::srgb_to_linear(g);
    const double bl = detail::srgb_to_linear(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
    const double fx = detail::lab_f(x / xn), fy = detail::lab_f(y / yn), fz = detail::lab_f(z / zn);
    const double l = std::clamp(116.0 * fy - 16.0, 0.0, 100.0);
    return {l, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline LabImage rgb_to_lab(const RasterF32& img) {
    if (img.channels != 3) {
        throw Error(Errc::ChannelCountMismatch,
                    "rgb_to_lab expects 3 channels, got " + std::to_string(img.channels));
    }
    LabImage lab(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.pixels(); ++i) {
        const auto px = img.pixel(i);
        const auto v = rgb_to_lab(std::clamp<double>(px[0], 0.0, 1.0), std::clamp<double>(px[1], 0.0, 1.0),
                                  std::clamp<double>(px[2], 0.0, 1.0));
        for (int c = 0; c < 3; ++c) {
            lab.data[i * 3 + c] = static_cast<float>(v[c]);
        }
    }
    return lab;
}

}

#endif
