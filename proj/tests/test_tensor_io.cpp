#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "brrf/png_io.hpp"
#include "brrf/synth.hpp"
#include "brrf/tensor_io.hpp"
#include "oracles/lab_reference.hpp"
#include "test_util.hpp"

using namespace brrf;

namespace {

Errc error_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::InvariantViolation;
}

}

TEST(TensorIo, SmallRasterRoundTrip) {
    testutil::TempDir dir;
    RasterF32 r(2, 2, 1);
    r.data = {0.0f, 0.5f, 1.0f, 0.25f};
    write_raster(r, dir / "r.brrf");
    const auto back = read_raster(dir / "r.brrf");
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.width, 2u);
    EXPECT_EQ(back.channels, 1u);
    EXPECT_EQ(back.data, r.data);
}

TEST(TensorIo, HeaderIsLittleEndian) {
    RasterF32 r(2, 3, 1, 1.0f);
    const auto bytes = encode_raster(r);
    ASSERT_EQ(bytes.size(), container::header_size + 6 * 4);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "BRRF");
    EXPECT_EQ(bytes[4], 0);
    EXPECT_EQ(bytes[5], 2);
    EXPECT_EQ(bytes[9], 3);
    EXPECT_EQ(bytes[13], 1);
    // 1.0f = 0x3f800000
    EXPECT_EQ(bytes[17], 0x00);
    EXPECT_EQ(bytes[20], 0x3f);
}

TEST(TensorIo, RandomRasterRoundTripIsBitExact) {
    testutil::TempDir dir;
    std::mt19937_64 gen(11);
    std::uniform_int_distribution<std::size_t> dim(1, 64), ch(1, 16);
    std::normal_distribution<float> val(0.0f, 100.0f);
    for (int trial = 0; trial < 40; ++trial) {
        RasterF32 r(dim(gen), dim(gen), ch(gen));
        for (auto& v : r.data) v = val(gen);
        r.data[0] = -0.0f;
        if (r.data.size() > 1) r.data[1] = std::numeric_limits<float>::denorm_min();
        write_raster(r, dir / "r.brrf");
        const auto back = read_raster(dir / "r.brrf");
        ASSERT_EQ(back.height, r.height);
        ASSERT_EQ(back.channels, r.channels);
        ASSERT_EQ(std::memcmp(back.data.data(), r.data.data(), r.data.size() * 4), 0);
    }
}

TEST(TensorIo, WideChannelRasterRoundTrips) {
    testutil::TempDir dir;
    RasterF32 r(1, 1, 512);
    for (std::size_t c = 0; c < 512; ++c) r.data[c] = static_cast<float>(c) * 0.001f - 0.2f;
    write_field(retag<RepTensor>(r), dir / "reps.brrf");
    const auto back = read_field<RepTensor>(dir / "reps.brrf");
    EXPECT_EQ(back.channels, 512u);
    EXPECT_EQ(back.data, r.data);
}

TEST(TensorIo, ZeroSizedRasterIsRejected) {
    testutil::TempDir dir;
    EXPECT_EQ(error_of([&] { write_raster(RasterF32(0, 0, 1), dir / "z.brrf"); }), Errc::InvalidShape);
}

TEST(TensorIo, TruncatedPayload) {
    auto bytes = encode_raster(RasterF32(4, 4, 2, 0.5f));
    bytes.resize(bytes.size() - 3);
    EXPECT_EQ(error_of([&] { decode_raster(bytes); }), Errc::TruncatedPayload);
    bytes.resize(10);
    EXPECT_EQ(error_of([&] { decode_raster(bytes); }), Errc::TruncatedPayload);
}

TEST(TensorIo, BadMagicNamesOffset) {
    auto bytes = encode_raster(RasterF32(1, 1, 1, 0.5f));
    bytes[2] = 'X';
    try {
        decode_raster(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::MagicMismatch);
        EXPECT_NE(std::string(e.what()).find("offset 2"), std::string::npos);
    }
}

TEST(TensorIo, NonFiniteValueNamesOffset) {
    auto bytes = encode_raster(RasterF32(1, 3, 1, 0.0f));
    const std::size_t offset = container::header_size + 8;
    // quiet NaN, little-endian
    bytes[offset + 2] = 0xc0;
    bytes[offset + 3] = 0x7f;
    try {
        decode_raster(bytes);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonFiniteValue);
        EXPECT_NE(std::string(e.what()).find("offset " + std::to_string(offset)), std::string::npos);
    }
    bytes[offset + 2] = 0x80;  // +inf
    EXPECT_EQ(error_of([&] { decode_raster(bytes); }), Errc::NonFiniteValue);
}

TEST(TensorIo, WritingNonFiniteFails) {
    RasterF32 r(1, 2, 1, 0.0f);
    r.data[1] = std::numeric_limits<float>::infinity();
    EXPECT_EQ(error_of([&] { encode_raster(r); }), Errc::NonFiniteValue);
}

TEST(TensorIo, KindMismatch) {
    const auto bytes = encode_label_map(LabelMap(2, 2, 1, 0));
    EXPECT_EQ(error_of([&] { decode_raster(bytes); }), Errc::KindMismatch);
}

TEST(TensorIo, MissingFileIsIoFailure) {
    EXPECT_EQ(error_of([] { read_raster("/nonexistent/brrf/file.brrf"); }), Errc::IoFailure);
}

TEST(TensorIo, LabelGapsAreCompacted) {
    LabelMap lm(1, 4);
    lm.data = {0, 2, 2, 0};
    const auto r = decode_label_map(encode_label_map(lm));
    EXPECT_EQ(r.map.data, (std::vector<std::uint32_t>{0, 1, 1, 0}));
    EXPECT_EQ(r.original_ids, (std::vector<std::uint32_t>{0, 2}));
}

TEST(TensorIo, UniformLabelMapIsSingleLabel) {
    const auto r = decode_label_map(encode_label_map(LabelMap(3, 5, 1, 7)));
    EXPECT_EQ(label_count(r.map), 1u);
    EXPECT_EQ(r.original_ids, std::vector<std::uint32_t>{7});
}

TEST(TensorIo, VoronoiLabelMapRoundTripsAsPartition) {
    testutil::TempDir dir;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthSpec s;
        s.height = 40;
        s.width = 50;
        s.n_segments = 9;
        s.seed = seed;
        auto gt = generate(s).gt;
        // scramble the ids so reading has to compact them
        for (auto& v : gt.data) v = v * 37 + 5;
        write_label_map(gt, dir / "gt.brrf");
        const auto back = read_label_map(dir / "gt.brrf");
        EXPECT_TRUE(testutil::same_partition(back.map, gt));
        for (std::size_t i = 0; i < gt.data.size(); ++i) {
            ASSERT_EQ(back.original_ids[back.map.data[i]], gt.data[i]);
        }
    }
}

TEST(TensorIo, LabBlackWhiteRed) {
    const auto black = rgb_to_lab(0, 0, 0);
    EXPECT_NEAR(black[0], 0.0, 1e-9);
    EXPECT_NEAR(black[1], 0.0, 1e-9);
    EXPECT_NEAR(black[2], 0.0, 1e-9);
    const auto white = rgb_to_lab(1, 1, 1);
    EXPECT_NEAR(white[0], 100.0, 1e-3);
    EXPECT_LT(std::abs(white[1]), 0.01);
    EXPECT_LT(std::abs(white[2]), 0.01);
    const auto red = rgb_to_lab(1, 0, 0);
    EXPECT_NEAR(red[0], 53.24, 0.1);
    EXPECT_NEAR(red[1], 80.09, 0.1);
    EXPECT_NEAR(red[2], 67.20, 0.1);
}

TEST(TensorIo, LabMatchesReferenceOnGrid) {
    for (int r = 0; r <= 10; ++r) {
        for (int g = 0; g <= 10; ++g) {
            for (int b = 0; b <= 10; ++b) {
                const auto got = rgb_to_lab(r / 10.0, g / 10.0, b / 10.0);
                const auto want = oracle::srgb_to_lab(r / 10.0, g / 10.0, b / 10.0);
                for (int c = 0; c < 3; ++c) ASSERT_NEAR(got[c], want[c], 0.1) << r << " " << g << " " << b;
            }
        }
    }
}

TEST(TensorIo, LabNeedsThreeChannels) {
    EXPECT_EQ(error_of([] { rgb_to_lab(RasterF32(2, 2, 1)); }), Errc::ChannelCountMismatch);
}

TEST(TensorIo, PngLabelsRoundTrip) {
    testutil::TempDir dir;
    LabelMap lm(5, 7);
    for (std::size_t i = 0; i < lm.data.size(); ++i) lm.data[i] = static_cast<std::uint32_t>(i * 1000);
    png::write_labels(lm, dir / "l.png");
    const auto back = png::read_labels(dir / "l.png");
    EXPECT_TRUE(testutil::same_partition(back.map, lm));
    EXPECT_EQ(back.original_ids.back(), 34000u);
}

TEST(TensorIo, PngImageRoundTripsAt8Bits) {
    testutil::TempDir dir;
    RasterF32 img(3, 4, 3);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
    png::write_image(img, dir / "i.png");
    const auto back = png::read_image(dir / "i.png");
    ASSERT_EQ(back.channels, 3u);
    for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-6);
}
