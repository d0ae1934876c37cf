#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"
#include "leukopipe/image.hpp"

using namespace leukopipe;
using fixture::TempDir;

namespace {

// Textbook bilinear sample with half-pixel centers and edge clamping, all in
// double precision.
double bilinear_ref(const Image& img, double sy, double sx, int c) {
    sy = std::clamp(sy, 0.0, img.height() - 1.0);
    sx = std::clamp(sx, 0.0, img.width() - 1.0);
    const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
    const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
    const double fy = sy - y0, fx = sx - x0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c)) +
           fy * ((1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c));
}

RawImage raw(int h, int w, int ch, std::uint64_t seed) {
    Rng rng(seed);
    RawImage r{h, w, ch, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * ch)};
    for (auto& v : r.data) v = static_cast<std::uint8_t>(rng.randint(0, 256));
    return r;
}

}  // namespace

TEST(ConvertRgb, GrayscaleReplicated) {
    const auto img = convert_rgb(raw(45, 45, 1, 1));
    ASSERT_EQ(img.height(), 45);
    for (int y = 0; y < 45; ++y)
        for (int x = 0; x < 45; ++x) {
            EXPECT_EQ(img.at(y, x, 0), img.at(y, x, 1));
            EXPECT_EQ(img.at(y, x, 1), img.at(y, x, 2));
        }
}

TEST(ConvertRgb, OpaqueAlphaDropped) {
    auto rgba = raw(20, 30, 4, 2);
    RawImage rgb{20, 30, 3, {}};
    for (std::size_t i = 0; i < rgba.data.size(); i += 4) {
        rgba.data[i + 3] = 255;
        rgb.data.insert(rgb.data.end(), rgba.data.begin() + i, rgba.data.begin() + i + 3);
    }
    EXPECT_EQ(convert_rgb(rgba), convert_rgb(rgb));
}

TEST(ConvertRgb, TransparentCompositesToBlack) {
    auto rgba = raw(4, 4, 4, 3);
    for (std::size_t i = 3; i < rgba.data.size(); i += 4) rgba.data[i] = 0;
    const auto img = convert_rgb(rgba);
    for (float v : img.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(ConvertRgb, RgbIdentity) {
    const auto r = raw(7, 9, 3, 4);
    const auto img = convert_rgb(r);
    for (std::size_t i = 0; i < r.data.size(); ++i) EXPECT_FLOAT_EQ(img.pixels()[i], r.data[i] / 255.0f);
}

TEST(Decode, PngRoundTripIsLossless) {
    TempDir dir;
    Rng rng(5);
    Image img(13, 17);
    for (auto& v : img.pixels()) v = static_cast<float>(rng.randint(0, 256)) / 255.0f;
    write_png(img, dir / "a.png");
    const auto back = convert_rgb(decode_image(dir / "a.png"));
    ASSERT_EQ(back.height(), 13);
    ASSERT_EQ(back.width(), 17);
    for (std::size_t i = 0; i < img.pixels().size(); ++i) EXPECT_FLOAT_EQ(back.pixels()[i], img.pixels()[i]);
}

TEST(Decode, GarbageRejected) {
    TempDir dir;
    { std::ofstream(dir / "x.bmp") << "garbage"; }
    try {
        decode_image(dir / "x.bmp");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UndecodableImage);
    }
}

TEST(Resize, CnmcResolutionToModelSide) {
    const auto img = resize_fixed(fixture::random_image(450, 450, 1));
    EXPECT_EQ(img.height(), 224);
    EXPECT_EQ(img.width(), 224);
}

TEST(Resize, MatchesBilinearReference) {
    for (auto [h, w] : {std::pair{450, 450}, std::pair{100, 37}, std::pair{5, 300}}) {
        const auto in = fixture::random_image(h, w, static_cast<std::uint64_t>(h * w));
        const auto out = resize_fixed(in, 224);
        const double sy = static_cast<double>(h) / 224, sx = static_cast<double>(w) / 224;
        for (int y = 0; y < 224; y += 3)
            for (int x = 0; x < 224; x += 5)
                for (int c = 0; c < 3; ++c)
                    ASSERT_NEAR(out.at(y, x, c), bilinear_ref(in, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5, c),
                                1e-5)
                        << h << "x" << w << " at " << y << "," << x;
    }
}

TEST(Resize, SameSizeIsIdentity) {
    const auto in = fixture::random_image(224, 224, 8);
    const auto out = resize_fixed(in);
    for (std::size_t i = 0; i < in.pixels().size(); ++i) EXPECT_NEAR(out.pixels()[i], in.pixels()[i], 1e-6);
}

TEST(Resize, Idempotent) {
    const auto once = resize_fixed(fixture::smooth_image(300, 450, 9));
    const auto twice = resize_fixed(once);
    for (std::size_t i = 0; i < once.pixels().size(); ++i) ASSERT_NEAR(once.pixels()[i], twice.pixels()[i], 1e-6);
}

TEST(Resize, SinglePixelFillsField) {
    Image px(1, 1);
    px.at(0, 0, 0) = 0.2f;
    px.at(0, 0, 1) = 0.5f;
    px.at(0, 0, 2) = 0.9f;
    const auto out = resize_fixed(px);
    for (int y = 0; y < 224; ++y)
        for (int x = 0; x < 224; ++x)
            for (int c = 0; c < 3; ++c) ASSERT_EQ(out.at(y, x, c), px.at(0, 0, c));
}

TEST(Resize, ZeroDimensionRejected) {
    try {
        resize_fixed(Image());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroDimensionImage);
    }
}

TEST(Resize, StaysInUnitRange) {
    const auto out = resize_fixed(fixture::random_image(451, 97, 3));
    const auto [lo, hi] = value_range(out);
    EXPECT_GE(lo, 0.0f);
    EXPECT_LE(hi, 1.0f);
}

TEST(Normalize, IdentityParameters) {
    const auto in = fixture::random_image(8, 8, 1);
    EXPECT_EQ(normalize(in, {0, 0, 0}, {1, 1, 1}), in);
}

TEST(Normalize, MeanImageGoesToZero) {
    Image in(6, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c) in.at(y, x, c) = kImageNetMean[c];
    const auto out = normalize(in, kImageNetMean, kImageNetStd);
    for (float v : out.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, Arithmetic) {
    Image in(1, 1, 0.8f);
    const auto out = normalize(in, {0.5f, 0.5f, 0.5f}, {0.25f, 0.25f, 0.25f});
    for (float v : out.pixels()) EXPECT_NEAR(v, (0.8 - 0.5) / 0.25, 1e-6);
}

TEST(Normalize, ZeroStdRejected) {
    try {
        normalize(Image(2, 2), {0, 0, 0}, {1, 0, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroStd);
    }
}

TEST(LoadModelImage, AnyInputBecomesModelShape) {
    TempDir dir;
    write_png(fixture::random_image(450, 450, 1), dir / "big.png");
    write_png(fixture::random_image(31, 70, 2), dir / "small.png");
    for (const auto* name : {"big.png", "small.png"}) {
        const auto img = load_model_image(dir / name);
        EXPECT_EQ(img.height(), kModelSide);
        EXPECT_EQ(img.width(), kModelSide);
        const auto [lo, hi] = value_range(img);
        EXPECT_GE(lo, 0.0f);
        EXPECT_LE(hi, 1.0f);
    }
}
