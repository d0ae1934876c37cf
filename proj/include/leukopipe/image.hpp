#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace leukopipe {

/// A decoded image in its native channel layout (1 = gray, 2 = gray+alpha,
/// 3 = RGB, 4 = RGBA), 8 bits per sample, row-major interleaved.
struct RawImage {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;
};

/// Three-channel float image, HWC interleaved. Values are in [0, 1] on the
/// way into augmentation and the model; normalize() moves them off that range.
class Image {
public:
    Image() = default;
    Image(int height, int width, float fill = 0.0f);
    Image(int height, int width, std::vector<float> data);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    static constexpr int channels() noexcept { return 3; }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int y, int x, int c) { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }

    std::span<float> pixels() noexcept { return data_; }
    std::span<const float> pixels() const noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

using ChannelTriple = std::array<float, 3>;

inline constexpr int kModelSide = 224;
inline constexpr ChannelTriple kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr ChannelTriple kImageNetStd{0.229f, 0.224f, 0.225f};

/// Decodes BMP/PNG/JPEG (anything the codec backend reads). Throws
/// UndecodableImage.
RawImage decode_image(const std::filesystem::path& path);

/// True when `path` has an extension in `extensions` (case-insensitive,
/// leading dot included, e.g. ".bmp").
bool has_image_extension(const std::filesystem::path& path, std::span<const std::string> extensions);

/// Grayscale is replicated, alpha is composited over black. Output in [0, 1].
Image convert_rgb(const RawImage& raw);

/// Bilinear resize to side x side (half-pixel centers, no antialiasing,
/// aspect ratio not preserved).
Image resize_fixed(const Image& img, int side = kModelSide);

/// Per-channel (x - mean) / std.
Image normalize(const Image& img, const ChannelTriple& mean, const ChannelTriple& std);

/// decode -> convert_rgb -> resize_fixed.
Image load_model_image(const std::filesystem::path& path, int side = kModelSide);

/// Lossless 8-bit PNG. Values are clamped to [0, 1] and rounded to the
/// nearest of 256 levels.
void write_png(const Image& img, const std::filesystem::path& path);

/// Min and max over all samples.
std::pair<float, float> value_range(const Image& img);

}  // namespace leukopipe
