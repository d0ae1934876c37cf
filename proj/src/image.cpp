#include "leukopipe/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>

#include "leukopipe/error.hpp"

namespace leukopipe {

Image::Image(int height, int width, float fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width * 3, fill) {}

Image::Image(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(height) * width * 3)
        throw Error(ErrorCode::ShapeMismatch, "pixel buffer does not match " + std::to_string(height) +
                                                  "x" + std::to_string(width) + "x3");
}

RawImage decode_image(const std::filesystem::path& path) {
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw Error(ErrorCode::UndecodableImage, path.string() + ": " + e.what(), {path.string()});
    }
    if (mat.empty() || mat.dims != 2)
        throw Error(ErrorCode::UndecodableImage, "cannot decode " + path.string(), {path.string()});

    if (mat.depth() == CV_16U) {
        mat.convertTo(mat, CV_8U, 1.0 / 257.0);
    } else if (mat.depth() != CV_8U) {
        throw Error(ErrorCode::UndecodableImage, "unsupported sample depth in " + path.string(),
                    {path.string()});
    }

    RawImage raw;
    raw.height = mat.rows;
    raw.width = mat.cols;
    raw.channels = mat.channels();
    if (raw.channels < 1 || raw.channels > 4)
        throw Error(ErrorCode::UndecodableImage, "unsupported channel count in " + path.string(),
                    {path.string()});
    raw.data.resize(static_cast<std::size_t>(raw.height) * raw.width * raw.channels);
    for (int y = 0; y < raw.height; ++y) {
        const auto* row = mat.ptr<std::uint8_t>(y);
        auto* out = raw.data.data() + static_cast<std::size_t>(y) * raw.width * raw.channels;
        for (int x = 0; x < raw.width; ++x) {
            const auto* px = row + x * raw.channels;
            auto* o = out + x * raw.channels;
            // OpenCV orders colour channels BGR(A).
            if (raw.channels >= 3) {
                o[0] = px[2];
                o[1] = px[1];
                o[2] = px[0];
                if (raw.channels == 4) o[3] = px[3];
            } else {
                std::copy(px, px + raw.channels, o);
            }
        }
    }
    return raw;
}

bool has_image_extension(const std::filesystem::path& path, std::span<const std::string> extensions) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& allowed : extensions) {
        std::string a = allowed;
        std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == a) return true;
    }
    return false;
}

Image convert_rgb(const RawImage& raw) {
    if (raw.height <= 0 || raw.width <= 0)
        throw Error(ErrorCode::ZeroDimensionImage, "image has a zero dimension");
    if (raw.channels < 1 || raw.channels > 4 ||
        raw.data.size() != static_cast<std::size_t>(raw.height) * raw.width * raw.channels)
        throw Error(ErrorCode::UndecodableImage, "inconsistent raw image buffer");

    Image out(raw.height, raw.width);
    auto dst = out.pixels();
    const std::size_t n = static_cast<std::size_t>(raw.height) * raw.width;
    constexpr float kInv = 1.0f / 255.0f;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* px = raw.data.data() + i * raw.channels;
        float r, g, b, alpha = 1.0f;
        switch (raw.channels) {
            case 1: r = g = b = px[0] * kInv; break;
            case 2: r = g = b = px[0] * kInv; alpha = px[1] * kInv; break;
            case 3: r = px[0] * kInv; g = px[1] * kInv; b = px[2] * kInv; break;
            default:
                r = px[0] * kInv; g = px[1] * kInv; b = px[2] * kInv; alpha = px[3] * kInv;
                break;
        }
        // Composite over black.
        dst[i * 3 + 0] = r * alpha;
        dst[i * 3 + 1] = g * alpha;
        dst[i * 3 + 2] = b * alpha;
    }
    return out;
}

Image resize_fixed(const Image& img, int side) {
    if (img.height() <= 0 || img.width() <= 0 || side <= 0)
        throw Error(ErrorCode::ZeroDimensionImage, "cannot resize an image with a zero dimension");

    const int in_h = img.height();
    const int in_w = img.width();
    const double sy = static_cast<double>(in_h) / side;
    const double sx = static_cast<double>(in_w) / side;

    std::vector<int> x0(side), x1(side);
    std::vector<float> wx(side);
    for (int x = 0; x < side; ++x) {
        double src = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
        x0[x] = static_cast<int>(src);
        x1[x] = std::min(x0[x] + 1, in_w - 1);
        wx[x] = static_cast<float>(src - x0[x]);
    }

    Image out(side, side);
    for (int y = 0; y < side; ++y) {
        double src = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const int y0 = static_cast<int>(src);
        const int y1 = std::min(y0 + 1, in_h - 1);
        const float wy = static_cast<float>(src - y0);
        for (int x = 0; x < side; ++x) {
            for (int c = 0; c < 3; ++c) {
                float top = img.at(y0, x0[x], c) + (img.at(y0, x1[x], c) - img.at(y0, x0[x], c)) * wx[x];
                float bot = img.at(y1, x0[x], c) + (img.at(y1, x1[x], c) - img.at(y1, x0[x], c)) * wx[x];
                out.at(y, x, c) = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

Image normalize(const Image& img, const ChannelTriple& mean, const ChannelTriple& std) {
    for (float s : std)
        if (s == 0.0f) throw Error(ErrorCode::ZeroStd, "normalization std has a zero component");
    Image out = img;
    auto px = out.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const auto c = i % 3;
        px[i] = (px[i] - mean[c]) / std[c];
    }
    return out;
}

Image load_model_image(const std::filesystem::path& path, int side) {
    return resize_fixed(convert_rgb(decode_image(path)), side);
}

void write_png(const Image& img, const std::filesystem::path& path) {
    cv::Mat mat(img.height(), img.width(), CV_8UC3);
    for (int y = 0; y < img.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.at(y, x, c), 0.0f, 1.0f);
                row[x * 3 + (2 - c)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat, {cv::IMWRITE_PNG_COMPRESSION, 6});
    } catch (const cv::Exception&) {
        ok = false;
    }
    if (!ok) {
        std::error_code ec;
        auto info = std::filesystem::space(path.parent_path(), ec);
        const auto needed = static_cast<std::uintmax_t>(img.height()) * img.width() * 3;
        if (!ec && info.available < needed)
            throw Error(ErrorCode::DiskFull, "no space left writing " + path.string(), {path.string()});
        throw Error(ErrorCode::IoFailure, "cannot write " + path.string(), {path.string()});
    }
}

std::pair<float, float> value_range(const Image& img) {
    auto px = img.pixels();
    if (px.empty()) return {0.0f, 0.0f};
    auto [lo, hi] = std::minmax_element(px.begin(), px.end());
    return {*lo, *hi};
}

}  // namespace leukopipe
