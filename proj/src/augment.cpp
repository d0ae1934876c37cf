#include "leukopipe/augment.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "leukopipe/error.hpp"
#include "leukopipe/hashing.hpp"

namespace fs = std::filesystem;

namespace leukopipe {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

// Bilinear sample with zero contribution from out-of-range corners.
inline void sample_bilinear(const Image& img, double sx, double sy, float* out) {
    const int w = img.width();
    const int h = img.height();
    const double fx = std::floor(sx);
    const double fy = std::floor(sy);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const float ax = static_cast<float>(sx - fx);
    const float ay = static_cast<float>(sy - fy);
    const float weights[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    out[0] = out[1] = out[2] = 0.0f;
    for (int k = 0; k < 4; ++k) {
        if (weights[k] == 0.0f || xs[k] < 0 || xs[k] >= w || ys[k] < 0 || ys[k] >= h) continue;
        for (int c = 0; c < 3; ++c) out[c] += weights[k] * img.at(ys[k], xs[k], c);
    }
    for (int c = 0; c < 3; ++c) out[c] = clamp01(out[c]);
}

template <class Map>
Image warp(const Image& img, Map&& map) {
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            auto [sx, sy] = map(x, y);
            sample_bilinear(img, sx, sy, &out.at(y, x, 0));
        }
    }
    return out;
}

// Inverse of rotation/scale/shear/translation about the image center, in
// center-relative pixel coordinates: input = M * (output, 1).
std::array<double, 6> inverse_affine(double angle_deg, std::pair<double, double> translate, double scale,
                                     double shear_x_deg, double shear_y_deg) {
    const double rot = angle_deg * kDegToRad;
    const double sx = shear_x_deg * kDegToRad;
    const double sy = shear_y_deg * kDegToRad;
    const auto [tx, ty] = translate;

    const double a = std::cos(rot - sy) / std::cos(sy);
    const double b = -std::cos(rot - sy) * std::tan(sx) / std::cos(sy) - std::sin(rot);
    const double c = std::sin(rot - sy) / std::cos(sy);
    const double d = -std::sin(rot - sy) * std::tan(sx) / std::cos(sy) + std::cos(rot);

    std::array<double, 6> m{d, -b, 0.0, -c, a, 0.0};
    for (auto& v : m) v /= scale;
    m[2] += m[0] * (-tx) + m[1] * (-ty);
    m[5] += m[3] * (-tx) + m[4] * (-ty);
    return m;
}

Image apply_affine_matrix(const Image& img, const std::array<double, 6>& m) {
    const double cx = (img.width() - 1) * 0.5;
    const double cy = (img.height() - 1) * 0.5;
    return warp(img, [&](int x, int y) {
        const double u = x - cx;
        const double v = y - cy;
        return std::pair{m[0] * u + m[1] * v + m[2] + cx, m[3] * u + m[4] * v + m[5] + cy};
    });
}

float grayscale(float r, float g, float b) { return 0.2989f * r + 0.587f * g + 0.114f * b; }

}  // namespace

// --- config ----------------------------------------------------------------

AugmentationConfig AugmentationConfig::identity() {
    AugmentationConfig cfg;
    cfg.hflip_p = 0.0;
    cfg.vflip_p = 0.0;
    cfg.rotation_deg = 0.0;
    cfg.jitter_brightness = cfg.jitter_contrast = cfg.jitter_saturation = cfg.jitter_hue = 0.0;
    cfg.crop_scale = {1.0, 1.0};
    cfg.crop_ratio = {1.0, 1.0};
    cfg.affine_translate = 0.0;
    cfg.affine_scale = {1.0, 1.0};
    cfg.affine_shear_deg = 0.0;
    cfg.blur_kernel = 1;
    cfg.sharp_p = 0.0;
    cfg.persp_p = 0.0;
    return cfg;
}

void AugmentationConfig::validate() const {
    std::vector<std::string> bad;
    auto prob = [&](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) bad.push_back(std::string(name) + " must lie in [0, 1]");
    };
    auto nonneg = [&](double v, const char* name) {
        if (!(v >= 0.0)) bad.push_back(std::string(name) + " must be >= 0");
    };
    auto interval = [&](const Interval& iv, const char* name, bool positive) {
        if (!(iv.lo <= iv.hi)) bad.push_back(std::string(name) + " must satisfy lo <= hi");
        if (positive && !(iv.lo > 0.0)) bad.push_back(std::string(name) + " must be positive");
    };
    prob(hflip_p, "hflip_p");
    prob(vflip_p, "vflip_p");
    prob(sharp_p, "sharp_p");
    prob(persp_p, "persp_p");
    nonneg(rotation_deg, "rotation_deg");
    nonneg(jitter_brightness, "jitter_brightness");
    nonneg(jitter_contrast, "jitter_contrast");
    nonneg(jitter_saturation, "jitter_saturation");
    if (!(jitter_hue >= 0.0 && jitter_hue <= 0.5)) bad.push_back("jitter_hue must lie in [0, 0.5]");
    interval(crop_scale, "crop_scale", true);
    interval(crop_ratio, "crop_ratio", true);
    if (crop_scale.hi > 1.0) bad.push_back("crop_scale must not exceed 1");
    if (crop_size < 1) bad.push_back("crop_size must be >= 1");
    if (!(affine_translate >= 0.0 && affine_translate <= 1.0)) bad.push_back("affine_translate must lie in [0, 1]");
    interval(affine_scale, "affine_scale", true);
    if (!(affine_shear_deg >= 0.0 && affine_shear_deg < 90.0)) bad.push_back("affine_shear_deg must lie in [0, 90)");
    if (blur_kernel < 1 || blur_kernel % 2 == 0) bad.push_back("blur_kernel must be odd and >= 1");
    interval(blur_sigma, "blur_sigma", true);
    nonneg(sharp_factor, "sharp_factor");
    if (!(persp_distortion >= 0.0 && persp_distortion <= 1.0)) bad.push_back("persp_distortion must lie in [0, 1]");
    if (!bad.empty()) throw Error(ErrorCode::InvalidConfig, "invalid augmentation config", bad);
}

// --- individual transforms ---------------------------------------------------

namespace transforms {

Image hflip(const Image& img) {
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
    return out;
}

Image vflip(const Image& img) {
    Image out(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(img.height() - 1 - y, x, c);
    return out;
}

Image rotate(const Image& img, double angle_deg) {
    return apply_affine_matrix(img, inverse_affine(-angle_deg, {0.0, 0.0}, 1.0, 0.0, 0.0));
}

Image adjust_brightness(const Image& img, double factor) {
    Image out = img;
    const auto f = static_cast<float>(factor);
    for (auto& v : out.pixels()) v = clamp01(v * f);
    return out;
}

Image adjust_contrast(const Image& img, double factor) {
    double sum = 0.0;
    const std::size_t n = static_cast<std::size_t>(img.height()) * img.width();
    auto px = img.pixels();
    for (std::size_t i = 0; i < n; ++i) sum += grayscale(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    const auto mean = static_cast<float>(sum / static_cast<double>(n));
    const auto f = static_cast<float>(factor);
    Image out = img;
    for (auto& v : out.pixels()) v = clamp01(f * v + (1.0f - f) * mean);
    return out;
}

Image adjust_saturation(const Image& img, double factor) {
    const auto f = static_cast<float>(factor);
    Image out = img;
    auto px = out.pixels();
    for (std::size_t i = 0; i < px.size(); i += 3) {
        const float g = grayscale(px[i], px[i + 1], px[i + 2]);
        for (int c = 0; c < 3; ++c) px[i + c] = clamp01(f * px[i + c] + (1.0f - f) * g);
    }
    return out;
}

Image adjust_hue(const Image& img, double shift) {
    Image out = img;
    auto px = out.pixels();
    for (std::size_t i = 0; i < px.size(); i += 3) {
        const float r = px[i], g = px[i + 1], b = px[i + 2];
        const float maxc = std::max({r, g, b});
        const float minc = std::min({r, g, b});
        const float v = maxc;
        const float delta = maxc - minc;
        if (delta == 0.0f) continue;  // achromatic: hue has no effect
        const float s = delta / maxc;
        float h;
        if (maxc == r)
            h = (g - b) / delta;
        else if (maxc == g)
            h = 2.0f + (b - r) / delta;
        else
            h = 4.0f + (r - g) / delta;
        h = h / 6.0f + static_cast<float>(shift);
        h -= std::floor(h);

        const float h6 = h * 6.0f;
        const int sector = static_cast<int>(std::floor(h6)) % 6;
        const float frac = h6 - std::floor(h6);
        const float p = clamp01(v * (1.0f - s));
        const float q = clamp01(v * (1.0f - s * frac));
        const float t = clamp01(v * (1.0f - s * (1.0f - frac)));
        float rr, gg, bb;
        switch (sector) {
            case 0: rr = v; gg = t; bb = p; break;
            case 1: rr = q; gg = v; bb = p; break;
            case 2: rr = p; gg = v; bb = t; break;
            case 3: rr = p; gg = q; bb = v; break;
            case 4: rr = t; gg = p; bb = v; break;
            default: rr = v; gg = p; bb = q; break;
        }
        px[i] = rr;
        px[i + 1] = gg;
        px[i + 2] = bb;
    }
    return out;
}

Image resized_crop(const Image& img, int top, int left, int h, int w, int side) {
    if (h <= 0 || w <= 0 || top < 0 || left < 0 || top + h > img.height() || left + w > img.width())
        throw Error(ErrorCode::ShapeMismatch, "crop box outside the image");
    Image crop(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) crop.at(y, x, c) = img.at(top + y, left + x, c);
    return resize_fixed(crop, side);
}

Image affine(const Image& img, double angle_deg, std::pair<double, double> translate, double scale,
             double shear_deg) {
    return apply_affine_matrix(img, inverse_affine(angle_deg, translate, scale, shear_deg, 0.0));
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
    if (kernel <= 1) return img;
    const int half = kernel / 2;
    std::vector<float> k(kernel);
    double total = 0.0;
    for (int i = 0; i < kernel; ++i) {
        const double x = i - half;
        k[i] = static_cast<float>(std::exp(-0.5 * (x / sigma) * (x / sigma)));
        total += k[i];
    }
    for (auto& v : k) v = static_cast<float>(v / total);

    // Reflect padding (edge sample not repeated).
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
        return i;
    };
    const int hgt = img.height();
    const int wid = img.width();
    Image tmp(hgt, wid);
    for (int y = 0; y < hgt; ++y)
        for (int x = 0; x < wid; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int t = 0; t < kernel; ++t) acc += k[t] * img.at(y, reflect(x + t - half, wid), c);
                tmp.at(y, x, c) = acc;
            }
    Image out(hgt, wid);
    for (int y = 0; y < hgt; ++y)
        for (int x = 0; x < wid; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 0.0f;
                for (int t = 0; t < kernel; ++t) acc += k[t] * tmp.at(reflect(y + t - half, hgt), x, c);
                out.at(y, x, c) = clamp01(acc);
            }
    return out;
}

Image adjust_sharpness(const Image& img, double factor) {
    if (img.height() <= 2 || img.width() <= 2) return img;
    // Degenerate image: 3x3 smoothing [[1,1,1],[1,5,1],[1,1,1]]/13 on the
    // interior, original pixels on the border.
    Image degenerate = img;
    for (int y = 1; y < img.height() - 1; ++y)
        for (int x = 1; x < img.width() - 1; ++x)
            for (int c = 0; c < 3; ++c) {
                float acc = 4.0f * img.at(y, x, c);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) acc += img.at(y + dy, x + dx, c);
                degenerate.at(y, x, c) = acc / 13.0f;
            }
    const auto f = static_cast<float>(factor);
    Image out = img;
    auto o = out.pixels();
    auto d = degenerate.pixels();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = clamp01(f * o[i] + (1.0f - f) * d[i]);
    return out;
}

Image perspective(const Image& img, const std::array<std::pair<int, int>, 4>& startpoints,
                  const std::array<std::pair<int, int>, 4>& endpoints) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> rhs;
    for (int i = 0; i < 4; ++i) {
        const double ex = endpoints[i].first, ey = endpoints[i].second;
        const double sx = startpoints[i].first, sy = startpoints[i].second;
        a.row(2 * i) << ex, ey, 1, 0, 0, 0, -sx * ex, -sx * ey;
        a.row(2 * i + 1) << 0, 0, 0, ex, ey, 1, -sy * ex, -sy * ey;
        rhs(2 * i) = sx;
        rhs(2 * i + 1) = sy;
    }
    const Eigen::Matrix<double, 8, 1> h = a.colPivHouseholderQr().solve(rhs);
    // Coefficients act on pixel-center coordinates (x + 0.5, y + 0.5).
    return warp(img, [&](int x, int y) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        const double den = h(6) * px + h(7) * py + 1.0;
        return std::pair{(h(0) * px + h(1) * py + h(2)) / den - 0.5, (h(3) * px + h(4) * py + h(5)) / den - 0.5};
    });
}

}  // namespace transforms

// --- composition ---------------------------------------------------------------

Image apply_transforms(const Image& input, std::uint64_t seed, const AugmentationConfig& cfg) {
    cfg.validate();
    if (input.height() != cfg.crop_size || input.width() != cfg.crop_size)
        throw Error(ErrorCode::ShapeMismatch, "augmentation expects " + std::to_string(cfg.crop_size) + "x" +
                                                  std::to_string(cfg.crop_size) + " input, got " +
                                                  std::to_string(input.height()) + "x" + std::to_string(input.width()));
    Rng rng(seed);
    Image img = input;
    const int h = img.height();
    const int w = img.width();

    if (rng.bernoulli(cfg.hflip_p)) img = transforms::hflip(img);
    if (rng.bernoulli(cfg.vflip_p)) img = transforms::vflip(img);

    if (cfg.rotation_deg > 0.0) img = transforms::rotate(img, rng.uniform(-cfg.rotation_deg, cfg.rotation_deg));

    if (cfg.jitter_brightness > 0.0)
        img = transforms::adjust_brightness(
            img, rng.uniform(std::max(0.0, 1.0 - cfg.jitter_brightness), 1.0 + cfg.jitter_brightness));
    if (cfg.jitter_contrast > 0.0)
        img = transforms::adjust_contrast(
            img, rng.uniform(std::max(0.0, 1.0 - cfg.jitter_contrast), 1.0 + cfg.jitter_contrast));
    if (cfg.jitter_saturation > 0.0)
        img = transforms::adjust_saturation(
            img, rng.uniform(std::max(0.0, 1.0 - cfg.jitter_saturation), 1.0 + cfg.jitter_saturation));
    if (cfg.jitter_hue > 0.0) img = transforms::adjust_hue(img, rng.uniform(-cfg.jitter_hue, cfg.jitter_hue));

    {
        // RandomResizedCrop: up to 10 sampled boxes, then a center-crop fallback.
        const double area = static_cast<double>(h) * w;
        const double log_lo = std::log(cfg.crop_ratio.lo);
        const double log_hi = std::log(cfg.crop_ratio.hi);
        int top = -1, left = -1, ch = h, cw = w;
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double target_area = area * rng.uniform(cfg.crop_scale.lo, cfg.crop_scale.hi);
            const double aspect = std::exp(rng.uniform(log_lo, log_hi));
            const int bw = static_cast<int>(std::lround(std::sqrt(target_area * aspect)));
            const int bh = static_cast<int>(std::lround(std::sqrt(target_area / aspect)));
            if (bw > 0 && bw <= w && bh > 0 && bh <= h) {
                top = static_cast<int>(rng.randint(0, h - bh + 1));
                left = static_cast<int>(rng.randint(0, w - bw + 1));
                ch = bh;
                cw = bw;
                break;
            }
        }
        if (top < 0) {
            const double in_ratio = static_cast<double>(w) / h;
            if (in_ratio < cfg.crop_ratio.lo) {
                cw = w;
                ch = static_cast<int>(std::lround(cw / cfg.crop_ratio.lo));
            } else if (in_ratio > cfg.crop_ratio.hi) {
                ch = h;
                cw = static_cast<int>(std::lround(ch * cfg.crop_ratio.hi));
            } else {
                cw = w;
                ch = h;
            }
            ch = std::clamp(ch, 1, h);
            cw = std::clamp(cw, 1, w);
            top = (h - ch) / 2;
            left = (w - cw) / 2;
        }
        img = transforms::resized_crop(img, top, left, ch, cw, cfg.crop_size);
    }

    {
        const double max_dx = cfg.affine_translate * img.width();
        const double max_dy = cfg.affine_translate * img.height();
        const double tx = std::round(rng.uniform(-max_dx, max_dx));
        const double ty = std::round(rng.uniform(-max_dy, max_dy));
        const double scale = rng.uniform(cfg.affine_scale.lo, cfg.affine_scale.hi);
        const double shear = rng.uniform(-cfg.affine_shear_deg, cfg.affine_shear_deg);
        if (tx != 0.0 || ty != 0.0 || scale != 1.0 || shear != 0.0)
            img = transforms::affine(img, 0.0, {tx, ty}, scale, shear);
    }

    if (cfg.blur_kernel > 1)
        img = transforms::gaussian_blur(img, cfg.blur_kernel, rng.uniform(cfg.blur_sigma.lo, cfg.blur_sigma.hi));

    if (rng.bernoulli(cfg.sharp_p)) img = transforms::adjust_sharpness(img, cfg.sharp_factor);

    if (rng.bernoulli(cfg.persp_p)) {
        const int iw = img.width();
        const int ih = img.height();
        const int dx = static_cast<int>(cfg.persp_distortion * (iw / 2));
        const int dy = static_cast<int>(cfg.persp_distortion * (ih / 2));
        auto ri = [&](int lo, int hi) { return static_cast<int>(rng.randint(lo, hi)); };
        std::array<std::pair<int, int>, 4> end;
        end[0] = {ri(0, dx + 1), ri(0, dy + 1)};
        end[1] = {ri(iw - dx - 1, iw), ri(0, dy + 1)};
        end[2] = {ri(iw - dx - 1, iw), ri(ih - dy - 1, ih)};
        end[3] = {ri(0, dx + 1), ri(ih - dy - 1, ih)};
        const std::array<std::pair<int, int>, 4> start{{{0, 0}, {iw - 1, 0}, {iw - 1, ih - 1}, {0, ih - 1}}};
        img = transforms::perspective(img, start, end);
    }

    return img;
}

// --- balancing ---------------------------------------------------------------

std::string to_string(ParentSampling sampling) {
    return sampling == ParentSampling::ROUND_ROBIN ? "round_robin" : "uniform_with_replacement";
}

ParentSampling parse_sampling(std::string_view text) {
    if (text == "round_robin" || text == "ROUND_ROBIN") return ParentSampling::ROUND_ROBIN;
    if (text == "uniform_with_replacement" || text == "UNIFORM_WITH_REPLACEMENT")
        return ParentSampling::UNIFORM_WITH_REPLACEMENT;
    throw Error(ErrorCode::InvalidConfig, "unknown parent sampling '" + std::string(text) + "'");
}

BalancePlan plan_balance(const DatasetManifest& manifest, std::size_t target, ParentSampling sampling) {
    if (!manifest.split ||
        std::any_of(manifest.records.begin(), manifest.records.end(),
                    [](const auto& r) { return r.split == Split::UNASSIGNED; }))
        throw Error(ErrorCode::NoSplit, "balancing requires a split manifest");
    BalancePlan plan;
    plan.target = target;
    plan.sampling = sampling;
    for (auto label : kClasses) {
        const std::size_t have = manifest.count(label, Split::TRAIN, Origin::ORIGINAL);
        plan.deficits[label] = target > have ? target - have : 0;
    }
    return plan;
}

namespace {

struct WorkItem {
    const ImageRecord* parent = nullptr;
    ImageRecord child;
};

}  // namespace

DatasetManifest execute_balance(const DatasetManifest& manifest, const BalancePlan& plan,
                                const AugmentationConfig& cfg, std::uint64_t global_seed,
                                const BalanceOptions& options) {
    cfg.validate();
    if (std::any_of(manifest.records.begin(), manifest.records.end(),
                    [](const auto& r) { return r.origin == Origin::AUGMENTED; }))
        throw Error(ErrorCode::AlreadyAugmented, "manifest already contains augmented records");
    const BalancePlan expected = plan_balance(manifest, plan.target, plan.sampling);
    if (expected.deficits != plan.deficits)
        throw Error(ErrorCode::InvalidConfig, "balance plan does not match the manifest's TRAIN counts");

    std::vector<WorkItem> items;
    for (auto label : kClasses) {
        const std::size_t deficit = plan.deficits.at(label);
        if (deficit == 0) continue;
        std::vector<const ImageRecord*> parents;
        for (const auto& r : manifest.records)
            if (r.label == label && r.split == Split::TRAIN && r.origin == Origin::ORIGINAL) parents.push_back(&r);
        if (parents.empty())
            throw Error(ErrorCode::ParentMissing, "no TRAIN originals of class " + to_string(label) + " to augment");
        Rng order(derive_seed(global_seed, "balance-parents", {static_cast<std::uint64_t>(label)}));
        order.shuffle(parents.begin(), parents.end());

        std::map<std::string, std::size_t> children_so_far;
        for (std::size_t k = 0; k < deficit; ++k) {
            const ImageRecord* parent;
            if (plan.sampling == ParentSampling::ROUND_ROBIN) {
                parent = parents[k % parents.size()];
            } else {
                Rng pick(derive_seed(global_seed, "balance-pick", {static_cast<std::uint64_t>(label), k}));
                parent = parents[static_cast<std::size_t>(pick.randint(0, static_cast<std::int64_t>(parents.size())))];
            }
            const std::size_t child_index = children_so_far[parent->id]++;
            WorkItem item;
            item.parent = parent;
            item.child.id = parent->id + "_aug" + std::to_string(child_index);
            item.child.path = fs::absolute(options.out_dir / (item.child.id + ".png"));
            item.child.label = label;
            item.child.split = Split::TRAIN;
            item.child.origin = Origin::AUGMENTED;
            item.child.parent_id = parent->id;
            item.child.aug_seed = derive_seed(global_seed, "augment", {static_cast<std::uint64_t>(label), k});
            items.push_back(std::move(item));
        }
    }

    if (!items.empty()) {
        std::error_code ec;
        fs::create_directories(options.out_dir, ec);
        if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + options.out_dir.string() + ": " + ec.message());
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= items.size() || failed.load()) return;
            const auto& item = items[i];
            try {
                std::error_code ec;
                if (!fs::exists(item.parent->path, ec))
                    throw Error(ErrorCode::ParentMissing, "parent image missing: " + item.parent->path.string(),
                                {item.parent->path.string()});
                const Image base = load_model_image(item.parent->path, cfg.crop_size);
                write_png(apply_transforms(base, *item.child.aug_seed, cfg), item.child.path);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed = true;
                return;
            }
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(items.size())));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    }
    if (first_error) std::rethrow_exception(first_error);

    DatasetManifest out = manifest;
    for (auto& item : items) out.records.push_back(std::move(item.child));
    std::sort(out.records.begin(), out.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    out.balance = BalanceInfo{plan.target, global_seed, to_string(plan.sampling)};
    spdlog::info("balance: generated {} augmented image(s) into {}", items.size(), options.out_dir.string());
    return out;
}

}  // namespace leukopipe
